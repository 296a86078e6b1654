"""
The static divide-and-conquer schedule and the direct IO baseline.

For problems deeper than one split the schedule decomposes level by level
until every leaf is atomic, solves all leaves at once, then aggregates each
internal problem bottom-up from every candidate of its subproblems. Only a
reduce picks among attempts by value; without one the run is scored on the
first surviving root candidate.
"""
import logging
import time

from apps.backends.exceptions import GeneratorFailure
from apps.graphs.graph import graph_to_dict, new_graph
from apps.graphs.transforms import TransformKind, TransformRequest, keep_best
from apps.tasks.tasks import ATOMIC, get_task

from .exceptions import ScheduleAborted
from .records import RunRecord, apply_traced

logger = logging.getLogger(__name__)

GOT = 'GoT'
IO = 'IO'


def expected_trace(params, task_kind, n):
    """Transformation kinds the schedule emits for ``params`` on a size-n problem."""
    levels = get_task(task_kind).plan_levels(n)
    trace = [TransformKind.DECOMPOSE] * len(levels)
    trace.append(TransformKind.SOLVE)
    trace += [TransformKind.AGGREGATE] * sum(levels)
    if params.allow_reduce:
        trace.append(TransformKind.REDUCE)
    if params.allow_refine:
        trace += [TransformKind.REFINE, TransformKind.REDUCE]
    return trace


def trace_length(params, task_kind, n):
    """|Φ(ω)|: the number of transformations the schedule applies."""
    return len(expected_trace(params, task_kind, n))


class _Run:
    def __init__(self, task, generator):
        self.task = task
        self.generator = generator
        self.trace = []

    def apply(self, graph, kind, targets, multiplicity=1):
        request = TransformRequest(kind, multiplicity, targets)
        graph, entry = apply_traced(graph, request, self.generator, self.task)
        self.trace.append(entry)
        return graph


def _decompose_levels(run, graph):
    frontier = [graph.root.id]
    while True:
        decomposable = [
            node_id for node_id in frontier
            if run.task.decomposition_plan(run.task.parse_problem(graph.nodes[node_id].content))
            is not ATOMIC
        ]
        if not decomposable:
            return graph
        graph = run.apply(graph, TransformKind.DECOMPOSE, decomposable)
        frontier = [child for node_id in decomposable for child in graph.subproblems(node_id)]


def _schedule(run, graph, params):
    graph = _decompose_levels(run, graph)
    problems = sorted(node.id for node in graph.nodes.values() if node.is_problem)
    leaves = [node_id for node_id in problems if not graph.subproblems(node_id)]
    graph = run.apply(graph, TransformKind.SOLVE, leaves, params.solve_multiplicity)

    # subproblems always carry larger ids than their parent
    for problem_id in reversed([p for p in problems if graph.subproblems(p)]):
        targets = [c for child in graph.subproblems(problem_id) for c in graph.candidates(child)]
        graph = run.apply(graph, TransformKind.AGGREGATE, targets, params.aggregate_multiplicity)

    root = graph.root.id
    if params.allow_reduce:
        graph = run.apply(graph, TransformKind.REDUCE, keep_best(graph, graph.candidates(root)))
    if params.allow_refine:
        imperfect = [i for i in graph.candidates(root) if graph.nodes[i].value < 1.0]
        if not imperfect:
            logger.warning("Skipping refine: every root candidate is already correct")
        graph = run.apply(graph, TransformKind.REFINE, imperfect, params.refine_multiplicity)
        graph = run.apply(graph, TransformKind.REDUCE, keep_best(graph, graph.candidates(root)))
    return graph


def _solve_directly(run, graph, params):
    return run.apply(graph, TransformKind.SOLVE, [graph.root.id])


def _execute(instance, generator, params, method, body):
    task = get_task(instance.kind)
    problem = task.root_problem(instance)
    run = _Run(task, generator)
    before = generator.ledger.snapshot()
    started = time.perf_counter()
    graph = new_graph(problem.content)
    try:
        graph = body(run, graph, params)
    except GeneratorFailure as exc:
        raise ScheduleAborted(f"{method} run on {instance.name} seed {instance.seed} "
                              f"aborted: {exc}") from exc

    # one survivor after any reduce, otherwise the first attempt
    final = graph.node(graph.candidates(graph.root.id)[0])
    final_error = task.score(problem, final.content).total
    record = RunRecord(
        task=instance.name,
        method=method,
        instance=instance,
        params=params,
        trace=run.trace,
        final_node=final.id,
        final_error=final_error,
        queries=generator.ledger.since(before),
        wall_time=time.perf_counter() - started,
        graph=graph_to_dict(graph),
    )
    logger.info("%s %s on %s seed %d: error=%d queries=%d", method,
                params.label if params else '-', instance.name, instance.seed, final_error,
                record.inference_cost)
    return record


def run_schedule(instance, params, generator, method=GOT):
    return _execute(instance, generator, params, method, _schedule)


def run_io(instance, generator):
    """Direct input-output prompting on the undivided problem."""
    return _execute(instance, generator, None, IO, _solve_directly)
