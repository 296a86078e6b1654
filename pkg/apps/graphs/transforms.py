"""
The five thought-graph transformations.

Each takes a graph, a TransformRequest (kind, multiplicity m, targets S) and
returns the GraphDelta (V⁺, V⁻, E⁺, E⁻) it implies. Content for new nodes
comes from the generator, except where the task can produce it exactly
(syntactic decomposition, set union), in which case no query is issued.
"""
import logging
from dataclasses import dataclass
from enum import Enum

from django.conf import settings

from apps.backends.generators import GeneratorQuery
from apps.tasks.tasks import ATOMIC

from .exceptions import (
    IncompatibleTargets, InvalidTarget, NotDecomposable, RefinePerfectNode, TransformError,
    WouldOrphanProblem,
)
from .graph import GraphDelta, ThoughtNode, apply_delta

logger = logging.getLogger(__name__)


class TransformKind(str, Enum):
    DECOMPOSE = 'decompose'
    SOLVE = 'solve'
    REFINE = 'refine'
    REDUCE = 'reduce'
    AGGREGATE = 'aggregate'


@dataclass(frozen=True)
class TransformRequest:
    kind: TransformKind
    multiplicity: int = 1
    targets: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, 'kind', TransformKind(self.kind))
        object.__setattr__(self, 'targets', frozenset(self.targets))
        if self.multiplicity < 1:
            raise TransformError(f"Multiplicity must be at least 1, got {self.multiplicity}")

    def to_dict(self):
        return {'kind': self.kind.value, 'multiplicity': self.multiplicity,
                'targets': sorted(self.targets)}


class _NodeFactory:
    """Hands out fresh ids for the nodes of one delta."""

    def __init__(self, graph):
        self.graph = graph
        self.next_id = graph.next_id
        self.nodes = []
        self.edges = set()

    def add(self, content, origin, parents, value=0.0, answers=None):
        node = ThoughtNode(id=self.next_id, content=content, value=value, origin=origin,
                           parents=tuple(parents), created_at=self.graph.step + 1,
                           answers=answers)
        self.next_id += 1
        self.nodes.append(node)
        self.edges.update((parent, node.id) for parent in node.parents)
        return node

    def delta(self):
        return GraphDelta(add_nodes=tuple(self.nodes), add_edges=frozenset(self.edges))


def _query(task, action, context, **prompt_context):
    system, user = task.prompt(action, **prompt_context)
    return GeneratorQuery(
        system=system,
        user=user,
        tag=action,
        temperature=settings.THOUGHTGRAPH['TEMPERATURE'],
        max_tokens=settings.THOUGHTGRAPH['REASONING_MAX_TOKENS'],
        context={'task': task.kind.value, **context},
    )


def _problem_node(graph, node_id):
    node = graph.node(node_id)
    if not node.is_problem:
        raise InvalidTarget(f"Node {node_id} is a candidate solution, not a problem")
    return node


def _candidate_node(graph, node_id):
    node = graph.node(node_id)
    if not node.is_candidate:
        raise InvalidTarget(f"Node {node_id} is a problem, not a candidate solution")
    return node


def decompose(graph, request, generator, task):
    """Both built-in tasks split problems syntactically, so no query is issued."""
    factory = _NodeFactory(graph)
    for target in sorted(request.targets):
        node = _problem_node(graph, target)
        plan = task.decomposition_plan(task.parse_problem(node.content))
        if plan is ATOMIC:
            raise NotDecomposable(f"Node {target} is already at the minimum problem size")
        for subproblem in plan:
            factory.add(subproblem.content, TransformKind.DECOMPOSE.value, [target])
    return factory.delta()


def solve(graph, request, generator, task):
    targets = [_problem_node(graph, target) for target in sorted(request.targets)]
    queries = []
    for node in targets:
        query = _query(task, 'solve', {'problem': node.content}, problem=node.content)
        queries.extend([query] * request.multiplicity)
    replies = iter(generator.complete_many(queries))
    factory = _NodeFactory(graph)
    for node in targets:
        problem = task.parse_problem(node.content)
        for _ in range(request.multiplicity):
            reply = next(replies)
            factory.add(task.candidate_content(reply), TransformKind.SOLVE.value, [node.id],
                        value=task.valuate(problem, reply), answers=node.id)
    return factory.delta()


def refine(graph, request, generator, task):
    """An empty target set is a no-op; targets must not already be perfect."""
    targets = [_candidate_node(graph, target) for target in sorted(request.targets)]
    for node in targets:
        if node.value >= 1.0:
            raise RefinePerfectNode(f"Node {node.id} is already correct")
    queries = []
    for node in targets:
        problem_node = graph.node(node.answers)
        feedback = task.feedback(task.parse_problem(problem_node.content), node.content)
        query = _query(task, 'refine', {'problem': problem_node.content, 'candidate': node.content},
                       problem=problem_node.content, candidate=node.content, feedback=feedback)
        queries.extend([query] * request.multiplicity)
    replies = iter(generator.complete_many(queries))
    factory = _NodeFactory(graph)
    for node in targets:
        problem = task.parse_problem(graph.node(node.answers).content)
        for _ in range(request.multiplicity):
            reply = next(replies)
            factory.add(task.candidate_content(reply), TransformKind.REFINE.value, [node.id],
                        value=task.valuate(problem, reply), answers=node.answers)
    return factory.delta()


def reduce(graph, request):
    targets = request.targets
    for target in targets:
        _candidate_node(graph, target)
    for problem_id in {graph.nodes[target].answers for target in targets}:
        if not set(graph.candidates(problem_id)) - targets:
            raise WouldOrphanProblem(f"Reducing would remove every candidate of node {problem_id}")
    incident = frozenset(edge for edge in graph.edges if edge[0] in targets or edge[1] in targets)
    return GraphDelta(remove_nodes=frozenset(targets), remove_edges=incident)


def aggregate(graph, request, generator, task):
    """Merge candidates of sibling subproblems into m attempts at their parent.

    Targets must cover every subproblem of one parent. A subproblem may bring
    several candidates; attempt j merges the (j mod count)-th of each, in
    creation order, so no attempt is steered by node values.
    """
    if not request.targets:
        raise IncompatibleTargets("Aggregation needs at least one candidate")
    groups = {}
    for target in sorted(request.targets):
        node = _candidate_node(graph, target)
        groups.setdefault(node.answers, []).append(node)
    parents = {graph.parent_problem(problem_id) for problem_id in groups}
    parent = parents.pop() if len(parents) == 1 else None
    if parent is None or set(graph.subproblems(parent)) != set(groups):
        raise IncompatibleTargets("Targets do not cover every subproblem of one parent")

    ordered = [groups[problem_id] for problem_id in graph.subproblems(parent)]
    attempts = [tuple(group[j % len(group)] for group in ordered) for j in range(request.multiplicity)]
    parent_node = graph.node(parent)
    if task.deterministic_aggregation:
        replies = [task.reference_aggregate([node.content for node in inputs]) for inputs in attempts]
    else:
        queries = []
        for inputs in attempts:
            parts = [node.content for node in inputs]
            queries.append(_query(task, 'aggregate', {'problem': parent_node.content, 'parts': parts},
                                  parts=parts))
        replies = generator.complete_many(queries)

    problem = task.parse_problem(parent_node.content)
    factory = _NodeFactory(graph)
    for inputs, reply in zip(attempts, replies):
        factory.add(task.candidate_content(reply), TransformKind.AGGREGATE.value,
                    [node.id for node in inputs], value=task.valuate(problem, reply),
                    answers=parent)
    return factory.delta()


def keep_best(graph, node_ids):
    """Ids to remove so that only the highest-value node survives (lowest id on ties)."""
    node_ids = list(node_ids)
    if not node_ids:
        return frozenset()
    best = max(node_ids, key=lambda i: (graph.nodes[i].value, -i))
    return frozenset(node_ids) - {best}


def apply_transform(graph, request, generator, task):
    """Run one transformation; returns the new graph and the delta applied."""
    if request.kind is TransformKind.REDUCE:
        delta = reduce(graph, request)
    else:
        handler = {
            TransformKind.DECOMPOSE: decompose,
            TransformKind.SOLVE: solve,
            TransformKind.REFINE: refine,
            TransformKind.AGGREGATE: aggregate,
        }[request.kind]
        delta = handler(graph, request, generator, task)
    new = apply_delta(graph, delta)
    logger.debug("Step %d: %s x%d on %s -> +%d/-%d nodes", new.step, request.kind.value,
                request.multiplicity, sorted(request.targets), len(delta.add_nodes),
                len(delta.remove_nodes))
    return new, delta
