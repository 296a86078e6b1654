"""
Trace bookkeeping shared by static schedules and policy episodes.

``apply_traced`` wraps ``apply_transform`` and notes, for every created
node, its error against the problem it answers, and for every candidate
target the error it had before the transformation ran. The profiler reads
transition outcomes from these entries instead of re-running anything.
"""
from dataclasses import dataclass, field

from apps.graphs.graph import graph_from_dict
from apps.graphs.transforms import TransformRequest, apply_transform
from apps.tasks.tasks import TaskInstance

from .params import ScheduleParams


@dataclass
class TraceEntry:
    request: TransformRequest
    created: list = field(default_factory=list)
    removed: list = field(default_factory=list)
    # error of each candidate target before the transformation, by node id
    input_errors: dict = field(default_factory=dict)
    queries: int = 0

    @property
    def kind(self):
        return self.request.kind

    def to_dict(self):
        return {
            **self.request.to_dict(),
            'created': self.created,
            'removed': self.removed,
            'input_errors': {str(k): v for k, v in self.input_errors.items()},
            'queries': self.queries,
        }

    @classmethod
    def from_dict(cls, data):
        request = TransformRequest(data['kind'], data['multiplicity'], data['targets'])
        return cls(
            request=request,
            created=list(data.get('created', ())),
            removed=list(data.get('removed', ())),
            input_errors={int(k): v for k, v in data.get('input_errors', {}).items()},
            queries=int(data.get('queries', 0)),
        )


def node_error(graph, task, node_id):
    """ℰ of a candidate against the problem it answers; None for problem nodes."""
    node = graph.node(node_id)
    if node.is_problem:
        return None
    problem = task.parse_problem(graph.node(node.answers).content)
    return task.score(problem, node.content).total


def apply_traced(graph, request, generator, task):
    """Apply one transformation and return (new_graph, TraceEntry)."""
    input_errors = {
        target: node_error(graph, task, target)
        for target in sorted(request.targets)
        if graph.node(target).is_candidate
    }
    before = generator.ledger.snapshot()
    new, delta = apply_transform(graph, request, generator, task)
    created = [
        {
            'id': node.id,
            'origin': node.origin,
            'value': node.value,
            'parents': list(node.parents),
            'error': node_error(new, task, node.id),
        }
        for node in delta.add_nodes
    ]
    entry = TraceEntry(
        request=request,
        created=created,
        removed=sorted(delta.remove_nodes),
        input_errors=input_errors,
        queries=generator.ledger.since(before)['total'],
    )
    return new, entry


@dataclass
class RunRecord:
    task: str
    method: str
    instance: TaskInstance
    params: ScheduleParams | None
    trace: list
    final_node: int | None
    final_error: int
    # inference-phase ledger delta of this run: {'phase', 'total', 'counts'}
    queries: dict
    wall_time: float
    search_cost: int = 0
    graph: dict | None = None

    @property
    def inference_cost(self):
        return self.queries['total']

    @property
    def trace_kinds(self):
        return [entry.kind for entry in self.trace]

    @property
    def solved(self):
        return self.final_error == 0

    def to_dict(self):
        return {
            'task': self.task,
            'method': self.method,
            'instance': self.instance.to_dict(),
            'params': self.params.to_dict() if self.params else None,
            'trace': [entry.to_dict() for entry in self.trace],
            'final_node': self.final_node,
            'final_error': self.final_error,
            'queries': self.queries,
            'wall_time': self.wall_time,
            'search_cost': self.search_cost,
            'graph': self.graph,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            task=data['task'],
            method=data['method'],
            instance=TaskInstance.from_dict(data['instance']),
            params=ScheduleParams.from_dict(data['params']) if data.get('params') else None,
            trace=[TraceEntry.from_dict(item) for item in data['trace']],
            final_node=data.get('final_node'),
            final_error=int(data['final_error']),
            queries=data['queries'],
            wall_time=float(data.get('wall_time', 0.0)),
            search_cost=int(data.get('search_cost', 0)),
            graph=data.get('graph'),
        )

    def final_graph(self):
        return graph_from_dict(self.graph) if self.graph else None
