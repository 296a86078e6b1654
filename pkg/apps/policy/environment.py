"""
The thought-graph environment: states, actions, the valid action set and
the transition function.

A state is the instance, the current graph snapshot and the history of
applied actions. ``step`` only accepts actions that ``enumerate_actions``
offers for the state, so every recorded history is replayable.
"""
import hashlib
import itertools
import json
import logging
from dataclasses import dataclass

from django.conf import settings

from apps.graphs.graph import new_graph, serialize_state
from apps.graphs.transforms import TransformKind, TransformRequest, keep_best
from apps.schedules.records import apply_traced, node_error
from apps.tasks.tasks import ATOMIC, get_task

from .exceptions import InvalidAction, ParseFailure

logger = logging.getLogger(__name__)

KIND_ORDER = {kind: i for i, kind in enumerate(TransformKind)}


@dataclass(frozen=True)
class Action:
    kind: TransformKind
    targets: frozenset

    def __post_init__(self):
        object.__setattr__(self, 'kind', TransformKind(self.kind))
        object.__setattr__(self, 'targets', frozenset(self.targets))

    def encode(self):
        """Canonical wire form; equal actions always encode identically."""
        return json.dumps({'action': self.kind.value, 'nodes': sorted(self.targets)},
                          separators=(',', ':'))

    @classmethod
    def decode(cls, text):
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise ParseFailure(f"Action is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ParseFailure("Action must be a JSON object")
        nodes = data.get('nodes')
        if not isinstance(nodes, list) or not all(type(n) is int for n in nodes):
            raise ParseFailure("'nodes' must be a list of node ids")
        try:
            kind = TransformKind(data.get('action'))
        except ValueError:
            raise ParseFailure(f"Unknown transformation {data.get('action')!r}") from None
        return cls(kind, nodes)

    def request(self, multiplicity=1):
        return TransformRequest(self.kind, multiplicity, self.targets)

    def sort_key(self):
        return KIND_ORDER[self.kind], sorted(self.targets)

    def __str__(self):
        return f"{self.kind.value} {sorted(self.targets)}"


@dataclass(frozen=True)
class EnvState:
    instance: object
    graph: object
    # (Action, TraceEntry) pairs in the order they were applied
    history: tuple = ()

    @property
    def task(self):
        return get_task(self.instance.kind)

    @property
    def steps_taken(self):
        return len(self.history)

    @property
    def values(self):
        return {node_id: node.value for node_id, node in self.graph.nodes.items()}

    def digest(self):
        return hashlib.sha256(serialize_state(self.graph).encode()).hexdigest()[:16]


def reset(instance):
    task = get_task(instance.kind)
    return EnvState(instance=instance, graph=new_graph(task.root_problem(instance).content))


def _has_correct_candidate(graph, problem_id):
    return any(graph.nodes[c].value >= 1.0 for c in graph.candidates(problem_id))


def _ranked_candidates(graph, problem_id):
    return sorted(graph.candidates(problem_id), key=lambda i: (-graph.nodes[i].value, i))


def enumerate_actions(state):
    """Valid actions for ``state``, ordered by kind then targets."""
    graph, task = state.graph, state.task
    problems = sorted(node.id for node in graph.nodes.values() if node.is_problem)
    actions = []
    for problem_id in problems:
        solved = _has_correct_candidate(graph, problem_id)
        subproblems = graph.subproblems(problem_id)
        if not subproblems and not solved:
            plan = task.decomposition_plan(task.parse_problem(graph.nodes[problem_id].content))
            if plan is not ATOMIC:
                actions.append(Action(TransformKind.DECOMPOSE, {problem_id}))
        if not solved:
            actions.append(Action(TransformKind.SOLVE, {problem_id}))
        if subproblems and not solved:
            ranked = [_ranked_candidates(graph, child) for child in subproblems]
            if all(ranked):
                cap = settings.THOUGHTGRAPH['AGGREGATE_COMBINATION_CAP']
                for combination in itertools.islice(itertools.product(*ranked), cap):
                    actions.append(Action(TransformKind.AGGREGATE, combination))

        candidates = graph.candidates(problem_id)
        for candidate in candidates:
            if graph.nodes[candidate].value < 1.0:
                actions.append(Action(TransformKind.REFINE, {candidate}))
        if len(candidates) > 1:
            reductions = {frozenset({c}) for c in candidates}
            reductions.add(keep_best(graph, candidates))
            actions.extend(Action(TransformKind.REDUCE, targets) for targets in reductions)
    return sorted(set(actions), key=Action.sort_key)


def solved_node(state):
    """Id of a root candidate with zero error, or None."""
    graph = state.graph
    for candidate in _ranked_candidates(graph, graph.root.id):
        if node_error(graph, state.task, candidate) == 0:
            return candidate
    return None


def step(state, action, generator, actions=None):
    """Apply ``action`` and return the next state."""
    actions = enumerate_actions(state) if actions is None else actions
    if action not in actions:
        raise InvalidAction(f"{action} is not valid at step {state.steps_taken}")
    multiplicity = settings.THOUGHTGRAPH['POLICY_MULTIPLICITY']
    graph, entry = apply_traced(state.graph, action.request(multiplicity), generator, state.task)
    logger.debug("Applied %s, %d nodes now", action, len(graph.nodes))
    return EnvState(instance=state.instance, graph=graph, history=state.history + ((action, entry),))
