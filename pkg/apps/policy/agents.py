"""
Policies choose the next action for a state.

``ScriptedPolicy`` follows the fixed divide-and-conquer order and costs no
queries. ``EnsemblePolicy`` asks k policy voters through the generator and
takes the modal proposal; the scripted choice rides along in the query
context so a simulated voter knows what a correct decision looks like.
"""
from dataclasses import dataclass

from django.conf import settings

from apps.graphs.transforms import TransformKind

from .environment import enumerate_actions
from .voting import cast_votes, select_mode


@dataclass(frozen=True)
class Decision:
    action: object
    proposals: tuple = ()
    reference: object = None
    rounds: int = 0
    discarded: int = 0


def scripted_action(state, actions=None):
    """Decompose top-down, solve the leaves, then aggregate deepest first."""
    actions = enumerate_actions(state) if actions is None else actions
    if not actions:
        return None
    by_kind = {}
    for action in actions:
        by_kind.setdefault(action.kind, []).append(action)

    if TransformKind.DECOMPOSE in by_kind:
        return by_kind[TransformKind.DECOMPOSE][0]
    graph = state.graph
    leaves = [
        action for action in by_kind.get(TransformKind.SOLVE, ())
        if not graph.subproblems(min(action.targets))
    ]
    if leaves:
        return leaves[0]
    aggregates = by_kind.get(TransformKind.AGGREGATE)
    if aggregates:
        def parent_of(action):
            return graph.parent_problem(graph.nodes[min(action.targets)].answers)

        # subproblems carry larger ids than their parents
        deepest = max(parent_of(action) for action in aggregates)
        return min(
            (action for action in aggregates if parent_of(action) == deepest),
            key=lambda action: (-sum(graph.nodes[i].value for i in action.targets),
                                sorted(action.targets)),
        )
    return actions[0]


class ScriptedPolicy:
    name = 'scripted'

    def decide(self, state, generator, cot_enabled=True):
        action = scripted_action(state)
        return Decision(action=action, reference=action)


class EnsemblePolicy:
    name = 'ensemble'

    def __init__(self, size=None):
        self.size = size or settings.THOUGHTGRAPH['ENSEMBLE_SIZE']

    def decide(self, state, generator, cot_enabled=True):
        actions = enumerate_actions(state)
        reference = scripted_action(state, actions)
        ballot = cast_votes(state, self.size, generator, cot_enabled, reference, actions)
        return Decision(
            action=select_mode(ballot.proposals),
            proposals=ballot.proposals,
            reference=reference,
            rounds=ballot.rounds,
            discarded=ballot.discarded,
        )
