import logging
import time
from dataclasses import dataclass, field

from django.conf import settings

from apps.backends.exceptions import BudgetExceeded, GeneratorFailure
from apps.graphs.graph import graph_to_dict
from apps.schedules.records import TraceEntry
from apps.tasks.tasks import TaskInstance, get_task

from .environment import Action, enumerate_actions, reset, solved_node, step
from .exceptions import AllProposalsInvalid

logger = logging.getLogger(__name__)

SOLVED = 'Solved'
STEP_CAP_REACHED = 'StepCapReached'
ABORTED = 'Aborted'
METHOD = 'ARIES'


def default_epsilon(kind, n):
    """Step cap: a multiple of the number of problems in the full plan."""
    return settings.THOUGHTGRAPH['EPSILON_FACTOR'] * get_task(kind).plan_size(n)


@dataclass
class StepRecord:
    action: Action
    trace: TraceEntry
    digest: str
    proposals: tuple = ()
    reference: Action | None = None
    rounds: int = 0
    discarded: int = 0

    @property
    def agrees_with_reference(self):
        return self.reference is None or self.action == self.reference

    def to_dict(self):
        return {
            'action': self.action.encode(),
            'trace': self.trace.to_dict(),
            'digest': self.digest,
            'proposals': [p.encode() for p in self.proposals],
            'reference': self.reference.encode() if self.reference else None,
            'rounds': self.rounds,
            'discarded': self.discarded,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            action=Action.decode(data['action']),
            trace=TraceEntry.from_dict(data['trace']),
            digest=data['digest'],
            proposals=tuple(Action.decode(p) for p in data.get('proposals', ())),
            reference=Action.decode(data['reference']) if data.get('reference') else None,
            rounds=int(data.get('rounds', 0)),
            discarded=int(data.get('discarded', 0)),
        )


@dataclass
class EpisodeRecord:
    task: str
    instance: TaskInstance
    policy: str
    epsilon: int
    cot: bool
    ensemble_size: int | None
    initial_digest: str
    steps: list = field(default_factory=list)
    terminal: str = ABORTED
    reason: str = ''
    final_node: int | None = None
    final_error: int | None = None
    queries: dict = field(default_factory=dict)
    wall_time: float = 0.0
    graph: dict | None = None
    method: str = METHOD
    search_cost: int = 0

    @property
    def actions(self):
        return [s.action for s in self.steps]

    @property
    def inference_cost(self):
        return self.queries.get('total', 0)

    @property
    def decision_errors(self):
        return sum(not s.agrees_with_reference for s in self.steps)

    def to_dict(self):
        return {
            'task': self.task,
            'method': self.method,
            'instance': self.instance.to_dict(),
            'policy': self.policy,
            'epsilon': self.epsilon,
            'cot': self.cot,
            'ensemble_size': self.ensemble_size,
            'initial_digest': self.initial_digest,
            'steps': [s.to_dict() for s in self.steps],
            'terminal': self.terminal,
            'reason': self.reason,
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
            instance=TaskInstance.from_dict(data['instance']),
            policy=data['policy'],
            epsilon=int(data['epsilon']),
            cot=bool(data['cot']),
            ensemble_size=data.get('ensemble_size'),
            initial_digest=data['initial_digest'],
            steps=[StepRecord.from_dict(s) for s in data['steps']],
            terminal=data['terminal'],
            reason=data.get('reason', ''),
            final_node=data.get('final_node'),
            final_error=data.get('final_error'),
            queries=data.get('queries', {}),
            wall_time=float(data.get('wall_time', 0.0)),
            graph=data.get('graph'),
            method=data.get('method', METHOD),
            search_cost=int(data.get('search_cost', 0)),
        )


def _final_error(state):
    task = state.task
    problem = task.root_problem(state.instance)
    best = state.graph.best_candidate(state.graph.root.id)
    if best is None:
        return None, task.score(problem, '').total
    return best.id, task.score(problem, best.content).total


def run_episode(instance, policy, generator, epsilon=None, cot_enabled=True):
    """Vote, step, repeat until solved, out of steps or unable to continue."""
    epsilon = epsilon if epsilon is not None else default_epsilon(instance.kind, instance.n)
    if epsilon < 1:
        raise ValueError("The step cap must be at least 1")
    state = reset(instance)
    record = EpisodeRecord(
        task=instance.name,
        instance=instance,
        policy=policy.name,
        epsilon=epsilon,
        cot=cot_enabled,
        ensemble_size=getattr(policy, 'size', None),
        initial_digest=state.digest(),
    )
    before = generator.ledger.snapshot()
    started = time.perf_counter()
    while True:
        if solved_node(state) is not None:
            record.terminal = SOLVED
            break
        if state.steps_taken >= epsilon:
            record.terminal = STEP_CAP_REACHED
            break
        if not enumerate_actions(state):
            record.terminal, record.reason = ABORTED, 'no valid action left'
            break
        try:
            decision = policy.decide(state, generator, cot_enabled)
            state = step(state, decision.action, generator)
        except (AllProposalsInvalid, GeneratorFailure, BudgetExceeded) as exc:
            record.terminal, record.reason = ABORTED, str(exc)
            logger.warning("Episode on %s seed %d aborted at step %d: %s", instance.name,
                           instance.seed, state.steps_taken, exc)
            break
        action, trace = state.history[-1]
        record.steps.append(StepRecord(
            action=action,
            trace=trace,
            digest=state.digest(),
            proposals=decision.proposals,
            reference=decision.reference,
            rounds=decision.rounds,
            discarded=decision.discarded,
        ))
        logger.info("%s seed %d step %d: %s", instance.name, instance.seed, state.steps_taken,
                    action)

    record.final_node, record.final_error = _final_error(state)
    record.queries = generator.ledger.since(before)
    record.wall_time = time.perf_counter() - started
    record.graph = graph_to_dict(state.graph)
    logger.info("Episode on %s seed %d: %s after %d steps, error=%s queries=%d", instance.name,
                instance.seed, record.terminal, len(record.steps), record.final_error,
                record.inference_cost)
    return record
