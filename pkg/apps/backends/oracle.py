"""
Seeded stochastic stand-in for a reasoning model.

Each answered query succeeds with the configured transition probability of
its transformation and otherwise returns the exact answer with a fixed
corruption applied, so a failed transition is always visible to the error
function. Policy queries are answered the same way: the reference action
with probability ``p_policy``, else some other valid action.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from apps.tasks.tasks import get_task

from .exceptions import GeneratorFailure, OracleConfigError

logger = logging.getLogger(__name__)

# measured success rates per task: solve, refine, aggregate
TRANSITION_PRESETS = {
    'perfect': {'p_solve': 1.0, 'p_refine': 1.0, 'p_aggregate': 1.0},
    'humaneval': {'p_solve': 0.77, 'p_refine': 0.29, 'p_aggregate': 1.0},
    'sorting32': {'p_solve': 0.57, 'p_refine': 0.12, 'p_aggregate': 0.60},
    'set-intersection32': {'p_solve': 0.75, 'p_refine': 0.71, 'p_aggregate': 1.0},
}


@dataclass(frozen=True)
class CorruptionModel:
    # sorting failures
    swaps: int = 2
    duplications: int = 1
    # set failures
    extra: int = 1
    missing: int = 1

    def __post_init__(self):
        if min(self.swaps, self.missing) < 0:
            raise OracleConfigError("Corruption counts cannot be negative")
        if self.duplications < 1 or self.extra < 1:
            raise OracleConfigError("At least one duplication and one extra element are "
                                    "needed for failures to be observable")


@dataclass(frozen=True)
class OracleConfig:
    p_solve: float = 1.0
    p_refine: float = 1.0
    p_aggregate: float = 1.0
    p_policy: float = 1.0
    p_policy_nocot: float = 1.0
    corruption: CorruptionModel = field(default_factory=CorruptionModel)
    seed: int = 0

    def __post_init__(self):
        for name in ('p_solve', 'p_refine', 'p_aggregate', 'p_policy', 'p_policy_nocot'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise OracleConfigError(f"{name}={value} is not a probability")

    @classmethod
    def from_preset(cls, name, **overrides):
        try:
            rates = TRANSITION_PRESETS[name]
        except KeyError:
            raise OracleConfigError(f"Unknown oracle preset '{name}'") from None
        return cls(**{**rates, **overrides})

    def with_seed(self, seed):
        return replace(self, seed=seed)

    def probability(self, tag, cot=True):
        if tag == 'policy':
            return self.p_policy if cot else self.p_policy_nocot
        try:
            return {'solve': self.p_solve, 'refine': self.p_refine,
                    'aggregate': self.p_aggregate}[tag]
        except KeyError:
            raise GeneratorFailure(f"The oracle has no transition rate for '{tag}'") from None

    def to_dict(self):
        return {
            'p_solve': self.p_solve, 'p_refine': self.p_refine, 'p_aggregate': self.p_aggregate,
            'p_policy': self.p_policy, 'p_policy_nocot': self.p_policy_nocot,
            'swaps': self.corruption.swaps, 'duplications': self.corruption.duplications,
            'extra': self.corruption.extra, 'missing': self.corruption.missing,
            'seed': self.seed,
        }


def _policy_reply(query, oracle, rng):
    context = query.context
    actions = list(context.get('actions', ()))
    reference = context.get('reference')
    p = oracle.probability('policy', cot=context.get('cot', True))
    if reference is not None and rng.random() < p:
        choice = reference
    else:
        alternatives = [action for action in actions if action != reference]
        if not alternatives:
            return "I could not find a sensible action for this state."
        choice = alternatives[int(rng.integers(len(alternatives)))]
    return f"Choosing the next transformation.\n```json\n{choice}\n```"


def oracle_complete(query, oracle, index):
    """Reply to ``query`` as the ``index``-th call of an oracle run."""
    rng = np.random.default_rng([oracle.seed, index])
    if query.tag == 'policy':
        return _policy_reply(query, oracle, rng)

    context = query.context
    task = get_task(context['task'])
    problem = task.parse_problem(context['problem'])
    if query.tag == 'aggregate':
        exact = task.reference_aggregate(context['parts'])
    else:
        exact = task.reference_solve(problem)
    if rng.random() < oracle.probability(query.tag):
        return exact
    corrupted = task.corrupt(problem, exact, rng, oracle.corruption)
    logger.debug("Oracle %s failure on %s: %s", query.tag, context['problem'][:40], corrupted)
    return corrupted
