import logging
from dataclasses import asdict, dataclass

import numpy as np

from apps.backends.generators import build_generator
from apps.policy.agents import EnsemblePolicy, ScriptedPolicy
from apps.policy.episodes import SOLVED, run_episode
from apps.tasks.tasks import gen_instance, task_name

logger = logging.getLogger(__name__)

MAX_ENSEMBLE_SIZE = 15
POLICIES = ('ensemble', 'scripted')


@dataclass(frozen=True)
class AblationRow:
    task: str
    policy: str
    ensemble_size: int
    cot: bool
    episodes: int
    mean_error: float
    solved_rate: float
    decision_error_rate: float
    mean_queries: float

    def to_dict(self):
        return asdict(self)


def summarize_episodes(name, policy, size, cot, records):
    steps = sum(len(record.steps) for record in records)
    return AblationRow(
        task=name,
        policy=policy,
        ensemble_size=size,
        cot=cot,
        episodes=len(records),
        mean_error=round(float(np.mean([r.final_error for r in records])), 4),
        solved_rate=round(float(np.mean([r.terminal == SOLVED for r in records])), 4),
        decision_error_rate=round(sum(r.decision_errors for r in records) / steps, 4) if steps else 0.0,
        mean_queries=round(float(np.mean([r.inference_cost for r in records])), 2),
    )


def ablation_sweep(kind, n, sizes, cot_modes=(True, False), seeds=range(10), make_generator=None,
                   epsilon=None, policy='ensemble'):
    """One row per (ensemble size, CoT flag), each over the same seeded instances.

    ``make_generator(seed)`` gives the generator for one episode; the default
    is a perfect oracle seeded with the instance seed.
    """
    if not sizes or any(not 1 <= size <= MAX_ENSEMBLE_SIZE for size in sizes):
        raise ValueError(f"Ensemble sizes must lie in 1..{MAX_ENSEMBLE_SIZE}")
    if policy not in POLICIES:
        raise ValueError(f"Unknown policy '{policy}'")
    make_generator = make_generator or (lambda seed: build_generator('oracle'))
    name = task_name(kind, n)
    seeds = list(seeds)

    rows = []
    for size in sizes:
        for cot in cot_modes:
            agent = ScriptedPolicy() if policy == 'scripted' else EnsemblePolicy(size)
            records = [
                run_episode(gen_instance(kind, n, seed), agent, make_generator(seed), epsilon, cot)
                for seed in seeds
            ]
            row = summarize_episodes(name, policy, size, cot, records)
            logger.info("Ablation %s k=%d cot=%s: error=%.3f decision errors=%.3f", name, size, cot,
                        row.mean_error, row.decision_error_rate)
            rows.append(row)
    return rows
