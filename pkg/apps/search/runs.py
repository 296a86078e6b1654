"""
The search loop: calibrate α, then suggest, evaluate and record trials
until the rolling best objective stops improving or the budget runs out.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from numpy.lib.stride_tricks import sliding_window_view

from apps.backends.ledger import SEARCH
from apps.schedules.params import ScheduleParams
from apps.schedules.scheduler import run_schedule, trace_length
from apps.tasks.tasks import gen_instance, task_name

from .calibration import calibrate_alpha, objective
from .exceptions import InvalidBudget
from .sampler import ScheduleSampler

logger = logging.getLogger(__name__)

CHECKPOINTS = (25, 50, 100)


@dataclass(frozen=True)
class Trial:
    number: int
    params: ScheduleParams
    mean_error: float
    query_cost: int
    objective: float
    queries: int = 0

    def to_dict(self):
        return {
            'number': self.number,
            'params': self.params.to_dict(),
            'mean_error': self.mean_error,
            'query_cost': self.query_cost,
            'objective': self.objective,
            'queries': self.queries,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            number=int(data['number']),
            params=ScheduleParams.from_dict(data['params']),
            mean_error=float(data['mean_error']),
            query_cost=int(data['query_cost']),
            objective=float(data['objective']),
            queries=int(data.get('queries', 0)),
        )


def method_label(percent):
    return f'GoT{percent}'


@dataclass
class SearchRun:
    task: str
    seed: int
    alpha: float
    budget: int
    batch: int
    trials: list = field(default_factory=list)
    convergence_index: int | None = None
    # percent -> trial number
    checkpoints: dict = field(default_factory=dict)
    queries: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def search_cost(self):
        return self.queries.get('total', 0)

    @property
    def converged(self):
        return self.convergence_index is not None

    def checkpoint(self, percent):
        return self.trials[self.checkpoints[int(percent)] - 1]

    def to_dict(self):
        return {
            'task': self.task,
            'seed': self.seed,
            'alpha': self.alpha,
            'budget': self.budget,
            'batch': self.batch,
            'trials': [trial.to_dict() for trial in self.trials],
            'convergence_index': self.convergence_index,
            'checkpoints': {str(k): v for k, v in self.checkpoints.items()},
            'queries': self.queries,
            'wall_time': self.wall_time,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            task=data['task'],
            seed=int(data['seed']),
            alpha=float(data['alpha']),
            budget=int(data['budget']),
            batch=int(data['batch']),
            trials=[Trial.from_dict(trial) for trial in data['trials']],
            convergence_index=data.get('convergence_index'),
            checkpoints={int(k): int(v) for k, v in data['checkpoints'].items()},
            queries=data.get('queries', {}),
            wall_time=float(data.get('wall_time', 0.0)),
        )


def detect_convergence(objectives, window=None):
    """First 1-based trial k > window whose window best equals that of k−1, else None.

    The window best J^k is the lowest objective among trials k−window+1 … k.
    """
    window = window or settings.THOUGHTGRAPH['CONVERGENCE_WINDOW']
    values = np.asarray(objectives, dtype=float)
    if len(values) <= window:
        return None
    best = sliding_window_view(values, window).min(axis=1)
    flat = np.flatnonzero(best[1:] == best[:-1])
    return int(flat[0]) + window + 1 if flat.size else None


def checkpoint_trials(trials, convergence_index=None):
    """Best trial number within the first ceil(f·K) trials, for each checkpoint f."""
    if not trials:
        return {}
    horizon = convergence_index or len(trials)
    checkpoints = {}
    for percent in CHECKPOINTS:
        prefix = trials[:max(1, math.ceil(percent * horizon / 100))]
        checkpoints[percent] = min(prefix, key=lambda t: (t.objective, t.number)).number
    return checkpoints


def _evaluate(params, instances, generator):
    before = generator.ledger.total
    errors = [run_schedule(instance, params, generator).final_error for instance in instances]
    return float(np.mean(errors)), generator.ledger.total - before


def run_search(kind, n, generator, budget, seed=0, alpha=None, batch=None):
    """TPE search over ScheduleParams for one task; every query is charged to ``generator``."""
    conf = settings.THOUGHTGRAPH
    if budget < conf['MIN_SEARCH_BUDGET']:
        raise InvalidBudget(budget, conf['MIN_SEARCH_BUDGET'])
    if generator.ledger.phase != SEARCH:
        logger.warning("Search queries are being charged to the %s ledger", generator.ledger.phase)
    batch = batch or conf['EVALUATION_BATCH']
    name = task_name(kind, n)

    calibration_seed, batch_seed, sampler_seed = np.random.SeedSequence(seed).spawn(3)
    before = generator.ledger.snapshot()
    started = time.perf_counter()
    if alpha is None:
        alpha = calibrate_alpha(kind, n, generator, seed=calibration_seed)
    batch_rng = np.random.default_rng(batch_seed)
    instances = [gen_instance(kind, n, int(s)) for s in batch_rng.integers(2 ** 31, size=batch)]
    sampler = ScheduleSampler(seed=int(sampler_seed.generate_state(1)[0]))

    run = SearchRun(task=name, seed=seed, alpha=alpha, budget=budget, batch=batch)
    for number in range(1, budget + 1):
        params = sampler.suggest()
        mean_error, queries = _evaluate(params, instances, generator)
        cost = trace_length(params, kind, n)
        value = objective(alpha, mean_error, cost)
        sampler.observe(params, value)
        run.trials.append(Trial(number, params, mean_error, cost, value, queries))
        logger.info("Search %s trial %d: %s error=%.3f cost=%d objective=%.4f", name, number,
                    params.label, mean_error, cost, value)
        run.convergence_index = detect_convergence([trial.objective for trial in run.trials])
        if run.converged:
            break
    else:
        logger.warning("Search %s did not converge within %d trials", name, budget)

    run.checkpoints = checkpoint_trials(run.trials, run.convergence_index)
    run.queries = generator.ledger.since(before)
    run.wall_time = time.perf_counter() - started
    logger.info("Search %s finished after %d trials, %d queries; best %s", name, len(run.trials),
                run.search_cost, run.checkpoint(100).params.label)
    return run
