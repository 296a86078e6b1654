import logging

import numpy as np
from django.conf import settings

from apps.schedules.params import search_space
from apps.schedules.scheduler import run_schedule, trace_length
from apps.tasks.tasks import gen_instance, task_name

from .exceptions import DegenerateTask

logger = logging.getLogger(__name__)

# keeps α inside the open interval
ALPHA_MARGIN = 1e-6
MIN_CALIBRATION_SAMPLES = 30


def objective(alpha, mean_error, cost):
    """α·ℰ + (1−α)·|Φ|, the scalar the search minimises."""
    return alpha * mean_error + (1 - alpha) * cost


def alpha_from_samples(errors, costs):
    """α = E[|Φ|] / E[ℰ + |Φ|], which weighs both objectives equally on average."""
    errors = np.asarray(errors, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if errors.shape != costs.shape or not errors.size:
        raise ValueError("Need the same positive number of error and cost samples")
    mean_error, mean_cost = errors.mean(), costs.mean()
    if mean_error + mean_cost == 0:
        raise DegenerateTask("Both the expected error and the expected cost are zero")
    alpha = mean_cost / (mean_error + mean_cost)
    return float(np.clip(alpha, ALPHA_MARGIN, 1 - ALPHA_MARGIN))


def calibrate_alpha(kind, n, generator, samples=None, seed=0):
    """Estimate α from static runs with uniformly drawn parameters and instances."""
    samples = samples or settings.THOUGHTGRAPH['CALIBRATION_SAMPLES']
    if samples < MIN_CALIBRATION_SAMPLES:
        raise ValueError(f"Calibration needs at least {MIN_CALIBRATION_SAMPLES} samples")
    rng = np.random.default_rng(seed)
    space = search_space()
    errors, costs = [], []
    for _ in range(samples):
        params = space[int(rng.integers(len(space)))]
        instance = gen_instance(kind, n, int(rng.integers(2 ** 31)))
        record = run_schedule(instance, params, generator)
        errors.append(record.final_error)
        costs.append(trace_length(params, kind, n))
    alpha = alpha_from_samples(errors, costs)
    logger.info("Calibrated alpha=%.4f for %s from %d samples (mean error %.3f, mean cost %.3f)",
                alpha, task_name(kind, n), samples, np.mean(errors), np.mean(costs))
    return alpha
