"""
TPE suggestions over the schedule parameter grid.

Each parameter is a categorical over its grid values and is sampled
independently by optuna's ``TPESampler``. The first trials are uniform;
afterwards the history is split at the ``TPE_GAMMA`` objective quantile.
"""
import math
from functools import partial

import numpy as np
import optuna
from django.conf import settings
from optuna.distributions import CategoricalDistribution
from optuna.trial import create_trial

from apps.schedules.params import FLAGS, MULTIPLICITIES, ScheduleParams, search_space

DISTRIBUTIONS = {
    'allow_reduce': CategoricalDistribution(FLAGS),
    'allow_refine': CategoricalDistribution(FLAGS),
    'solve_multiplicity': CategoricalDistribution(MULTIPLICITIES),
    'aggregate_multiplicity': CategoricalDistribution(MULTIPLICITIES),
    'refine_multiplicity': CategoricalDistribution(MULTIPLICITIES),
}


def good_count(gamma, n):
    """Size of the good set among n finished trials."""
    return min(n, max(1, math.ceil(gamma * n)))


def _choices(params):
    return {
        name: int(value) if isinstance(value, bool) else value
        for name, value in params.to_dict().items()
    }


class ScheduleSampler:
    """Suggests ScheduleParams given the (params, objective) pairs seen so far."""

    def __init__(self, seed=0, history=()):
        conf = settings.THOUGHTGRAPH
        self.startup = conf['TPE_STARTUP_TRIALS']
        self.rng = np.random.default_rng(seed)
        sampler = optuna.samplers.TPESampler(
            n_startup_trials=self.startup,
            prior_weight=conf['TPE_PRIOR_WEIGHT'],
            gamma=partial(good_count, conf['TPE_GAMMA']),
            seed=seed,
        )
        self.study = optuna.create_study(direction='minimize', sampler=sampler)
        self.objectives = []
        self._pending = None
        for trial in history:
            self.observe(trial.params, trial.objective)

    def suggest(self):
        if len(self.objectives) >= self.startup and len(set(self.objectives)) == 1:
            # a flat history gives the good and bad sets the same shape
            space = search_space()
            return space[int(self.rng.integers(len(space)))]
        self._pending = self.study.ask(DISTRIBUTIONS)
        return ScheduleParams(**self._pending.params)

    def observe(self, params, objective):
        pending, self._pending = self._pending, None
        if pending is not None and pending.params == _choices(params):
            self.study.tell(pending, objective)
        else:
            self.study.add_trial(create_trial(
                params=_choices(params),
                distributions=DISTRIBUTIONS,
                value=objective,
            ))
        self.objectives.append(objective)


def tpe_suggest(history, seed=0):
    """One suggestion from a fresh sampler primed with ``history`` (Trials)."""
    return ScheduleSampler(seed, history).suggest()
