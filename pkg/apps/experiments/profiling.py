"""
Empirical transition probabilities, read back from static-schedule traces.

A solve or aggregate succeeds when the node it produced has ℰ = 0. An
aggregate only counts when every input candidate was already correct, and
a refine only counts when its target had errors. Deterministic aggregates
and reduces always succeed.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from apps.graphs.transforms import TransformKind
from apps.schedules.params import ScheduleParams
from apps.schedules.scheduler import run_schedule
from apps.tasks.tasks import gen_instance, task_name

logger = logging.getLogger(__name__)

PROFILED_KINDS = (TransformKind.SOLVE, TransformKind.REFINE, TransformKind.REDUCE,
                  TransformKind.AGGREGATE)
DEFAULT_PROFILE_PARAMS = ScheduleParams(1, 1, 1, 1, 1)


@dataclass
class TransitionCount:
    successes: int = 0
    attempts: int = 0

    @property
    def probability(self):
        return self.successes / self.attempts if self.attempts else None


def transition_outcomes(entry):
    """One boolean per counted application in a TraceEntry."""
    kind = entry.kind
    if kind == TransformKind.REDUCE:
        return [True]
    if kind == TransformKind.SOLVE:
        return [node['error'] == 0 for node in entry.created]
    if kind == TransformKind.AGGREGATE:
        if not entry.queries:
            return [True] * len(entry.created)
        return [node['error'] == 0 for node in entry.created
                if not any(entry.input_errors.get(parent) for parent in node['parents'])]
    if kind == TransformKind.REFINE:
        return [node['error'] == 0 for node in entry.created
                if entry.input_errors.get(node['parents'][0])]
    return []


@dataclass
class TransitionProfile:
    task: str
    counts: dict = field(default_factory=lambda: {kind: TransitionCount() for kind in PROFILED_KINDS})

    def add_entry(self, entry):
        if entry.kind not in self.counts:
            return
        count = self.counts[entry.kind]
        for success in transition_outcomes(entry):
            count.attempts += 1
            count.successes += success

    def add_record(self, record):
        for entry in record.trace:
            self.add_entry(entry)

    def probability(self, kind):
        return self.counts[TransformKind(kind)].probability

    def rows(self):
        return [
            {
                'task': self.task,
                'transformation': kind.value,
                'successes': count.successes,
                'attempts': count.attempts,
                'probability': round(count.probability, 4),
            }
            for kind, count in self.counts.items() if count.attempts
        ]


def profile_transitions(kind, n, generator, runs, params=None, seed=0):
    if runs < 1:
        raise ValueError("Profiling needs at least one run")
    params = params or DEFAULT_PROFILE_PARAMS
    profile = TransitionProfile(task=task_name(kind, n))
    rng = np.random.default_rng(seed)
    for instance_seed in rng.integers(2 ** 31, size=runs):
        profile.add_record(run_schedule(gen_instance(kind, n, int(instance_seed)), params, generator))
    for row in profile.rows():
        logger.info("%s %s: %d/%d = %.3f", row['task'], row['transformation'], row['successes'],
                    row['attempts'], row['probability'])
    return profile
