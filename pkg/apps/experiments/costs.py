from collections import Counter
from dataclasses import dataclass

from apps.backends.ledger import INFERENCE, SEARCH, QueryLedger
from apps.graphs.transforms import TransformKind
from apps.policy.episodes import EpisodeRecord
from apps.tasks.tasks import get_task, parse_task_name


@dataclass(frozen=True)
class CostSummary:
    search: int = 0
    inference: int = 0

    @property
    def total(self):
        return self.search + self.inference


def account_costs(ledgers):
    """Sum QueryLedgers or their snapshots by phase into (C_s, C_i)."""
    totals = Counter()
    for ledger in ledgers:
        snapshot = ledger.snapshot() if isinstance(ledger, QueryLedger) else ledger
        if snapshot['phase'] not in (SEARCH, INFERENCE):
            raise ValueError(f"Unknown cost phase '{snapshot['phase']}'")
        totals[snapshot['phase']] += snapshot['total']
    return CostSummary(search=totals[SEARCH], inference=totals[INFERENCE])


def record_costs(record):
    return CostSummary(search=record.search_cost, inference=record.inference_cost)


def _transform_queries(entry, task):
    request = entry.request
    if request.kind in (TransformKind.SOLVE, TransformKind.REFINE):
        return len(request.targets) * request.multiplicity
    if request.kind == TransformKind.AGGREGATE and not task.deterministic_aggregation:
        return request.multiplicity
    return 0


def replay_query_count(record):
    """Queries a record's trace implies, recomputed from each request's query contract.

    Policy queries of an episode are k per voting round. Rounds that ended an
    episode with every proposal invalid are not part of any step.
    """
    kind, _ = parse_task_name(record.task)
    task = get_task(kind)
    if isinstance(record, EpisodeRecord):
        voters = record.ensemble_size or 0
        return sum(step.rounds * voters + _transform_queries(step.trace, task)
                   for step in record.steps)
    return sum(_transform_queries(entry, task) for entry in record.trace)
