"""
Result files and CSV tables.

Records are JSON (one RunRecord per file, EpisodeRecords one per line);
tables go through tablib with the fixed column lists below. Cost columns
of the experiment report are per-instance means.
"""
import json
import logging
from collections import defaultdict
from pathlib import Path

import numpy as np
import tablib
from django.core.serializers.json import DjangoJSONEncoder

from apps.policy.episodes import EpisodeRecord
from apps.schedules.records import RunRecord
from apps.search.pareto import pareto_front

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ('task', 'method', 'mean_error', 'accuracy', 'search_cost', 'inference_cost',
                  'total_cost', 'instances', 'seeds', 'config_digest')
PARETO_COLUMNS = ('task', 'method', 'total_cost', 'mean_error')
PROFILE_COLUMNS = ('task', 'transformation', 'successes', 'attempts', 'probability')
ABLATION_COLUMNS = ('task', 'policy', 'ensemble_size', 'cot', 'episodes', 'mean_error',
                    'solved_rate', 'decision_error_rate', 'mean_queries')


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, cls=DjangoJSONEncoder, indent=1))
    return path


def append_jsonl(path, items):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('a') as handle:
        for item in items:
            handle.write(json.dumps(item, cls=DjangoJSONEncoder) + '\n')
    return path


def static_record_path(root, record):
    label = record.params.label if record.params else 'direct'
    return Path(root) / 'static' / record.task / f'{record.method}-{label}-{record.instance.seed}.json'


def episode_log_path(root, task):
    return Path(root) / 'episodes' / f'{task}.jsonl'


def search_run_path(root, task, seed):
    return Path(root) / 'search' / f'{task}-{seed}.json'


def load_records(root):
    """Every RunRecord and EpisodeRecord persisted under ``root``."""
    root = Path(root)
    records = [RunRecord.from_dict(json.loads(path.read_text()))
               for path in sorted(root.glob('static/**/*.json'))]
    for path in sorted(root.glob('episodes/*.jsonl')):
        with path.open() as handle:
            records.extend(EpisodeRecord.from_dict(json.loads(line)) for line in handle if line.strip())
    logger.debug("Loaded %d records from %s", len(records), root)
    return records


def report_rows(records, config_digest=''):
    groups = defaultdict(list)
    for record in records:
        groups[(record.task, record.method)].append(record)
    rows = []
    for (task, method), group in sorted(groups.items()):
        search_cost = float(np.mean([r.search_cost for r in group]))
        inference_cost = float(np.mean([r.inference_cost for r in group]))
        rows.append({
            'task': task,
            'method': method,
            'mean_error': round(float(np.mean([r.final_error for r in group])), 4),
            # filled by task adapters with pass/fail tests
            'accuracy': '',
            'search_cost': round(search_cost, 2),
            'inference_cost': round(inference_cost, 2),
            'total_cost': round(search_cost + inference_cost, 2),
            'instances': len(group),
            'seeds': ' '.join(str(s) for s in sorted({r.instance.seed for r in group})),
            'config_digest': config_digest,
        })
    return rows


def pareto_rows(rows):
    """Nondominated (total_cost, mean_error) rows, per task."""
    by_task = defaultdict(list)
    for row in rows:
        by_task[row['task']].append(row)
    return [
        {column: row[column] for column in PARETO_COLUMNS}
        for task in sorted(by_task)
        for row in pareto_front(by_task[task], key=lambda r: (r['total_cost'], r['mean_error']))
    ]


def build_table(columns, rows):
    dataset = tablib.Dataset(headers=list(columns))
    for row in rows:
        dataset.append([row[column] for column in columns])
    return dataset


def write_table(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset = build_table(columns, rows)
    path.write_text(dataset.export('csv'))
    return dataset
