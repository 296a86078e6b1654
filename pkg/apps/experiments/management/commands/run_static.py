import json
from pathlib import Path

from apps.backends.ledger import INFERENCE
from apps.experiments.commands import ExperimentCommand
from apps.experiments.exceptions import ConfigError
from apps.experiments.reports import static_record_path, write_json
from apps.schedules.forms import ScheduleParamsField
from apps.schedules.scheduler import GOT, run_io, run_schedule
from apps.search.runs import CHECKPOINTS, SearchRun, method_label
from apps.tasks.tasks import gen_instance, task_name


def load_search_run(path, name):
    try:
        run = SearchRun.from_dict(json.loads(path.read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"Cannot load search run {path}: {exc}") from exc
    if run.task != name:
        raise ConfigError(f"{path} searched {run.task}, not {name}")
    return run


class Command(ExperimentCommand):
    help = "Run a static schedule (or the IO baseline) once per seed and write RunRecords."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--task', required=True)
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--params', help="R_ed,R_ef,S^m,A^m,R_ef^m, e.g. 0,0,1,1,1")
        source.add_argument('--from-search', type=Path,
                            help="SearchRun JSON to take checkpoint parameters from")
        source.add_argument('--io', action='store_true', help="Direct input-output baseline")
        parser.add_argument('--checkpoint', type=int, choices=CHECKPOINTS, default=100)

    def run(self, config, **options):
        kind, n = self.task(options)
        method, params, search_cost = GOT, None, 0
        if options['from_search']:
            search = load_search_run(options['from_search'], task_name(kind, n))
            params = search.checkpoint(options['checkpoint']).params
            method, search_cost = method_label(options['checkpoint']), search.search_cost
        elif options['params']:
            params = ScheduleParamsField().clean(options['params'])

        out = self.out_dir(options)
        ledger = config.ledger(INFERENCE)
        seeds = self.seeds(config, options)
        for seed in seeds:
            instance = gen_instance(kind, n, seed)
            generator = config.generator(INFERENCE, seed, ledger)
            if options['io']:
                record = run_io(instance, generator)
            else:
                record = run_schedule(instance, params, generator, method)
            record.search_cost = search_cost
            write_json(static_record_path(out, record), record.to_dict())
        return self.done(f"Wrote {len(seeds)} run records under {out / 'static' / task_name(kind, n)} "
                         f"({ledger.total} queries)")
