from apps.backends.ledger import SEARCH
from apps.experiments.commands import ExperimentCommand
from apps.experiments.reports import search_run_path, write_json
from apps.search.runs import CHECKPOINTS, method_label, run_search


class Command(ExperimentCommand):
    help = "Search static schedule parameters with TPE and write one SearchRun per seed."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--task', required=True)
        parser.add_argument('--budget', type=int, default=300, help="Maximum number of trials")
        parser.add_argument('--batch', type=int, help="Instances evaluated per trial")
        parser.add_argument('--alpha', type=float, help="Skip calibration and use this weight")

    def run(self, config, **options):
        kind, n = self.task(options)
        ledger = config.ledger(SEARCH)
        lines = []
        for seed in self.seeds(config, options):
            run = run_search(kind, n, config.generator(SEARCH, seed, ledger), options['budget'],
                             seed=seed, alpha=options['alpha'], batch=options['batch'])
            path = write_json(search_run_path(self.out_dir(options), run.task, seed), run.to_dict())
            best = ', '.join(f'{method_label(p)}={run.checkpoint(p).params.label}' for p in CHECKPOINTS)
            lines.append(f"{path}: {len(run.trials)} trials, C_s={run.search_cost}, {best}")
        return self.done('\n'.join(lines))
