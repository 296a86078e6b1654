from pathlib import Path

from django.conf import settings

from apps.experiments.commands import ExperimentCommand
from apps.experiments.reports import (
    PARETO_COLUMNS, REPORT_COLUMNS, load_records, pareto_rows, report_rows, write_table,
)


class Command(ExperimentCommand):
    help = "Summarise persisted records per (task, method) into a CSV report."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--in', dest='in_dir', type=Path, help="Results directory to read")
        parser.add_argument('--pareto', action='store_true',
                            help="Only the nondominated (total cost, error) rows")

    def run(self, config, **options):
        root = Path(options['in_dir'] or settings.RESULTS_DIR)
        rows = report_rows(load_records(root), config_digest=config.digest())
        if options['pareto']:
            columns, rows, default = PARETO_COLUMNS, pareto_rows(rows), 'pareto.csv'
        else:
            columns, default = REPORT_COLUMNS, 'report.csv'
        path = (options['out'] or root) / default
        dataset = write_table(path, columns, rows)
        self.stdout.write(dataset.export('csv'))
        return self.done(f"Wrote {len(rows)} rows to {path}")
