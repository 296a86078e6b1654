from apps.backends.ledger import INFERENCE
from apps.experiments.ablation import POLICIES, ablation_sweep
from apps.experiments.commands import ExperimentCommand
from apps.experiments.forms import IntegerListField
from apps.experiments.reports import ABLATION_COLUMNS, write_table
from apps.tasks.tasks import task_name

COT_MODES = {'both': (True, False), 'on': (True,), 'off': (False,)}


class Command(ExperimentCommand):
    help = "Sweep ensemble sizes with and without CoT into ablation/<task>.csv."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--task', required=True)
        parser.add_argument('--sizes', default='1,5,10,15')
        parser.add_argument('--cot', choices=tuple(COT_MODES), default='both')
        parser.add_argument('--policy', choices=POLICIES, default='ensemble')
        parser.add_argument('--epsilon', type=int)

    def run(self, config, **options):
        kind, n = self.task(options)
        sizes = IntegerListField().clean(options['sizes'])
        ledger = config.ledger(INFERENCE)
        rows = ablation_sweep(
            kind, n, sizes,
            cot_modes=COT_MODES[options['cot']],
            seeds=self.seeds(config, options, default=range(10)),
            make_generator=lambda seed: config.generator(INFERENCE, seed, ledger),
            epsilon=options['epsilon'] or config.epsilon,
            policy=options['policy'],
        )
        path = self.out_dir(options) / 'ablation' / f'{task_name(kind, n)}.csv'
        write_table(path, ABLATION_COLUMNS, [row.to_dict() for row in rows])
        return self.done(f"Wrote {len(rows)} ablation rows to {path}")
