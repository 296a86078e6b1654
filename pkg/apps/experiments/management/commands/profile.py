from apps.backends.ledger import INFERENCE
from apps.experiments.commands import ExperimentCommand
from apps.experiments.profiling import profile_transitions
from apps.experiments.reports import PROFILE_COLUMNS, write_table
from apps.schedules.forms import ScheduleParamsField


class Command(ExperimentCommand):
    help = "Estimate transition probabilities from static runs into profile/<task>.csv."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--task', required=True)
        parser.add_argument('--runs', type=int, default=100)
        parser.add_argument('--params', default='1,1,1,1,1', help="Schedule used for profiling")

    def run(self, config, **options):
        kind, n = self.task(options)
        params = ScheduleParamsField().clean(options['params'])
        seed = self.seeds(config, options)[0]
        profile = profile_transitions(kind, n, config.generator(INFERENCE, seed), options['runs'],
                                      params=params, seed=seed)
        path = self.out_dir(options) / 'profile' / f'{profile.task}.csv'
        write_table(path, PROFILE_COLUMNS, profile.rows())
        return self.done(f"Wrote transition profile to {path}")
