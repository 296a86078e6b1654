from apps.experiments.commands import ExperimentCommand
from apps.experiments.reports import append_jsonl
from apps.tasks.tasks import gen_instance, task_name


class Command(ExperimentCommand):
    help = "Generate seeded task instances into instances/<task>.jsonl."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--task', required=True, help="e.g. sorting32 or set-intersection64")

    def run(self, config, **options):
        kind, n = self.task(options)
        instances = [gen_instance(kind, n, seed).to_dict() for seed in self.seeds(config, options)]
        path = self.out_dir(options) / 'instances' / f'{task_name(kind, n)}.jsonl'
        path.unlink(missing_ok=True)
        append_jsonl(path, instances)
        return self.done(f"Wrote {len(instances)} instances to {path}")
