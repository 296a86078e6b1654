from collections import Counter

from apps.backends.ledger import INFERENCE
from apps.experiments.ablation import POLICIES
from apps.experiments.commands import ExperimentCommand
from apps.experiments.reports import append_jsonl, episode_log_path
from apps.policy.agents import EnsemblePolicy, ScriptedPolicy
from apps.policy.episodes import run_episode
from apps.tasks.tasks import gen_instance, task_name


class Command(ExperimentCommand):
    help = "Run policy-driven episodes and append EpisodeRecords to episodes/<task>.jsonl."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--task', required=True)
        parser.add_argument('--policy', choices=POLICIES, default='ensemble')
        parser.add_argument('--k', type=int, help="Ensemble size (default from config)")
        parser.add_argument('--epsilon', type=int, help="Step cap (default 3 x plan size)")
        parser.add_argument('--no-cot', action='store_true', help="Ask voters without the analysis block")

    def run(self, config, **options):
        kind, n = self.task(options)
        size = options['k'] or config.ensemble_size
        policy = ScriptedPolicy() if options['policy'] == 'scripted' else EnsemblePolicy(size)
        epsilon = options['epsilon'] or config.epsilon
        ledger = config.ledger(INFERENCE)

        records = [
            run_episode(gen_instance(kind, n, seed), policy, config.generator(INFERENCE, seed, ledger),
                        epsilon=epsilon, cot_enabled=not options['no_cot'])
            for seed in self.seeds(config, options)
        ]
        path = append_jsonl(episode_log_path(self.out_dir(options), task_name(kind, n)),
                            [record.to_dict() for record in records])
        terminals = Counter(record.terminal for record in records)
        summary = ', '.join(f'{count} {terminal}' for terminal, count in sorted(terminals.items()))
        return self.done(f"Appended {len(records)} episodes to {path}: {summary}")
