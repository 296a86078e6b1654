import json
import math
import tempfile
from io import StringIO
from pathlib import Path

import yaml
from django.conf import settings
from django.test import SimpleTestCase, override_settings

from apps.backends.generators import HttpGenerator, build_generator
from apps.backends.ledger import INFERENCE, SEARCH, QueryLedger
from apps.backends.oracle import TRANSITION_PRESETS, OracleConfig
from apps.graphs.transforms import TransformKind, TransformRequest
from apps.policy.agents import EnsemblePolicy, ScriptedPolicy
from apps.policy.episodes import SOLVED, EpisodeRecord, run_episode
from apps.schedules.params import ScheduleParams
from apps.schedules.records import RunRecord, TraceEntry
from apps.schedules.scheduler import run_io, run_schedule
from apps.search.pareto import pareto_front
from apps.search.runs import SearchRun
from apps.tasks.tasks import DIFFICULTIES, TaskKind, gen_instance

from .ablation import ablation_sweep
from .cli import cli_main
from .commands import BACKEND_FAILURE, BUDGET_EXHAUSTED, CONFIG_ERROR, SUCCESS, USAGE_ERROR
from .config import load_config
from .costs import CostSummary, account_costs, record_costs, replay_query_count
from .exceptions import ConfigError
from .profiling import TransitionProfile, profile_transitions
from .reports import (
    REPORT_COLUMNS, append_jsonl, episode_log_path, load_records, pareto_rows, report_rows,
    static_record_path, write_json, write_table,
)

SOL, REF, AGG = TransformKind.SOLVE, TransformKind.REFINE, TransformKind.AGGREGATE
SORTING32 = TRANSITION_PRESETS['sorting32']


def oracle(seed=0, **rates):
    return build_generator('oracle', oracle=OracleConfig(seed=seed, **rates))


def three_sigma(p, n):
    return 3 * math.sqrt(p * (1 - p) / n)


class TempDirMixin:

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.addCleanup(self._tmp.cleanup)

    def write_config(self, data):
        path = self.tmp / 'config.yaml'
        path.write_text(yaml.safe_dump(data))
        return path


class ConfigTests(TempDirMixin, SimpleTestCase):

    def test_defaults(self):
        config = load_config()
        self.assertEqual(config.backend, 'oracle')
        self.assertEqual(config.oracle, OracleConfig())
        self.assertEqual(config.ensemble_size, 5)
        self.assertEqual(config.seeds, [])

    def test_preset_with_overrides(self):
        path = self.write_config({'oracle_preset': 'sorting32', 'oracle': {'p_solve': 0.9, 'swaps': 3},
                                  'seeds': '0..3', 'ensemble_size': 7})
        config = load_config(path)
        self.assertEqual(config.oracle.p_solve, 0.9)
        self.assertEqual(config.oracle.p_aggregate, 0.6)
        self.assertEqual(config.oracle.corruption.swaps, 3)
        self.assertEqual(config.seeds, [0, 1, 2, 3])
        self.assertEqual(config.ensemble_size, 7)

    def test_invalid_values(self):
        for data in ({'oracle': {'p_solve': 1.5}}, {'oracle': {'p_magic': 0.5}}, {'colour': 'red'},
                     {'ensemble_size': 16}, {'backend': 'carrier-pigeon'}, {'seeds': 'a,b'},
                     {'oracle': {'duplications': 0}}):
            with self.subTest(data=data), self.assertRaises(ConfigError):
                load_config(self.write_config(data))

    def test_file_must_hold_a_mapping(self):
        path = self.tmp / 'list.yaml'
        path.write_text('- sorting32\n')
        with self.assertRaises(ConfigError):
            load_config(path)
        with self.assertRaises(ConfigError):
            load_config(self.tmp / 'missing.yaml')

    def test_flags_override_the_file(self):
        config = load_config(self.write_config({'backend': 'http'}), backend='oracle')
        self.assertEqual(config.backend, 'oracle')

    def test_digest(self):
        self.assertEqual(load_config().digest(), load_config().digest())
        self.assertNotEqual(load_config().digest(),
                            load_config(self.write_config({'oracle_preset': 'sorting32'})).digest())

    def test_http_generator_options(self):
        path = self.write_config({'backend': 'http', 'endpoint': 'http://127.0.0.1:8000/v1',
                                  'temperature': 0.2, 'timeout': 5, 'budget': 9})
        generator = load_config(path).generator(SEARCH)
        self.assertIsInstance(generator, HttpGenerator)
        self.assertEqual(generator.endpoint, 'http://127.0.0.1:8000/v1')
        self.assertEqual(generator.temperature, 0.2)
        self.assertEqual(generator.ledger.phase, SEARCH)
        self.assertEqual(generator.ledger.cap, 9)

    def test_budget_defaults_to_the_setting(self):
        budgeted = {**settings.THOUGHTGRAPH, 'QUERY_BUDGET': 7}
        with override_settings(THOUGHTGRAPH=budgeted):
            self.assertEqual(load_config().budget, 7)
            self.assertEqual(load_config().generator().ledger.cap, 7)
            self.assertEqual(load_config(budget=3).budget, 3)
        self.assertIsNone(load_config().budget)

    def test_shared_ledger(self):
        config = load_config()
        ledger = config.ledger()
        first, second = config.generator(seed=1, ledger=ledger), config.generator(seed=2, ledger=ledger)
        self.assertIs(first.ledger, second.ledger)
        self.assertEqual(second.config.seed, 2)


class ProfilingTests(SimpleTestCase):

    def test_perfect_oracle_profiles_to_one(self):
        profile = profile_transitions('sorting', 32, oracle(), runs=5)
        rows = {row['transformation']: row for row in profile.rows()}
        self.assertEqual(set(rows), {'solve', 'aggregate', 'reduce'})
        self.assertTrue(all(row['probability'] == 1.0 for row in rows.values()))

    def test_recovers_solve_and_aggregate_rates(self):
        generator = oracle(seed=3, **SORTING32)
        profile = profile_transitions('sorting', 32, generator, runs=250,
                                      params=ScheduleParams(0, 0, 20, 20, 1), seed=3)
        solve = profile.counts[SOL]
        self.assertEqual(solve.attempts, 10_000)
        self.assertAlmostEqual(solve.probability, 0.57, delta=three_sigma(0.57, 10_000))
        aggregate = profile.counts[AGG]
        # each attempt merges a fresh pair of leaves, so about 0.57 ** 2 of them count
        self.assertGreater(aggregate.attempts, 1000)
        self.assertAlmostEqual(aggregate.probability, 0.6, delta=three_sigma(0.6, aggregate.attempts))

    def test_recovers_refine_rate_on_erroneous_targets(self):
        generator = oracle(seed=4, p_refine=0.12, p_aggregate=0.0)
        profile = profile_transitions('sorting', 32, generator, runs=200,
                                      params=ScheduleParams(0, 1, 1, 1, 20), seed=4)
        refine = profile.counts[REF]
        self.assertEqual(refine.attempts, 4000)
        self.assertAlmostEqual(refine.probability, 0.12, delta=three_sigma(0.12, 4000))

    def test_set_union_counts_as_success(self):
        profile = profile_transitions('set-intersection', 32, oracle(p_solve=0.5), runs=10)
        self.assertEqual(profile.probability('aggregate'), 1.0)

    def test_refine_of_correct_target_is_not_counted(self):
        created = [{'id': 6, 'origin': 'refine', 'value': 1.0, 'parents': [5], 'error': 0}]
        request = TransformRequest(REF, 1, {5})
        profile = TransitionProfile(task='sorting32')
        profile.add_entry(TraceEntry(request, created, input_errors={5: 0}, queries=1))
        self.assertEqual(profile.counts[REF].attempts, 0)
        profile.add_entry(TraceEntry(request, created, input_errors={5: 2}, queries=1))
        self.assertEqual((profile.counts[REF].successes, profile.counts[REF].attempts), (1, 1))

    def test_aggregate_needs_correct_inputs(self):
        created = [{'id': 7, 'origin': 'aggregate', 'value': 1.0, 'parents': [3, 4], 'error': 0},
                   {'id': 8, 'origin': 'aggregate', 'value': 0.5, 'parents': [3, 4], 'error': 1}]
        request = TransformRequest(AGG, 2, {3, 4})
        profile = TransitionProfile(task='sorting32')
        profile.add_entry(TraceEntry(request, created, input_errors={3: 0, 4: 1}, queries=2))
        self.assertEqual(profile.counts[AGG].attempts, 0)
        profile.add_entry(TraceEntry(request, created, input_errors={3: 0, 4: 0}, queries=2))
        self.assertEqual((profile.counts[AGG].successes, profile.counts[AGG].attempts), (1, 2))

    def test_aggregate_conditions_each_attempt_on_its_own_inputs(self):
        created = [{'id': 7, 'origin': 'aggregate', 'value': 1.0, 'parents': [3, 4], 'error': 0},
                   {'id': 8, 'origin': 'aggregate', 'value': 0.5, 'parents': [5, 4], 'error': 1}]
        profile = TransitionProfile(task='sorting32')
        profile.add_entry(TraceEntry(TransformRequest(AGG, 2, {3, 4, 5}), created,
                                     input_errors={3: 0, 4: 0, 5: 1}, queries=2))
        self.assertEqual((profile.counts[AGG].successes, profile.counts[AGG].attempts), (1, 1))

    def test_needs_a_run(self):
        with self.assertRaises(ValueError):
            profile_transitions('sorting', 32, oracle(), runs=0)


class CostTests(SimpleTestCase):

    def test_episode_costs(self):
        costs = account_costs([{'phase': INFERENCE, 'total': 40}, {'phase': INFERENCE, 'total': 22}])
        self.assertEqual(costs, CostSummary(search=0, inference=62))
        self.assertEqual(costs.total, 62)

    def test_search_costs(self):
        self.assertEqual(account_costs([{'phase': SEARCH, 'total': 3}] * 100).search, 300)

    def test_ledgers_are_accepted(self):
        ledger = QueryLedger(SEARCH)
        for _ in range(4):
            ledger.reserve('solve')
        self.assertEqual(account_costs([ledger, QueryLedger(INFERENCE)]), CostSummary(4, 0))

    def test_unknown_phase(self):
        with self.assertRaises(ValueError):
            account_costs([{'phase': 'warmup', 'total': 1}])

    def test_static_replay_matches_the_ledger(self):
        params = ScheduleParams(1, 1, 5, 5, 5)
        for kind in TaskKind:
            for n in DIFFICULTIES:
                record = run_schedule(gen_instance(kind, n, n), params, oracle(seed=n, **SORTING32))
                restored = RunRecord.from_dict(json.loads(json.dumps(record.to_dict())))
                with self.subTest(kind=kind, n=n):
                    self.assertEqual(replay_query_count(restored), record.inference_cost)
                    self.assertEqual(record_costs(restored).search, 0)

    def test_io_replay(self):
        record = run_io(gen_instance('sorting', 64, 0), oracle())
        self.assertEqual(replay_query_count(record), 1)

    def test_episode_replay_matches_the_ledger(self):
        for seed in range(5):
            for policy in (EnsemblePolicy(5), ScriptedPolicy()):
                record = run_episode(gen_instance('sorting', 64, seed), policy,
                                     oracle(seed=seed, p_solve=0.57))
                restored = EpisodeRecord.from_dict(json.loads(json.dumps(record.to_dict())))
                with self.subTest(seed=seed, policy=policy.name):
                    self.assertEqual(replay_query_count(restored), record.inference_cost)


class AblationTests(SimpleTestCase):

    def test_scripted_stand_in(self):
        rows = ablation_sweep('sorting', 32, [1, 5], cot_modes=(True,), seeds=range(3), policy='scripted')
        self.assertEqual([row.ensemble_size for row in rows], [1, 5])
        self.assertTrue(all(row.solved_rate == 1.0 and row.decision_error_rate == 0.0 for row in rows))
        again = ablation_sweep('sorting', 32, [1, 5], cot_modes=(True,), seeds=range(3),
                               policy='scripted')
        self.assertEqual(rows, again)

    def test_majority_beats_a_single_voter(self):
        rows = ablation_sweep(
            'sorting', 32, [1, 5], cot_modes=(True,), seeds=range(200),
            make_generator=lambda seed: oracle(seed=seed, p_policy=0.6),
        )
        single, majority = rows
        self.assertLess(majority.decision_error_rate, single.decision_error_rate)

    def test_cot_flag_selects_the_voter_rate(self):
        with_cot, without_cot = ablation_sweep(
            'sorting', 32, [1], seeds=range(20),
            make_generator=lambda seed: oracle(seed=seed, p_policy=1.0, p_policy_nocot=0.0),
        )
        self.assertTrue(with_cot.cot)
        self.assertEqual(with_cot.decision_error_rate, 0.0)
        self.assertEqual(without_cot.decision_error_rate, 1.0)

    def test_sizes_are_bounded(self):
        for sizes in ([], [0], [16]):
            with self.subTest(sizes=sizes), self.assertRaises(ValueError):
                ablation_sweep('sorting', 32, sizes)


class ReportTests(TempDirMixin, SimpleTestCase):

    def records(self):
        params = ScheduleParams(0, 0, 1, 1, 1)
        got = [run_schedule(gen_instance('sorting', 32, seed), params, oracle(seed=seed))
               for seed in (0, 1)]
        io = run_io(gen_instance('sorting', 32, 0), oracle(p_solve=0.0))
        return got + [io]

    def test_rows_per_task_and_method(self):
        rows = report_rows(self.records(), config_digest='abc')
        self.assertEqual([(r['task'], r['method']) for r in rows], [('sorting32', 'GoT'), ('sorting32', 'IO')])
        got, io = rows
        self.assertEqual(got['mean_error'], 0.0)
        self.assertEqual(got['instances'], 2)
        self.assertEqual(got['seeds'], '0 1')
        self.assertEqual(got['inference_cost'], 3.0)
        self.assertGreater(io['mean_error'], 0)
        self.assertEqual(io['search_cost'], 0.0)
        self.assertEqual(got['config_digest'], 'abc')

    def test_search_cost_is_carried(self):
        records = self.records()[:2]
        for record in records:
            record.search_cost = 120
        row, = report_rows(records)
        self.assertEqual(row['search_cost'], 120.0)
        self.assertEqual(row['total_cost'], 123.0)

    def test_pareto_rows(self):
        rows = [
            {'task': 'sorting32', 'method': 'IO', 'total_cost': 1.0, 'mean_error': 5.0},
            {'task': 'sorting32', 'method': 'GoT', 'total_cost': 3.0, 'mean_error': 0.0},
            {'task': 'sorting32', 'method': 'GoT25', 'total_cost': 10.0, 'mean_error': 1.0},
            {'task': 'set-intersection32', 'method': 'IO', 'total_cost': 1.0, 'mean_error': 2.0},
        ]
        self.assertEqual([(r['task'], r['method']) for r in pareto_rows(rows)],
                         [('set-intersection32', 'IO'), ('sorting32', 'IO'), ('sorting32', 'GoT')])

    def test_records_survive_the_results_directory(self):
        for record in self.records():
            write_json(static_record_path(self.tmp, record), record.to_dict())
        episode = run_episode(gen_instance('sorting', 32, 0), ScriptedPolicy(), oracle())
        append_jsonl(episode_log_path(self.tmp, episode.task), [episode.to_dict()])
        records = load_records(self.tmp)
        self.assertEqual(sum(isinstance(r, RunRecord) for r in records), 3)
        self.assertEqual([r.terminal for r in records if isinstance(r, EpisodeRecord)], [SOLVED])
        rows = report_rows(records)
        self.assertEqual([r['method'] for r in rows], ['ARIES', 'GoT', 'IO'])

    def test_csv_columns(self):
        path = self.tmp / 'report.csv'
        write_table(path, REPORT_COLUMNS, report_rows(self.records()))
        lines = path.read_text().splitlines()
        self.assertEqual(lines[0], ','.join(REPORT_COLUMNS))
        self.assertEqual(len(lines), 3)


class CliTests(TempDirMixin, SimpleTestCase):

    def cli(self, *argv):
        self.stdout, self.stderr = StringIO(), StringIO()
        return cli_main([*argv, '--out', str(self.tmp)], stdout=self.stdout, stderr=self.stderr)

    def test_run_static(self):
        code = self.cli('run-static', '--task', 'sorting32', '--params', '0,0,1,1,1', '--backend',
                        'oracle', '--seed', '1')
        self.assertEqual(code, SUCCESS)
        path = self.tmp / 'static' / 'sorting32' / 'GoT-0-0-1-1-1-1.json'
        record = RunRecord.from_dict(json.loads(path.read_text()))
        self.assertEqual(record.final_error, 0)
        self.assertEqual(record.inference_cost, 3)

    def test_unknown_task_is_a_config_error(self):
        self.assertEqual(self.cli('run-static', '--task', 'juggling32', '--params', '0,0,1,1,1'),
                         CONFIG_ERROR)
        self.assertIn('juggling32', self.stderr.getvalue())

    def test_bad_params_are_a_config_error(self):
        self.assertEqual(self.cli('run-static', '--task', 'sorting32', '--params', '0,0,3,1,1'),
                         CONFIG_ERROR)

    def test_usage_errors(self):
        self.assertEqual(self.cli('run-static', '--params', '0,0,1,1,1'), USAGE_ERROR)
        self.assertEqual(self.cli('run-static', '--task', 'sorting32'), USAGE_ERROR)
        self.assertEqual(self.cli('juggle'), USAGE_ERROR)
        self.assertEqual(cli_main([], stderr=StringIO()), USAGE_ERROR)

    def test_budget_exhausted(self):
        config = self.write_config({'budget': 2})
        self.assertEqual(self.cli('run-static', '--task', 'sorting32', '--params', '0,0,1,1,1',
                                  '--config', str(config)), BUDGET_EXHAUSTED)

    def test_unreachable_backend(self):
        config = self.write_config({'backend': 'http', 'endpoint': 'http://127.0.0.1:9/v1',
                                    'retries': 0, 'timeout': 2})
        self.assertEqual(self.cli('run-static', '--task', 'sorting32', '--io', '--config', str(config)),
                         BACKEND_FAILURE)

    def test_search_then_checkpoint_run(self):
        self.assertEqual(self.cli('search', '--task', 'sorting32', '--budget', '40', '--batch', '2',
                                  '--alpha', '0.99', '--seed', '0'), SUCCESS)
        search_path = self.tmp / 'search' / 'sorting32-0.json'
        search = SearchRun.from_dict(json.loads(search_path.read_text()))
        self.assertEqual(self.cli('run-static', '--task', 'sorting32', '--from-search', str(search_path),
                                  '--checkpoint', '25', '--seed', '3'), SUCCESS)
        path, = (self.tmp / 'static' / 'sorting32').glob('GoT25-*-3.json')
        record = RunRecord.from_dict(json.loads(path.read_text()))
        self.assertEqual(record.params, search.checkpoint(25).params)
        self.assertEqual(record.search_cost, search.search_cost)
        self.assertGreater(record.search_cost, 0)

    def test_search_run_for_another_task(self):
        self.cli('search', '--task', 'sorting32', '--budget', '40', '--batch', '1', '--alpha', '0.5')
        self.assertEqual(self.cli('run-static', '--task', 'sorting64', '--from-search',
                                  str(self.tmp / 'search' / 'sorting32-0.json')), CONFIG_ERROR)

    def test_run_policy(self):
        self.assertEqual(self.cli('run-policy', '--task', 'sorting32', '--policy', 'scripted',
                                  '--seeds', '0,1'), SUCCESS)
        lines = (self.tmp / 'episodes' / 'sorting32.jsonl').read_text().splitlines()
        self.assertEqual([json.loads(line)['terminal'] for line in lines], [SOLVED, SOLVED])

    def test_report_pareto_matches_the_front(self):
        self.cli('run-static', '--task', 'sorting32', '--params', '1,1,5,5,5', '--seeds', '0..2')
        self.cli('run-static', '--task', 'sorting32', '--io', '--seeds', '0..2')
        self.assertEqual(self.cli('report', '--in', str(self.tmp), '--pareto'), SUCCESS)
        rows = report_rows(load_records(self.tmp))
        expected = pareto_front(rows, key=lambda r: (r['total_cost'], r['mean_error']))
        lines = (self.tmp / 'pareto.csv').read_text().splitlines()
        self.assertEqual([line.split(',')[1] for line in lines[1:]], [r['method'] for r in expected])

    def test_gen_instances(self):
        self.assertEqual(self.cli('gen-instances', '--task', 'set64', '--seeds', '0..4'), SUCCESS)
        lines = (self.tmp / 'instances' / 'set-intersection64.jsonl').read_text().splitlines()
        self.assertEqual([json.loads(line)['seed'] for line in lines], [0, 1, 2, 3, 4])

    def test_profile_and_ablate_tables(self):
        self.assertEqual(self.cli('profile', '--task', 'sorting32', '--runs', '3'), SUCCESS)
        header = (self.tmp / 'profile' / 'sorting32.csv').read_text().splitlines()[0]
        self.assertEqual(header, 'task,transformation,successes,attempts,probability')
        self.assertEqual(self.cli('ablate', '--task', 'sorting32', '--sizes', '1,3', '--cot', 'on',
                                  '--policy', 'scripted', '--seeds', '0,1'), SUCCESS)
        lines = (self.tmp / 'ablation' / 'sorting32.csv').read_text().splitlines()
        self.assertEqual(len(lines), 3)
