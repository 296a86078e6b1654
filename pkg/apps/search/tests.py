import json
from collections import Counter

import numpy as np
from django.test import SimpleTestCase

from apps.backends.exceptions import BudgetExceeded
from apps.backends.generators import build_generator
from apps.backends.ledger import SEARCH
from apps.backends.oracle import TRANSITION_PRESETS, OracleConfig
from apps.schedules.params import MULTIPLICITIES, ScheduleParams, search_space
from apps.schedules.scheduler import trace_length

from .calibration import ALPHA_MARGIN, alpha_from_samples, calibrate_alpha, objective
from .exceptions import DegenerateTask, InvalidBudget
from .pareto import dominates, pareto_front
from .runs import SearchRun, Trial, checkpoint_trials, detect_convergence, run_search
from .sampler import ScheduleSampler, tpe_suggest

SORTING32 = TRANSITION_PRESETS['sorting32']


def search_oracle(seed=0, budget=None, **rates):
    return build_generator('oracle', oracle=OracleConfig(seed=seed, **rates), phase=SEARCH,
                           budget=budget)


def trial(number, value, params=None):
    return Trial(number, params or ScheduleParams(0, 0, 1, 1, 1), value, 3, value)


class AlphaTests(SimpleTestCase):

    def test_equal_expectations_give_one_half(self):
        self.assertEqual(alpha_from_samples([2, 4], [3, 3]), 0.5)

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        errors, costs = rng.integers(0, 10, 40), rng.integers(3, 7, 40)
        self.assertEqual(alpha_from_samples(errors, costs),
                         alpha_from_samples(errors * 2, costs * 2))

    def test_zero_error_is_clamped_below_one(self):
        self.assertEqual(alpha_from_samples([0, 0], [3, 5]), 1 - ALPHA_MARGIN)

    def test_degenerate_task(self):
        with self.assertRaises(DegenerateTask):
            alpha_from_samples([0, 0], [0, 0])

    def test_mismatched_samples(self):
        with self.assertRaises(ValueError):
            alpha_from_samples([1, 2], [3])

    def test_perfect_oracle_calibrates_to_the_boundary(self):
        self.assertEqual(calibrate_alpha('sorting', 32, search_oracle(), samples=30), 1 - ALPHA_MARGIN)

    def test_sorting32_rates_weigh_error_heavily(self):
        alpha = calibrate_alpha('sorting', 32, search_oracle(seed=4, **SORTING32), samples=200, seed=4)
        self.assertGreater(alpha, 0.7)
        # E|Φ| is 4.5 and schedules without reduce or refine keep every leaf and merge failure
        # as a surplus digit, so E[ℰ] >= 0.25 * (2 * 0.43 + 0.4) and α stays below 4.5 / 4.815
        self.assertLess(alpha, 0.94)

    def test_too_few_samples(self):
        with self.assertRaises(ValueError):
            calibrate_alpha('sorting', 32, search_oracle(), samples=10)


class SamplerTests(SimpleTestCase):

    def test_cold_start_is_uniform(self):
        sampler = ScheduleSampler(seed=1)
        draws = [sampler.suggest() for _ in range(1000)]
        space = set(search_space())
        self.assertTrue(all(params in space for params in draws))
        counts = Counter(params.solve_multiplicity for params in draws)
        for value in MULTIPLICITIES:
            self.assertAlmostEqual(counts[value] / 1000, 0.2, delta=0.06)

    def test_good_quantile_pulls_suggestions(self):
        good = [ScheduleParams(0, 0, 5, 1, 1), ScheduleParams(1, 0, 5, 10, 5),
                ScheduleParams(0, 1, 5, 20, 15)]
        others = (1, 10, 15, 20)
        bad = [ScheduleParams(i % 2, (i // 2) % 2, others[i % 4], MULTIPLICITIES[i % 5], 1)
               for i in range(9)]
        history = [trial(i + 1, 1.0, p) for i, p in enumerate(good)]
        history += [trial(i + 4, 10.0, p) for i, p in enumerate(bad)]
        sampler = ScheduleSampler(seed=0, history=history)
        draws = [sampler.suggest() for _ in range(200)]
        share = sum(params.solve_multiplicity == 5 for params in draws) / len(draws)
        self.assertGreater(share, 0.5)

    def test_flat_history_is_uniform(self):
        history = [trial(i + 1, 2.0, params) for i, params in enumerate(search_space()[::42])]
        sampler = ScheduleSampler(seed=2, history=history)
        draws = [sampler.suggest() for _ in range(2000)]
        counts = Counter(params.aggregate_multiplicity for params in draws)
        for value in MULTIPLICITIES:
            self.assertAlmostEqual(counts[value] / 2000, 0.2, delta=0.045)

    def test_suggestions_stay_on_the_grid(self):
        history = [trial(i + 1, float(i % 7), params) for i, params in enumerate(search_space()[::25])]
        space = set(search_space())
        for seed in range(5):
            self.assertIn(tpe_suggest(history, seed=seed), space)


class ConvergenceTests(SimpleTestCase):

    def test_strict_improvement_never_converges(self):
        self.assertIsNone(detect_convergence([100.0 - i for i in range(100)]))

    def test_no_improvement_after_trial_30(self):
        objectives = [60.0 - i for i in range(30)] + [50.0] * 30
        self.assertEqual(detect_convergence(objectives), 31)

    def test_last_improvement_at_trial_31(self):
        objectives = [60.0 - i for i in range(30)] + [10.0] * 30
        self.assertEqual(detect_convergence(objectives), 32)

    def test_needs_more_than_one_window(self):
        self.assertIsNone(detect_convergence([1.0] * 20))
        self.assertEqual(detect_convergence([1.0] * 21), 21)

    def test_window_size(self):
        self.assertEqual(detect_convergence([5.0, 4.0, 3.0, 3.5, 3.6], window=3), 4)


class CheckpointTests(SimpleTestCase):

    def test_prefix_best(self):
        trials = [trial(i + 1, v) for i, v in enumerate([9, 7, 8, 5, 6, 5, 2, 4, 1, 1])]
        self.assertEqual(checkpoint_trials(trials, convergence_index=8), {25: 2, 50: 4, 100: 7})

    def test_without_convergence_all_trials_count(self):
        trials = [trial(i + 1, v) for i, v in enumerate([9, 7, 8, 5, 6, 5, 2, 4, 1, 1])]
        self.assertEqual(checkpoint_trials(trials), {25: 2, 50: 4, 100: 9})

    def test_ties_go_to_the_earliest_trial(self):
        trials = [trial(1, 3.0), trial(2, 3.0), trial(3, 3.0), trial(4, 3.0)]
        self.assertEqual(checkpoint_trials(trials), {25: 1, 50: 1, 100: 1})


class RunSearchTests(SimpleTestCase):

    def test_perfect_oracle_finds_the_grid_minimum(self):
        run = run_search('sorting', 32, search_oracle(), budget=40, seed=0, batch=2)
        self.assertTrue(run.converged)
        grid_minimum = min(objective(run.alpha, 0.0, trace_length(params, 'sorting', 32))
                           for params in search_space())
        best = run.checkpoint(100)
        self.assertAlmostEqual(best.objective, grid_minimum, places=12)
        self.assertEqual(best.params.as_tuple()[:2], (0, 0))

    def test_checkpoints_are_monotone(self):
        for seed in range(20):
            run = run_search('sorting', 32, search_oracle(seed=seed, **SORTING32), budget=40,
                             seed=seed, alpha=0.99, batch=10)
            with self.subTest(seed=seed):
                q25, q50, q100 = (run.checkpoint(p) for p in (25, 50, 100))
                self.assertLessEqual(q100.objective, q50.objective)
                self.assertLessEqual(q50.objective, q25.objective)
                # costs differ by at most 3 and errors move in steps of 1 / batch, so at this
                # α a lower objective can never come with a higher error
                self.assertLessEqual(q100.mean_error, q25.mean_error + 1e-9)

    def test_reproducible_for_a_fixed_seed(self):
        first, second = (
            run_search('sorting', 32, search_oracle(seed=3, **SORTING32), budget=40, seed=3,
                       alpha=0.99, batch=2)
            for _ in range(2)
        )
        self.assertEqual(first.trials, second.trials)
        self.assertEqual(first.checkpoints, second.checkpoints)

    def test_every_query_is_charged_to_the_search(self):
        generator = search_oracle(seed=1, **SORTING32)
        run = run_search('sorting', 32, generator, budget=40, seed=1, alpha=0.9, batch=2)
        self.assertEqual(run.search_cost, sum(t.queries for t in run.trials))
        self.assertEqual(run.search_cost, generator.ledger.total)
        self.assertEqual(run.queries['phase'], SEARCH)

    def test_budget_below_minimum(self):
        with self.assertRaises(InvalidBudget):
            run_search('sorting', 32, search_oracle(), budget=39)

    def test_ledger_cap_stops_the_search(self):
        with self.assertRaises(BudgetExceeded):
            run_search('sorting', 32, search_oracle(budget=10), budget=40, alpha=0.5, batch=2)

    def test_record_survives_json(self):
        run = run_search('sorting', 32, search_oracle(seed=2, **SORTING32), budget=40, seed=2,
                         alpha=0.99, batch=2)
        restored = SearchRun.from_dict(json.loads(json.dumps(run.to_dict())))
        self.assertEqual(restored, run)


class ParetoTests(SimpleTestCase):

    def test_dominated_point_is_dropped(self):
        self.assertEqual(pareto_front([(10, 5), (20, 1), (15, 5)]), [(10, 5), (20, 1)])

    def test_single_and_empty(self):
        self.assertEqual(pareto_front([(3, 3)]), [(3, 3)])
        self.assertEqual(pareto_front([]), [])

    def test_duplicates_are_kept(self):
        self.assertEqual(pareto_front([(4, 2), (4, 2), (5, 2)]), [(4, 2), (4, 2)])

    def test_key(self):
        rows = [{'cost': 10, 'error': 0.5}, {'cost': 5, 'error': 0.9}, {'cost': 12, 'error': 0.7}]
        front = pareto_front(rows, key=lambda row: (row['cost'], row['error']))
        self.assertEqual([row['cost'] for row in front], [5, 10])

    def test_matches_pairwise_dominance(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            points = [tuple(int(v) for v in p) for p in rng.integers(0, 20, size=(100, 2))]
            expected = [p for p in points if not any(dominates(q, p) for q in points)]
            self.assertEqual(sorted(pareto_front(points)), sorted(expected))
