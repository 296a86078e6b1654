import itertools
import math

import numpy as np
from django.test import SimpleTestCase

from .exceptions import MalformedProblem, UnknownTask, UnsupportedDifficulty
from .tasks import (
    ATOMIC, IntersectionProblem, SortingProblem, TaskKind, decomposition_plan, gen_instance,
    get_task, parse_task_name, reference_solve, score_set_intersection, score_sorting, valuate,
)

SORTING = get_task('sorting')
SETS = get_task('set-intersection')


def naive_sorting_error(a, b):
    unsorted = 0
    for i in range(len(b) - 1):
        if b[i] > b[i + 1]:
            unsorted += 1
    mismatch = 0
    for digit in range(10):
        mismatch += abs(sum(1 for x in b if x == digit) - sum(1 for x in a if x == digit))
    return unsorted + mismatch


class GenInstanceTests(SimpleTestCase):

    def test_deterministic_for_a_seed(self):
        self.assertEqual(gen_instance('sorting', 32, 7), gen_instance('sorting', 32, 7))
        self.assertNotEqual(gen_instance('sorting', 32, 7).payload,
                            gen_instance('sorting', 32, 8).payload)

    def test_set_instances(self):
        for seed in range(50):
            instance = gen_instance(TaskKind.SET_INTERSECTION, 32, seed)
            a, b = instance.payload['a'], instance.payload['b']
            self.assertEqual(len(a), 32)
            self.assertEqual(len(set(a)), 32)
            self.assertEqual(len(set(b)), 32)
            self.assertTrue(set(a) & set(b))
            self.assertTrue(all(0 <= x <= 128 for x in a + b))

    def test_sorting_digits_are_uniform(self):
        n, count = 32, 1000
        digits = np.concatenate([gen_instance('sorting', n, seed).payload for seed in range(count)])
        frequencies = np.bincount(digits, minlength=10)
        expected = n * count / 10
        sigma = math.sqrt(n * count * 0.1 * 0.9)
        self.assertEqual(frequencies.size, 10)
        # 4 sigma per digit keeps the ten-way check tight without flaking
        self.assertTrue(np.all(np.abs(frequencies - expected) < 4 * sigma), frequencies)

    def test_unsupported_difficulty(self):
        with self.assertRaises(UnsupportedDifficulty):
            gen_instance('sorting', 48, 0)

    def test_payload_is_json_friendly(self):
        instance = gen_instance('set-intersection', 64, 3)
        self.assertEqual(type(instance).from_dict(instance.to_dict()), instance)
        self.assertTrue(all(type(x) is int for x in instance.payload['a']))


class TaskNameTests(SimpleTestCase):

    def test_parse(self):
        self.assertEqual(parse_task_name('sorting32'), (TaskKind.SORTING, 32))
        self.assertEqual(parse_task_name('set-intersection128'), (TaskKind.SET_INTERSECTION, 128))
        self.assertEqual(parse_task_name('set64'), (TaskKind.SET_INTERSECTION, 64))

    def test_unknown(self):
        with self.assertRaises(UnknownTask):
            parse_task_name('keyword-counting32')
        with self.assertRaises(UnsupportedDifficulty):
            parse_task_name('sorting100')


class ScoreSortingTests(SimpleTestCase):

    def test_correct(self):
        score = score_sorting([1, 3, 2], [1, 2, 3])
        self.assertEqual(score.total, 0)
        self.assertTrue(score.correct)

    def test_unsorted_pair(self):
        score = score_sorting([1, 2, 3], [3, 1, 2])
        self.assertEqual(score.components, {'unsorted_pairs': 1, 'frequency_mismatch': 0})
        self.assertEqual(score.total, 1)

    def test_frequency_mismatch(self):
        score = score_sorting([1, 1, 2], [1, 2, 2])
        self.assertEqual(score.components, {'unsorted_pairs': 0, 'frequency_mismatch': 2})

    def test_matches_naive_count_exhaustively(self):
        inputs = ([], [0, 1, 2], [2, 2, 1, 0, 0])
        for length in range(9):
            for candidate in itertools.product((0, 1, 2), repeat=length):
                for a in inputs:
                    self.assertEqual(score_sorting(a, list(candidate)).total,
                                     naive_sorting_error(a, candidate))


class ScoreSetIntersectionTests(SimpleTestCase):

    def test_examples(self):
        self.assertEqual(score_set_intersection({1, 2}, {2, 3}, {2}).total, 0)
        score = score_set_intersection({1, 2}, {2, 3}, {2, 3})
        self.assertEqual(score.components, {'missing': 0, 'extra': 1})
        self.assertEqual(score_set_intersection({1, 2, 3}, {1, 2, 3}, set()).total, 3)

    def test_matches_set_algebra(self):
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            a, b, c = (set(rng.choice(20, size=rng.integers(0, 10), replace=False).tolist())
                       for _ in range(3))
            expected = len((a & b) - c) + len(c - (a & b))
            self.assertEqual(score_set_intersection(a, b, c).total, expected)


class ParsingTests(SimpleTestCase):

    def test_last_list_wins(self):
        self.assertEqual(SORTING.parse_candidate('Draft [3,2] final answer:\n[2,3]'), [2, 3])

    def test_non_digit_is_unparseable(self):
        self.assertIsNone(SORTING.parse_candidate('[1,12,3]'))
        self.assertIsNone(SORTING.parse_candidate('no list here'))

    def test_unparseable_reply_scores_the_empty_candidate(self):
        problem = SortingProblem((3, 1))
        score = SORTING.score(problem, 'I cannot sort this')
        self.assertFalse(score.parsed)
        self.assertEqual(score.components['unparseable'], 1)
        self.assertEqual(score.total, 3)

    def test_problem_round_trip_through_text(self):
        problem = IntersectionProblem((1, 5), (5, 9))
        self.assertEqual(SETS.parse_problem(problem.content), problem)
        with self.assertRaises(MalformedProblem):
            SORTING.parse_problem(problem.content)

    def test_candidate_content_is_normalised(self):
        self.assertEqual(SORTING.candidate_content('Sure! [ 1, 2 ,3 ]'), '[1,2,3]')
        self.assertEqual(SETS.candidate_content('{9, 2}'), '{2,9}')


class DecompositionPlanTests(SimpleTestCase):

    def test_halves(self):
        instance = gen_instance('sorting', 32, 1)
        halves = decomposition_plan(instance)
        self.assertEqual(len(halves), 2)
        self.assertEqual(list(halves[0].digits + halves[1].digits), instance.payload)

    def test_atomic_threshold(self):
        self.assertIs(decomposition_plan(SortingProblem((1,) * 16)), ATOMIC)

    def test_depths(self):
        self.assertEqual(SORTING.plan_levels(32), [1])
        self.assertEqual(SORTING.plan_levels(64), [1, 2])
        self.assertEqual(SORTING.plan_levels(128), [1, 2, 4])
        self.assertEqual(len(SORTING.plan_levels(128)) + 1, int(math.log2(128 / 16)) + 1)
        self.assertEqual(SORTING.plan_size(32), 3)
        self.assertEqual(SETS.plan_size(128), 9)

    def test_set_chunks_cover_a(self):
        instance = gen_instance('set-intersection', 64, 2)
        chunks = decomposition_plan(instance)
        self.assertEqual(len(chunks), 4)
        union = set()
        for chunk in chunks:
            self.assertFalse(union & set(chunk.a))
            union |= set(chunk.a)
            self.assertEqual(list(chunk.b), instance.payload['b'])
        self.assertEqual(union, set(instance.payload['a']))


class ValuateTests(SimpleTestCase):

    def test_values(self):
        problem = SortingProblem((3, 1, 2))
        self.assertEqual(valuate('sorting', problem, '[1,2,3]'), 1.0)
        self.assertEqual(valuate('sorting', problem, '[2,1,3]'), 0.5)
        self.assertEqual(valuate('sorting', problem, 'I cannot sort this'), 0.0)

    def test_monotone_in_error(self):
        problem = SortingProblem((0, 1, 2, 3, 4, 5))
        candidates = ['[0,1,2,3,4,5]', '[1,0,2,3,4,5]', '[1,0,3,2,4,5]', '[1,0,3,2,5,4]']
        values = [valuate('sorting', problem, c) for c in candidates]
        self.assertEqual(values, sorted(values, reverse=True))
        self.assertEqual(len(set(values)), 4)


class ReferenceSolveTests(SimpleTestCase):

    def test_examples(self):
        self.assertEqual(reference_solve('sorting', SortingProblem((3, 1, 2))), '[1,2,3]')
        self.assertEqual(reference_solve('set-intersection', IntersectionProblem((1, 5), (5, 9))),
                         '{5}')

    def test_always_scores_zero(self):
        for seed in range(500):
            for task in (SORTING, SETS):
                instance = task.gen_instance(32, seed)
                for problem in decomposition_plan(instance):
                    self.assertEqual(task.score(problem, task.reference_solve(problem)).total, 0)

    def test_aggregate_of_references_solves_the_parent(self):
        for task in (SORTING, SETS):
            instance = task.gen_instance(64, 9)
            parts = [task.reference_solve(p) for p in decomposition_plan(instance)]
            root = task.root_problem(instance)
            self.assertEqual(task.score(root, task.reference_aggregate(parts)).total, 0)


class PromptTests(SimpleTestCase):

    def test_solve_prompt_carries_the_problem(self):
        system, user = SORTING.prompt('solve', problem='sort [3,1,2]')
        self.assertIn('sorting', system)
        self.assertIn('sort [3,1,2]', user)

    def test_aggregate_prompt_lists_parts(self):
        _, user = SETS.prompt('aggregate', parts=['{2}', '{5}'])
        self.assertIn('Set 1: {2}', user)
        self.assertIn('Set 2: {5}', user)
