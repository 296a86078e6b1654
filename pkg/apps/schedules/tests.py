import json
import math
from unittest import mock

from django.core.serializers.json import DjangoJSONEncoder
from django.forms import ValidationError
from django.test import SimpleTestCase

from apps.backends.exceptions import BudgetExceeded, GeneratorTimeout
from apps.backends.generators import build_generator
from apps.backends.oracle import TRANSITION_PRESETS, OracleConfig
from apps.graphs.transforms import TransformKind
from apps.tasks.tasks import DIFFICULTIES, TaskKind, gen_instance

from .exceptions import InvalidParams, ScheduleAborted
from .forms import ScheduleParamsField
from .params import ScheduleParams, search_space
from .records import RunRecord
from .scheduler import expected_trace, run_io, run_schedule, trace_length

DEC, SOL, REF, RED, AGG = (TransformKind.DECOMPOSE, TransformKind.SOLVE, TransformKind.REFINE,
                           TransformKind.REDUCE, TransformKind.AGGREGATE)
SORTING32 = TRANSITION_PRESETS['sorting32']


def oracle(seed=0, **rates):
    return build_generator('oracle', oracle=OracleConfig(seed=seed, **rates))


class ScheduleParamsTests(SimpleTestCase):

    def test_parse(self):
        params = ScheduleParams.parse('1,0,5,10,20')
        self.assertEqual(params.as_tuple(), (1, 0, 5, 10, 20))
        self.assertEqual(params.label, '1-0-5-10-20')

    def test_parse_accepts_placeholder_refine_multiplicity(self):
        self.assertEqual(ScheduleParams.parse('0,0,1,1,-').refine_multiplicity, 1)

    def test_rejects_values_outside_the_grid(self):
        for text in ('0,0,2,1,1', '2,0,1,1,1', '0,0,1,1', 'a,0,1,1,1'):
            with self.subTest(text=text), self.assertRaises(InvalidParams):
                ScheduleParams.parse(text)

    def test_search_space_is_the_full_grid(self):
        space = search_space()
        self.assertEqual(len(space), 500)
        self.assertEqual(len(set(space)), 500)

    def test_form_field_cleans_to_params(self):
        field = ScheduleParamsField()
        self.assertEqual(field.clean('1,1,5,5,5'), ScheduleParams(1, 1, 5, 5, 5))
        with self.assertRaises(ValidationError):
            field.clean('1,1,7,5,5')


class ExpectedTraceTests(SimpleTestCase):

    def test_plain_schedule(self):
        self.assertEqual(expected_trace(ScheduleParams(0, 0, 5, 5, 5), 'sorting', 32),
                         [DEC, SOL, AGG])

    def test_reduce_appended(self):
        self.assertEqual(expected_trace(ScheduleParams(1, 0, 5, 5, 5), 'sorting', 32),
                         [DEC, SOL, AGG, RED])

    def test_refine_branch_ends_with_reduce(self):
        self.assertEqual(expected_trace(ScheduleParams(1, 1, 5, 5, 5), 'sorting', 32),
                         [DEC, SOL, AGG, RED, REF, RED])

    def test_deeper_plans(self):
        params = ScheduleParams(0, 0, 1, 1, 1)
        self.assertEqual(expected_trace(params, 'sorting', 128), [DEC] * 3 + [SOL] + [AGG] * 7)
        self.assertEqual(expected_trace(params, 'set-intersection', 128), [DEC, SOL, AGG])
        self.assertEqual(trace_length(params, 'sorting', 64), 6)


class RunScheduleTests(SimpleTestCase):

    def test_cheapest_schedule_on_perfect_oracle(self):
        instance = gen_instance('sorting', 32, seed=1)
        record = run_schedule(instance, ScheduleParams.parse('0,0,1,1,1'), oracle())
        self.assertEqual(record.final_error, 0)
        self.assertEqual(record.inference_cost, 3)
        self.assertEqual(record.queries['counts'], {'solve': 2, 'aggregate': 1})
        self.assertEqual(record.trace_kinds, [DEC, SOL, AGG])
        self.assertEqual(record.trace[0].queries, 0)

    def test_full_schedule_order_and_skipped_refine(self):
        instance = gen_instance('sorting', 32, seed=2)
        record = run_schedule(instance, ScheduleParams(1, 1, 5, 5, 5), oracle())
        self.assertEqual(record.trace_kinds, [DEC, SOL, AGG, RED, REF, RED])
        refine = record.trace[4]
        self.assertEqual(refine.request.targets, frozenset())
        self.assertEqual(refine.created, [])
        self.assertEqual(record.final_error, 0)

    def test_realized_trace_matches_expected_for_every_tuple(self):
        space = search_space()
        for kind in TaskKind:
            for n in DIFFICULTIES:
                instance = gen_instance(kind, n, seed=3)
                for i, params in enumerate(space):
                    record = run_schedule(instance, params, oracle(seed=i, **SORTING32))
                    self.assertEqual(record.trace_kinds, expected_trace(params, kind, n),
                                     (instance.name, params))
                    self.assertEqual(len(record.trace), trace_length(params, kind, n))

    def test_perfect_oracle_solves_every_difficulty(self):
        space = search_space()
        for kind in TaskKind:
            for n in DIFFICULTIES:
                for seed in range(100):
                    instance = gen_instance(kind, n, seed)
                    params = space[(seed * 101) % len(space)]
                    record = run_schedule(instance, params, oracle())
                    self.assertEqual(record.final_error, 0, (instance.name, seed, params))

    def test_query_count_is_the_sum_of_transform_contracts(self):
        params = ScheduleParams(1, 0, 5, 10, 1)
        sorting = run_schedule(gen_instance('sorting', 64, 0), params, oracle())
        self.assertEqual(sorting.inference_cost, 4 * 5 + 3 * 10)
        sets = run_schedule(gen_instance('set-intersection', 64, 0), params, oracle())
        self.assertEqual(sets.inference_cost, 4 * 5)
        self.assertEqual(sum(entry.queries for entry in sorting.trace), sorting.inference_cost)

    def solve_rate(self, params, runs):
        solved = 0
        for seed in range(runs):
            instance = gen_instance('sorting', 32, seed)
            solved += run_schedule(instance, params, oracle(seed=seed, p_aggregate=0.6)).solved
        return solved / runs

    def test_keep_best_over_many_aggregation_attempts(self):
        runs = 1000
        rate = self.solve_rate(ScheduleParams(1, 0, 1, 10, 1), runs)
        expected = 1 - 0.4 ** 10
        band = 3 * math.sqrt(expected * (1 - expected) / runs)
        # one failure of slack since the band is narrower than a single run
        self.assertLessEqual(abs(rate - expected), band + 1 / runs)

    def test_without_reduce_the_first_attempt_is_scored(self):
        runs = 1000
        rate = self.solve_rate(ScheduleParams(0, 0, 1, 10, 1), runs)
        self.assertLessEqual(abs(rate - 0.6), 3 * math.sqrt(0.6 * 0.4 / runs))
        self.assertGreater(self.solve_rate(ScheduleParams(1, 0, 1, 10, 1), 200) - rate, 0.3)

    def test_final_node_is_not_picked_by_value(self):
        params = ScheduleParams(0, 0, 1, 10, 1)
        for seed in range(20):
            record = run_schedule(gen_instance('sorting', 32, seed), params,
                                  oracle(seed=seed, p_aggregate=0.6))
            graph = record.final_graph()
            candidates = graph.candidates(graph.root.id)
            self.assertEqual(len(candidates), 10)
            self.assertEqual(record.final_node, candidates[0])

    def test_refine_runs_on_imperfect_survivors(self):
        params = ScheduleParams(1, 1, 1, 1, 5)
        instance = gen_instance('sorting', 32, seed=5)
        record = run_schedule(instance, params, oracle(seed=9, p_aggregate=0.0))
        refine = record.trace[4]
        self.assertEqual(refine.kind, REF)
        self.assertEqual(len(refine.request.targets), 1)
        self.assertEqual(refine.queries, 5)
        self.assertTrue(all(error > 0 for error in refine.input_errors.values()))

    def test_budget_exhaustion_propagates(self):
        generator = build_generator('oracle', oracle=OracleConfig(), budget=2)
        with self.assertRaises(BudgetExceeded):
            run_schedule(gen_instance('sorting', 32, 0), ScheduleParams(0, 0, 1, 1, 1), generator)

    def test_backend_failure_aborts(self):
        generator = oracle()
        with mock.patch.object(generator, '_complete', side_effect=GeneratorTimeout('slow')):
            with self.assertRaises(ScheduleAborted):
                run_schedule(gen_instance('sorting', 32, 0), ScheduleParams(0, 0, 1, 1, 1),
                             generator)

    def test_record_survives_json(self):
        instance = gen_instance('set-intersection', 32, 6)
        record = run_schedule(instance, ScheduleParams(1, 1, 5, 5, 5), oracle(seed=1, p_solve=0.5))
        restored = RunRecord.from_dict(json.loads(json.dumps(record.to_dict(), cls=DjangoJSONEncoder)))
        self.assertEqual(restored.trace_kinds, record.trace_kinds)
        self.assertEqual(restored.final_error, record.final_error)
        self.assertEqual(restored.final_graph().root.content, record.final_graph().root.content)


class RunIoTests(SimpleTestCase):

    def test_single_query_on_the_whole_problem(self):
        record = run_io(gen_instance('sorting', 64, 0), oracle())
        self.assertEqual(record.method, 'IO')
        self.assertIsNone(record.params)
        self.assertEqual(record.trace_kinds, [SOL])
        self.assertEqual(record.inference_cost, 1)
        self.assertEqual(record.final_error, 0)

    def test_failed_reply_is_scored(self):
        record = run_io(gen_instance('sorting', 32, 0), oracle(p_solve=0.0))
        self.assertGreater(record.final_error, 0)
