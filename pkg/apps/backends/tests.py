import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from django.test import SimpleTestCase

from apps.tasks.tasks import get_task

from .exceptions import BudgetExceeded, GeneratorHttpError, OracleConfigError
from .generators import GeneratorQuery, HttpGenerator, OracleGenerator, build_generator
from .ledger import SEARCH, QueryLedger
from .oracle import CorruptionModel, OracleConfig, oracle_complete

SORTING = get_task('sorting')
SETS = get_task('set-intersection')


def sort_query(problem='sort [9,0,4]', tag='solve', **context):
    return GeneratorQuery(system='system', user=problem, tag=tag,
                          context={'task': 'sorting', 'problem': problem, **context})


class ScriptedHandler(BaseHTTPRequestHandler):
    """Answers with the next status in ``server.statuses``; 200 once they run out."""

    def do_POST(self):
        length = int(self.headers.get('Content-Length', 0))
        self.server.bodies.append(json.loads(self.rfile.read(length)))
        status = self.server.statuses.pop(0) if self.server.statuses else 200
        if status == 200:
            body = json.dumps({'choices': [{'message': {'role': 'assistant',
                                                        'content': self.server.reply}}]})
        else:
            body = json.dumps({'error': 'scripted failure'})
        payload = body.encode()
        self.send_response(status)
        self.send_header('Content-Type', 'application/json')
        self.send_header('Content-Length', str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, format, *args):
        pass


class HttpGeneratorTests(SimpleTestCase):

    def setUp(self):
        self.server = ThreadingHTTPServer(('127.0.0.1', 0), ScriptedHandler)
        self.server.statuses = []
        self.server.bodies = []
        self.server.reply = '[1,2,3]'
        thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        thread.start()
        self.addCleanup(self.server.server_close)
        self.addCleanup(self.server.shutdown)

    def generator(self, **kwargs):
        host, port = self.server.server_address
        return HttpGenerator(endpoint=f'http://{host}:{port}/v1', model='stub', api_key='',
                             timeout=5, backoff_factor=0, **kwargs)

    def test_pass_through(self):
        generator = self.generator()
        self.assertEqual(generator.complete(sort_query()), '[1,2,3]')
        self.assertEqual(generator.ledger.total, 1)
        (body,) = self.server.bodies
        self.assertEqual(body['model'], 'stub')
        self.assertEqual(body['messages'][0], {'role': 'system', 'content': 'system'})
        self.assertEqual(body['temperature'], 1.0)
        self.assertEqual(body['max_tokens'], 1024)

    def test_transient_failures_are_retried(self):
        self.server.statuses = [500, 500]
        generator = self.generator(retries=3)
        self.assertEqual(generator.complete(sort_query()), '[1,2,3]')
        self.assertEqual(len(self.server.bodies), 3)
        self.assertEqual(generator.ledger.total, 1)

    def test_exhausted_retries_raise_and_are_not_counted(self):
        self.server.statuses = [503] * 5
        generator = self.generator(retries=1)
        with self.assertRaises(GeneratorHttpError) as ctx:
            generator.complete(sort_query())
        self.assertEqual(ctx.exception.status, 503)
        self.assertEqual(generator.ledger.total, 0)

    def test_client_errors_are_not_retried(self):
        self.server.statuses = [404]
        generator = self.generator(retries=3)
        with self.assertRaises(GeneratorHttpError):
            generator.complete(sort_query())
        self.assertEqual(len(self.server.bodies), 1)

    def test_budget_guard_sends_nothing(self):
        generator = self.generator(ledger=QueryLedger(cap=0))
        with self.assertRaises(BudgetExceeded):
            generator.complete(sort_query())
        self.assertEqual(self.server.bodies, [])

    def test_concurrent_fan_out_keeps_order(self):
        generator = self.generator()
        replies = generator.complete_many([sort_query()] * 6)
        self.assertEqual(replies, ['[1,2,3]'] * 6)
        self.assertEqual(generator.ledger.total, 6)


class QueryLedgerTests(SimpleTestCase):

    def test_counts_per_tag(self):
        ledger = QueryLedger(phase=SEARCH)
        for tag in ('solve', 'solve', 'policy'):
            with ledger.charge(tag):
                pass
        self.assertEqual(ledger.counts, {'solve': 2, 'policy': 1})
        self.assertEqual(ledger.total, 3)
        self.assertEqual(ledger.snapshot()['phase'], 'search')

    def test_failed_queries_are_released(self):
        ledger = QueryLedger()
        with self.assertRaises(RuntimeError):
            with ledger.charge('solve'):
                raise RuntimeError('boom')
        self.assertEqual(ledger.total, 0)

    def test_cap(self):
        ledger = QueryLedger(cap=2)
        ledger.reserve('solve')
        ledger.reserve('solve')
        with self.assertRaises(BudgetExceeded):
            ledger.reserve('aggregate')
        self.assertEqual(ledger.total, 2)

    def test_since(self):
        ledger = QueryLedger()
        ledger.reserve('solve')
        before = ledger.snapshot()
        ledger.reserve('solve')
        ledger.reserve('refine')
        self.assertEqual(ledger.since(before)['counts'], {'solve': 1, 'refine': 1})
        self.assertEqual(ledger.since(before)['total'], 2)


class GeneratorQueryTests(SimpleTestCase):

    def test_validation(self):
        with self.assertRaises(ValueError):
            GeneratorQuery(system='', user='', tag='solve', temperature=-0.1)
        with self.assertRaises(ValueError):
            GeneratorQuery(system='', user='', tag='')


class OracleTests(SimpleTestCase):

    def test_perfect_solve(self):
        self.assertEqual(oracle_complete(sort_query(), OracleConfig(), 0), '[0,4,9]')

    def test_forced_failure_is_visible(self):
        reply = oracle_complete(sort_query(), OracleConfig(p_solve=0.0), 0)
        self.assertGreater(SORTING.score(SORTING.parse_problem('sort [9,0,4]'), reply).total, 0)

    def test_aggregate_rate(self):
        config = OracleConfig(p_aggregate=0.6, seed=4)
        query = sort_query('sort [1,3,2,4]', tag='aggregate', parts=['[1,3]', '[2,4]'])
        merges = 10_000
        successes = sum(oracle_complete(query, config, i) == '[1,2,3,4]' for i in range(merges))
        self.assertTrue(0.585 <= successes / merges <= 0.615, successes)

    def test_deterministic_in_seed_and_call_index(self):
        config = OracleConfig.from_preset('sorting32', seed=3)
        queries = [sort_query(f"sort [{','.join('8316')}]")] * 50
        first = OracleGenerator(config).complete_many(queries)
        second = OracleGenerator(config).complete_many(queries)
        self.assertEqual(first, second)
        self.assertNotEqual(first, OracleGenerator(config.with_seed(4)).complete_many(queries))

    def test_corruption_is_always_observable(self):
        config = OracleConfig(p_solve=0.0, corruption=CorruptionModel(swaps=3, missing=2, extra=1))
        for seed in range(200):
            for task in (SORTING, SETS):
                instance = task.gen_instance(32, seed)
                for problem in task.decomposition_plan(task.root_problem(instance)):
                    query = GeneratorQuery(system='', user='', tag='solve',
                                           context={'task': task.kind.value,
                                                    'problem': problem.content})
                    reply = oracle_complete(query, config.with_seed(seed), 0)
                    self.assertGreaterEqual(task.score(problem, reply).total, 1)

    def test_empty_intersection_still_fails_visibly(self):
        query = GeneratorQuery(system='', user='', tag='solve',
                               context={'task': 'set-intersection',
                                        'problem': 'intersect {1,2} and {3,4}'})
        reply = oracle_complete(query, OracleConfig(p_solve=0.0), 0)
        self.assertGreaterEqual(SETS.score(SETS.parse_problem('intersect {1,2} and {3,4}'),
                                           reply).total, 1)

    def test_policy_reply_follows_the_reference(self):
        actions = ['{"action":"decompose","nodes":[0]}', '{"action":"solve","nodes":[0]}']
        query = GeneratorQuery(system='', user='', tag='policy',
                               context={'actions': actions, 'reference': actions[0], 'cot': True})
        reply = oracle_complete(query, OracleConfig(), 0)
        self.assertTrue(reply.rstrip().endswith(f'```json\n{actions[0]}\n```'))
        wrong = oracle_complete(query, OracleConfig(p_policy=0.0), 0)
        self.assertIn(actions[1], wrong)

    def test_policy_without_cot_uses_its_own_rate(self):
        actions = ['{"action":"decompose","nodes":[0]}', '{"action":"solve","nodes":[0]}']
        query = GeneratorQuery(system='', user='', tag='policy',
                               context={'actions': actions, 'reference': actions[0], 'cot': False})
        reply = oracle_complete(query, OracleConfig(p_policy=1.0, p_policy_nocot=0.0), 0)
        self.assertIn(actions[1], reply)

    def test_config_validation(self):
        with self.assertRaises(OracleConfigError):
            OracleConfig(p_solve=1.2)
        with self.assertRaises(OracleConfigError):
            OracleConfig.from_preset('gsm8k')
        with self.assertRaises(OracleConfigError):
            CorruptionModel(extra=0)
        preset = OracleConfig.from_preset('set-intersection32')
        self.assertEqual((preset.p_solve, preset.p_refine, preset.p_aggregate), (0.75, 0.71, 1.0))

    def test_build_generator(self):
        generator = build_generator('oracle', phase=SEARCH, budget=5)
        self.assertIsInstance(generator, OracleGenerator)
        self.assertEqual(generator.ledger.phase, SEARCH)
        self.assertEqual(generator.ledger.cap, 5)
        with self.assertRaises(ValueError):
            build_generator('carrier-pigeon')
