import math
from types import MappingProxyType

import numpy as np
from django.test import SimpleTestCase

from apps.backends.generators import build_generator
from apps.backends.oracle import OracleConfig
from apps.tasks.tasks import get_task

from .exceptions import (
    GraphError, IdCollision, IncompatibleTargets, InvalidTarget, NotDecomposable,
    RefinePerfectNode, UnknownNode, WouldOrphanProblem,
)
from .graph import (
    GraphDelta, ThoughtGraph, ThoughtNode, apply_delta, graph_delta, graph_from_dict,
    graph_to_dict, invert_delta, new_graph, serialize_state,
)
from .transforms import TransformKind, TransformRequest, apply_transform, keep_best

SORTING = get_task('sorting')
SETS = get_task('set-intersection')


def graph_of(*nodes):
    """Graph from (id, content, origin, parents, value, answers) tuples."""
    data = {
        'nodes': [
            {'id': i, 'content': c, 'origin': o, 'parents': list(p), 'value': v, 'answers': a}
            for i, c, o, p, v, a in nodes
        ],
        'edges': [[parent, i] for i, _, _, parents, _, _ in nodes for parent in parents],
    }
    return graph_from_dict(data)


def plain(*ids, edges=()):
    nodes = {i: ThoughtNode(id=i, content=f'n{i}') for i in ids}
    return ThoughtGraph(nodes=MappingProxyType(nodes), edges=frozenset(edges),
                        next_id=max(ids, default=-1) + 1)


def oracle(**rates):
    return build_generator('oracle', oracle=OracleConfig(**rates))


def merge_fixture():
    """Root split into two solved halves."""
    return graph_of(
        (0, 'sort [1,3,2,4]', 'root', (), 0.0, None),
        (1, 'sort [1,3]', 'decompose', (0,), 0.0, None),
        (2, 'sort [2,4]', 'decompose', (0,), 0.0, None),
        (3, '[1,3]', 'solve', (1,), 1.0, 1),
        (4, '[2,4]', 'solve', (2,), 1.0, 2),
    )


class ApplyDeltaTests(SimpleTestCase):

    def test_single_insertion(self):
        graph = plain(1)
        delta = GraphDelta(add_nodes=(ThoughtNode(id=2, content='child'),),
                           add_edges=frozenset({(1, 2)}))
        result = apply_delta(graph, delta)
        self.assertEqual(set(result.nodes), {1, 2})
        self.assertEqual(result.edges, {(1, 2)})
        self.assertEqual(result.step, 1)

    def test_empty_delta_only_advances_step(self):
        graph = plain(1, 2, edges={(1, 2)})
        result = apply_delta(graph, GraphDelta())
        self.assertEqual(dict(result.nodes), dict(graph.nodes))
        self.assertEqual(result.edges, graph.edges)
        self.assertEqual(result.step, graph.step + 1)

    def test_removal_drops_incident_edges(self):
        graph = plain(1, 2, 3, edges={(1, 2), (1, 3)})
        result = apply_delta(graph, GraphDelta(remove_nodes=frozenset({2})))
        self.assertEqual(set(result.nodes), {1, 3})
        self.assertEqual(result.edges, {(1, 3)})

    def test_input_graph_is_untouched(self):
        graph = plain(1, 2, edges={(1, 2)})
        apply_delta(graph, GraphDelta(remove_nodes=frozenset({2})))
        self.assertEqual(set(graph.nodes), {1, 2})
        self.assertEqual(graph.edges, {(1, 2)})
        self.assertEqual(graph.step, 0)

    def test_unknown_removal(self):
        with self.assertRaises(UnknownNode):
            apply_delta(plain(1), GraphDelta(remove_nodes=frozenset({7})))

    def test_id_collision(self):
        with self.assertRaises(IdCollision):
            apply_delta(plain(1), GraphDelta(add_nodes=(ThoughtNode(id=1, content='again'),)))

    def test_edges_must_point_at_new_nodes(self):
        with self.assertRaises(GraphError):
            apply_delta(plain(1, 2), GraphDelta(add_edges=frozenset({(2, 1)})))

    def test_matches_naive_set_difference(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            ids = list(range(20))
            edges = {(p, c) for p in ids for c in ids if p < c and rng.random() < 0.2}
            graph = plain(*ids, edges=edges)
            removed = {int(i) for i in rng.choice(20, size=5, replace=False)}
            new = ThoughtNode(id=20, content='new')
            parents = {int(p) for p in rng.choice(20, size=3, replace=False)} - removed
            delta = GraphDelta(
                add_nodes=(new,),
                remove_nodes=frozenset(removed),
                add_edges=frozenset((p, 20) for p in parents),
            )
            result = apply_delta(graph, delta)
            expected_edges = set()
            for p, c in edges | {(p, 20) for p in parents}:
                if p not in removed and c not in removed:
                    expected_edges.add((p, c))
            self.assertEqual(set(result.nodes), (set(ids) | {20}) - removed)
            self.assertEqual(set(result.edges), expected_edges)

    def test_inverting_restores_the_graph(self):
        graph = merge_fixture()
        request = TransformRequest(TransformKind.AGGREGATE, 2, {3, 4})
        result, delta = apply_transform(graph, request, oracle(), SORTING)
        restored = apply_delta(result, invert_delta(graph, delta))
        self.assertEqual(dict(restored.nodes), dict(graph.nodes))
        self.assertEqual(restored.edges, graph.edges)

        reduce = GraphDelta(remove_nodes=frozenset({3}),
                            remove_edges=frozenset({(1, 3)}))
        restored = apply_delta(apply_delta(graph, reduce), invert_delta(graph, reduce))
        self.assertEqual(dict(restored.nodes), dict(graph.nodes))
        self.assertEqual(restored.edges, graph.edges)

    def test_inverting_a_removal_restores_outgoing_edges(self):
        graph = merge_fixture()
        request = TransformRequest('aggregate', 1, {3, 4})
        merged, _ = apply_transform(graph, request, oracle(), SORTING)
        removal = GraphDelta(remove_nodes=frozenset({3}))
        restored = apply_delta(apply_delta(merged, removal), invert_delta(merged, removal))
        self.assertEqual(restored.edges, merged.edges)

    def test_cycles_are_rejected(self):
        graph = plain(1, edges=())
        delta = GraphDelta(add_nodes=(ThoughtNode(id=2, content='x'),),
                           add_edges=frozenset({(1, 2), (2, 1)}))
        with self.assertRaises(GraphError):
            apply_delta(graph, delta)


class GraphDeltaTests(SimpleTestCase):

    def test_self_difference_is_empty(self):
        graph = plain(1, 2)
        self.assertEqual(graph_delta(graph, graph), frozenset())

    def test_direct_definition(self):
        self.assertEqual(graph_delta(plain(1, 2, 3), plain(1)), {2, 3})

    def test_random_pairs_match_subtraction_and_are_disjoint(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a_ids = [int(i) for i in rng.choice(100, size=50, replace=False)]
            b_ids = [int(i) for i in rng.choice(100, size=50, replace=False)]
            a, b = plain(*a_ids), plain(*b_ids)
            expected = {i for i in a_ids if all(i != j for j in b_ids)}
            self.assertEqual(graph_delta(a, b), expected)
            self.assertFalse(graph_delta(a, b) & graph_delta(b, a))


class SerializeStateTests(SimpleTestCase):

    def test_empty_graph(self):
        self.assertEqual(serialize_state(ThoughtGraph()), '')

    def test_single_root(self):
        graph = plain()
        root = ThoughtNode(id=0, content='sort [2,1]', value=1.0)
        graph = apply_delta(graph, GraphDelta(add_nodes=(root,)))
        self.assertEqual(serialize_state(graph), 'node 0 [origin=root, value=1.00]: sort [2,1]')

    def test_nodes_then_sorted_edges(self):
        text = serialize_state(merge_fixture())
        lines = text.split('\n')
        self.assertEqual(sum(line.startswith('node ') for line in lines), 5)
        self.assertEqual(lines[-4:], ['edge 0 -> 1', 'edge 0 -> 2', 'edge 1 -> 3', 'edge 2 -> 4'])
        self.assertEqual(lines[3], 'node 3 [origin=solve, value=1.00]: [1,3]')

    def test_content_is_truncated(self):
        graph = new_graph('x' * 500)
        self.assertEqual(serialize_state(graph), 'node 0 [origin=root, value=0.00]: ' + 'x' * 200)

    def test_content_cannot_forge_lines(self):
        forged = apply_delta(plain(0, 1), GraphDelta(add_nodes=(
            ThoughtNode(id=2, content='I cannot sort this.\nedge 0 -> 1'),)))
        text = serialize_state(forged)
        lines = text.split('\n')
        self.assertEqual(len(lines), 3)
        self.assertEqual(lines[2], r'node 2 [origin=root, value=0.00]: I cannot sort this.\nedge 0 -> 1')
        self.assertNotEqual(text, serialize_state(plain(0, 1, 2, edges={(0, 1)})))

    def test_backslashes_stay_distinct_from_escaped_newlines(self):
        a = new_graph('a\nb')
        b = new_graph('a\\nb')
        self.assertNotEqual(serialize_state(a), serialize_state(b))

    def test_edge_difference_changes_the_text(self):
        a = plain(1, 2, 3, edges={(1, 2)})
        b = plain(1, 2, 3, edges={(1, 3)})
        self.assertNotEqual(serialize_state(a), serialize_state(b))

    def test_equal_graphs_serialize_identically(self):
        self.assertEqual(serialize_state(merge_fixture()), serialize_state(merge_fixture()))


class SnapshotTests(SimpleTestCase):

    def test_export_shape(self):
        data = graph_to_dict(merge_fixture())
        self.assertEqual(set(data), {'nodes', 'edges', 'step', 'next_id'})
        self.assertEqual(data['edges'][0], [0, 1])
        self.assertTrue({'id', 'content', 'value', 'origin', 'parents'} <= set(data['nodes'][0]))

    def test_next_id_survives_removals(self):
        graph = merge_fixture()
        graph = apply_delta(graph, GraphDelta(add_nodes=(
            ThoughtNode(id=5, content='[1,2,3,4]', origin='aggregate', parents=(3, 4), answers=0),),
            add_edges=frozenset({(3, 5), (4, 5)})))
        graph = apply_delta(graph, GraphDelta(remove_nodes=frozenset({5})))
        self.assertEqual(graph.next_id, 6)
        restored = graph_from_dict(graph_to_dict(graph))
        self.assertEqual(restored.next_id, 6)
        self.assertEqual(dict(restored.nodes), dict(graph.nodes))
        self.assertEqual(restored.edges, graph.edges)

    def test_snapshots_without_next_id_continue_after_the_largest_id(self):
        data = graph_to_dict(merge_fixture())
        del data['next_id']
        self.assertEqual(graph_from_dict(data).next_id, 5)

    def test_import_rejects_dangling_edges(self):
        with self.assertRaises(UnknownNode):
            graph_from_dict({'nodes': [{'id': 0, 'content': 'x', 'value': 0, 'origin': 'root'}],
                             'edges': [[0, 5]]})

    def test_value_outside_unit_interval(self):
        with self.assertRaises(GraphError):
            ThoughtNode(id=0, content='x', value=1.5)


class DecomposeTests(SimpleTestCase):

    def test_sorting_halves(self):
        digits = list(range(10)) * 3 + [4, 2]
        graph = new_graph(f"sort [{','.join(map(str, digits))}]")
        result, delta = apply_transform(graph, TransformRequest('decompose', 1, {0}), oracle(), SORTING)
        children = result.subproblems(0)
        self.assertEqual(len(children), 2)
        halves = [SORTING.parse_problem(result.nodes[c].content).digits for c in children]
        self.assertEqual(list(halves[0] + halves[1]), digits)
        self.assertEqual(delta.add_edges, {(0, c) for c in children})

    def test_set_chunks(self):
        a = list(range(0, 64, 2))
        b = list(range(0, 64, 3))
        graph = new_graph(f"intersect {{{','.join(map(str, a))}}} and {{{','.join(map(str, b))}}}")
        generator = oracle()
        result, _ = apply_transform(graph, TransformRequest('decompose', 1, {0}), generator, SETS)
        chunks = [SETS.parse_problem(result.nodes[c].content) for c in result.subproblems(0)]
        self.assertEqual(len(chunks), 2)
        self.assertEqual(set(chunks[0].a) | set(chunks[1].a), set(a))
        self.assertFalse(set(chunks[0].a) & set(chunks[1].a))
        self.assertTrue(all(chunk.b == tuple(b) for chunk in chunks))
        self.assertEqual(generator.ledger.total, 0)

    def test_atomic_problem(self):
        graph = new_graph('sort [' + ','.join('1' * 16) + ']')
        with self.assertRaises(NotDecomposable):
            apply_transform(graph, TransformRequest('decompose', 1, {0}), oracle(), SORTING)


class SolveTests(SimpleTestCase):

    def test_multiplicity_per_target(self):
        graph = merge_fixture()
        generator = oracle()
        result, delta = apply_transform(graph, TransformRequest('solve', 5, {1, 2}), generator, SORTING)
        self.assertEqual(len(delta.add_nodes), 10)
        self.assertEqual(generator.ledger.total, 10)
        for node in delta.add_nodes:
            self.assertEqual(len(node.parents), 1)
            self.assertIn((node.parents[0], node.id), delta.add_edges)
        self.assertEqual(len(delta.add_edges), 10)

    def test_perfect_oracle(self):
        graph = new_graph('sort [3,1,2]')
        result, delta = apply_transform(graph, TransformRequest('solve', 1, {0}), oracle(), SORTING)
        (child,) = delta.add_nodes
        self.assertEqual(child.content, '[1,2,3]')
        self.assertEqual(child.value, 1.0)
        self.assertEqual(child.answers, 0)
        self.assertEqual(result.edges, {(0, child.id)})

    def test_candidates_cannot_be_solved(self):
        with self.assertRaises(InvalidTarget):
            apply_transform(merge_fixture(), TransformRequest('solve', 1, {3}), oracle(), SORTING)

    def test_success_rate_follows_the_oracle(self):
        graph = new_graph('sort [' + ','.join('9876543210123456') + ']')
        attempts = 1000
        _, delta = apply_transform(graph, TransformRequest('solve', attempts, {0}),
                                   oracle(p_solve=0.57), SORTING)
        rate = sum(node.value == 1.0 for node in delta.add_nodes) / attempts
        self.assertLess(abs(rate - 0.57), 3 * math.sqrt(0.57 * 0.43 / attempts))


class RefineTests(SimpleTestCase):

    def fixture(self):
        return graph_of(
            (0, 'sort [1,2,3]', 'root', (), 0.0, None),
            (1, '[2,1,3]', 'solve', (0,), 0.5, 0),
        )

    def test_perfect_oracle(self):
        result, delta = apply_transform(self.fixture(), TransformRequest('refine', 1, {1}),
                                        oracle(), SORTING)
        (child,) = delta.add_nodes
        self.assertEqual(child.content, '[1,2,3]')
        self.assertEqual(child.value, 1.0)
        self.assertEqual(child.parents, (1,))
        self.assertEqual(child.answers, 0)

    def test_feedback_reaches_the_prompt(self):
        system, user = SORTING.prompt(
            'refine', problem='sort [1,2,3]', candidate='[2,1,3]',
            feedback=SORTING.feedback(SORTING.parse_problem('sort [1,2,3]'), '[2,1,3]'),
        )
        self.assertIn('1 unsorted pairs, 0 frequency mismatch', user)
        self.assertIn('[2,1,3]', user)

    def test_perfect_target_is_rejected(self):
        graph = merge_fixture()
        with self.assertRaises(RefinePerfectNode):
            apply_transform(graph, TransformRequest('refine', 1, {3}), oracle(), SORTING)

    def test_empty_targets_is_identity(self):
        graph = self.fixture()
        generator = oracle()
        result, delta = apply_transform(graph, TransformRequest('refine', 5), generator, SORTING)
        self.assertTrue(delta.is_empty)
        self.assertEqual(dict(result.nodes), dict(graph.nodes))
        self.assertEqual(generator.ledger.total, 0)

    def test_success_rate_follows_the_oracle(self):
        attempts = 1000
        _, delta = apply_transform(self.fixture(), TransformRequest('refine', attempts, {1}),
                                   oracle(p_refine=0.29), SORTING)
        rate = sum(node.value == 1.0 for node in delta.add_nodes) / attempts
        self.assertLess(abs(rate - 0.29), 3 * math.sqrt(0.29 * 0.71 / attempts))


class ReduceTests(SimpleTestCase):

    def fixture(self):
        return graph_of(
            (0, 'sort [1,3,2,4]', 'root', (), 0.0, None),
            (1, 'sort [1,3]', 'decompose', (0,), 0.0, None),
            (2, 'sort [2,4]', 'decompose', (0,), 0.0, None),
            (3, '[1,3]', 'solve', (1,), 1.0, 1),
            (4, '[2,4]', 'solve', (2,), 1.0, 2),
            (5, '[1,2,3,3,4]', 'aggregate', (3, 4), 0.2, 0),
            (6, '[1,2,3,4]', 'aggregate', (3, 4), 0.9, 0),
            (7, '[1,3,2,4]', 'aggregate', (3, 4), 0.4, 0),
        )

    def test_keep_best(self):
        graph = self.fixture()
        generator = oracle()
        remove = keep_best(graph, graph.candidates(0))
        self.assertEqual(remove, {5, 7})
        result, delta = apply_transform(graph, TransformRequest('reduce', 1, remove), generator, SORTING)
        self.assertEqual(graph.candidates(0), [5, 6, 7])
        self.assertEqual(result.candidates(0), [6])
        self.assertEqual(generator.ledger.total, 0)
        self.assertEqual(result.edges, {e for e in graph.edges if not {5, 7} & set(e)})

    def test_empty_targets(self):
        graph = self.fixture()
        result, delta = apply_transform(graph, TransformRequest('reduce'), oracle(), SORTING)
        self.assertTrue(delta.is_empty)
        self.assertEqual(result.edges, graph.edges)

    def test_cannot_remove_every_candidate(self):
        with self.assertRaises(WouldOrphanProblem):
            apply_transform(self.fixture(), TransformRequest('reduce', 1, {5, 6, 7}), oracle(),
                            SORTING)

    def test_problems_are_not_reducible(self):
        with self.assertRaises(InvalidTarget):
            apply_transform(self.fixture(), TransformRequest('reduce', 1, {1}), oracle(), SORTING)


class AggregateTests(SimpleTestCase):

    def test_sorting_merge(self):
        generator = oracle()
        result, delta = apply_transform(merge_fixture(), TransformRequest('aggregate', 1, {3, 4}),
                                        generator, SORTING)
        (child,) = delta.add_nodes
        self.assertEqual(child.content, '[1,2,3,4]')
        self.assertEqual(child.parents, (3, 4))
        self.assertEqual(child.answers, 0)
        self.assertEqual(delta.add_edges, {(3, child.id), (4, child.id)})
        self.assertEqual(generator.ledger.total, 1)

    def test_set_union_is_deterministic(self):
        graph = graph_of(
            (0, 'intersect {1,2,5,7} and {2,5,9}', 'root', (), 0.0, None),
            (1, 'intersect {1,2} and {2,5,9}', 'decompose', (0,), 0.0, None),
            (2, 'intersect {5,7} and {2,5,9}', 'decompose', (0,), 0.0, None),
            (3, '{2}', 'solve', (1,), 1.0, 1),
            (4, '{5}', 'solve', (2,), 1.0, 2),
        )
        generator = oracle(p_aggregate=0.0)
        _, delta = apply_transform(graph, TransformRequest('aggregate', 3, {3, 4}), generator, SETS)
        self.assertEqual([node.content for node in delta.add_nodes], ['{2,5}'] * 3)
        self.assertEqual(generator.ledger.total, 0)

    def test_targets_must_cover_every_subproblem(self):
        graph = merge_fixture()
        for targets in ({3}, {3, 4, 0}, set()):
            with self.subTest(targets=targets), self.assertRaises((IncompatibleTargets, InvalidTarget)):
                apply_transform(graph, TransformRequest('aggregate', 1, targets), oracle(), SORTING)

    def with_second_attempt(self):
        return apply_delta(merge_fixture(), GraphDelta(
            add_nodes=(ThoughtNode(id=5, content='[3,1]', value=0.5, origin='solve', parents=(1,),
                                   answers=1),),
            add_edges=frozenset({(1, 5)}),
        ))

    def test_candidates_of_one_subproblem_are_not_enough(self):
        with self.assertRaises(IncompatibleTargets):
            apply_transform(self.with_second_attempt(), TransformRequest('aggregate', 1, {3, 5}),
                            oracle(), SORTING)

    def test_attempts_rotate_over_candidates_in_creation_order(self):
        _, delta = apply_transform(self.with_second_attempt(),
                                   TransformRequest('aggregate', 3, {3, 4, 5}), oracle(), SORTING)
        self.assertEqual([node.parents for node in delta.add_nodes], [(3, 4), (5, 4), (3, 4)])

    def test_node_values_do_not_steer_the_inputs(self):
        graph = graph_of(
            (0, 'sort [1,3,2,4]', 'root', (), 0.0, None),
            (1, 'sort [1,3]', 'decompose', (0,), 0.0, None),
            (2, 'sort [2,4]', 'decompose', (0,), 0.0, None),
            (3, '[3,1,1]', 'solve', (1,), 0.2, 1),
            (4, '[2,4]', 'solve', (2,), 1.0, 2),
            (5, '[1,3]', 'solve', (1,), 1.0, 1),
        )
        _, delta = apply_transform(graph, TransformRequest('aggregate', 1, {3, 4, 5}), oracle(),
                                   SORTING)
        (merged,) = delta.add_nodes
        self.assertEqual(merged.parents, (3, 4))
        self.assertEqual(merged.content, '[1,1,2,3,4]')
        self.assertLess(merged.value, 1.0)

    def test_success_rate_follows_the_oracle(self):
        attempts = 1000
        _, delta = apply_transform(merge_fixture(), TransformRequest('aggregate', attempts, {3, 4}),
                                   oracle(p_aggregate=0.6), SORTING)
        rate = sum(node.value == 1.0 for node in delta.add_nodes) / attempts
        self.assertLess(abs(rate - 0.6), 3 * math.sqrt(0.6 * 0.4 / attempts))


class QueryAccountingTests(SimpleTestCase):

    def test_total_equals_sum_of_contracts(self):
        graph = new_graph('sort [' + ','.join('31415926535897932384626433832795') + ']')
        generator = oracle(p_solve=0.5, p_aggregate=0.5)
        expected = 0
        graph, _ = apply_transform(graph, TransformRequest('decompose', 1, {0}), generator, SORTING)
        halves = graph.subproblems(0)
        graph, _ = apply_transform(graph, TransformRequest('solve', 3, halves), generator, SORTING)
        expected += 3 * 2
        best = [graph.best_candidate(h).id for h in halves]
        graph, _ = apply_transform(graph, TransformRequest('aggregate', 4, best), generator, SORTING)
        expected += 4
        imperfect = [i for i in graph.candidates(0) if graph.nodes[i].value < 1][:2]
        graph, _ = apply_transform(graph, TransformRequest('refine', 2, imperfect), generator, SORTING)
        expected += 2 * len(imperfect)
        remove = keep_best(graph, graph.candidates(0))
        graph, _ = apply_transform(graph, TransformRequest('reduce', 1, remove), generator, SORTING)
        self.assertEqual(generator.ledger.total, expected)
        self.assertEqual(len(graph.candidates(0)), 1)
