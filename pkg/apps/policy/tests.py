import itertools
from collections import Counter

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from apps.backends.generators import Generator, build_generator
from apps.backends.oracle import OracleConfig
from apps.graphs.transforms import TransformKind
from apps.tasks.tasks import DIFFICULTIES, TaskKind, gen_instance

from .agents import Decision, EnsemblePolicy, ScriptedPolicy, scripted_action
from .environment import Action, enumerate_actions, reset, solved_node, step
from .episodes import (
    SOLVED, STEP_CAP_REACHED, EpisodeRecord, default_epsilon, run_episode,
)
from .exceptions import AllProposalsInvalid, InvalidAction, ParseFailure
from .prompts import build_policy_prompt, parse_action
from .voting import cast_votes, ensemble_vote, select_mode

DEC, SOL, REF, RED, AGG = (TransformKind.DECOMPOSE, TransformKind.SOLVE, TransformKind.REFINE,
                           TransformKind.REDUCE, TransformKind.AGGREGATE)


def oracle(seed=0, **rates):
    return build_generator('oracle', oracle=OracleConfig(seed=seed, **rates))


class CannedGenerator(Generator):
    """Replies from a fixed list, cycling."""

    def __init__(self, replies):
        super().__init__()
        self.replies = itertools.cycle(replies)

    def _complete(self, query):
        return next(self.replies)


class RandomPolicy:
    name = 'random'

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def decide(self, state, generator, cot_enabled=True):
        actions = enumerate_actions(state)
        return Decision(action=actions[int(self.rng.integers(len(actions)))])


def fenced(action):
    return f"Some thinking.\n```json\n{action.encode()}\n```"


def split_and_solved(seed=1):
    """sorting32 state after decomposing the root and solving both halves."""
    generator = oracle()
    state = reset(gen_instance('sorting', 32, seed))
    state = step(state, Action(DEC, {0}), generator)
    state = step(state, Action(SOL, {1}), generator)
    return step(state, Action(SOL, {2}), generator), generator


class ActionTests(SimpleTestCase):

    def test_canonical_encoding(self):
        self.assertEqual(Action('aggregate', {4, 3}).encode(), '{"action":"aggregate","nodes":[3,4]}')
        self.assertEqual(Action.decode('{"nodes": [4, 3], "action": "aggregate"}'),
                         Action(AGG, {3, 4}))

    def test_decode_rejects_malformed_objects(self):
        for text in ('not json', '[1]', '{"action":"solve"}', '{"action":"split","nodes":[1]}',
                     '{"action":"solve","nodes":["1"]}'):
            with self.subTest(text=text), self.assertRaises(ParseFailure):
                Action.decode(text)


class EnumerateActionsTests(SimpleTestCase):

    def test_fresh_root(self):
        state = reset(gen_instance('sorting', 32, 0))
        self.assertEqual(enumerate_actions(state), [Action(DEC, {0}), Action(SOL, {0})])

    def test_solved_halves_can_be_aggregated(self):
        state, _ = split_and_solved()
        actions = enumerate_actions(state)
        self.assertIn(Action(AGG, {3, 4}), actions)
        self.assertNotIn(Action(SOL, {1}), actions)
        self.assertNotIn(Action(RED, {3}), actions)

    def test_terminal_state_has_no_actions(self):
        state, generator = split_and_solved()
        state = step(state, Action(AGG, {3, 4}), generator)
        self.assertEqual(state.graph.nodes[5].value, 1.0)
        self.assertEqual(enumerate_actions(state), [])
        self.assertEqual(solved_node(state), 5)

    def test_failed_candidates_offer_refine_and_reduce(self):
        generator = oracle(p_solve=0.0)
        state = reset(gen_instance('sorting', 32, 0))
        state = step(state, Action(DEC, {0}), generator)
        state = step(state, Action(SOL, {1}), generator)
        state = step(state, Action(SOL, {1}), generator)
        actions = enumerate_actions(state)
        for action in (Action(REF, {3}), Action(REF, {4}), Action(RED, {3}), Action(RED, {4}),
                       Action(SOL, {1})):
            self.assertIn(action, actions)

    def test_combinations_are_capped(self):
        generator = oracle(p_solve=0.0)
        state = reset(gen_instance('sorting', 32, 0))
        state = step(state, Action(DEC, {0}), generator)
        for _ in range(7):
            state = step(state, Action(SOL, {1}), generator)
            state = step(state, Action(SOL, {2}), generator)
        with self.settings(THOUGHTGRAPH={**settings.THOUGHTGRAPH, 'AGGREGATE_COMBINATION_CAP': 10}):
            aggregates = [a for a in enumerate_actions(state) if a.kind is AGG]
        self.assertEqual(len(aggregates), 10)


class StepTests(SimpleTestCase):

    def test_solve_leaf(self):
        state, _ = split_and_solved()
        child = state.graph.nodes[3]
        self.assertEqual(child.value, 1.0)
        self.assertEqual(state.steps_taken, 3)
        self.assertEqual([a for a, _ in state.history],
                         [Action(DEC, {0}), Action(SOL, {1}), Action(SOL, {2})])

    def test_reduce_drops_the_worse_aggregate(self):
        state, _ = split_and_solved()
        generator = oracle(seed=2, p_aggregate=0.0)
        state = step(state, Action(AGG, {3, 4}), generator)
        state = step(state, Action(AGG, {3, 4}), generator)
        before = len(state.graph.nodes)
        state = step(state, Action(RED, {5}), generator)
        self.assertEqual(len(state.graph.nodes), before - 1)

    def test_invalid_action_leaves_state_unchanged(self):
        state, generator = split_and_solved()
        with self.assertRaises(InvalidAction):
            step(state, Action(AGG, {1, 3}), generator)
        self.assertEqual(state.steps_taken, 3)
        self.assertEqual(set(state.graph.nodes), {0, 1, 2, 3, 4})


class PolicyPromptTests(SimpleTestCase):

    def test_empty_history(self):
        query = build_policy_prompt(reset(gen_instance('sorting', 32, 0)))
        self.assertIn('## Action history\nno actions yet', query.user)
        self.assertEqual(query.tag, 'policy')
        self.assertEqual(query.max_tokens, 2048)

    def test_sections_in_order(self):
        state, _ = split_and_solved()
        user = build_policy_prompt(state).user
        headings = ['## Transformations', '## Valid actions', '## Thought graph',
                    '## Action history', '## Analysis', '## Reply format']
        positions = [user.index(h) for h in headings]
        self.assertEqual(positions, sorted(positions))
        for item in ('1. Describe the action history', '2. Describe the thought graph state',
                     '3. Discuss the outlined strategy', '4. Outline a number of options'):
            self.assertIn(item, user)
        self.assertIn('1. {"action":"decompose","nodes":[0]}', user)
        self.assertIn('{"action":"aggregate","nodes":[3,4]}', user)

    def test_deterministic(self):
        state, _ = split_and_solved()
        self.assertEqual(build_policy_prompt(state).user, build_policy_prompt(state).user)
        other, _ = split_and_solved()
        self.assertEqual(build_policy_prompt(state).user, build_policy_prompt(other).user)

    def test_one_line_per_node(self):
        generator = oracle()
        state = step(reset(gen_instance('sorting', 32, 0)), Action(DEC, {0}), generator)
        user = build_policy_prompt(state).user
        self.assertEqual(sum(line.startswith('node ') for line in user.split('\n')), 3)

    def test_without_cot(self):
        query = build_policy_prompt(reset(gen_instance('sorting', 32, 0)), cot_enabled=False)
        self.assertNotIn('## Analysis', query.user)
        self.assertIn('Do not explain your choice.', query.user)
        self.assertFalse(query.context['cot'])

    def test_reference_stays_out_of_the_text(self):
        state = reset(gen_instance('sorting', 32, 0))
        plain = build_policy_prompt(state)
        guided = build_policy_prompt(state, reference=Action(DEC, {0}))
        self.assertEqual(plain.user, guided.user)
        self.assertEqual(guided.context['reference'], '{"action":"decompose","nodes":[0]}')

    def test_task_description_in_system_prompt(self):
        query = build_policy_prompt(reset(gen_instance('set-intersection', 32, 0)))
        self.assertIn('intersection of two sets', query.system)


class ParseActionTests(SimpleTestCase):

    def test_last_fenced_object(self):
        state, _ = split_and_solved()
        reply = ('Maybe ```json\n{"action":"refine","nodes":[3]}\n``` but no.\n'
                 '```json\n{"action":"aggregate","nodes":[4,3]}\n```')
        self.assertEqual(parse_action(reply, state), Action(AGG, {3, 4}))

    def test_solve(self):
        generator = oracle()
        state = step(reset(gen_instance('sorting', 32, 0)), Action(DEC, {0}), generator)
        reply = 'Solve the right half.\n```{"action":"solve","nodes":[2]}```'
        self.assertEqual(parse_action(reply, state), Action(SOL, {2}))

    def test_prose_only(self):
        with self.assertRaises(ParseFailure):
            parse_action('I would aggregate next.', reset(gen_instance('sorting', 32, 0)))

    def test_removed_node(self):
        state, _ = split_and_solved()
        with self.assertRaises(InvalidAction):
            parse_action('```json\n{"action":"refine","nodes":[9]}\n```', state)


class VotingTests(SimpleTestCase):

    def test_clear_majority(self):
        solve, merge = Action(SOL, {3}), Action(AGG, {1, 2})
        self.assertEqual(select_mode([solve, solve, merge, solve]), solve)

    def test_tie_goes_to_smallest_encoding(self):
        solve, refine = Action(SOL, {3}), Action(REF, {4})
        self.assertEqual(select_mode([refine, solve, solve, refine]), refine)
        self.assertEqual(select_mode([solve, refine]), refine)

    def test_exhaustive_small_multisets(self):
        pool = [Action(SOL, {3}), Action(REF, {4}), Action(AGG, {1, 2})]
        for size in range(1, 6):
            for proposals in itertools.combinations_with_replacement(pool, size):
                counts = Counter(p.encode() for p in proposals)
                top = max(counts.values())
                expected = sorted(code for code, c in counts.items() if c == top)[0]
                for ordering in {tuple(proposals), tuple(reversed(proposals))}:
                    self.assertEqual(select_mode(list(ordering)).encode(), expected)

    def test_invalid_proposals_are_discarded(self):
        state, _ = split_and_solved()
        merge = Action(AGG, {3, 4})
        replies = [fenced(merge), 'no idea', fenced(Action(SOL, {1})), fenced(merge),
                   '```json\n{"action":"reduce","nodes":[0]}\n```']
        generator = CannedGenerator(replies)
        ballot = cast_votes(state, 5, generator)
        self.assertEqual(ballot.proposals, (merge, merge))
        self.assertEqual(ballot.discarded, 3)
        self.assertEqual(ballot.rounds, 1)
        self.assertEqual(generator.ledger.counts, {'policy': 5})

    def test_all_invalid_twice_aborts(self):
        generator = CannedGenerator(['no action here'])
        with self.assertRaises(AllProposalsInvalid):
            ensemble_vote(reset(gen_instance('sorting', 32, 0)), 5, generator)
        self.assertEqual(generator.ledger.total, 10)

    def test_retry_round_can_recover(self):
        state = reset(gen_instance('sorting', 32, 0))
        generator = CannedGenerator(['prose'] * 3 + [fenced(Action(SOL, {0}))] * 3)
        ballot = cast_votes(state, 3, generator)
        self.assertEqual(ballot.rounds, 2)
        self.assertEqual(select_mode(ballot.proposals), Action(SOL, {0}))

    def test_perfect_simulated_voters_follow_the_reference(self):
        state = reset(gen_instance('sorting', 32, 0))
        reference = scripted_action(state)
        self.assertEqual(ensemble_vote(state, 5, oracle(), reference=reference), reference)


class EpisodeTests(SimpleTestCase):

    def test_scripted_policy_solves_sorting32_in_four_steps(self):
        record = run_episode(gen_instance('sorting', 32, 0), ScriptedPolicy(), oracle())
        self.assertEqual(record.terminal, SOLVED)
        self.assertEqual(record.final_error, 0)
        self.assertEqual([a.kind for a in record.actions], [DEC, SOL, SOL, AGG])
        self.assertEqual(record.inference_cost, 3)
        self.assertEqual(record.epsilon, 9)

    def test_scripted_policy_solves_every_difficulty(self):
        for kind in TaskKind:
            for n in DIFFICULTIES:
                record = run_episode(gen_instance(kind, n, 1), ScriptedPolicy(), oracle())
                self.assertEqual(record.terminal, SOLVED, (kind, n))
                self.assertLessEqual(len(record.steps), default_epsilon(kind, n))

    def test_step_cap_of_one(self):
        record = run_episode(gen_instance('set-intersection', 64, 0), ScriptedPolicy(), oracle(),
                             epsilon=1)
        self.assertEqual(record.terminal, STEP_CAP_REACHED)
        self.assertEqual(len(record.steps), 1)

    def test_length_never_exceeds_the_cap(self):
        for seed in range(1000):
            kind = (TaskKind.SORTING, TaskKind.SET_INTERSECTION)[seed % 2]
            instance = gen_instance(kind, 32, seed)
            record = run_episode(instance, RandomPolicy(seed), oracle(seed, p_solve=0.7),
                                 epsilon=1 + seed % 9)
            self.assertLessEqual(len(record.steps), record.epsilon)
            if record.terminal == SOLVED:
                self.assertEqual(record.final_error, 0)

    def test_recorded_actions_replay(self):
        instance = gen_instance('sorting', 64, 3)
        record = run_episode(instance, ScriptedPolicy(), oracle(5, p_solve=0.6, p_aggregate=0.6))
        generator = oracle(5, p_solve=0.6, p_aggregate=0.6)
        state = reset(instance)
        self.assertEqual(state.digest(), record.initial_digest)
        for recorded in record.steps:
            self.assertIn(recorded.action, enumerate_actions(state))
            state = step(state, recorded.action, generator)
            self.assertEqual(state.digest(), recorded.digest)

    def test_ensemble_episode_accounts_policy_queries(self):
        record = run_episode(gen_instance('sorting', 32, 0), EnsemblePolicy(5), oracle())
        self.assertEqual(record.terminal, SOLVED)
        self.assertEqual(record.queries['counts'], {'policy': 20, 'solve': 2, 'aggregate': 1})
        self.assertEqual(record.decision_errors, 0)
        self.assertEqual(record.ensemble_size, 5)

    def test_cot_flag_is_recorded(self):
        record = run_episode(gen_instance('sorting', 32, 0), EnsemblePolicy(3), oracle(),
                             cot_enabled=False)
        self.assertFalse(record.cot)
        self.assertEqual(record.terminal, SOLVED)

    def test_invalid_voters_abort_the_episode(self):
        record = run_episode(gen_instance('sorting', 32, 0), EnsemblePolicy(2),
                             CannedGenerator(['cannot decide']))
        self.assertEqual(record.terminal, 'Aborted')
        self.assertEqual(record.steps, [])
        self.assertIn('invalid', record.reason)

    def test_record_survives_serialization(self):
        record = run_episode(gen_instance('sorting', 32, 0), EnsemblePolicy(3), oracle())
        restored = EpisodeRecord.from_dict(record.to_dict())
        self.assertEqual(restored.actions, record.actions)
        self.assertEqual(restored.steps[0].proposals, record.steps[0].proposals)
        self.assertEqual(restored.terminal, SOLVED)
