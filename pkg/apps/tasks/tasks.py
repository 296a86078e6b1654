"""
Sorting and set-intersection tasks.

A task knows how to generate instances, split a problem into subproblems,
score a candidate reply with its error function, and produce the exact
answer the simulated generator and the tests compare against. Problems and
candidates travel through the thought graph as text, so every task also owns
the text format of both.

A new task (a code-generation adapter, say) plugs in by subclassing ``Task``
and registering it in ``TASKS``.
"""
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from django.template.loader import render_to_string

from .exceptions import MalformedProblem, UnknownTask, UnsupportedDifficulty

DIFFICULTIES = (32, 64, 128)
ATOMIC_SIZE = 16


class TaskKind(str, Enum):
    SORTING = 'sorting'
    SET_INTERSECTION = 'set-intersection'


class _Atomic:
    def __repr__(self):
        return 'ATOMIC'

    def __bool__(self):
        return False


ATOMIC = _Atomic()


@dataclass(frozen=True)
class TaskInstance:
    kind: TaskKind
    n: int
    payload: object
    seed: int

    @property
    def name(self):
        return task_name(self.kind, self.n)

    def to_dict(self):
        return {'kind': self.kind.value, 'n': self.n, 'seed': self.seed, 'payload': self.payload}

    @classmethod
    def from_dict(cls, data):
        return cls(kind=TaskKind(data['kind']), n=int(data['n']), payload=data['payload'],
                   seed=int(data['seed']))


@dataclass(frozen=True)
class ErrorScore:
    total: int
    components: dict = field(default_factory=dict)
    parsed: bool = True

    @classmethod
    def from_components(cls, parsed=True, **components):
        if not parsed:
            components['unparseable'] = 1
        return cls(total=sum(components.values()), components=components, parsed=parsed)

    @property
    def correct(self):
        return self.total == 0


@dataclass(frozen=True)
class SortingProblem:
    digits: tuple

    @property
    def size(self):
        return len(self.digits)

    @property
    def content(self):
        return f"sort {format_list(self.digits)}"


@dataclass(frozen=True)
class IntersectionProblem:
    a: tuple
    b: tuple

    @property
    def size(self):
        return len(self.a)

    @property
    def content(self):
        return f"intersect {format_set(self.a)} and {format_set(self.b)}"


def format_list(values):
    return '[' + ','.join(str(v) for v in values) + ']'


def format_set(values):
    return '{' + ','.join(str(v) for v in sorted(values)) + '}'


def _last_group(pattern, text):
    matches = pattern.findall(text or '')
    return matches[-1] if matches else None


def _parse_ints(body, low=None, high=None):
    tokens = [token.strip() for token in body.split(',')]
    if tokens == ['']:
        return []
    values = []
    for token in tokens:
        if not re.fullmatch(r"[0-9]+", token):
            return None
        value = int(token)
        if (low is not None and value < low) or (high is not None and value > high):
            return None
        values.append(value)
    return values


LIST_PATTERN = re.compile(r'\[([^\[\]]*)\]')
SET_PATTERN = re.compile(r'\{([^{}]*)\}')


def score_sorting(input_digits, candidate):
    """X counts descending adjacent pairs, Y the per-digit frequency gap."""
    a = np.asarray(input_digits, dtype=np.int64)
    b = np.asarray(candidate, dtype=np.int64)
    unsorted_pairs = int(np.count_nonzero(np.diff(b) < 0)) if b.size > 1 else 0
    counts_a = np.bincount(a, minlength=10)[:10]
    counts_b = np.bincount(b, minlength=10)[:10]
    mismatch = int(np.abs(counts_b - counts_a).sum())
    return ErrorScore.from_components(unsorted_pairs=unsorted_pairs, frequency_mismatch=mismatch)


def score_set_intersection(a, b, candidate):
    truth = set(a) & set(b)
    candidate = set(candidate)
    return ErrorScore.from_components(missing=len(truth - candidate), extra=len(candidate - truth))


class Task:
    """Base for a decomposable reasoning task."""

    kind = None
    # whether φ_agg is exact bookkeeping and needs no generator query
    deterministic_aggregation = False

    def gen_instance(self, n, seed):
        raise NotImplementedError

    def root_problem(self, instance):
        raise NotImplementedError

    def parse_problem(self, content):
        raise NotImplementedError

    def parse_candidate(self, content):
        """Candidate value parsed from a reply, or None when unparseable."""
        raise NotImplementedError

    def format_candidate(self, value):
        raise NotImplementedError

    def decomposition_plan(self, problem):
        raise NotImplementedError

    def score_value(self, problem, value):
        raise NotImplementedError

    def exact_solution(self, problem):
        raise NotImplementedError

    def exact_aggregate(self, parts):
        raise NotImplementedError

    def corrupt(self, problem, content, rng, corruption):
        raise NotImplementedError

    def describe_error(self, score):
        raise NotImplementedError

    def dummy_problem(self, n):
        raise NotImplementedError

    def empty_value(self):
        raise NotImplementedError

    def score(self, problem, content):
        value = self.parse_candidate(content)
        if value is None:
            base = self.score_value(problem, self.empty_value())
            return ErrorScore.from_components(parsed=False, **base.components)
        return self.score_value(problem, value)

    def valuate(self, problem, content):
        score = self.score(problem, content)
        if not score.parsed:
            return 0.0
        return 1.0 / (1.0 + score.total)

    def reference_solve(self, problem):
        return self.format_candidate(self.exact_solution(problem))

    def reference_aggregate(self, contents):
        parts = [self.parse_candidate(content) for content in contents]
        parts = [self.empty_value() if part is None else part for part in parts]
        return self.format_candidate(self.exact_aggregate(parts))

    def candidate_content(self, reply):
        """Normalised candidate text, or the raw reply when it cannot be parsed."""
        value = self.parse_candidate(reply)
        if value is None:
            return (reply or '').strip()
        return self.format_candidate(value)

    def feedback(self, problem, content):
        return self.describe_error(self.score(problem, content))

    def prompt(self, action, **context):
        """(system, user) texts for a reasoning query."""
        system = render_to_string('reasoning/system.txt', {'task': self.kind.value})
        user = render_to_string(f'reasoning/{self.kind.value}/{action}.txt', context)
        return system.strip(), user.strip()

    def plan_levels(self, n):
        """Number of decomposable problems at each depth of the plan for size n."""
        levels = []
        frontier = [self.dummy_problem(n)]
        while True:
            expanded = [self.decomposition_plan(p) for p in frontier]
            expanded = [children for children in expanded if children is not ATOMIC]
            if not expanded:
                return levels
            levels.append(len(expanded))
            frontier = [child for children in expanded for child in children]

    def plan_size(self, n):
        """Number of problem nodes in the fully expanded plan for size n."""
        return self._count_plan_nodes(self.dummy_problem(n))

    def _count_plan_nodes(self, problem):
        children = self.decomposition_plan(problem)
        if children is ATOMIC:
            return 1
        return 1 + sum(self._count_plan_nodes(child) for child in children)


class SortingTask(Task):
    kind = TaskKind.SORTING

    def gen_instance(self, n, seed):
        rng = np.random.default_rng(seed)
        digits = rng.integers(0, 10, size=n).tolist()
        return TaskInstance(kind=self.kind, n=n, payload=digits, seed=seed)

    def root_problem(self, instance):
        return SortingProblem(tuple(instance.payload))

    def parse_problem(self, content):
        match = re.fullmatch(r'sort (\[[^\]]*\])', content.strip())
        digits = _parse_ints(match.group(1)[1:-1], 0, 9) if match else None
        if digits is None:
            raise MalformedProblem(f"Not a sorting problem: {content[:80]!r}")
        return SortingProblem(tuple(digits))

    def parse_candidate(self, content):
        body = _last_group(LIST_PATTERN, content)
        if body is None:
            return None
        return _parse_ints(body, 0, 9)

    def format_candidate(self, value):
        return format_list(value)

    def empty_value(self):
        return []

    def dummy_problem(self, n):
        return SortingProblem((0,) * n)

    def decomposition_plan(self, problem):
        if problem.size <= ATOMIC_SIZE:
            return ATOMIC
        half = problem.size // 2
        return [SortingProblem(problem.digits[:half]), SortingProblem(problem.digits[half:])]

    def score_value(self, problem, value):
        return score_sorting(problem.digits, value)

    def exact_solution(self, problem):
        return sorted(problem.digits)

    def exact_aggregate(self, parts):
        return sorted(digit for part in parts for digit in part)

    def corrupt(self, problem, content, rng, corruption):
        digits = self.parse_candidate(content) or []
        for _ in range(corruption.duplications):
            if digits:
                copied = digits[int(rng.integers(len(digits)))]
            else:
                copied = int(rng.integers(10))
            digits.insert(int(rng.integers(len(digits) + 1)), copied)
        for _ in range(corruption.swaps):
            if len(digits) > 1:
                i = int(rng.integers(len(digits) - 1))
                digits[i], digits[i + 1] = digits[i + 1], digits[i]
        return format_list(digits)

    def describe_error(self, score):
        if not score.parsed:
            return "The reply did not contain a list of digits in square brackets."
        parts = score.components
        return (f"{parts['unsorted_pairs']} unsorted pairs, "
                f"{parts['frequency_mismatch']} frequency mismatch")


class SetIntersectionTask(Task):
    kind = TaskKind.SET_INTERSECTION
    deterministic_aggregation = True

    def gen_instance(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.choice(4 * n + 1, size=n, replace=False)
        while True:
            b = rng.choice(4 * n + 1, size=n, replace=False)
            if np.intersect1d(a, b).size:
                break
        payload = {'a': sorted(a.tolist()), 'b': sorted(b.tolist())}
        return TaskInstance(kind=self.kind, n=n, payload=payload, seed=seed)

    def root_problem(self, instance):
        return IntersectionProblem(tuple(instance.payload['a']), tuple(instance.payload['b']))

    def parse_problem(self, content):
        match = re.fullmatch(r'intersect \{([^}]*)\} and \{([^}]*)\}', content.strip())
        a = _parse_ints(match.group(1)) if match else None
        b = _parse_ints(match.group(2)) if match else None
        if a is None or b is None:
            raise MalformedProblem(f"Not a set-intersection problem: {content[:80]!r}")
        return IntersectionProblem(tuple(a), tuple(b))

    def parse_candidate(self, content):
        body = _last_group(SET_PATTERN, content)
        if body is None:
            return None
        values = _parse_ints(body)
        return None if values is None else set(values)

    def format_candidate(self, value):
        return format_set(value)

    def empty_value(self):
        return set()

    def dummy_problem(self, n):
        return IntersectionProblem(tuple(range(n)), tuple(range(n)))

    def decomposition_plan(self, problem):
        if problem.size <= ATOMIC_SIZE:
            return ATOMIC
        return [
            IntersectionProblem(problem.a[i:i + ATOMIC_SIZE], problem.b)
            for i in range(0, problem.size, ATOMIC_SIZE)
        ]

    def score_value(self, problem, value):
        return score_set_intersection(problem.a, problem.b, value)

    def exact_solution(self, problem):
        return set(problem.a) & set(problem.b)

    def exact_aggregate(self, parts):
        return set().union(*parts)

    def corrupt(self, problem, content, rng, corruption):
        values = self.parse_candidate(content) or set()
        for _ in range(corruption.missing):
            if values:
                ordered = sorted(values)
                values.discard(ordered[int(rng.integers(len(ordered)))])
        truth = self.exact_solution(problem)
        for k in range(corruption.extra):
            pool = sorted((set(problem.a) | set(problem.b)) - truth - values)
            if pool:
                values.add(pool[int(rng.integers(len(pool)))])
            else:
                values.add(max(problem.a + problem.b, default=0) + 1 + k)
        return format_set(values)

    def describe_error(self, score):
        if not score.parsed:
            return "The reply did not contain a set in curly braces."
        parts = score.components
        return f"{parts['missing']} missing elements, {parts['extra']} extra elements"


TASKS = {
    TaskKind.SORTING: SortingTask(),
    TaskKind.SET_INTERSECTION: SetIntersectionTask(),
}

TASK_NAME_PATTERN = re.compile(r'^(sorting|set-intersection|set)(\d+)$')


def get_task(kind):
    try:
        return TASKS[TaskKind(kind)]
    except ValueError:
        raise UnknownTask(str(kind)) from None


def task_name(kind, n):
    return f"{TaskKind(kind).value}{n}"


def parse_task_name(name):
    """'sorting32' -> (TaskKind.SORTING, 32); 'set64' is accepted as shorthand."""
    match = TASK_NAME_PATTERN.match(name or '')
    if not match:
        raise UnknownTask(name)
    kind = TaskKind.SORTING if match.group(1) == 'sorting' else TaskKind.SET_INTERSECTION
    n = int(match.group(2))
    if n not in DIFFICULTIES:
        raise UnsupportedDifficulty(n)
    return kind, n


def gen_instance(kind, n, seed):
    if n not in DIFFICULTIES:
        raise UnsupportedDifficulty(n)
    return get_task(kind).gen_instance(n, seed)


def decomposition_plan(problem):
    """Plan for a TaskInstance (its root problem) or for a subproblem."""
    if isinstance(problem, TaskInstance):
        task = get_task(problem.kind)
        return task.decomposition_plan(task.root_problem(problem))
    if isinstance(problem, SortingProblem):
        return TASKS[TaskKind.SORTING].decomposition_plan(problem)
    return TASKS[TaskKind.SET_INTERSECTION].decomposition_plan(problem)


def valuate(task, subproblem, candidate_content):
    return get_task(task).valuate(subproblem, candidate_content)


def reference_solve(task, subproblem):
    return get_task(task).reference_solve(subproblem)
