import threading
from collections import Counter
from contextlib import contextmanager

from .exceptions import BudgetExceeded

SEARCH = 'search'
INFERENCE = 'inference'


class QueryLedger:
    """Counts logical generator queries per tag for one cost phase.

    A query is reserved before it is sent and released again if it fails, so
    the count only ever holds answered queries and the cap is never
    overshot by concurrent callers.
    """

    def __init__(self, phase=INFERENCE, cap=None):
        self.phase = phase
        self.cap = cap
        self._counts = Counter()
        self._lock = threading.Lock()

    @property
    def total(self):
        with self._lock:
            return sum(self._counts.values())

    @property
    def counts(self):
        with self._lock:
            return dict(self._counts)

    def reserve(self, tag):
        with self._lock:
            if self.cap is not None and sum(self._counts.values()) >= self.cap:
                raise BudgetExceeded(self.phase, self.cap)
            self._counts[tag] += 1

    def release(self, tag):
        with self._lock:
            self._counts[tag] -= 1
            if not self._counts[tag]:
                del self._counts[tag]

    @contextmanager
    def charge(self, tag):
        self.reserve(tag)
        try:
            yield
        except BaseException:
            self.release(tag)
            raise

    def snapshot(self):
        counts = self.counts
        return {'phase': self.phase, 'total': sum(counts.values()), 'counts': counts}

    def since(self, snapshot):
        """Queries charged after ``snapshot`` was taken, in snapshot form."""
        before = Counter(snapshot['counts'])
        counts = {tag: n - before[tag] for tag, n in self.counts.items() if n - before[tag]}
        return {'phase': self.phase, 'total': sum(counts.values()), 'counts': counts}
