"""
Generators answer GeneratorQuery objects: ``HttpGenerator`` talks to any
OpenAI-compatible chat-completions endpoint, ``OracleGenerator`` simulates
one. Both charge a QueryLedger once per answered logical query.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests
from django.conf import settings
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from .exceptions import GeneratorHttpError, GeneratorTimeout
from .ledger import INFERENCE, QueryLedger
from .oracle import OracleConfig, oracle_complete

logger = logging.getLogger(__name__)

RETRY_STATUSES = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class GeneratorQuery:
    system: str
    user: str
    tag: str
    temperature: float = 1.0
    max_tokens: int = 1024
    # structured description of the query for simulated backends, never sent
    context: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not self.tag:
            raise ValueError("every query needs an accounting tag")

    def messages(self):
        return [
            {'role': 'system', 'content': self.system},
            {'role': 'user', 'content': self.user},
        ]


class Generator:
    # whether complete_many may run queries on a thread pool
    concurrent = False

    def __init__(self, ledger=None):
        self.ledger = ledger if ledger is not None else QueryLedger()

    def complete(self, query):
        with self.ledger.charge(query.tag):
            return self._complete(query)

    def complete_many(self, queries):
        """Replies in query order."""
        queries = list(queries)
        if self.concurrent and len(queries) > 1:
            workers = min(settings.THOUGHTGRAPH['HTTP_WORKERS'], len(queries))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(self.complete, queries))
        return [self.complete(query) for query in queries]

    def _complete(self, query):
        raise NotImplementedError


class HttpGenerator(Generator):
    concurrent = True

    def __init__(self, endpoint=None, model=None, api_key=None, timeout=None, retries=None,
                 backoff_factor=None, temperature=None, ledger=None):
        super().__init__(ledger)
        conf = settings.THOUGHTGRAPH
        # overrides the temperature each query carries
        self.temperature = temperature
        self.endpoint = (endpoint or conf['ENDPOINT']).rstrip('/')
        self.model = model or conf['MODEL']
        self.timeout = timeout if timeout is not None else conf['HTTP_TIMEOUT']
        retries = retries if retries is not None else conf['HTTP_RETRIES']
        backoff_factor = backoff_factor if backoff_factor is not None else conf['HTTP_BACKOFF_FACTOR']
        retry = Retry(
            total=retries,
            backoff_factor=backoff_factor,
            status_forcelist=RETRY_STATUSES,
            allowed_methods=frozenset({'POST'}),
            raise_on_status=False,
        )
        self.session = requests.Session()
        self.session.mount('http://', HTTPAdapter(max_retries=retry))
        self.session.mount('https://', HTTPAdapter(max_retries=retry))
        api_key = api_key if api_key is not None else conf['API_KEY']
        if api_key:
            self.session.headers['Authorization'] = f'Bearer {api_key}'

    @property
    def url(self):
        return f'{self.endpoint}/chat/completions'

    def _complete(self, query):
        payload = {
            'model': self.model,
            'messages': query.messages(),
            'temperature': query.temperature if self.temperature is None else self.temperature,
            'max_tokens': query.max_tokens,
        }
        logger.debug("POST %s tag=%s", self.url, query.tag)
        try:
            response = self.session.post(self.url, json=payload, timeout=self.timeout)
        except requests.Timeout as exc:
            raise GeneratorTimeout(f"{self.url} timed out after {self.timeout}s") from exc
        except requests.RequestException as exc:
            raise GeneratorHttpError(f"{self.url} failed: {exc}") from exc
        if response.status_code >= 400:
            logger.warning("Generator returned HTTP %s for tag %s", response.status_code, query.tag)
            raise GeneratorHttpError(f"{self.url} returned HTTP {response.status_code}",
                                     status=response.status_code)
        try:
            return response.json()['choices'][0]['message']['content']
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GeneratorHttpError(f"{self.url} returned a malformed completion") from exc


class OracleGenerator(Generator):
    """Deterministic in (config seed, call index); calls are serialised."""

    def __init__(self, config=None, ledger=None):
        super().__init__(ledger)
        self.config = config or OracleConfig()
        self._calls = 0
        self._lock = threading.Lock()

    def _complete(self, query):
        with self._lock:
            index = self._calls
            self._calls += 1
            return oracle_complete(query, self.config, index)


def build_generator(backend='oracle', oracle=None, phase=INFERENCE, budget=None, ledger=None,
                    **http_options):
    """A generator charging ``ledger``, or a fresh ledger for ``phase`` capped at ``budget``."""
    ledger = ledger if ledger is not None else QueryLedger(phase=phase, cap=budget)
    if backend == 'oracle':
        return OracleGenerator(config=oracle, ledger=ledger)
    if backend == 'http':
        return HttpGenerator(ledger=ledger, **http_options)
    raise ValueError(f"Unknown backend '{backend}'")
