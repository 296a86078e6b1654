"""
Thought graphs: nodes carrying content and a value, edges recording which
thoughts produced which, and deltas that move a graph from one state to the
next.

Graphs are immutable snapshots. Every transformation builds a GraphDelta and
``apply_delta`` returns a new graph, so a snapshot can be handed to
concurrent policy queries without copying.
"""
import logging
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from types import MappingProxyType

from django.conf import settings

from .exceptions import GraphError, IdCollision, UnknownNode

logger = logging.getLogger(__name__)

ROOT_ORIGIN = 'root'
PROBLEM_ORIGINS = frozenset({'root', 'decompose'})


@dataclass(frozen=True)
class ThoughtNode:
    id: int
    content: str
    value: float = 0.0
    origin: str = ROOT_ORIGIN
    parents: tuple = ()
    created_at: int = 0
    # id of the problem node this candidate solves, None for problem nodes
    answers: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise GraphError(f"Node {self.id} value {self.value} is outside [0, 1]")

    @property
    def is_problem(self):
        return self.origin in PROBLEM_ORIGINS

    @property
    def is_candidate(self):
        return not self.is_problem


@dataclass(frozen=True)
class GraphDelta:
    add_nodes: tuple = ()
    remove_nodes: frozenset = frozenset()
    add_edges: frozenset = frozenset()
    remove_edges: frozenset = frozenset()

    @property
    def is_empty(self):
        return not (self.add_nodes or self.remove_nodes or self.add_edges or self.remove_edges)


@dataclass(frozen=True)
class ThoughtGraph:
    nodes: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    edges: frozenset = frozenset()
    step: int = 0
    next_id: int = 0

    def __eq__(self, other):
        if not isinstance(other, ThoughtGraph):
            return NotImplemented
        return (dict(self.nodes) == dict(other.nodes) and self.edges == other.edges
                and self.step == other.step)

    def __hash__(self):
        return hash((frozenset(self.nodes.items()), self.edges, self.step))

    def __contains__(self, node_id):
        return node_id in self.nodes

    def node(self, node_id):
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def children(self, node_id):
        return sorted(child for parent, child in self.edges if parent == node_id)

    def subproblems(self, node_id):
        """Problem nodes produced by decomposing ``node_id``, in creation order."""
        return [c for c in self.children(node_id) if self.nodes[c].origin == 'decompose']

    def candidates(self, problem_id):
        """Candidate solutions of ``problem_id``, in creation order."""
        return sorted(n.id for n in self.nodes.values() if n.answers == problem_id)

    def parent_problem(self, problem_id):
        node = self.node(problem_id)
        if node.origin != 'decompose':
            return None
        return node.parents[0]

    @property
    def root(self):
        for node in self.nodes.values():
            if node.origin == ROOT_ORIGIN:
                return node
        raise GraphError("Graph has no root problem")

    def best_candidate(self, problem_id):
        """Highest-value candidate of a problem, lowest id on ties."""
        ids = self.candidates(problem_id)
        if not ids:
            return None
        return self.nodes[max(ids, key=lambda i: (self.nodes[i].value, -i))]


def new_graph(root_content):
    root = ThoughtNode(id=0, content=root_content, value=0.0, origin=ROOT_ORIGIN)
    return ThoughtGraph(nodes=MappingProxyType({0: root}), next_id=1)


def _check_acyclic(nodes, edges):
    sorter = TopologicalSorter({node_id: () for node_id in nodes})
    for parent, child in edges:
        sorter.add(child, parent)
    try:
        sorter.prepare()
    except CycleError:
        raise GraphError("Delta would introduce a cycle") from None


def apply_delta(graph, delta):
    """Return (V ∪ V⁺ \\ V⁻, E ∪ E⁺ \\ E⁻) with the step counter advanced.

    Removing a node removes every edge touching it. Added edges must touch a
    node added by the same delta, and the result must stay acyclic.
    """
    for node_id in delta.remove_nodes:
        if node_id not in graph.nodes:
            raise UnknownNode(node_id)
    added = {}
    for node in delta.add_nodes:
        if node.id in graph.nodes or node.id in added:
            raise IdCollision(node.id)
        added[node.id] = node

    nodes = dict(graph.nodes)
    nodes.update(added)
    for node_id in delta.remove_nodes:
        del nodes[node_id]

    for parent, child in delta.add_edges:
        if child not in added and parent not in added:
            raise GraphError(f"Edge ({parent}, {child}) does not touch a new node")
        for endpoint in (parent, child):
            if endpoint not in nodes:
                raise UnknownNode(endpoint)

    removed = delta.remove_nodes
    edges = frozenset(
        (parent, child)
        for parent, child in (graph.edges | delta.add_edges) - delta.remove_edges
        if parent not in removed and child not in removed
    )
    if any(child not in added for _, child in delta.add_edges):
        _check_acyclic(nodes, edges)
    next_id = max([graph.next_id, *(node_id + 1 for node_id in added)])
    logger.debug("Applied delta +%d/-%d nodes at step %d", len(added), len(removed), graph.step + 1)
    return ThoughtGraph(
        nodes=MappingProxyType(nodes), edges=edges, step=graph.step + 1, next_id=next_id,
    )


def invert_delta(graph, delta):
    """Delta that undoes ``delta`` when applied to ``apply_delta(graph, delta)``."""
    removed_edges = frozenset(
        (p, c) for p, c in graph.edges if p in delta.remove_nodes or c in delta.remove_nodes
    ) | (graph.edges & delta.remove_edges)
    return GraphDelta(
        add_nodes=tuple(graph.nodes[i] for i in sorted(delta.remove_nodes)),
        remove_nodes=frozenset(node.id for node in delta.add_nodes),
        add_edges=removed_edges,
        remove_edges=delta.add_edges - graph.edges,
    )


def graph_delta(a, b):
    """Ids of the nodes present in ``a`` but not in ``b``."""
    return frozenset(a.nodes.keys() - b.nodes.keys())


def _single_line(text):
    return text.replace('\\', '\\\\').replace('\n', '\\n').replace('\r', '\\r')


def serialize_state(graph):
    """One line per node, then one per edge. Content is escaped so it cannot span lines."""
    limit = settings.THOUGHTGRAPH['CONTENT_TRUNCATION']
    lines = [
        f"node {node.id} [origin={node.origin}, value={node.value:.2f}]: {_single_line(node.content)[:limit]}"
        for node in sorted(graph.nodes.values(), key=lambda n: n.id)
    ]
    lines += [f"edge {parent} -> {child}" for parent, child in sorted(graph.edges)]
    return '\n'.join(lines)


def graph_to_dict(graph):
    return {
        'nodes': [
            {
                'id': node.id,
                'content': node.content,
                'value': node.value,
                'origin': node.origin,
                'parents': list(node.parents),
                'created_at': node.created_at,
                'answers': node.answers,
            }
            for node in sorted(graph.nodes.values(), key=lambda n: n.id)
        ],
        'edges': [list(edge) for edge in sorted(graph.edges)],
        'step': graph.step,
        'next_id': graph.next_id,
    }


def graph_from_dict(data):
    nodes = {}
    for item in data['nodes']:
        node = ThoughtNode(
            id=int(item['id']),
            content=item['content'],
            value=float(item['value']),
            origin=item['origin'],
            parents=tuple(item.get('parents', ())),
            created_at=int(item.get('created_at', 0)),
            answers=item.get('answers'),
        )
        nodes[node.id] = node
    edges = frozenset((int(p), int(c)) for p, c in data['edges'])
    for parent, child in edges:
        if parent not in nodes:
            raise UnknownNode(parent)
        if child not in nodes:
            raise UnknownNode(child)
    return ThoughtGraph(
        nodes=MappingProxyType(nodes),
        edges=edges,
        step=int(data.get('step', 0)),
        # ids are never reused, even after removals
        next_id=max(int(data.get('next_id', 0)), max(nodes, default=-1) + 1),
    )
