"""Network topology: EPR graphs, spanning trees, entangled hypergraphs.

Agents are numbered 1..n. An ``EprGraph`` edge means the two endpoint
agents pre-share one EPR pair; an ``EntangledHypergraph`` hyperedge means
its members pre-share one GHZ-class group state. Everything here is pure
bookkeeping over immutable values — no quantum state involved — and every
choice (BFS order, tie-breaks, merge order) is deterministic so that
protocol transcripts are reproducible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ConnectivityError

AgentId = int


def _check_agent(v: int, n: int) -> None:
    if not 1 <= v <= n:
        raise ValueError(f"agent index {v} outside 1..{n}")


class EprGraph:
    """Undirected graph of pre-shared EPR pairs, with optional edge weights.

    ``edges`` may contain ``(a, b)`` pairs or ``(a, b, weight)`` triples.
    Self-loops, repeated pairs (multi-edges), and negative weights are
    rejected; an agent pair either shares one EPR pair or none.
    """

    __slots__ = ("n", "edges", "weights")

    def __init__(self, n: int, edges: Iterable[Sequence], weights: Mapping | None = None):
        if n < 1:
            raise ValueError("need at least one agent")
        seen: set[tuple[int, int]] = set()
        wmap: dict[tuple[int, int], float] = {}
        for item in edges:
            if len(item) == 3:
                a, b, w = item
            else:
                (a, b), w = item, None
            _check_agent(a, n)
            _check_agent(b, n)
            if a == b:
                raise ValueError(f"self-loop at agent {a}")
            pair = (a, b) if a < b else (b, a)
            if pair in seen:
                raise ValueError(f"agents {pair} already share an EPR pair")
            seen.add(pair)
            if w is not None:
                if float(w) < 0:
                    raise ValueError(f"negative weight on edge {pair}")
                wmap[pair] = float(w)
        for (a, b), w in (weights or {}).items():
            pair = (a, b) if a < b else (b, a)
            if pair not in seen:
                raise ValueError(f"weight given for missing edge {pair}")
            if float(w) < 0:
                raise ValueError(f"negative weight on edge {pair}")
            wmap[pair] = float(w)
        self.n = n
        self.edges: tuple[tuple[int, int], ...] = tuple(sorted(seen))
        self.weights = wmap

    def weight(self, a: int, b: int) -> float:
        """Edge weight; edges declared without one cost 1."""
        pair = (a, b) if a < b else (b, a)
        if pair not in self.edges:
            raise ValueError(f"no edge {pair}")
        return self.weights.get(pair, 1.0)

    def neighbors(self, v: int) -> list[int]:
        """Adjacent agents in increasing index order."""
        _check_agent(v, self.n)
        out = [b for a, b in self.edges if a == v] + [a for a, b in self.edges if b == v]
        return sorted(out)


@dataclass(frozen=True)
class SpanningTree:
    """A spanning tree with the weaving endpoints already designated.

    ``root_leaf`` is the lowest-index degree-1 vertex: the agent whose EPR
    half seeds the weave and who ends the protocol holding a GHZ share.
    ``start`` is its unique neighbor, where the first three-party state is
    built. ``leaves`` is the set of all degree-1 vertices.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    root_leaf: AgentId
    start: AgentId
    leaves: frozenset[AgentId]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "SpanningTree":
        """Build (and validate) a tree from an explicit edge list."""
        if n < 2:
            raise ValueError("a spanning tree needs at least two agents")
        norm = []
        for a, b in edges:
            _check_agent(a, n)
            _check_agent(b, n)
            if a == b:
                raise ValueError(f"self-loop at agent {a}")
            norm.append((a, b) if a < b else (b, a))
        norm = tuple(sorted(norm))
        if len(set(norm)) != len(norm) or len(norm) != n - 1:
            raise ValueError(f"{len(norm)} edges cannot form a tree on {n} agents")
        adj: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
        for a, b in norm:
            adj[a].append(b)
            adj[b].append(a)
        seen = {1}
        queue = deque([1])
        while queue:
            v = queue.popleft()
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    queue.append(u)
        if len(seen) != n:
            missing = min(set(range(1, n + 1)) - seen)
            raise ValueError(f"edge set is not connected (agent {missing} unreachable)")
        degree_one = sorted(v for v in adj if len(adj[v]) == 1)
        root_leaf = degree_one[0]
        return cls(
            n=n,
            edges=norm,
            root_leaf=root_leaf,
            start=adj[root_leaf][0],
            leaves=frozenset(degree_one),
        )

    def neighbors(self, v: int) -> list[int]:
        out = [b for a, b in self.edges if a == v] + [a for a, b in self.edges if b == v]
        return sorted(out)

    def total_weight(self, g: EprGraph) -> float:
        return sum(g.weight(a, b) for a, b in self.edges)


class EntangledHypergraph:
    """Agents plus hyperedges, each hyperedge a group of GHZ-sharing agents.

    Hyperedges are stored largest first (ties keep declaration order), the
    order in which the merge schedule consumes them. Sizes below 2 are
    rejected: a one-party "group state" carries no entanglement to merge.
    """

    __slots__ = ("n", "hyperedges")

    def __init__(self, n: int, hyperedges: Iterable[Iterable[int]]):
        if n < 1:
            raise ValueError("need at least one agent")
        cleaned = []
        for members in hyperedges:
            edge = frozenset(members)
            if len(edge) < 2:
                raise ValueError(f"hyperedge {sorted(edge)} has fewer than 2 agents")
            for v in edge:
                _check_agent(v, n)
            cleaned.append(edge)
        order = sorted(range(len(cleaned)), key=lambda i: (-len(cleaned[i]), i))
        self.n = n
        self.hyperedges: tuple[frozenset[int], ...] = tuple(cleaned[i] for i in order)


@dataclass(frozen=True)
class MergeStep:
    """One fusion event of the group-merging schedule.

    ``junction`` is the smallest-index agent common to the running fused
    group and the incoming hyperedge; it performs the fusion locally.
    ``pre_size`` and ``add_size`` record how many parties each side had;
    the merged group covers ``pre_size + add_size - len(overlap)`` agents.
    """

    index: int  # position of the hyperedge in EntangledHypergraph.hyperedges
    hyperedge: frozenset[AgentId]
    junction: AgentId
    overlap: frozenset[AgentId]
    pre_size: int
    add_size: int

    def __post_init__(self):
        if not self.overlap:
            raise ValueError("merge step with empty overlap")
        if self.junction != min(self.overlap):
            raise ValueError("junction must be the smallest-index shared agent")


# ---------------------------------------------------------------------------
# connectivity


def is_connected(g: EprGraph) -> bool:
    """True iff every pair of agents is joined by a path of EPR pairs."""
    return _unreached_agent(g.n, g.neighbors) is None


def _unreached_agent(n: int, neighbors) -> int | None:
    """Lowest-index agent unreachable from agent 1, or None if none."""
    seen = {1}
    queue = deque([1])
    while queue:
        v = queue.popleft()
        for u in neighbors(v):
            if u not in seen:
                seen.add(u)
                queue.append(u)
    if len(seen) == n:
        return None
    return min(set(range(1, n + 1)) - seen)


def _require_connected(g: EprGraph) -> None:
    missing = _unreached_agent(g.n, g.neighbors)
    if missing is not None:
        raise ConnectivityError(
            f"EPR graph is disconnected: no path joins agents 1 and {missing}",
            agent_a=1,
            agent_b=missing,
        )


def spanning_tree(g: EprGraph) -> SpanningTree:
    """Deterministic spanning tree: breadth-first from agent 1, visiting
    neighbors in increasing index order."""
    if g.n < 2:
        raise ValueError("a spanning tree needs at least two agents")
    _require_connected(g)
    seen = {1}
    queue = deque([1])
    chosen = []
    while queue:
        v = queue.popleft()
        for u in g.neighbors(v):
            if u not in seen:
                seen.add(u)
                chosen.append((v, u) if v < u else (u, v))
                queue.append(u)
    return SpanningTree.from_edges(g.n, chosen)


def minimum_spanning_tree(g: EprGraph) -> SpanningTree:
    """Kruskal tree of minimal total weight (missing weights count as 1);
    ties broken by lexicographic edge order."""
    if g.n < 2:
        raise ValueError("a spanning tree needs at least two agents")
    _require_connected(g)
    parent = {v: v for v in range(1, g.n + 1)}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    chosen = []
    for a, b in sorted(g.edges, key=lambda e: (g.weight(*e), e)):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            chosen.append((a, b))
    return SpanningTree.from_edges(g.n, chosen)


def hypergraph_is_connected(h: EntangledHypergraph) -> bool:
    """True iff every pair of agents is joined by a chain of overlapping
    hyperedges. An agent covered by no hyperedge disconnects any n >= 2."""
    if h.n == 1:
        return True
    incident: dict[int, list[int]] = {v: [] for v in range(1, h.n + 1)}
    for i, edge in enumerate(h.hyperedges):
        for v in edge:
            incident[v].append(i)
    seen_agents = {1}
    used_edges = set()
    queue = deque([1])
    while queue:
        v = queue.popleft()
        for i in incident[v]:
            if i in used_edges:
                continue
            used_edges.add(i)
            for u in h.hyperedges[i]:
                if u not in seen_agents:
                    seen_agents.add(u)
                    queue.append(u)
    return len(seen_agents) == h.n


def merge_schedule(h: EntangledHypergraph) -> list[MergeStep]:
    """Order in which the fused group absorbs the remaining hyperedges.

    Starting from the largest hyperedge, repeatedly pick the first stored
    hyperedge that overlaps the fused set without being contained in it;
    contained hyperedges are silently dropped (their entanglement is
    redundant and never touched). Requires a connected hypergraph.
    """
    if not h.hyperedges:
        raise ValueError("no hyperedges to merge")
    if not hypergraph_is_connected(h):
        raise ConnectivityError("entangled hypergraph is disconnected")
    fused = set(h.hyperedges[0])
    remaining = deque((i, e) for i, e in enumerate(h.hyperedges) if i > 0)
    steps = []
    while remaining:
        remaining = deque((i, e) for i, e in remaining if not e <= fused)
        if not remaining:
            break
        for pos, (i, edge) in enumerate(remaining):
            overlap = edge & fused
            if overlap:
                steps.append(
                    MergeStep(
                        index=i,
                        hyperedge=edge,
                        junction=min(overlap),
                        overlap=frozenset(overlap),
                        pre_size=len(fused),
                        add_size=len(edge),
                    )
                )
                fused |= edge
                del remaining[pos]
                break
        else:  # pragma: no cover - unreachable on connected input
            raise ConnectivityError("merge schedule stalled on disconnected remainder")
    return steps
