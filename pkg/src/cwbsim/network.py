"""Social graph, homophilic preferential-attachment generation, and network measures.

The graph is undirected, unweighted, and edges are never removed: the
simulation only ever adds connections. Measures that are undefined on a
given input (isolated node, edgeless graph) raise
:class:`~cwbsim.errors.UndefinedMeasureError` instead of returning 0.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, NotFoundError, UndefinedMeasureError


class SocialGraph:
    """Undirected follow-graph over user ids 0..n-1.

    Invariants: no self-loops, no duplicate edges, adjacency symmetric,
    sum of degrees == 2 * edge count.
    """

    __slots__ = ("n", "_adj", "_edge_count")

    def __init__(self, n: int):
        if n < 1:
            raise InvalidConfigError(f"graph needs at least one node, got n={n}")
        self.n = n
        self._adj: list[set[int]] = [set() for _ in range(n)]
        self._edge_count = 0

    def _check_node(self, v: int) -> None:
        if not (0 <= v < self.n):
            raise NotFoundError(f"unknown user id {v} (graph has {self.n} nodes)")

    def add_edge(self, a: int, b: int) -> bool:
        """Add the undirected edge (a, b); returns False if it already exists."""
        self._check_node(a)
        self._check_node(b)
        if a == b:
            raise InvalidInputError(f"self-loop rejected: ({a}, {b})")
        if b in self._adj[a]:
            return False
        self._adj[a].add(b)
        self._adj[b].add(a)
        self._edge_count += 1
        return True

    def has_edge(self, a: int, b: int) -> bool:
        self._check_node(a)
        self._check_node(b)
        return b in self._adj[a]

    def neighbors(self, v: int) -> frozenset[int]:
        self._check_node(v)
        return frozenset(self._adj[v])

    def degree(self, v: int) -> int:
        self._check_node(v)
        return len(self._adj[v])

    @property
    def edge_count(self) -> int:
        return self._edge_count

    def edges(self) -> Iterator[tuple[int, int]]:
        """Yield each undirected edge once as (a, b) with a < b, sorted."""
        for a in range(self.n):
            for b in sorted(self._adj[a]):
                if a < b:
                    yield (a, b)

    def degrees(self) -> list[int]:
        return [len(s) for s in self._adj]

    def copy(self) -> "SocialGraph":
        g = SocialGraph(self.n)
        g._adj = [set(s) for s in self._adj]
        g._edge_count = self._edge_count
        return g


def generate_homophily_pa(
    n: int,
    m: int,
    opinions: Sequence[float],
    h: float,
    rng: np.random.Generator,
) -> SocialGraph:
    """Grow a graph by opinion-homophilic attachment.

    Seed: complete graph on the first m+1 nodes. Each later arrival i
    connects to m distinct existing nodes, sampled without replacement with
    probability proportional to exp(-|o_i - o_j| / h). Unlike degree-based
    preferential attachment, the attachment law depends only on opinion
    distance, so the final edge count is exactly
    m(m+1)/2 + m*(n - m - 1).
    """
    if m < 1:
        raise InvalidConfigError(f"edges per arrival must be >= 1, got m={m}")
    if n <= m:
        raise InvalidConfigError(f"need n >= m+1 nodes, got n={n}, m={m}")
    if not (h > 0):
        raise InvalidConfigError(f"similarity bandwidth must be > 0, got h={h}")
    if len(opinions) != n:
        raise InvalidConfigError(f"expected {n} opinions, got {len(opinions)}")
    ops = np.asarray(opinions, dtype=float)
    if not np.all(np.isfinite(ops)):
        raise InvalidInputError("non-finite opinion in graph generation")
    if np.any(np.abs(ops) > 1.0):
        raise InvalidInputError("opinions must lie in [-1, 1]")

    g = SocialGraph(n)
    for a in range(m + 1):
        for b in range(a + 1, m + 1):
            g.add_edge(a, b)

    for i in range(m + 1, n):
        weights = np.exp(-np.abs(ops[i] - ops[:i]) / h)
        weights /= weights.sum()
        targets = rng.choice(i, size=m, replace=False, p=weights, shuffle=False)
        for j in targets:
            g.add_edge(i, int(j))
    return g


def common_neighbors(g: SocialGraph, a: int, b: int) -> int:
    """Number of shared neighbors of a and b."""
    if a == b:
        raise InvalidInputError(f"common_neighbors needs two distinct ids, got {a} twice")
    return len(g.neighbors(a) & g.neighbors(b))


def _bfs_distances(g: SocialGraph, source: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    adj = g._adj
    while queue:
        v = queue.popleft()
        dv = dist[v]
        for u in adj[v]:
            if u not in dist:
                dist[u] = dv + 1
                queue.append(u)
    return dist


def closeness(g: SocialGraph, v: int) -> float:
    """Closeness centrality (k-1)/sum of distances, within v's component.

    k is the component size. Undefined (raises) for isolated nodes; the
    caller decides how to report missing values, never coercing to 0.
    """
    g._check_node(v)
    dist = _bfs_distances(g, v)
    k = len(dist)
    if k < 2:
        raise UndefinedMeasureError(f"closeness undefined for isolated node {v}")
    return (k - 1) / sum(dist.values())


def closeness_or_none(g: SocialGraph, v: int) -> float | None:
    try:
        return closeness(g, v)
    except UndefinedMeasureError:
        return None


def degree_gini(g: SocialGraph) -> float:
    """Gini coefficient of the degree sequence; 0 for regular graphs."""
    degs = sorted(g.degrees())
    n = g.n
    total = sum(degs)
    if total == 0:
        raise UndefinedMeasureError("degree Gini undefined on an edgeless graph")
    # Sorted-sequence identity for sum_{i,j} |d_i - d_j| / (2 n^2 mean).
    weighted = sum((2 * (i + 1) - n - 1) * d for i, d in enumerate(degs))
    return weighted / (n * total)


def homophily_index(g: SocialGraph, opinions: Sequence[float]) -> float:
    """1 - mean over edges of |o_a - o_b| / 2; 1.0 means perfectly homophilic."""
    ops = np.asarray(opinions, dtype=float)
    if not np.all(np.isfinite(ops)):
        raise InvalidInputError("non-finite opinion in homophily_index")
    if g.edge_count == 0:
        raise UndefinedMeasureError("homophily undefined on an edgeless graph")
    total = 0.0
    for a, b in g.edges():
        total += abs(ops[a] - ops[b]) / 2.0
    return 1.0 - total / g.edge_count


def centrality_weighted_threat(g: SocialGraph, per_user_threat: Sequence[float]) -> float:
    """Closeness-weighted mean of per-user threat scores.

    Nodes with undefined closeness are skipped entirely rather than entering
    the sum with weight 0.
    """
    threat = np.asarray(per_user_threat, dtype=float)
    if len(threat) != g.n:
        raise InvalidInputError(f"expected {g.n} threat scores, got {len(threat)}")
    if not np.all(np.isfinite(threat)):
        raise InvalidInputError("non-finite threat score")
    num = 0.0
    den = 0.0
    for v in range(g.n):
        c = closeness_or_none(g, v)
        if c is None:
            continue
        num += c * threat[v]
        den += c
    if den == 0.0:
        raise UndefinedMeasureError("closeness undefined for every node")
    return num / den


def write_edgelist(g: SocialGraph, path: str) -> None:
    """Dump edges as one `a b` pair per line, 0-based ids, LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for a, b in g.edges():
            f.write(f"{a} {b}\n")


def read_edgelist(path: str, n: int) -> SocialGraph:
    g = SocialGraph(n)
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            a, b = line.split()
            g.add_edge(int(a), int(b))
    return g


def write_node_attributes(
    path: str, opinions: Sequence[float], resiliences: Sequence[float]
) -> None:
    """Sidecar CSV `id,opinion,resilience` matching the edge-list dump."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id", "opinion", "resilience"])
        for i, (o, r) in enumerate(zip(opinions, resiliences)):
            writer.writerow([i, repr(float(o)), repr(float(r))])
