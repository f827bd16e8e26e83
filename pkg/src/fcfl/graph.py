"""Graphs, graph families and colouring predicates.

Vertices are numbered ``0..n-1``.  Colourings are integer arrays whose
entries are palette colours ``1..D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "Graph",
    "GraphSpec",
    "build",
    "parse_graph_spec",
    "is_proper",
    "unsatisfied_set",
    "unsatisfied_mask",
    "chromatic_number_bruteforce",
    "greedy_colouring",
    "mutate",
    "to_edgelist",
    "from_edgelist",
]

BRUTEFORCE_MAX_N = 12


class Graph:
    """Immutable undirected simple graph.

    Adjacency is held in CSR form (``indptr``, ``indices``) together with
    the sorted edge array (``u < v``).  ``parts`` is set for complete
    multipartite graphs and lets simulations sense collisions by colour
    counting instead of scanning neighbours.
    """

    def __init__(self, n: int, edges: Iterable[Sequence[int]] = (), parts: Optional[Sequence[int]] = None):
        if n < 1:
            raise ValueError("a graph needs at least one vertex")
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        e = e.reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise ValueError("edge references a vertex outside 0..n-1")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        self.n = int(n)
        self.edges = e
        self.edges.setflags(write=False)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        self.indices = dst[order].astype(np.int64)
        deg = np.bincount(src, minlength=n).astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
        self.degrees = deg
        for a in (self.indices, self.indptr, self.degrees):
            a.setflags(write=False)
        self.parts = tuple(int(s) for s in parts) if parts is not None else None
        if self.parts is not None and sum(self.parts) != n:
            raise ValueError("part sizes must add up to n")

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    def neighbours(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def adjacency(self) -> list[set[int]]:
        return [set(self.neighbours(i).tolist()) for i in range(self.n)]

    def part_of(self) -> np.ndarray:
        """Part index of every vertex (multipartite graphs only)."""
        if self.parts is None:
            raise ValueError("graph has no multipartite structure")
        return np.repeat(np.arange(len(self.parts)), self.parts)

    def check(self) -> None:
        """Assert symmetry and absence of self-loops of the adjacency."""
        adj = self.adjacency()
        for i, nb in enumerate(adj):
            assert i not in nb, f"self-loop at {i}"
            for j in nb:
                assert i in adj[j], f"asymmetric edge {i}-{j}"

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n == other.n and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.n_edges}, max_degree={self.max_degree})"


@dataclass(frozen=True)
class GraphSpec:
    """Recipe for one of the supported graph families.

    kind is ``complete``, ``complete_multipartite``, ``erdos_renyi`` or
    ``edge_thinned``.  ``base`` is the spec being thinned.
    """

    kind: str
    n: int = 0
    part_sizes: tuple = ()
    p: float = 0.0
    fraction: float = 0.0
    base: Optional["GraphSpec"] = None
    seed: int = 0

    @classmethod
    def complete(cls, n):
        return cls("complete", n=n)

    @classmethod
    def multipartite(cls, sizes):
        return cls("complete_multipartite", part_sizes=tuple(int(s) for s in sizes))

    @classmethod
    def k_partite(cls, k, n):
        """Complete k-partite graph on n vertices with near-equal parts."""
        q, r = divmod(n, k)
        return cls.multipartite([q + 1] * r + [q] * (k - r))

    @classmethod
    def erdos_renyi(cls, n, p, seed=0):
        return cls("erdos_renyi", n=n, p=p, seed=seed)

    @classmethod
    def thinned(cls, base, fraction, seed=0):
        return cls("edge_thinned", base=base, fraction=fraction, seed=seed)

    def validate(self):
        if self.kind == "complete":
            if self.n < 1:
                raise ValueError("complete graph needs n >= 1")
        elif self.kind == "complete_multipartite":
            if not self.part_sizes or min(self.part_sizes) < 1:
                raise ValueError("part sizes must all be >= 1")
        elif self.kind == "erdos_renyi":
            if self.n < 1:
                raise ValueError("G(n,p) needs n >= 1")
            if not 0.0 <= self.p <= 1.0:
                raise ValueError("edge probability must lie in [0, 1]")
        elif self.kind == "edge_thinned":
            if self.base is None:
                raise ValueError("edge_thinned needs a base spec")
            if not 0.0 <= self.fraction <= 1.0:
                raise ValueError("removal fraction must lie in [0, 1]")
            self.base.validate()
        else:
            raise ValueError(f"unknown graph kind {self.kind!r}")


def _multipartite_edges(sizes):
    part = np.repeat(np.arange(len(sizes)), sizes)
    iu, ju = np.triu_indices(len(part), k=1)
    keep = part[iu] != part[ju]
    return np.stack([iu[keep], ju[keep]], axis=1)


def build(spec: GraphSpec) -> Graph:
    """Construct the graph described by ``spec``; random kinds are seeded."""
    spec.validate()
    if spec.kind == "complete":
        g = Graph(spec.n, _multipartite_edges([1] * spec.n), parts=[1] * spec.n)
    elif spec.kind == "complete_multipartite":
        g = Graph(sum(spec.part_sizes), _multipartite_edges(spec.part_sizes), parts=spec.part_sizes)
    elif spec.kind == "erdos_renyi":
        rng = np.random.default_rng(spec.seed)
        iu, ju = np.triu_indices(spec.n, k=1)
        keep = rng.random(iu.shape[0]) < spec.p
        g = Graph(spec.n, np.stack([iu[keep], ju[keep]], axis=1))
    else:
        base = build(spec.base)
        rng = np.random.default_rng(spec.seed)
        m = base.n_edges
        k = math.floor(spec.fraction * m)
        drop = rng.choice(m, size=k, replace=False)
        keep = np.ones(m, dtype=bool)
        keep[drop] = False
        g = Graph(base.n, base.edges[keep])
    return g


def parse_graph_spec(text: str, seed: int = 0) -> GraphSpec:
    """Parse the command-line graph notation.

    ``complete:N``, ``multipartite:s1,s2,...``, ``kpartite:K:N``,
    ``bipartite:N``, ``er:N:P`` and ``thinned:FRACTION:<base>``.
    """
    head, _, rest = text.partition(":")
    try:
        if head == "complete":
            return GraphSpec.complete(int(rest))
        if head == "multipartite":
            return GraphSpec.multipartite([int(s) for s in rest.split(",")])
        if head == "kpartite":
            k, n = rest.split(":")
            return GraphSpec.k_partite(int(k), int(n))
        if head == "bipartite":
            return GraphSpec.k_partite(2, int(rest))
        if head == "er":
            n, p = rest.split(":")
            return GraphSpec.erdos_renyi(int(n), float(p), seed=seed)
        if head == "thinned":
            frac, _, base = rest.partition(":")
            return GraphSpec.thinned(parse_graph_spec(base, seed), float(frac), seed=seed)
    except ValueError as exc:
        raise ValueError(f"bad graph spec {text!r}: {exc}") from None
    raise ValueError(f"bad graph spec {text!r}")


def _check_len(g: Graph, c) -> np.ndarray:
    c = np.asarray(c)
    if c.shape != (g.n,):
        raise ValueError(f"colouring has length {c.shape[0] if c.ndim else 0}, graph has {g.n} vertices")
    return c


def unsatisfied_mask(g: Graph, c) -> np.ndarray:
    """Boolean mask of vertices sharing their colour with some neighbour."""
    c = _check_len(g, c)
    u, v = g.edges[:, 0], g.edges[:, 1]
    same = c[u] == c[v]
    mask = np.zeros(g.n, dtype=bool)
    mask[u[same]] = True
    mask[v[same]] = True
    return mask


def is_proper(g: Graph, c) -> bool:
    c = _check_len(g, c)
    return not np.any(c[g.edges[:, 0]] == c[g.edges[:, 1]])


def unsatisfied_set(g: Graph, c) -> set[int]:
    return set(np.flatnonzero(unsatisfied_mask(g, c)).tolist())


def greedy_colouring(g: Graph) -> np.ndarray:
    """First-fit colouring in vertex order; uses at most max_degree + 1 colours."""
    c = np.zeros(g.n, dtype=np.int64)
    for i in range(g.n):
        used = set(c[g.neighbours(i)].tolist())
        colour = 1
        while colour in used:
            colour += 1
        c[i] = colour
    return c


def _colourable(adj, k):
    n = len(adj)
    order = sorted(range(n), key=lambda i: -len(adj[i]))
    colour = [0] * n

    def place(idx):
        if idx == n:
            return True
        v = order[idx]
        taken = {colour[w] for w in adj[v]}
        # symmetry break: never open more than one new colour at a time
        top = max(colour) if idx else 0
        for col in range(1, min(k, top + 1) + 1):
            if col not in taken:
                colour[v] = col
                if place(idx + 1):
                    return True
                colour[v] = 0
        return False

    return place(0)


def chromatic_number_bruteforce(g: Graph) -> int:
    """Exact chromatic number by exhaustive search (test oracle, n <= 12)."""
    if g.n > BRUTEFORCE_MAX_N:
        raise ValueError(f"instance too large for brute force (n={g.n} > {BRUTEFORCE_MAX_N})")
    adj = g.adjacency()
    for k in range(1, g.n + 1):
        if _colourable(adj, k):
            return k
    return g.n


def mutate(
    g: Graph,
    add_vertices: int = 0,
    add_edges: Iterable[Sequence[int]] = (),
    remove_edges: Iterable[Sequence[int]] = (),
    remove_vertices: Iterable[int] = (),
) -> Graph:
    """Return an edited copy of ``g``.

    New vertices get ids ``n..n+add_vertices-1`` and may be referenced by
    ``add_edges``.  Removed vertices are dropped and the remaining ids
    are compacted in order.
    """
    n = g.n + int(add_vertices)
    edges = {tuple(e) for e in g.edges.tolist()}
    for u, v in remove_edges:
        key = (min(u, v), max(u, v))
        if key not in edges:
            raise ValueError(f"edge {key} is not in the graph")
        edges.discard(key)
    for u, v in add_edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) references a missing vertex")
        if u == v:
            raise ValueError("self-loops are not allowed")
        edges.add((min(u, v), max(u, v)))
    gone = set(int(x) for x in remove_vertices)
    for x in gone:
        if not 0 <= x < n:
            raise ValueError(f"vertex {x} does not exist")
    if gone:
        keep = [i for i in range(n) if i not in gone]
        remap = {old: new for new, old in enumerate(keep)}
        edges = {(remap[u], remap[v]) for u, v in edges if u in remap and v in remap}
        n = len(keep)
    return Graph(n, sorted(edges))


def to_edgelist(g: Graph) -> str:
    lines = [f"n={g.n}"]
    lines += [f"{u} {v}" for u, v in g.edges.tolist()]
    return "\n".join(lines) + "\n"


def from_edgelist(text: str) -> Graph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("n="):
        raise ValueError("edge list must start with a header line 'n=<N>'")
    n = int(lines[0][2:])
    edges = [tuple(int(x) for x in ln.split()) for ln in lines[1:]]
    for e in edges:
        if len(e) != 2:
            raise ValueError(f"malformed edge line {e!r}")
    return Graph(n, edges)
