"""Immutable undirected graphs (compressed adjacency) with the generators,
loaders and distance primitives the detection pipeline is built on."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

# Memory guard for the generators (indices are int32, and desk-scale
# experiments never need more than a few million nodes).
MAX_NODES = 1 << 26

UNREACHABLE = math.inf


class EdgeListFormatError(ValueError):
    """Malformed edge-list input; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class Graph:
    """Undirected simple graph over dense node ids 0..n-1.

    Adjacency is stored CSR-style: ``indices[indptr[v]:indptr[v+1]]`` is the
    sorted neighbor list of ``v``. Instances are immutable after
    construction and safe to share across worker processes.
    """

    __slots__ = ("n", "indptr", "indices", "family", "meta", "_csr")

    def __init__(self, n, indptr, indices, family=None, meta=None):
        self.n = int(n)
        self.indptr = indptr
        self.indices = indices
        self.family = family
        self.meta = meta or {}
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self._csr = None

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, v) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def csr(self) -> sp.csr_matrix:
        """Unit-weight scipy CSR view (built once, cached)."""
        if self._csr is None:
            data = np.ones(len(self.indices), dtype=np.int8)
            self._csr = sp.csr_matrix(
                (data, self.indices, self.indptr), shape=(self.n, self.n)
            )
        return self._csr

    def edge_array(self):
        """All edges as (u, v) arrays with u < v, each edge once."""
        u = np.repeat(np.arange(self.n, dtype=np.int32), self.degrees())
        v = self.indices
        keep = u < v
        return u[keep], v[keep]

    def __repr__(self):
        tag = f", family={self.family!r}" if self.family else ""
        return f"Graph(n={self.n}, m={self.num_edges}{tag})"

    # the cached scipy matrix is rebuilt on demand, never shipped to workers
    def __getstate__(self):
        return (self.n, self.indptr, self.indices, self.family, self.meta)

    def __setstate__(self, state):
        n, indptr, indices, family, meta = state
        self.n = n
        self.indptr = indptr
        self.indices = indices
        self.family = family
        self.meta = meta
        self._csr = None


@dataclass(frozen=True)
class NodePermutation:
    """A relabeling of node ids; forward[old] = new, inverse[new] = old."""

    forward: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        self.forward.setflags(write=False)
        self.inverse.setflags(write=False)


@dataclass
class LoadStats:
    dropped_duplicates: int = 0
    dropped_self_loops: int = 0


def _from_pairs(n, u, v, family=None, meta=None) -> Graph:
    """Build a Graph from unique unordered pairs (u[i], v[i]), u != v."""
    us = np.concatenate([u, v]).astype(np.int64)
    vs = np.concatenate([v, u]).astype(np.int64)
    order = np.lexsort((vs, us))
    us = us[order]
    vs = vs[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(us, minlength=n), out=indptr[1:])
    return Graph(n, indptr, vs.astype(np.int32), family=family, meta=meta)


def check_invariants(g: Graph) -> None:
    """Raise AssertionError unless g is a valid simple undirected graph."""
    assert g.indptr.shape == (g.n + 1,)
    assert g.indptr[0] == 0 and g.indptr[-1] == len(g.indices)
    if g.n == 0:
        return
    assert g.indices.min(initial=0) >= 0 and g.indices.max(initial=-1) < g.n
    u = np.repeat(np.arange(g.n, dtype=np.int64), g.degrees())
    v = g.indices.astype(np.int64)
    assert not np.any(u == v), "self-loop present"
    # sorted, duplicate-free neighbor lists
    same_row = u[1:] == u[:-1]
    assert np.all(v[1:][same_row] > v[:-1][same_row]), "unsorted or duplicate"
    # symmetry: the set of directed arcs is invariant under reversal
    fwd = u * g.n + v
    rev = v * g.n + u
    assert np.array_equal(np.sort(fwd), np.sort(rev)), "asymmetric adjacency"


# ---------------------------------------------------------------------------
# generators


def build_grid_torus(side: int, d: int) -> Graph:
    """d-dimensional grid of side^d nodes with wrap-around (torus) edges."""
    if side < 3:
        raise ValueError("side must be >= 3 so that wrap edges are distinct")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    n = side**d
    if n > MAX_NODES:
        raise ValueError(f"side**d = {n} exceeds MAX_NODES = {MAX_NODES}")
    ids = np.arange(n, dtype=np.int64)
    shape = (side,) * d
    coords = np.stack(np.unravel_index(ids, shape), axis=1)
    us = []
    vs = []
    for axis in range(d):
        nc = coords.copy()
        nc[:, axis] = (nc[:, axis] + 1) % side
        us.append(ids)
        vs.append(np.ravel_multi_index(tuple(nc.T), shape))
    u = np.concatenate(us)
    v = np.concatenate(vs)
    # grid_labels marks that node id i sits at coordinates unravel(i);
    # relabeling keeps the topology but must clear this flag.
    return _from_pairs(
        n, u, v, family=f"grid{d}",
        meta={"side": side, "dim": d, "grid_labels": True},
    )


def grid_coords(g: Graph) -> np.ndarray:
    """n x d coordinate array of a torus grid built by build_grid_torus."""
    if not g.meta.get("grid_labels"):
        raise ValueError("graph does not carry canonical grid labels")
    side, d = g.meta["side"], g.meta["dim"]
    return np.stack(
        np.unravel_index(np.arange(g.n, dtype=np.int64), (side,) * d), axis=1
    )


def build_er(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Erdos-Renyi G(n, p): every unordered pair independently with prob p."""
    if not 0.0 < p < 1.0:
        raise ValueError("edge probability must lie strictly in (0, 1)")
    if n > MAX_NODES:
        raise ValueError(f"n = {n} exceeds MAX_NODES = {MAX_NODES}")
    total = n * (n - 1) // 2
    # Geometric skipping over the lexicographic pair order: O(m) draws.
    positions = []
    pos = -1
    expect = int(total * p) + 16
    while pos < total:
        block = rng.geometric(p, size=max(expect // 4, 64))
        block = np.cumsum(block) + pos
        positions.append(block[block < total])
        pos = int(block[-1])
    lin = np.concatenate(positions)
    # row i holds pairs (i, j) for j in (i, n); offsets[i] = first index of row i
    row_len = np.arange(n - 1, 0, -1, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(row_len)])
    u = np.searchsorted(offsets, lin, side="right") - 1
    v = lin - offsets[u] + u + 1
    return _from_pairs(n, u, v, family=f"er{p * n:g}", meta={"p": p})


def build_balanced_tree(branching: int, depth: int) -> Graph:
    """Balanced rooted tree: node 0 is the root, ids in level order."""
    if branching < 2:
        raise ValueError("branching ratio must be >= 2")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    n = (branching ** (depth + 1) - 1) // (branching - 1)
    if n > MAX_NODES:
        raise ValueError(f"tree with {n} nodes exceeds MAX_NODES")
    child = np.arange(1, n, dtype=np.int64)
    parent = (child - 1) // branching
    return _from_pairs(
        n, parent, child,
        family=f"tree{branching}",
        meta={"branching": branching, "depth": depth},
    )


# ---------------------------------------------------------------------------
# edge-list I/O


def load_edge_list(stream: Iterable[str]) -> tuple[Graph, LoadStats]:
    """Parse whitespace-separated `u v` lines into a compacted graph.

    Ids are compacted to 0..n-1 in first-appearance order. Duplicate edges
    and self-loops are dropped and counted, not rejected: real exports
    contain both.
    """
    ids: dict[int, int] = {}
    seen: set[tuple[int, int]] = set()
    us: list[int] = []
    vs: list[int] = []
    stats = LoadStats()
    for lineno, line in enumerate(stream, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 2:
            raise EdgeListFormatError(lineno, f"expected two ids, got {text!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListFormatError(lineno, f"non-integer id in {text!r}")
        if a < 0 or b < 0:
            raise EdgeListFormatError(lineno, "negative node id")
        if a == b:
            stats.dropped_self_loops += 1
            ids.setdefault(a, len(ids))
            continue
        ca = ids.setdefault(a, len(ids))
        cb = ids.setdefault(b, len(ids))
        key = (ca, cb) if ca < cb else (cb, ca)
        if key in seen:
            stats.dropped_duplicates += 1
            continue
        seen.add(key)
        us.append(key[0])
        vs.append(key[1])
    n = len(ids)
    g = _from_pairs(
        n,
        np.asarray(us, dtype=np.int64),
        np.asarray(vs, dtype=np.int64),
        family="loaded",
    )
    return g, stats


def dump_edge_list(g: Graph, stream: TextIO) -> None:
    """Write `u v` lines; family recorded as a comment for provenance."""
    if g.family:
        stream.write(f"# family={g.family}\n")
    u, v = g.edge_array()
    for a, b in zip(u.tolist(), v.tolist()):
        stream.write(f"{a} {b}\n")


# ---------------------------------------------------------------------------
# components and subgraphs


def _induce(g: Graph, keep: np.ndarray, family=None) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on `keep` (sorted node ids); returns old->new map."""
    mapping = np.full(g.n, -1, dtype=np.int64)
    mapping[keep] = np.arange(len(keep), dtype=np.int64)
    u, v = g.edge_array()
    mask = (mapping[u] >= 0) & (mapping[v] >= 0)
    sub = _from_pairs(len(keep), mapping[u[mask]], mapping[v[mask]], family=family)
    return sub, mapping


def giant_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Largest connected component, ids compacted; ties resolved in favor of
    the component containing the smallest node id. Returns (subgraph, map)
    where map[old] = new id or -1 for dropped nodes."""
    if g.n == 0:
        raise ValueError("empty graph has no components")
    ncomp, labels = csgraph.connected_components(g.csr(), directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    best_size = sizes.max()
    # first occurrence of each label is its smallest member (scan order)
    _, first = np.unique(labels, return_index=True)
    candidates = np.flatnonzero(sizes == best_size)
    best = candidates[np.argmin(first[candidates])]
    keep = np.flatnonzero(labels == best)
    return _induce(g, keep, family=g.family)


def induced_ball_subgraph(g: Graph, center: int, radius: int) -> Graph:
    """Subgraph induced by all nodes within `radius` hops of `center`."""
    dist = bfs_distances(g, [center])
    keep = np.flatnonzero(dist <= radius)
    sub, _ = _induce(g, keep)
    return sub


# ---------------------------------------------------------------------------
# distances


def bfs_distances(g: Graph, sources) -> np.ndarray:
    """Multi-source BFS hop distances; unreachable nodes get math.inf.

    Pure-Python reference implementation, kept independent of the scipy
    routes used by the metrics so the two can cross-check each other.
    """
    src = list(sources)
    if not src:
        raise ValueError("sources must be non-empty")
    dist = np.full(g.n, UNREACHABLE)
    queue = deque()
    for s in src:
        s = int(s)
        if not 0 <= s < g.n:
            raise ValueError(f"source {s} out of range")
        if dist[s] != 0:
            dist[s] = 0
            queue.append(s)
    indptr, indices = g.indptr, g.indices
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for w in indices[indptr[u] : indptr[u + 1]]:
            if dist[w] == UNREACHABLE:
                dist[w] = du
                queue.append(int(w))
    return dist


def hop_distance_rows(g: Graph, sources) -> np.ndarray:
    """len(sources) x n matrix of BFS distances (scipy, C speed), inf-filled."""
    sources = np.asarray(sources, dtype=np.int64)
    return csgraph.shortest_path(
        g.csr(), method="D", unweighted=True, indices=sources
    )


def diameter(g: Graph, mode: str = "exact") -> int:
    """Graph diameter in hops.

    "analytic" is valid only for torus grids, where d * floor(side/2) is
    exact under the wrap-around metric. "exact" runs a BFS from every node
    (chunked) and requires a connected graph.
    """
    if mode == "analytic":
        if g.family is None or not g.family.startswith("grid"):
            raise ValueError("analytic diameter only defined for grid tori")
        return g.meta["dim"] * (g.meta["side"] // 2)
    if mode != "exact":
        raise ValueError(f"unknown diameter mode {mode!r}")
    if g.n == 0:
        raise ValueError("empty graph")
    best = 0
    chunk = max(1, min(g.n, (1 << 22) // max(g.n, 1)))
    for lo in range(0, g.n, chunk):
        rows = hop_distance_rows(g, np.arange(lo, min(lo + chunk, g.n)))
        top = rows.max()
        if np.isinf(top):
            raise ValueError("graph is disconnected; exact diameter undefined")
        best = max(best, int(top))
    return best


# ---------------------------------------------------------------------------
# relabeling


def random_relabel(g: Graph, rng: np.random.Generator) -> tuple[Graph, NodePermutation]:
    """Apply a uniformly random permutation to node ids (old -> new)."""
    forward = rng.permutation(g.n)
    inverse = np.argsort(forward)
    u, v = g.edge_array()
    meta = {k: v for k, v in g.meta.items() if k != "grid_labels"}
    relabeled = _from_pairs(g.n, forward[u], forward[v], family=g.family, meta=meta)
    return relabeled, NodePermutation(forward=forward, inverse=inverse)
