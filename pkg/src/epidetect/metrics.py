"""Clustering statistics: smallest enclosing ball radius and approximate
minimum Steiner tree size, plus an exact small-instance Steiner solver."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .graphs import Graph, grid_coords, hop_distance_rows


class DisconnectedTerminalsError(ValueError):
    """Steiner terminals fall in different connected components."""


@dataclass(frozen=True)
class BallCover:
    """Smallest enclosing ball: every target is within `radius` hops of
    `center`. A radius of math.inf (center None) marks targets scattered
    across components, i.e. maximally unclustered."""

    center: int | None
    radius: float


@dataclass
class SteinerTree:
    edges: list[tuple[int, int]]
    size: int


# ---------------------------------------------------------------------------
# smallest enclosing ball

_CHUNK_BUDGET = 32 << 20  # bytes of distance matrix per chunk


def radius_ball(g: Graph, targets) -> BallCover:
    """Center minimizing the maximum hop distance to `targets`.

    Exact: every node is a candidate center; ties go to the smallest center
    id. Cost is one BFS per target (distance symmetry turns target rows
    into center columns). Torus grids with canonical labels use the closed
    form of the wrapped L1 metric instead of BFS.
    """
    targets = np.unique(np.asarray(targets, dtype=np.int64))
    if len(targets) == 0:
        raise ValueError("targets must be non-empty")
    if targets[0] < 0 or targets[-1] >= g.n:
        raise ValueError("target id out of range")
    if len(targets) == 1:
        return BallCover(center=int(targets[0]), radius=0)
    if g.meta.get("grid_labels"):
        return _radius_ball_torus(g, targets)

    rows_per_chunk = max(1, _CHUNK_BUDGET // (8 * g.n))
    ecc = np.zeros(g.n)
    for lo in range(0, len(targets), rows_per_chunk):
        rows = hop_distance_rows(g, targets[lo : lo + rows_per_chunk])
        np.maximum(ecc, rows.max(axis=0), out=ecc)
    center = int(np.argmin(ecc))
    radius = ecc[center]
    if math.isinf(radius):
        return BallCover(center=None, radius=math.inf)
    return BallCover(center=center, radius=int(radius))


def _radius_ball_torus(g: Graph, targets: np.ndarray) -> BallCover:
    side = g.meta["side"]
    coords = grid_coords(g)
    tc = coords[targets]
    rows_per_chunk = max(1, _CHUNK_BUDGET // (8 * len(targets)))
    best_radius = None
    best_center = -1
    for lo in range(0, g.n, rows_per_chunk):
        cc = coords[lo : min(lo + rows_per_chunk, g.n)]
        dist = np.zeros((len(cc), len(targets)), dtype=np.int64)
        for axis in range(cc.shape[1]):
            delta = np.abs(cc[:, axis, None] - tc[None, :, axis])
            dist += np.minimum(delta, side - delta)
        ecc = dist.max(axis=1)
        i = int(np.argmin(ecc))
        if best_radius is None or ecc[i] < best_radius:
            best_radius = int(ecc[i])
            best_center = lo + i
    return BallCover(center=best_center, radius=best_radius)


# ---------------------------------------------------------------------------
# Steiner trees


def voronoi_partition(g: Graph, terminals: np.ndarray):
    """Multi-source BFS around sorted `terminals`.

    Returns (dist, owner, parent): hop distance to the nearest terminal,
    the index (into `terminals`) of the cell owning each node, and a
    same-cell BFS parent (None when the caller should derive parents on
    demand). Equidistant nodes go to the lowest terminal id; among
    claimants the smallest parent wins, so the partition is a
    deterministic function of the graph. Under the lowest-id rule every
    claimed non-terminal has a same-cell neighbor one hop closer to its
    terminal, so parent walks stay inside one cell. Nodes in components
    without a terminal keep owner/parent -1 and dist -1.
    """
    n = g.n
    k = len(terminals)
    dist = np.full(n, -1, dtype=np.int64)
    owner = np.full(n, -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    dist[terminals] = 0
    owner[terminals] = np.arange(k)
    frontier = terminals
    level = 0
    indptr, indices = g.indptr, g.indices
    # claims pack into one sortable word when ids and cell count are small
    owner_bits = max(k.bit_length(), 1)
    packable = n <= (1 << 26) and owner_bits + 26 + 26 <= 63
    while len(frontier):
        level += 1
        counts = indptr[frontier + 1] - indptr[frontier]
        src = np.repeat(frontier, counts)
        take = np.concatenate(
            [indices[indptr[f] : indptr[f + 1]] for f in frontier]
        ) if len(frontier) < 64 else _gather_neighbors(indptr, indices, frontier, counts)
        unclaimed = dist[take] == -1
        cand_node = take[unclaimed].astype(np.int64)
        cand_src = src[unclaimed]
        if len(cand_node) == 0:
            break
        # one claim per node: lowest owner id, then lowest parent id
        if packable:
            word = (cand_node << (owner_bits + 26)) | (owner[cand_src] << 26) | cand_src
            word = np.sort(word)
            node_part = word >> (owner_bits + 26)
            keep = np.ones(len(word), dtype=bool)
            keep[1:] = node_part[1:] != node_part[:-1]
            nodes = node_part[keep]
            chosen = word[keep]
            owner[nodes] = (chosen >> 26) & ((1 << owner_bits) - 1)
            parent[nodes] = chosen & ((1 << 26) - 1)
        else:
            order = np.lexsort((cand_src, owner[cand_src], cand_node))
            cand_node = cand_node[order]
            cand_src = cand_src[order]
            keep = np.ones(len(cand_node), dtype=bool)
            keep[1:] = cand_node[1:] != cand_node[:-1]
            nodes = cand_node[keep]
            owner[nodes] = owner[cand_src[keep]]
            parent[nodes] = cand_src[keep]
        dist[nodes] = level
        frontier = nodes
    return dist, owner, parent


def _gather_neighbors(indptr, indices, frontier, counts):
    """Concatenate adjacency slices of `frontier` without a Python loop."""
    total = int(counts.sum())
    out_pos = np.arange(total)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    offset = out_pos - np.repeat(starts, counts)
    return indices[np.repeat(indptr[frontier], counts) + offset]


def steiner_tree_2approx(g: Graph, terminals) -> SteinerTree:
    """Mehlhorn's 2-approximation of the minimum Steiner tree (unit weights).

    Nodes are partitioned into BFS Voronoi cells around the terminals
    (equidistant nodes go to the lowest terminal id). Edges straddling two
    cells induce a distance graph on the terminals; its minimum spanning
    tree is expanded back into shortest paths, then reduced to a tree and
    stripped of non-terminal leaves. Output size is at most twice optimal.
    """
    terminals = np.unique(np.asarray(terminals, dtype=np.int64))
    if len(terminals) == 0:
        raise ValueError("terminals must be non-empty")
    if terminals[0] < 0 or terminals[-1] >= g.n:
        raise ValueError("terminal id out of range")
    k = len(terminals)
    if k == 1:
        return SteinerTree(edges=[], size=0)

    dist, owner, parent = voronoi_partition(g, terminals)

    u, v = g.edge_array()
    cross = (owner[u] != owner[v]) & (owner[u] >= 0) & (owner[v] >= 0)
    u, v = u[cross], v[cross]
    w = dist[u] + dist[v] + 1
    lo_cell = np.minimum(owner[u], owner[v])
    hi_cell = np.maximum(owner[u], owner[v])
    # deterministic representative boundary edge per cell pair:
    # smallest (weight, u, v) wins; packed into one sort key when it fits
    key = lo_cell * k + hi_cell
    if len(u) and int(w.max()) < (1 << 11) and g.n <= (1 << 26):
        code = (w.astype(np.int64) << 52) | (u.astype(np.int64) << 26) | v
        order = np.lexsort((code, key))
    else:
        order = np.lexsort((v, u, w, key))
    key = key[order]
    keep = np.ones(len(key), dtype=bool)
    keep[1:] = key[1:] != key[:-1]
    sel = order[keep]

    terminal_graph = sp.coo_matrix(
        (w[sel], (lo_cell[sel], hi_cell[sel])), shape=(k, k)
    ).tocsr()
    mst = csgraph.minimum_spanning_tree(terminal_graph).tocoo()
    if mst.nnz < k - 1:
        raise DisconnectedTerminalsError("terminals span multiple components")
    bridge = {
        (int(a), int(b)): (int(uu), int(vv))
        for a, b, uu, vv in zip(lo_cell[sel], hi_cell[sel], u[sel], v[sel])
    }

    edge_set: set[tuple[int, int]] = set()

    def add_edge(a: int, b: int) -> None:
        edge_set.add((a, b) if a < b else (b, a))

    def walk_to_terminal(x: int) -> None:
        while dist[x] > 0:
            p = int(parent[x])
            add_edge(x, p)
            x = p

    for a, b in zip(mst.row, mst.col):
        uu, vv = bridge[(int(a), int(b)) if a < b else (int(b), int(a))]
        add_edge(uu, vv)
        walk_to_terminal(uu)
        walk_to_terminal(vv)

    return _reduce_to_tree(edge_set, set(int(t) for t in terminals))


def _reduce_to_tree(edge_set, terminal_set) -> SteinerTree:
    """Spanning tree of the expanded edge union, pruned of non-terminal
    leaves. Deterministic: BFS over sorted adjacency from the smallest
    terminal."""
    adj: dict[int, list[int]] = {}
    for a, b in edge_set:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for nbrs in adj.values():
        nbrs.sort()

    root = min(terminal_set)
    seen = {root}
    tree: dict[int, list[int]] = {root: []}
    parent: dict[int, int] = {}
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in adj.get(x, []):
            if y not in seen:
                seen.add(y)
                parent[y] = x
                tree.setdefault(x, []).append(y)
                tree.setdefault(y, []).append(x)
                queue.append(y)

    degree = {x: len(ys) for x, ys in tree.items()}
    leaves = [x for x, dg in degree.items() if dg == 1 and x not in terminal_set]
    removed = set()
    while leaves:
        x = leaves.pop()
        removed.add(x)
        degree[x] = 0
        p = parent[x]
        degree[p] -= 1
        if degree[p] == 1 and p not in terminal_set:
            leaves.append(p)

    edges = sorted(
        ((min(c, p), max(c, p)) for c, p in parent.items() if c not in removed)
    )
    return SteinerTree(edges=edges, size=len(edges))


def nearest_terminal_distances(g: Graph, terminals) -> np.ndarray:
    """For each terminal, the hop distance to the nearest other terminal."""
    terminals = np.unique(np.asarray(terminals, dtype=np.int64))
    if len(terminals) < 2:
        raise ValueError("need at least two terminals")
    rows = hop_distance_rows(g, terminals)[:, terminals]
    np.fill_diagonal(rows, math.inf)
    return rows.min(axis=1)


# ---------------------------------------------------------------------------
# exact solver (small instances only)


def exact_steiner_size(g: Graph, terminals) -> int:
    """Exact minimum Steiner tree size under unit weights.

    Dreyfus-Wagner dynamic programming when there are at most 8 terminals;
    otherwise brute force over Steiner-point subsets, which needs a small
    node count. Instances outside both regimes are rejected.
    """
    terminals = np.unique(np.asarray(terminals, dtype=np.int64))
    if len(terminals) == 0:
        raise ValueError("terminals must be non-empty")
    if len(terminals) == 1:
        return 0
    k = len(terminals)
    if k <= 8 and g.n <= 2048:
        return _dreyfus_wagner(g, terminals)
    if g.n <= 20:
        return _steiner_by_subsets(g, terminals)
    raise ValueError(
        f"instance too large for exact solve (n={g.n}, terminals={k})"
    )


def _dreyfus_wagner(g: Graph, terminals: np.ndarray) -> int:
    k = len(terminals)
    dist = hop_distance_rows(g, np.arange(g.n))
    if np.isinf(dist[terminals[0], terminals]).any():
        raise DisconnectedTerminalsError("terminals span multiple components")
    full = (1 << k) - 1
    dp = np.full((full + 1, g.n), math.inf)
    for i, t in enumerate(terminals):
        dp[1 << i] = dist[t]
    for mask in range(1, full + 1):
        if mask & (mask - 1) == 0:
            continue
        acc = dp[mask]
        sub = (mask - 1) & mask
        while sub:
            rest = mask ^ sub
            if sub < rest:  # each split once
                np.minimum(acc, dp[sub] + dp[rest], out=acc)
            sub = (sub - 1) & mask
        # contract through intermediate nodes
        dp[mask] = (acc[:, None] + dist).min(axis=0)
    return int(dp[full][terminals[0]])


def _steiner_by_subsets(g: Graph, terminals: np.ndarray) -> int:
    term = set(int(t) for t in terminals)
    others = [v for v in range(g.n) if v not in term]
    # smallest connected superset of the terminals, by increasing size
    for extra in range(len(others) + 1):
        for picked in combinations(others, extra):
            nodes = term | set(picked)
            if _connected_within(g, nodes):
                return len(nodes) - 1
    raise DisconnectedTerminalsError("terminals span multiple components")


def _connected_within(g: Graph, nodes: set[int]) -> bool:
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        for y in g.neighbors(x):
            y = int(y)
            if y in nodes and y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(nodes)
