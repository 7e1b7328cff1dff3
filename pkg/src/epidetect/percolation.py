"""Event-driven SI epidemic simulation.

A node's infection time equals its weighted shortest-path distance from the
source when every edge carries an independent mean-1 exponential transit
time, so the simulator is a Dijkstra frontier that samples edge weights
lazily at first contact. Memorylessness of the exponential makes the lazy
sampling distributionally exact while touching only the infected region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

from .graphs import Graph, build_grid_torus, grid_coords


class _ExpStream:
    """Mean-1 exponential draws pulled from block refills of one Generator."""

    __slots__ = ("rng", "buf", "pos")

    def __init__(self, rng, block=2048):
        self.rng = rng
        self.buf = rng.exponential(size=block)
        self.pos = 0

    def take(self) -> float:
        if self.pos == len(self.buf):
            self.buf = self.rng.exponential(size=len(self.buf))
            self.pos = 0
        x = self.buf[self.pos]
        self.pos += 1
        return x


@dataclass
class InfectionTrace:
    """Outcome of one simulated epidemic.

    times[v] is the infection time of v (math.inf if never infected within
    the stop rule); `order` lists infected nodes in settlement order, so
    `order[0]` is the source. `horizon` is the effective observation time:
    the requested horizon, or the last settlement time under a count stop.
    """

    source: int
    horizon: float
    times: np.ndarray
    order: np.ndarray
    weights: dict | None = None

    @property
    def infected(self) -> np.ndarray:
        return self.order

    @property
    def size(self) -> int:
        return len(self.order)


def simulate_si(
    g: Graph,
    source: int,
    rng: np.random.Generator,
    horizon: float | None = None,
    max_infected: int | None = None,
    record_weights: bool = False,
) -> InfectionTrace:
    """Run one SI epidemic from `source`.

    Stops when the next event would exceed `horizon`, when `max_infected`
    nodes have been infected, or when the source's component is exhausted,
    whichever comes first. With `record_weights`, the sampled edge weights
    are returned for oracle comparisons.
    """
    if not 0 <= source < g.n:
        raise ValueError(f"source {source} out of range for n={g.n}")
    if horizon is not None and horizon < 0:
        raise ValueError("horizon must be >= 0")
    if max_infected is not None and max_infected < 1:
        raise ValueError("max_infected must be >= 1")

    times = np.full(g.n, math.inf)
    order: list[int] = []
    weights: dict | None = {} if record_weights else None
    stream = _ExpStream(rng)
    indptr, indices = g.indptr, g.indices
    limit = g.n if max_infected is None else min(max_infected, g.n)
    heap: list[tuple[float, int]] = [(0.0, source)]

    while heap:
        t, u = heappop(heap)
        if horizon is not None and t > horizon:
            break
        if times[u] < math.inf:  # stale offer, u settled earlier
            continue
        times[u] = t
        order.append(u)
        if len(order) == limit:
            break
        for w in indices[indptr[u] : indptr[u + 1]]:
            if times[w] < math.inf:
                continue
            wgt = stream.take()
            if weights is not None:
                weights[(u, int(w)) if u < w else (int(w), u)] = wgt
            tw = t + wgt
            # offers beyond the horizon can never settle anything in time
            if horizon is None or tw <= horizon:
                heappush(heap, (tw, int(w)))

    effective = horizon if horizon is not None else (times[order[-1]] if order else 0.0)
    return InfectionTrace(
        source=source,
        horizon=float(effective),
        times=times,
        order=np.asarray(order, dtype=np.int64),
        weights=weights,
    )


# ---------------------------------------------------------------------------
# sampling


@dataclass
class ReportSet:
    """The observed evidence: the subset of sick nodes that reported."""

    nodes: np.ndarray
    q: float

    @property
    def count(self) -> int:
        return len(self.nodes)


def sample_reports(sick, q: float, rng: np.random.Generator) -> ReportSet:
    """Each sick node reports independently with probability q."""
    if not 0.0 < q <= 1.0:
        raise ValueError("reporting probability must lie in (0, 1]")
    sick = np.asarray(sick, dtype=np.int64)
    picked = sick[rng.random(len(sick)) < q]
    return ReportSet(nodes=np.sort(picked), q=q)


def sample_random_sickness(g: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random count-subset of nodes (the random-illness hypothesis)."""
    if not 0 <= count <= g.n:
        raise ValueError(f"count {count} out of range for n={g.n}")
    return np.sort(rng.choice(g.n, size=count, replace=False))


def sample_random_sickness_bernoulli(
    g: Graph, prob: float, rng: np.random.Generator
) -> np.ndarray:
    """Bernoulli variant: each node sick independently with probability prob."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    return np.flatnonzero(rng.random(g.n) < prob)


# ---------------------------------------------------------------------------
# axis-rate estimation


class WrapError(RuntimeError):
    """The infection wrapped around the measurement torus; enlarge the side."""


def estimate_axis_rate(
    d: int,
    t: float,
    trials: int,
    rng: np.random.Generator,
    max_enlargements: int = 4,
) -> float:
    """Monte-Carlo estimate of the rate an infection spreads along one axis
    of a d-dimensional grid.

    Simulates on an internal torus (side > 4t to start) and averages the
    farthest positive axis-0 displacement of the infected set divided by t
    (the one-sided reach; on a line this is a Poisson(t) renewal count, so
    the estimator carries no finite-t bias). A trial whose displacement
    reaches the half-side saturates the wrapped metric, so the whole batch
    restarts on a doubled torus.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = 4 * math.ceil(t) + 5
    for attempt in range(max_enlargements + 1):
        side = base * (2**attempt)
        g = build_grid_torus(side, d)
        coords = grid_coords(g)
        center_coord = side // 2
        center = int(
            np.ravel_multi_index((center_coord,) * d, (side,) * d)
        )
        half = side // 2
        rates = np.empty(trials)
        wrapped = False
        for i in range(trials):
            trace = simulate_si(g, center, rng, horizon=t)
            disp = (coords[trace.order] - center_coord + half) % side - half
            if np.abs(disp).max() >= half - 1:
                wrapped = True
                break
            rates[i] = disp[:, 0].max() / t
        if not wrapped:
            return float(rates.mean())
    raise WrapError(
        f"infection still wraps at side {side}; raise max_enlargements"
    )
