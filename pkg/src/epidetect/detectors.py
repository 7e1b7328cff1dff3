"""The three decision procedures and their threshold policies.

comparative_ball picks which of two candidate networks an epidemic is
spreading on; threshold_ball / threshold_tree decide whether a sickness is
a network epidemic or a random illness. Thresholds come either from the
policy table (per graph family, statistic, and whether the elapsed time is
known) or from empirical calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from .graphs import Graph, diameter
from .metrics import (
    DisconnectedTerminalsError,
    radius_ball,
    steiner_tree_2approx,
)
from .percolation import ReportSet, simulate_si


class EmptyReportsError(ValueError):
    """No node reported; the trial carries no evidence either way."""


@dataclass(frozen=True)
class ComparisonVerdict:
    choice: str  # "G1" or "G2"
    score1: float
    score2: float


@dataclass(frozen=True)
class SicknessVerdict:
    label: str  # "INFECTION" or "RANDOM"
    statistic: float
    threshold: float


# ---------------------------------------------------------------------------
# comparative ball


def clustering_score(g: Graph, nodes, diam: float, scale: float = 1.0) -> float:
    """Ball radius of `nodes` on g over the (scaled) diameter; inf when the
    nodes are scattered across components or missing entirely."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        return math.inf
    ball = radius_ball(g, nodes)
    if math.isinf(ball.radius):
        return math.inf
    return ball.radius / (scale * diam)


def comparative_scores(
    g1: Graph,
    reports1,
    g2: Graph,
    reports2,
    diam1: float,
    diam2: float,
    diam_scale1: float = 1.0,
    diam_scale2: float = 1.0,
) -> ComparisonVerdict:
    """Score both graphs on their own report views and pick the tighter one.

    Ties, including both scores infinite, resolve to G1. Report views may
    differ when one graph covers only part of the node universe (e.g. the
    giant component of a random graph); nodes outside it are ignored.
    """
    x1 = clustering_score(g1, reports1, diam1, diam_scale1)
    x2 = clustering_score(g2, reports2, diam2, diam_scale2)
    return ComparisonVerdict(choice="G1" if x1 <= x2 else "G2", score1=x1, score2=x2)


def comparative_ball(
    g1: Graph,
    g2: Graph,
    reports: ReportSet,
    diam_scale1: float = 1.0,
    diam_scale2: float = 1.0,
    diam1: float | None = None,
    diam2: float | None = None,
) -> ComparisonVerdict:
    """Decide which graph the reporting nodes are spreading on.

    The score of each graph is the smallest enclosing ball radius of the
    reports divided by the (optionally scaled) graph diameter; the graph
    with the smaller score wins, G1 on ties. A graph on which the reports
    are scattered across components scores inf and loses.
    """
    if g1.n != g2.n:
        raise ValueError("graphs must share a node universe")
    if reports.count == 0:
        raise EmptyReportsError("cannot compare with zero reports")
    if diam1 is None:
        diam1 = _auto_diameter(g1)
    if diam2 is None:
        diam2 = _auto_diameter(g2)
    return comparative_scores(
        g1, reports.nodes, g2, reports.nodes, diam1, diam2, diam_scale1, diam_scale2
    )


def _auto_diameter(g: Graph) -> int:
    if g.family and g.family.startswith("grid") and "side" in g.meta:
        return diameter(g, "analytic")
    return diameter(g, "exact")


# ---------------------------------------------------------------------------
# threshold algorithms


def threshold_ball(g: Graph, reports: ReportSet, m: float) -> SicknessVerdict:
    """INFECTION iff the reports fit in a ball of radius at most m."""
    if reports.count == 0:
        raise EmptyReportsError("cannot classify zero reports")
    radius = radius_ball(g, reports.nodes).radius
    label = "INFECTION" if radius <= m else "RANDOM"
    return SicknessVerdict(label=label, statistic=float(radius), threshold=float(m))


def threshold_tree(g: Graph, reports: ReportSet, m: float) -> SicknessVerdict:
    """INFECTION iff the approximate Steiner tree of the reports has at
    most m edges. Reports scattered across components are only consistent
    with a random sickness on this graph, so they decide RANDOM."""
    if reports.count == 0:
        raise EmptyReportsError("cannot classify zero reports")
    try:
        size = steiner_tree_2approx(g, reports.nodes).size
    except DisconnectedTerminalsError:
        return SicknessVerdict(label="RANDOM", statistic=math.inf, threshold=float(m))
    label = "INFECTION" if size <= m else "RANDOM"
    return SicknessVerdict(label=label, statistic=float(size), threshold=float(m))


# ---------------------------------------------------------------------------
# threshold policy table


@dataclass(frozen=True)
class ThresholdPolicy:
    """Selects one row of the threshold table.

    family: "grid", "tree", "er", or "er_dense"; statistic: "ball" or
    "tree"; time_knowledge: "known" (elapsed time t given) or "adaptive"
    (only the report count given). Unused parameters may stay None.
    """

    family: str
    statistic: str
    time_knowledge: str = "known"
    d: int | None = None  # grid / dense-ER dimension parameter
    t: float | None = None  # elapsed infection time
    axis_rate: float | None = None  # grid per-axis spreading rate
    speed: float | None = None  # radius growth rate (tree / er)
    adaptive_speed: float | None = None  # speed over size-growth rate
    mean_size: float | None = None  # expected infection size at t
    reports: float | None = None  # observed report count
    q: float | None = None
    n: int | None = None


def loglog(n: float) -> float:
    """log log n clamped to 1 so adaptive thresholds exist at toy sizes."""
    if n < 3:
        return 1.0
    return max(1.0, math.log(math.log(n)))


def _need(policy: ThresholdPolicy, *names: str) -> list:
    values = []
    for name in names:
        value = getattr(policy, name)
        if value is None:
            raise ValueError(
                f"policy {policy.family}/{policy.statistic}/"
                f"{policy.time_knowledge} requires parameter {name!r}"
            )
        values.append(value)
    return values


def compute_threshold(policy: ThresholdPolicy) -> float:
    """Evaluate the threshold formula selected by the policy triple."""
    row = (policy.family, policy.statistic, policy.time_knowledge)
    if policy.family == "er_dense":
        d, q, n = _need(policy, "d", "q", "n")
        if d <= 3:
            raise ValueError("dense-ER threshold needs dimension parameter > 3")
        return 0.99 * (d - 3) * q * n ** (1 / d) / 2
    match row:
        case ("grid", "ball", "known"):
            d, axis_rate, t = _need(policy, "d", "axis_rate", "t")
            return 1.1 * d * axis_rate * t
        case ("grid", "ball", "adaptive"):
            d, reports, q, n = _need(policy, "d", "reports", "q", "n")
            return 1.1 * d * (reports * loglog(n) / q) ** (1 / d)
        case ("tree", "ball", "known"):
            speed, t = _need(policy, "speed", "t")
            return 1.1 * speed * t
        case ("tree", "ball", "adaptive"):
            b2, reports, q, n = _need(policy, "adaptive_speed", "reports", "q", "n")
            return 1.1 * b2 * math.log(reports * loglog(n) ** 2 / q)
        case ("tree", "tree", "known") | ("er", "tree", "known"):
            mean_size, n = _need(policy, "mean_size", "n")
            return mean_size * loglog(n)
        case ("tree", "tree", "adaptive") | ("er", "tree", "adaptive"):
            reports, q, n = _need(policy, "reports", "q", "n")
            return reports / q * loglog(n) ** 3
        case ("er", "ball", "known"):
            speed, t = _need(policy, "speed", "t")
            return speed * t
        case ("er", "ball", "adaptive"):
            b2, reports, q, n = _need(policy, "adaptive_speed", "reports", "q", "n")
            return b2 * math.log(reports / q * loglog(n) ** 2)
    raise ValueError(f"no threshold rule for {row}")


# ---------------------------------------------------------------------------
# empirical calibration


def calibrate_empirical_threshold(infection_stats, random_stats) -> float:
    """Threshold minimizing the empirical balanced error.

    Candidates are the observed statistic values; the smallest minimizer
    wins. The error charged to a candidate m is the mean of the infection
    statistics above m and the random statistics at or below m.
    """
    inf_s = np.sort(np.asarray(infection_stats, dtype=float))
    rnd_s = np.sort(np.asarray(random_stats, dtype=float))
    if len(inf_s) == 0 or len(rnd_s) == 0:
        raise ValueError("both sample sets must be non-empty")
    candidates = np.unique(np.concatenate([inf_s, rnd_s]))
    miss = 1.0 - np.searchsorted(inf_s, candidates, side="right") / len(inf_s)
    false_alarm = np.searchsorted(rnd_s, candidates, side="right") / len(rnd_s)
    total = 0.5 * miss + 0.5 * false_alarm
    return float(candidates[int(np.argmin(total))])


@dataclass
class SpreadingFit:
    """Constants fitted from simulated epidemics on one graph family."""

    speed: float  # slope of mean ball radius vs t
    growth_rate: float  # slope of log mean size vs t
    adaptive_speed: float  # 1.1 * speed / growth_rate
    mean_radius: dict = field(default_factory=dict)
    mean_size: dict = field(default_factory=dict)


def fit_spreading_constants(
    build: Callable[[np.random.Generator], tuple[Graph, int]],
    times,
    trials: int,
    rng: np.random.Generator,
) -> SpreadingFit:
    """Monte-Carlo fit of the radius and size growth rates.

    `build` supplies a (graph, source) pair per trial, so random families
    resample their topology. The speed constant is the through-origin
    least-squares slope of mean infected-set radius against time; the size
    growth rate is the affine slope of log mean size.
    """
    times = sorted(float(t) for t in times)
    if len(times) < 2:
        raise ValueError("need at least two time points to fit slopes")
    mean_radius = {}
    mean_size = {}
    for t in times:
        radii = np.empty(trials)
        sizes = np.empty(trials)
        for i in range(trials):
            g, source = build(rng)
            trace = simulate_si(g, source, rng, horizon=t)
            radii[i] = radius_ball(g, trace.infected).radius
            sizes[i] = trace.size
        mean_radius[t] = float(radii.mean())
        mean_size[t] = float(sizes.mean())
    ts = np.asarray(times)
    rs = np.asarray([mean_radius[t] for t in times])
    speed = float((rs * ts).sum() / (ts * ts).sum())
    logs = np.log(np.asarray([max(mean_size[t], 1.0) for t in times]))
    growth = float(np.polyfit(ts, logs, 1)[0])
    return SpreadingFit(
        speed=speed,
        growth_rate=growth,
        adaptive_speed=1.1 * speed / growth,
        mean_radius=mean_radius,
        mean_size=mean_size,
    )


def estimate_mean_size(
    build: Callable[[np.random.Generator], tuple[Graph, int]],
    t: float,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Mean infected-set size at horizon t (the known-t tree thresholds)."""
    total = 0
    for _ in range(trials):
        g, source = build(rng)
        total += simulate_si(g, source, rng, horizon=t).size
    return total / trials


# ---------------------------------------------------------------------------
# calibration sidecar


def write_constants(stream: TextIO, family: str, constants: dict, seed: int, trials: int) -> None:
    """Plain-text `key = value` sidecar recording a calibration run."""
    stream.write(f"family = {family}\n")
    stream.write(f"seed = {seed}\n")
    stream.write(f"trials = {trials}\n")
    for key in sorted(constants):
        stream.write(f"{key} = {constants[key]:.10g}\n")


def read_constants(stream) -> dict:
    out: dict = {}
    for line in stream:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            out[key] = int(value)
        except ValueError:
            try:
                out[key] = float(value)
            except ValueError:
                out[key] = value
    return out
