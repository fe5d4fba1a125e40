"""Ensemble evolution under sampled admissible controls, plus the 2D convex
geometry used to compare clouds against boundary reconstructions.

Control streams are counter-based (one SeedSequence spawn per trajectory), so
ensembles are bitwise reproducible regardless of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ControlSignal, FibreCloud, SystemSpec, TimeInterval
from .integrate import IntegratorConfig, IntegrationError, _drive

__all__ = [
    "CloudConfig",
    "sample_control",
    "evolve_cloud",
    "convex_hull_2d",
    "support_function",
]


@dataclass(frozen=True)
class CloudConfig:
    trajectory_count: int
    segment_length: float = 0.1
    control_law: str = "unit-sphere"  # or "ball"
    seed: int = 0

    def __post_init__(self):
        if self.trajectory_count < 1:
            raise ValueError("trajectory_count must be >= 1")
        if not self.segment_length > 0:
            raise ValueError("segment_length must be positive")
        if self.control_law not in ("unit-sphere", "ball"):
            raise ValueError(f"unknown control law {self.control_law!r}")


def _draw_values(rng, n, dim, law):
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1)
    norms[norms < 1e-300] = 1.0
    directions = g / norms[:, None]
    if law == "unit-sphere":
        return directions
    radii = rng.uniform(0.0, 1.0, n) ** (1.0 / dim)
    return directions * radii[:, None]


def sample_control(
    ccfg: CloudConfig, interval: TimeInterval, rng_stream: int, dim: int = 2
) -> ControlSignal:
    """Piecewise-constant admissible control covering the interval, with a
    breakpoint every ``segment_length`` and values drawn by the configured
    law.  Deterministic in (seed, rng_stream)."""
    rng = np.random.default_rng(np.random.SeedSequence(ccfg.seed, spawn_key=(rng_stream,)))
    n_seg = max(1, math.ceil(interval.length / ccfg.segment_length - 1e-12))
    breakpoints = interval.t0 + ccfg.segment_length * np.arange(n_seg + 1)
    values = _draw_values(rng, n_seg, dim, ccfg.control_law)
    return ControlSignal(breakpoints=breakpoints, values=values)


def evolve_cloud(
    spec: SystemSpec,
    ccfg: CloudConfig,
    start: FibreCloud,
    interval: TimeInterval,
    cfg: IntegratorConfig,
    output_times: Sequence[float],
):
    """Evolve trajectory_count trajectories of x' = f(t, x) + rho xi_i(t),
    where xi_i is control stream i and the initial points cycle over the
    start cloud.  Returns one FibreCloud per output time.

    All streams share the same breakpoint grid, so the ensemble advances as a
    single batch with a constant control matrix per segment.  A trajectory
    that leaves the representable range poisons only its own row; any such
    row makes the whole call fail with the offending indices.
    """
    m = ccfg.trajectory_count
    d = spec.dim
    signals = [sample_control(ccfg, interval, i, dim=d) for i in range(m)]
    breakpoints = signals[0].breakpoints
    values = np.stack([sig.values for sig in signals])  # (m, n_seg, d)

    starts = np.atleast_2d(np.asarray(start.points, dtype=float))
    X = np.array([starts[i % len(starts)] for i in range(m)])

    if spec.rhs_batch is not None:
        drift = spec.rhs_batch
    else:
        def drift(t, X):
            return np.stack([np.asarray(spec.rhs(t, x), float) for x in X])

    remaining = [float(t) for t in sorted(output_times)]
    tol = 1e-12 * max(1.0, abs(interval.t0), abs(interval.t1))
    if remaining and (remaining[0] < interval.t0 - 1e-9 or remaining[-1] > interval.t1 + 1e-9):
        raise ValueError("output_times must lie inside the integration interval")
    results = []
    n_seg = values.shape[1]
    for k in range(n_seg):
        a = float(breakpoints[k])
        if a >= interval.t1 - tol:
            break
        b = min(float(breakpoints[k + 1]), interval.t1)
        xi_k = values[:, k, :]

        def field(t, X, xi_k=xi_k):
            return drift(t, X) + spec.rho * xi_k

        seg_outputs = []
        while remaining and remaining[0] <= b + tol:
            seg_outputs.append(remaining.pop(0))
        res = _drive(field, X, a, b, cfg, seg_outputs + [b], nonfinite="propagate")
        for t, snap in res[: len(seg_outputs)]:
            results.append(FibreCloud(time=t, points=snap))
        X = res[-1][1]

    bad = np.nonzero(~np.all(np.isfinite(X), axis=1))[0]
    if bad.size:
        raise IntegrationError(f"trajectories diverged: indices {bad.tolist()}")
    return results


def convex_hull_2d(points) -> np.ndarray:
    """Convex hull of planar points by Andrew's monotone chain.

    Returns the hull vertices in counter-clockwise order; collinear interior
    points are dropped.  Degenerate inputs return the <= 2 extreme points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    uniq = sorted({(float(p[0]), float(p[1])) for p in pts})
    if len(uniq) == 1:
        return np.array(uniq)
    if len(uniq) == 2:
        return np.array(uniq)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in uniq:
        while len(lower) > 1 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(uniq):
        while len(upper) > 1 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:  # all collinear: keep the two extremes
        return np.array([uniq[0], uniq[-1]])
    return np.array(hull)


def support_function(points, direction) -> float:
    """max_{x in points} <direction, x> for a unit direction."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("need at least one point")
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return float(np.max(pts @ direction))
