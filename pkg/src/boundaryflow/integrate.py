"""Time-stepping engines for vector and matrix ODEs.

A single driver covers both the fixed-step RK4 path (the reproducible
default) and an embedded Dormand-Prince 4(5) adaptive path.  Integration
segments are split at every requested output time and at every control
breakpoint, so each Runge-Kutta step only ever sees a smooth field and the
classical order is preserved across piecewise-constant forcing.  Backward
problems are solved by the time reversal s -> -t of the field, keeping a
single forward code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import TimeInterval

__all__ = [
    "IntegratorConfig",
    "TransitionMatrix",
    "IntegrationError",
    "DivergenceError",
    "BlowUpError",
    "integrate_ode",
    "transition_matrix",
    "adjoint_solution",
]


class IntegrationError(RuntimeError):
    """Base class for integration failures."""


class DivergenceError(IntegrationError):
    """The step budget was exhausted before reaching the end time."""


class BlowUpError(IntegrationError):
    """The state left the representable range (non-finite values)."""


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4-fixed"  # or "rk45-adaptive"
    step: float = 1e-3
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_steps: int = 50_000_000

    def __post_init__(self):
        if self.method not in ("rk4-fixed", "rk45-adaptive"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be a positive integer")


@dataclass(frozen=True)
class TransitionMatrix:
    """Principal matrix solution Psi(t, s) of a linear system."""

    t: float
    s: float
    matrix: np.ndarray


# Dormand-Prince 4(5) tableau.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


def _rk4_step(field, t, y, h, t_cap=math.inf):
    # stage times are capped just inside the segment so that a field with a
    # breakpoint at the segment end is only ever sampled from the left
    k1 = field(t, y)
    tm = min(t + 0.5 * h, t_cap)
    k2 = field(tm, y + (0.5 * h) * k1)
    k3 = field(tm, y + (0.5 * h) * k2)
    k4 = field(min(t + h, t_cap), y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _dopri_step(field, t, y, h, t_cap=math.inf):
    """One embedded step; returns (y5, error_estimate)."""
    k = [field(t, y)]
    for i in range(1, 7):
        acc = _DP_A[i][0] * k[0]
        for j in range(1, i):
            if _DP_A[i][j] != 0.0:
                acc = acc + _DP_A[i][j] * k[j]
        k.append(field(min(t + _DP_C[i] * h, t_cap), y + h * acc))
    y5 = y + h * sum(b * ki for b, ki in zip(_DP_B5, k) if b != 0.0)
    err = h * sum((b5 - b4) * ki for b5, b4, ki in zip(_DP_B5, _DP_B4, k))
    return y5, err


def _merge_nodes(t0, t1, outputs, breakpoints):
    nodes = [t0, t1]
    nodes.extend(outputs)
    if breakpoints is not None:
        nodes.extend(b for b in breakpoints if t0 < b < t1)
    nodes = np.unique(np.asarray(nodes, dtype=float))
    # collapse nodes closer than roundoff so no zero-length segment survives
    keep = [nodes[0]]
    tol = 1e-12 * max(1.0, abs(t0), abs(t1))
    for v in nodes[1:]:
        if v - keep[-1] > tol:
            keep.append(v)
    return keep


def _drive(
    field,
    y0: np.ndarray,
    t0: float,
    t1: float,
    cfg: IntegratorConfig,
    outputs: Sequence[float],
    breakpoints=None,
    post_step: Callable[[float, np.ndarray], np.ndarray] | None = None,
    nonfinite: str = "raise",
):
    """March from t0 to t1 (t0 < t1), returning the state at each output time.

    ``post_step`` is applied after every accepted step (used for sphere
    renormalization).  ``nonfinite='propagate'`` lets NaN rows ride instead of
    raising, for ensemble integrations that report failures per trajectory.
    """
    y = np.array(y0, dtype=float)
    nodes = _merge_nodes(t0, t1, outputs, breakpoints)
    out_iter = list(outputs)
    results = []
    tol = 1e-12 * max(1.0, abs(t0), abs(t1))

    def emit(t, y):
        while out_iter and out_iter[0] <= t + tol:
            results.append((out_iter.pop(0), np.array(y)))

    steps = 0
    emit(nodes[0], y)
    for a, b in zip(nodes[:-1], nodes[1:]):
        t_cap = b - 1e-12 * max(1.0, abs(b))
        if cfg.method == "rk4-fixed":
            nsub = max(1, math.ceil((b - a) / cfg.step - 1e-9))
            steps += nsub
            if steps > cfg.max_steps:
                raise DivergenceError(f"step budget {cfg.max_steps} exhausted at t={a}")
            hs = (b - a) / nsub
            t = a
            for i in range(nsub):
                y = _rk4_step(field, t, y, hs, t_cap)
                t = a + (i + 1) * hs
                if post_step is not None:
                    y = post_step(t, y)
            if nonfinite == "raise" and not np.all(np.isfinite(y)):
                raise BlowUpError(f"non-finite state at t={b}")
        else:
            t = a
            h = min(cfg.step, b - a)
            while t < b - tol:
                if steps >= cfg.max_steps:
                    raise DivergenceError(f"step budget {cfg.max_steps} exhausted at t={t}")
                steps += 1
                h = min(h, b - t)
                y_new, err = _dopri_step(field, t, y, h, t_cap)
                scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
                with np.errstate(invalid="ignore", divide="ignore"):
                    ratio = np.sqrt(np.mean((err / scale) ** 2))
                if not np.isfinite(ratio):
                    if nonfinite == "raise":
                        raise BlowUpError(f"non-finite state at t={t}")
                    ratio = 0.0  # accept and let NaNs propagate row-wise
                if ratio <= 1.0:
                    t = t + h
                    y = y_new
                    if post_step is not None:
                        y = post_step(t, y)
                factor = 0.9 * (ratio ** -0.2) if ratio > 0 else 5.0
                h = h * min(5.0, max(0.2, factor))
            if nonfinite == "raise" and not np.all(np.isfinite(y)):
                raise BlowUpError(f"non-finite state at t={b}")
        emit(b, y)
    emit(nodes[-1] + 2 * tol, y)
    return results


def integrate_ode(
    field,
    y0,
    interval: TimeInterval,
    cfg: IntegratorConfig,
    output_times: Sequence[float],
    breakpoints=None,
):
    """Integrate y' = field(t, y) over the interval and sample the solution
    at the requested (sorted, in-range) output times.

    Optional ``breakpoints`` mark field discontinuities (piecewise-constant
    controls); steps are aligned so no step straddles one.
    """
    outputs = [float(t) for t in output_times]
    if any(b < a for a, b in zip(outputs, outputs[1:])):
        raise ValueError("output_times must be sorted ascending")
    slack = 1e-9 * max(1.0, abs(interval.t0), abs(interval.t1))
    if outputs and (outputs[0] < interval.t0 - slack or outputs[-1] > interval.t1 + slack):
        raise ValueError("output_times must lie inside the integration interval")
    y0 = np.asarray(y0, dtype=float)
    return _drive(field, y0, interval.t0, interval.t1, cfg, outputs, breakpoints)


def _reversed_field(field):
    return lambda s, y: -field(-s, y)


def transition_matrix(L, s: float, t: float, cfg: IntegratorConfig) -> TransitionMatrix:
    """Principal matrix solution Psi(t, s) of x' = L(tau) x, integrated as a
    d^2-dimensional vector ODE.  t < s is allowed (backward propagation via
    time reversal)."""
    A0 = np.asarray(L(s), dtype=float)
    d = A0.shape[0]
    eye = np.eye(d)
    if t == s:
        return TransitionMatrix(t=t, s=s, matrix=eye)

    def field(tau, y):
        return (np.asarray(L(tau), dtype=float) @ y.reshape(d, d)).ravel()

    if t > s:
        res = _drive(field, eye.ravel(), s, t, cfg, [t])
    else:
        res = _drive(_reversed_field(field), eye.ravel(), -s, -t, cfg, [-t])
    return TransitionMatrix(t=t, s=s, matrix=res[-1][1].reshape(d, d))


def adjoint_solution(
    L,
    eta_end,
    t_end: float,
    t_start: float,
    cfg: IntegratorConfig,
    output_times: Sequence[float],
):
    """Row-vector adjoint solution of eta' = -eta L(t) with eta(t_end) given,
    integrated backward to t_start; samples returned in ascending time.

    Along any solution v' = L(t) v the pairing eta(t) . v(t) is a constant of
    motion (parallel displacement of hyperplanes).
    """
    if not t_start < t_end:
        raise ValueError("need t_start < t_end (backward integration)")
    outputs = sorted(float(t) for t in output_times)
    if outputs and (outputs[0] < t_start - 1e-9 or outputs[-1] > t_end + 1e-9):
        raise ValueError("output_times must lie in [t_start, t_end]")

    # eta' = -eta L  <=>  (eta^T)' = -L^T eta^T; reverse time for a forward march.
    def field(tau, z):
        return -(np.asarray(L(tau), dtype=float).T @ z)

    rev_outputs = [-t for t in reversed(outputs)]
    res = _drive(
        _reversed_field(field),
        np.asarray(eta_end, dtype=float),
        -t_end,
        -t_start,
        cfg,
        rev_outputs,
    )
    return [(-tau, eta) for tau, eta in reversed(res)]
