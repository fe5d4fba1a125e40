"""Shared domain types and metric utilities.

Everything here is an immutable value object (arrays are frozen after
construction) and every operation is a pure function, so the types are safe
to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "UNIT_NORM_TOL",
    "InvalidSystemError",
    "TimeInterval",
    "SystemSpec",
    "BoundaryState",
    "ControlSignal",
    "FibreCloud",
    "BoundaryFibre",
    "ValidationReport",
    "validate_system",
    "eval_control",
    "hausdorff_distance",
]

# Double-precision renormalization leaves O(1e-16) error; 1e-12 gives slack
# for accumulated arithmetic.
UNIT_NORM_TOL = 1e-12


class InvalidSystemError(ValueError):
    """A right-hand side or Jacobian returned a non-finite value."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeInterval:
    """An oriented time window [t0, t1] with t0 < t1."""

    t0: float
    t1: float

    def __post_init__(self):
        if not np.isfinite(self.t0) or not np.isfinite(self.t1):
            raise ValueError("interval endpoints must be finite")
        if not self.t0 < self.t1:
            raise ValueError(f"need t0 < t1, got [{self.t0}, {self.t1}]")

    @property
    def length(self) -> float:
        return self.t1 - self.t0


@dataclass(frozen=True)
class SystemSpec:
    """The data of the inclusion: drift f(t, x), its state Jacobian, and the
    perturbation radius rho.

    ``rhs`` maps (t, x[d]) -> dx[d]; ``jacobian`` maps (t, x[d]) -> d x d.
    ``rhs_batch`` is an optional vectorized drift (t, X[m, d]) -> [m, d]
    applied row-wise; ensemble evolution falls back to a per-point loop when
    it is absent.
    """

    dim: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    jacobian: Callable[[float, np.ndarray], np.ndarray]
    rho: float
    rhs_batch: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if int(self.dim) < 2:
            raise ValueError(f"state dimension must be >= 2, got {self.dim}")
        if not (self.rho >= 0 and np.isfinite(self.rho)):
            raise ValueError(f"rho must be a non-negative real, got {self.rho}")


@dataclass(frozen=True)
class BoundaryState:
    """A point (x, n) of the unit normal bundle: state plus outward unit
    normal."""

    x: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x))
        object.__setattr__(self, "n", _frozen_array(self.n))
        if self.x.ndim != 1 or self.x.shape != self.n.shape:
            raise ValueError("x and n must be vectors of equal dimension")
        nn = float(np.linalg.norm(self.n))
        if abs(nn - 1.0) > 1e-9:
            raise ValueError(f"normal must be unit length, |n| = {nn!r}")


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant admissible control: value k holds on
    [breakpoints[k], breakpoints[k+1]) and extends constantly beyond the
    first/last breakpoint.  Evaluation is right-closed at breakpoints: the
    value of the interval *starting* there wins.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = _frozen_array(self.breakpoints)
        vals = _frozen_array(np.atleast_2d(self.values))
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if bp.ndim != 1 or len(bp) < 2:
            raise ValueError("need at least two breakpoints")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if len(vals) != len(bp) - 1:
            raise ValueError(
                f"need one value per interval: {len(bp) - 1} intervals, "
                f"{len(vals)} values"
            )
        norms = np.linalg.norm(vals, axis=1)
        if np.any(norms > 1.0 + 1e-9):
            raise ValueError(f"control values must satisfy |value| <= 1, max norm {norms.max()}")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        k = min(max(k, 0), len(self.values) - 1)
        return np.array(self.values[k])


@dataclass(frozen=True)
class FibreCloud:
    """A finite sample of a reachable/attractor fibre at one time."""

    time: float
    points: np.ndarray

    def __post_init__(self):
        pts = _frozen_array(np.atleast_2d(self.points))
        object.__setattr__(self, "points", pts)
        if pts.size == 0:
            raise ValueError("cloud must contain at least one point")


@dataclass(frozen=True)
class BoundaryFibre:
    """An ordered sample of a fibre boundary with outward unit normals.

    For d = 2 the entries are sorted by the angle of the normal, and those
    angles must be strictly increasing (one entry per normal direction -- the
    finite surrogate of Gauss-map injectivity).
    """

    time: float
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        nrm = np.atleast_2d(np.asarray(self.normals, dtype=float))
        if pts.shape != nrm.shape or len(pts) == 0:
            raise ValueError("points and normals must be equal-shape, non-empty")
        lengths = np.linalg.norm(nrm, axis=1)
        if np.any(np.abs(lengths - 1.0) > UNIT_NORM_TOL):
            raise ValueError("all normals must be unit length within 1e-12")
        if pts.shape[1] == 2:
            angles = np.arctan2(nrm[:, 1], nrm[:, 0])
            order = np.argsort(angles, kind="stable")
            pts, nrm, angles = pts[order], nrm[order], angles[order]
            if np.any(np.diff(angles) <= 0):
                raise ValueError("normal angles must be strictly increasing (d = 2)")
        object.__setattr__(self, "points", _frozen_array(pts))
        object.__setattr__(self, "normals", _frozen_array(nrm))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def entries(self):
        """The ordered (x, n) pairs."""
        return list(zip(self.points, self.normals))


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    max_residual: float
    tolerance: float
    samples_checked: int


def validate_system(
    spec: SystemSpec,
    samples: Sequence[tuple[float, np.ndarray]],
    tolerance: float = 1e-4,
    fd_step: float = 1e-4,
) -> ValidationReport:
    """Check the user-supplied Jacobian against central finite differences of
    the drift at the given (t, x) samples.

    The residual is relative: max_j |FD_j - Df e_j| / (1 + |Df|).  Failure is
    flagged above ``tolerance``; non-finite drift or Jacobian values raise
    InvalidSystemError.
    """
    if len(samples) == 0:
        raise ValueError("need at least one (t, x) sample")
    worst = 0.0
    for t, x in samples:
        x = np.asarray(x, dtype=float)
        fx = np.asarray(spec.rhs(t, x), dtype=float)
        J = np.asarray(spec.jacobian(t, x), dtype=float)
        if not np.all(np.isfinite(fx)) or not np.all(np.isfinite(J)):
            raise InvalidSystemError(f"non-finite rhs/jacobian at t={t}, x={x}")
        scale = 1.0 + np.linalg.norm(J, 2)
        for j in range(spec.dim):
            e = np.zeros(spec.dim)
            e[j] = 1.0
            h = fd_step * (1.0 + abs(x[j]))
            fp = np.asarray(spec.rhs(t, x + h * e), dtype=float)
            fm = np.asarray(spec.rhs(t, x - h * e), dtype=float)
            if not np.all(np.isfinite(fp)) or not np.all(np.isfinite(fm)):
                raise InvalidSystemError(f"non-finite rhs near t={t}, x={x}")
            resid = np.linalg.norm((fp - fm) / (2.0 * h) - J[:, j]) / scale
            worst = max(worst, float(resid))
    return ValidationReport(
        ok=worst <= tolerance,
        max_residual=worst,
        tolerance=tolerance,
        samples_checked=len(samples),
    )


def eval_control(xi: ControlSignal, t: float) -> np.ndarray:
    """Value of the piecewise-constant signal at time t (constant extension
    outside the breakpoint range)."""
    return xi.value_at(t)


def _directed_hausdorff(a: np.ndarray, b: np.ndarray, block: int = 1024) -> float:
    worst = 0.0
    for i in range(0, len(a), block):
        chunk = a[i : i + block]
        best = np.full(len(chunk), np.inf)
        for j in range(0, len(b), 4096):
            np.minimum(best, cdist(chunk, b[j : j + 4096]).min(axis=1), out=best)
        worst = max(worst, float(best.max()))
    return worst


def hausdorff_distance(a, b) -> float:
    """Hausdorff distance between two finite point sets: the larger of the
    two directed max-min distances."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("hausdorff_distance needs non-empty point sets")
    return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))
