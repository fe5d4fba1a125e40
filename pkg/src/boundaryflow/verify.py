"""Numerically testable statements of the theory, packaged as pass/fail
property checks over reconstructions and clouds.

Every check is deterministic given its inputs and returns a machine-readable
PropertyReport with a worst-case violation metric; ``passed`` holds exactly
when the metric is within tolerance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import BoundaryFibre, FibreCloud, hausdorff_distance
from .integrate import IntegratorConfig, transition_matrix
from .linear import LinearField, StabilityCertificate
from .boundary import (
    ReconstructionConfig,
    _pullback_sweep,
    _transport_bundle,
    _transport_normals,
    reconstruct_fibre,
)

__all__ = [
    "PropertyReport",
    "check_symmetry",
    "check_convexity",
    "check_scaling",
    "check_backward_invariance",
    "check_gauss_injectivity",
    "check_pullback_decay",
    "signed_distance_to_polygon",
]

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class PropertyReport:
    name: str
    passed: bool
    metric: float
    tolerance: float
    details: str = ""

    def __post_init__(self):
        if self.passed != (self.metric <= self.tolerance):
            raise ValueError("passed must equal (metric <= tolerance)")

    def to_dict(self):
        return asdict(self)


def _report(name, metric, tolerance, details=""):
    return PropertyReport(
        name=name,
        passed=bool(metric <= tolerance),
        metric=float(metric),
        tolerance=float(tolerance),
        details=details,
    )


def _distance_to_polygon_boundary(P: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Distance from each point to the closed polygon outline V (k, 2)."""
    A = V
    B = np.roll(V, -1, axis=0)
    AB = B - A
    denom = (AB * AB).sum(axis=1)
    denom[denom == 0.0] = 1.0
    AP = P[:, None, :] - A[None, :, :]
    tt = np.clip((AP * AB[None, :, :]).sum(axis=-1) / denom[None, :], 0.0, 1.0)
    proj = A[None, :, :] + tt[..., None] * AB[None, :, :]
    return np.linalg.norm(P[:, None, :] - proj, axis=-1).min(axis=1)


def _inside_polygon(P: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Even-odd rule point-in-polygon test, vectorized over points."""
    x, y = P[:, 0], P[:, 1]
    inside = np.zeros(len(P), dtype=bool)
    k = len(V)
    for i in range(k):
        x1, y1 = V[i]
        x2, y2 = V[(i + 1) % k]
        crosses = (y1 > y) != (y2 > y)
        if not crosses.any():
            continue
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def signed_distance_to_polygon(points, vertices) -> np.ndarray:
    """Signed distance to a polygon: positive outside, negative inside.
    Exact for the convex polygons produced by sorted fibres."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    dist = _distance_to_polygon_boundary(P, V)
    sign = np.where(_inside_polygon(P, V), -1.0, 1.0)
    return sign * dist


def _normal_angles(fibre: BoundaryFibre) -> np.ndarray:
    return np.arctan2(fibre.normals[:, 1], fibre.normals[:, 0])


def check_symmetry(fibre: BoundaryFibre, tol: float) -> PropertyReport:
    """Origin symmetry: the boundary point for -n must be the negation of the
    point for n.  Requires the normal fan to contain antipodal pairs."""
    angles = _normal_angles(fibre)
    m = len(fibre)
    worst = 0.0
    for i in range(m):
        target = angles[i] + math.pi
        diff = np.abs((angles - target + math.pi) % (2.0 * math.pi) - math.pi)
        j = int(np.argmin(diff))
        if diff[j] > 1e-6:
            raise ValueError(f"missing antipodal normal for entry {i}")
        worst = max(worst, float(np.linalg.norm(fibre.points[i] + fibre.points[j])))
    return _report("symmetry", worst, tol, f"{m} antipodal pairs")


def check_convexity(fibre: BoundaryFibre, cloud: FibreCloud, tol: float) -> PropertyReport:
    """Fibre-wise convexity via containment: no cloud point may stick out of
    the fibre polygon by more than tol (signed distance, positive outside)."""
    if abs(fibre.time - cloud.time) > 1e-9 * max(1.0, abs(fibre.time)):
        raise ValueError(f"fibre time {fibre.time} != cloud time {cloud.time}")
    sd = signed_distance_to_polygon(cloud.points, fibre.points)
    metric = float(sd.max())
    return _report(
        "convexity", metric, tol, f"{len(cloud.points)} cloud points vs {len(fibre)}-gon"
    )


def check_scaling(
    L: LinearField,
    cert: StabilityCertificate,
    tau: float,
    rho1: float,
    rho2: float,
    rcfg: ReconstructionConfig,
    cfg: IntegratorConfig,
    tol: float,
) -> PropertyReport:
    """The fibre scales linearly with rho: x_i(rho2) = (rho2/rho1) x_i(rho1)
    per normal, measured relative to |x_i(rho2)|."""
    if not (rho1 > 0 and rho2 > 0):
        raise ValueError("rho1 and rho2 must be positive")
    f1 = reconstruct_fibre(L, rho1, tau, cert, rcfg, cfg)
    f2 = reconstruct_fibre(L, rho2, tau, cert, rcfg, cfg)
    scale = rho2 / rho1
    denom = np.maximum(np.linalg.norm(f2.points, axis=1), 1e-300)
    metric = float(
        (np.linalg.norm(f2.points - scale * f1.points, axis=1) / denom).max()
    )
    return _report("rho-scaling", metric, tol, f"rho {rho1} vs {rho2}")


def check_gauss_injectivity(fibre: BoundaryFibre) -> PropertyReport:
    """Strict convexity surrogate: as the normal angle increases around the
    fan, the boundary-point angle must strictly increase (CCW).  The metric is
    the worst backtrack; exact ties (duplicate points for distinct normals)
    fail with a tiny positive marker."""
    phi = np.arctan2(fibre.points[:, 1], fibre.points[:, 0])
    raw = np.diff(np.append(phi, phi[0]))
    signed = (raw + math.pi) % (2.0 * math.pi) - math.pi
    worst = float(signed.min())
    if worst > 0.0:
        metric = 0.0
    else:
        metric = max(-worst, _TINY)
    return _report(
        "gauss-injectivity", metric, 0.0, f"min angular increment {worst:.3e}"
    )


def check_backward_invariance(
    L: LinearField,
    rho: float,
    cert: StabilityCertificate,
    fibre: BoundaryFibre,
    depth: float,
    rcfg: ReconstructionConfig,
    cfg: IntegratorConfig,
    tol: float,
    angle_tol: float = 0.05,
    method: str = "auto",
) -> PropertyReport:
    """Backward invariance of the normal bundle, measured against an
    independently reconstructed earlier fibre.

    'transport' integrates each (x_i, n_i) literally backward by ``depth``
    and measures the distance to the earlier polygon plus the normal mismatch
    at the nearest entry.  That route is exact only while the backward error
    amplification |Psi(tau-depth, tau)| stays small; beyond ~1e4 the
    transported states are numerically meaningless (any reconstruction error
    blows past every tolerance), so 'auto' switches to the equivalent
    well-posed formulation: pull the normals back (contracting), reconstruct
    the boundary point y_i carrying each transported normal at tau - depth,
    compare y_i against the earlier polygon, and confirm the forward
    variation-of-constants identity x_i(tau) = P(tau-depth) y_i + J_i.
    The angle clause compares each transported normal with the normal of the
    nearest earlier-fibre entry and enters the metric scaled by
    tol/angle_tol.
    """
    if not depth > 0:
        raise ValueError("depth must be positive")
    tau = fibre.time
    t_prev = tau - depth
    reference = reconstruct_fibre(L, rho, t_prev, cert, rcfg, cfg)

    if method == "auto":
        psi_fwd = transition_matrix(L.matrix, t_prev, tau, cfg).matrix
        smin = float(np.linalg.svd(psi_fwd, compute_uv=False).min())
        amplification = math.inf if smin == 0.0 else 1.0 / smin
        method = "transport" if amplification <= 1e4 else "stable"
    if method not in ("transport", "stable"):
        raise ValueError(f"unknown method {method!r}")

    if method == "transport":
        Xb, Nb = _transport_bundle(
            L, rho, np.asarray(fibre.points), np.asarray(fibre.normals), tau, t_prev, cfg
        )
        pos = _distance_to_polygon_boundary(Xb, np.asarray(reference.points))
        metric_pos = float(pos.max())
        candidates = Xb
        cand_normals = Nb
        extra = ""
    else:
        n_prev = _transport_normals(L, np.asarray(fibre.normals), tau, t_prev, cfg)
        seed = np.zeros(2) if rcfg.seed_point is None else np.asarray(rcfg.seed_point, float)
        y, _ = _pullback_sweep(L, rho, t_prev, rcfg.horizon, n_prev, seed, cfg)
        pos = _distance_to_polygon_boundary(y, np.asarray(reference.points))
        metric_pos = float(pos.max())
        # forward identity x_i(tau) = P(t_prev) y_i + J_i(t_prev)
        horizon = max(rcfg.horizon, depth)
        _, records = _pullback_sweep(
            L, rho, tau, horizon, np.asarray(fibre.normals), seed, cfg, record_at=[t_prev]
        )
        P, _, J = records[min(records.keys(), key=lambda s: abs(s - t_prev))]
        predicted = J + y @ P.T
        defect = float(np.linalg.norm(np.asarray(fibre.points) - predicted, axis=1).max())
        metric_pos = max(metric_pos, defect)
        candidates = y
        cand_normals = n_prev
        extra = f", identity defect {defect:.3e}"

    # normal mismatch at the nearest earlier-fibre entry
    ref_pts = np.asarray(reference.points)
    ref_nrm = np.asarray(reference.normals)
    worst_angle = 0.0
    for i in range(len(candidates)):
        j = int(np.argmin(np.linalg.norm(ref_pts - candidates[i], axis=1)))
        cosang = float(np.clip(cand_normals[i] @ ref_nrm[j], -1.0, 1.0))
        worst_angle = max(worst_angle, math.acos(cosang))
    metric = max(metric_pos, worst_angle * tol / angle_tol)
    return _report(
        "backward-invariance",
        metric,
        tol,
        f"method={method}, depth={depth}, max angle {worst_angle:.3e}{extra}",
    )


def check_pullback_decay(
    L: LinearField,
    cert: StabilityCertificate,
    tau: float,
    horizons: Sequence[float],
    rcfg: ReconstructionConfig,
    cfg: IntegratorConfig,
) -> PropertyReport:
    """Pullback convergence rate: distances between finite-horizon fibres and
    the deepest one must decay at least like e^{-0.8 gamma T}."""
    horizons = sorted(float(T) for T in horizons)
    if len(horizons) < 3:
        raise ValueError("need at least 3 horizons")

    def fibre_at(T):
        c = ReconstructionConfig(
            normal_count=rcfg.normal_count,
            horizon=T,
            seed_point=rcfg.seed_point,
            trunc_tol=rcfg.trunc_tol,
        )
        return reconstruct_fibre(L, 1.0, tau, cert, c, cfg)

    deepest = fibre_at(horizons[-1])
    gaps, errs = [], []
    for T in horizons[:-1]:
        e = hausdorff_distance(fibre_at(T).points, deepest.points)
        if e > 1e-14:
            gaps.append(T)
            errs.append(e)
    if len(errs) < 2:
        return _report(
            "pullback-decay", 0.0, 0.0, "already converged at all sampled horizons"
        )
    slope = float(np.polyfit(gaps, np.log(errs), 1)[0])
    metric = slope + 0.8 * cert.gamma
    return _report(
        "pullback-decay",
        metric,
        0.0,
        f"fitted slope {slope:.3f} vs required <= {-0.8 * cert.gamma:.3f}",
    )
