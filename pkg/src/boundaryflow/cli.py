"""Command-line interface: stability | boundary | cloud | verify | example.

Exit codes: 0 success, 1 config error, 2 instability, 3 integration failure,
4 property failure.  Bulk data goes to CSV (17 significant digits, atomic
writes), metadata and reports to JSON.  BOUNDARYFLOW_THREADS caps parallelism
across fibre times (0 or unset = auto).
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .core import FibreCloud, TimeInterval, BoundaryFibre, hausdorff_distance
from .integrate import IntegratorConfig, IntegrationError
from .linear import (
    LinearField,
    NotExponentiallyStableError,
    constant_field,
    diagonal_field,
    fit_certificate,
    linear_system_spec,
    paper_example_field,
    row_dominance_check,
)
from .boundary import ReconstructionConfig, reconstruct_fibre
from .cloud import CloudConfig, evolve_cloud
from .verify import (
    PropertyReport,
    check_backward_invariance,
    check_convexity,
    check_gauss_injectivity,
    check_scaling,
    check_symmetry,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNSTABLE = 2
EXIT_INTEGRATION = 3
EXIT_PROPERTY = 4

_DEFAULTS = {
    "system": "paper-example",
    "matrix": None,
    "rho": 1.0,
    "times": [-20.0, 0.0, 20.0],
    "normals": 150,
    "horizon": 10.0,
    "trajectories": 500,
    "t0": -100.0,
    "seed": 0,
    "step": 1e-3,
    "out": ".",
    "format": "csv",
    "window": [-50.0, 50.0],
    "segment_length": 0.1,
    "control_law": "unit-sphere",
    "depth": 10.0,
    "sample_pairs": 384,
}

_CUSTOM_ENV = {
    name: getattr(math, name)
    for name in ("sin", "cos", "tan", "atan", "atan2", "exp", "log", "sqrt",
                 "sinh", "cosh", "tanh", "pi", "e")
}


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, header: str, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(str(v) if isinstance(v, int) else _fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: str, payload):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _rows_to_json(path: str, header: str, rows):
    keys = header.split(",")
    payload = [dict(zip(keys, [v if isinstance(v, int) else float(v) for v in row])) for row in rows]
    _write_json(path, payload)


def _emit_table(cfg, path_base: str, header: str, rows):
    if cfg["format"] == "json":
        _rows_to_json(path_base + ".json", header, rows)
        return path_base + ".json"
    _write_csv(path_base + ".csv", header, rows)
    return path_base + ".csv"


def _parse_reals(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    items = [s for s in str(text).split(",") if s.strip() != ""]
    return [float(s) for s in items]


def _parse_window(value) -> TimeInterval:
    if isinstance(value, (list, tuple)):
        a, b = value
    else:
        a, b = str(value).split(":")
    return TimeInterval(float(a), float(b))


def _custom_field(matrix_spec) -> LinearField:
    rows = matrix_spec if isinstance(matrix_spec, list) else json.loads(matrix_spec)
    compiled = [[compile(str(e), "<matrix-entry>", "eval") for e in r] for r in rows]
    d = len(rows)

    def entries(t: float):
        loc = dict(_CUSTOM_ENV, t=t)
        return np.array(
            [[eval(c, {"__builtins__": {}}, loc) for c in row] for row in compiled],
            dtype=float,
        )

    return LinearField(dim=d, entries=entries, kind="custom")


def _build_field(cfg) -> LinearField:
    name = cfg["system"]
    if name == "paper-example":
        return paper_example_field()
    if name in ("constant", "diagonal", "custom"):
        if cfg["matrix"] is None:
            raise ConfigError(f"--matrix is required for system '{name}'")
        spec = cfg["matrix"]
        data = spec if isinstance(spec, list) else json.loads(spec)
        if name == "constant":
            return constant_field(data)
        if name == "diagonal":
            return diagonal_field(data)
        return _custom_field(data)
    raise ConfigError(f"unknown system {name!r}")


def _merge_config(args) -> dict:
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as f:
            loaded = json.load(f)
        for group in ("reconstruction", "cloud", "integrator"):
            nested = loaded.pop(group, None)
            if nested:
                loaded.update(nested)
        for key, value in loaded.items():
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = value
    for key in cfg:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    cfg["times"] = _parse_reals(cfg["times"])
    cfg["window"] = _parse_window(cfg["window"])
    cfg["rho"] = float(cfg["rho"])
    cfg["horizon"] = float(cfg["horizon"])
    cfg["depth"] = float(cfg["depth"])
    cfg["normals"] = int(cfg["normals"])
    cfg["trajectories"] = int(cfg["trajectories"])
    cfg["seed"] = int(cfg["seed"])
    cfg["step"] = float(cfg["step"])
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError(f"unknown format {cfg['format']!r}")
    return cfg


def _icfg(cfg) -> IntegratorConfig:
    return IntegratorConfig(step=cfg["step"])


def _fit_icfg(cfg) -> IntegratorConfig:
    # certificate sampling tolerates a coarser step than trajectory work
    return IntegratorConfig(step=max(cfg["step"], 2e-3))


def _rcfg(cfg, horizon=None) -> ReconstructionConfig:
    return ReconstructionConfig(
        normal_count=cfg["normals"],
        horizon=cfg["horizon"] if horizon is None else horizon,
    )


def _certificate(cfg, field):
    return fit_certificate(
        field,
        cfg["window"],
        sample_pairs=cfg["sample_pairs"],
        cfg=_fit_icfg(cfg),
        seed=cfg["seed"],
    )


def _max_workers(n_jobs: int) -> int:
    raw = os.environ.get("BOUNDARYFLOW_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = min(8, os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def _reconstruct_all(cfg, field, cert, horizon=None):
    rcfg = _rcfg(cfg, horizon)
    icfg = _icfg(cfg)
    times = cfg["times"]

    def job(tau):
        return reconstruct_fibre(field, cfg["rho"], tau, cert, rcfg, icfg)

    workers = _max_workers(len(times))
    if workers == 1 or len(times) == 1:
        return [job(t) for t in times]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, times))


def _fibre_rows(fibre: BoundaryFibre):
    return [
        (i, fibre.time, p[0], p[1], n[0], n[1])
        for i, (p, n) in enumerate(zip(fibre.points, fibre.normals))
    ]


def _fibre_path(outdir, tau):
    return os.path.join(outdir, f"fibre_tau={tau:g}")


def _cloud_path(outdir, t):
    return os.path.join(outdir, f"cloud_t={t:g}")


def _load_fibre(path_base: str, tau: float):
    for ext, loader in ((".csv", _load_csv_rows), (".json", _load_json_rows)):
        path = path_base + ext
        if os.path.exists(path):
            rows = loader(path)
            pts = np.array([[r["x1"], r["x2"]] for r in rows])
            nrm = np.array([[r["n1"], r["n2"]] for r in rows])
            return BoundaryFibre(time=tau, points=pts, normals=nrm)
    return None


def _load_cloud(path_base: str, t: float):
    for ext, loader in ((".csv", _load_csv_rows), (".json", _load_json_rows)):
        path = path_base + ext
        if os.path.exists(path):
            rows = loader(path)
            pts = np.array([[r["x1"], r["x2"]] for r in rows])
            return FibreCloud(time=t, points=pts)
    return None


def _load_csv_rows(path):
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    keys = lines[0].split(",")
    return [dict(zip(keys, map(float, ln.split(",")))) for ln in lines[1:]]


def _load_json_rows(path):
    with open(path) as f:
        return json.load(f)


def _evolve(cfg, field):
    spec = linear_system_spec(field, cfg["rho"])
    ccfg = CloudConfig(
        trajectory_count=cfg["trajectories"],
        segment_length=cfg["segment_length"],
        control_law=cfg["control_law"],
        seed=cfg["seed"],
    )
    t0 = cfg["t0"]
    t_end = max(cfg["times"])
    if t0 >= min(cfg["times"]):
        raise ConfigError(f"t0={t0} must precede every output time")
    start = FibreCloud(time=t0, points=np.zeros((1, field.dim)))
    return evolve_cloud(
        spec, ccfg, start, TimeInterval(t0, t_end), _icfg(cfg), cfg["times"]
    ), ccfg


def cmd_stability(cfg) -> int:
    field = _build_field(cfg)
    grid = np.linspace(cfg["window"].t0, cfg["window"].t1, 2001)
    dominance = row_dominance_check(field, grid)
    try:
        cert = _certificate(cfg, field)
    except NotExponentiallyStableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    os.makedirs(cfg["out"], exist_ok=True)
    payload = {
        "K": cert.K,
        "gamma": cert.gamma,
        "method": cert.method,
        "window": [cfg["window"].t0, cfg["window"].t1],
        "margin": dominance.min_margin,
    }
    path = os.path.join(cfg["out"], "certificate.json")
    _write_json(path, payload)
    print(f"K={cert.K:.6g} gamma={cert.gamma:.6g} margin={dominance.min_margin:.6g} -> {path}")
    return EXIT_OK


def cmd_boundary(cfg) -> int:
    if not cfg["times"]:
        print("error: no fibre times given", file=sys.stderr)
        return EXIT_CONFIG
    field = _build_field(cfg)
    try:
        cert = _certificate(cfg, field)
    except NotExponentiallyStableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    os.makedirs(cfg["out"], exist_ok=True)
    fibres = _reconstruct_all(cfg, field, cert)
    for tau, fibre in zip(cfg["times"], fibres):
        path = _emit_table(cfg, _fibre_path(cfg["out"], tau), "index,tau,x1,x2,n1,n2", _fibre_rows(fibre))
        print(f"fibre tau={tau:g}: {len(fibre)} entries -> {path}")
    return EXIT_OK


def cmd_cloud(cfg) -> int:
    field = _build_field(cfg)
    try:
        clouds, ccfg = _evolve(cfg, field)
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    os.makedirs(cfg["out"], exist_ok=True)
    for cloud in clouds:
        rows = [(i, cloud.time, p[0], p[1]) for i, p in enumerate(cloud.points)]
        path = _emit_table(cfg, _cloud_path(cfg["out"], cloud.time), "traj,t,x1,x2", rows)
        print(f"cloud t={cloud.time:g}: {len(cloud.points)} points -> {path}")
    _write_json(
        os.path.join(cfg["out"], "cloud_meta.json"),
        {
            "seed": ccfg.seed,
            "control_law": ccfg.control_law,
            "segment_length": ccfg.segment_length,
            "trajectory_count": ccfg.trajectory_count,
            "t0": cfg["t0"],
        },
    )
    return EXIT_OK


def _run_checks(cfg, field, cert, fibres, clouds) -> list[PropertyReport]:
    icfg = _icfg(cfg)
    rcfg = _rcfg(cfg)
    reports = []
    for tau, fibre in zip(cfg["times"], fibres):
        reports.append(check_symmetry(fibre, tol=1e-6))
        reports.append(check_gauss_injectivity(fibre))
    if clouds is not None:
        for fibre, cloud in zip(fibres, clouds):
            reports.append(check_convexity(fibre, cloud, tol=1e-3))
    for tau, fibre in zip(cfg["times"], fibres):
        reports.append(
            check_scaling(field, cert, tau, cfg["rho"], 2.0 * cfg["rho"], rcfg, icfg, tol=1e-6)
        )
        reports.append(
            check_backward_invariance(
                field, cfg["rho"], cert, fibre, cfg["depth"], rcfg, icfg, tol=1e-3
            )
        )
    doubled = _reconstruct_all(cfg, field, cert, horizon=2.0 * cfg["horizon"])
    for tau, fibre, fibre2 in zip(cfg["times"], fibres, doubled):
        delta = hausdorff_distance(fibre.points, fibre2.points)
        reports.append(
            PropertyReport(
                name="pullback-doubling",
                passed=bool(delta <= 1e-6),
                metric=float(delta),
                tolerance=1e-6,
                details=f"tau={tau:g}, horizon {cfg['horizon']:g} -> {2 * cfg['horizon']:g}",
            )
        )
    return reports


def cmd_verify(cfg) -> int:
    if not cfg["times"]:
        print("error: no fibre times given", file=sys.stderr)
        return EXIT_CONFIG
    field = _build_field(cfg)
    try:
        cert = _certificate(cfg, field)
    except NotExponentiallyStableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE

    # consume exported files when present, recompute otherwise
    fibres, clouds, missing_cloud = [], [], False
    for tau in cfg["times"]:
        fibres.append(_load_fibre(_fibre_path(cfg["out"], tau), tau))
        clouds.append(_load_cloud(_cloud_path(cfg["out"], tau), tau))
    if any(f is None for f in fibres):
        fibres = _reconstruct_all(cfg, field, cert)
    if any(c is None for c in clouds):
        try:
            clouds, _ = _evolve(cfg, field)
        except IntegrationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INTEGRATION

    reports = _run_checks(cfg, field, cert, fibres, clouds)
    os.makedirs(cfg["out"], exist_ok=True)
    path = os.path.join(cfg["out"], "report.json")
    _write_json(path, [r.to_dict() for r in reports])
    failed = [r for r in reports if not r.passed]
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: metric {r.metric:.3e} (tol {r.tolerance:g})")
    print(f"report -> {path}")
    return EXIT_OK if not failed else EXIT_PROPERTY


def cmd_example(cfg) -> int:
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    os.makedirs(cfg["out"], exist_ok=True)
    field = _build_field(cfg)
    try:
        cert = _certificate(cfg, field)
    except NotExponentiallyStableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    _write_json(
        os.path.join(cfg["out"], "certificate.json"),
        {
            "K": cert.K,
            "gamma": cert.gamma,
            "method": cert.method,
            "window": [cfg["window"].t0, cfg["window"].t1],
        },
    )

    fibres = _reconstruct_all(cfg, field, cert)
    for tau, fibre in zip(cfg["times"], fibres):
        _emit_table(cfg, _fibre_path(cfg["out"], tau), "index,tau,x1,x2,n1,n2", _fibre_rows(fibre))

    try:
        clouds, ccfg = _evolve(cfg, field)
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    for cloud in clouds:
        rows = [(i, cloud.time, p[0], p[1]) for i, p in enumerate(cloud.points)]
        _emit_table(cfg, _cloud_path(cfg["out"], cloud.time), "traj,t,x1,x2", rows)

    reports = _run_checks(cfg, field, cert, fibres, clouds)
    _write_json(os.path.join(cfg["out"], "report.json"), [r.to_dict() for r in reports])
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: metric {r.metric:.3e} (tol {r.tolerance:g})")

    manifest = {
        "version": __version__,
        "config": {
            "system": cfg["system"],
            "rho": cfg["rho"],
            "times": cfg["times"],
            "normals": cfg["normals"],
            "horizon": cfg["horizon"],
            "trajectories": cfg["trajectories"],
            "t0": cfg["t0"],
            "seed": cfg["seed"],
            "step": cfg["step"],
            "segment_length": cfg["segment_length"],
            "control_law": cfg["control_law"],
            "format": cfg["format"],
        },
        "certificate": {"K": cert.K, "gamma": cert.gamma, "method": cert.method},
        "timestamps": {
            "started": started,
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    }
    _write_json(os.path.join(cfg["out"], "manifest.json"), manifest)
    if any(not r.passed for r in reports):
        return EXIT_PROPERTY
    print(f"example outputs -> {cfg['out']}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", choices=["paper-example", "constant", "diagonal", "custom"])
    common.add_argument("--matrix", help="JSON matrix (constant/custom) or rate list (diagonal)")
    common.add_argument("--rho", type=float)
    common.add_argument("--times", help="comma-separated fibre times")
    common.add_argument("--normals", type=int)
    common.add_argument("--horizon", type=float)
    common.add_argument("--trajectories", type=int)
    common.add_argument("--t0", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--step", type=float)
    common.add_argument("--out")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--config", help="JSON config file; flags override")
    common.add_argument("--window", help="certificate window as a:b")
    common.add_argument("--depth", type=float, help="backward-invariance depth")

    parser = argparse.ArgumentParser(prog="boundaryflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("stability", parents=[common])
    sub.add_parser("boundary", parents=[common])
    sub.add_parser("cloud", parents=[common])
    sub.add_parser("verify", parents=[common])
    sub.add_parser("example", parents=[common])
    return parser


_COMMANDS = {
    "stability": cmd_stability,
    "boundary": cmd_boundary,
    "cloud": cmd_cloud,
    "verify": cmd_verify,
    "example": cmd_example,
}


def _preprocess(argv):
    """Merge '--flag value' into '--flag=value' for values that start with a
    dash (negative times/windows), which argparse would mistake for flags."""
    if argv is None:
        argv = sys.argv[1:]
    merged = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok in ("--times", "--window", "--matrix") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            merged.append(f"{tok}={argv[i + 1]}")
            skip = True
        else:
            merged.append(tok)
    return merged


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(_preprocess(argv))
    try:
        cfg = _merge_config(args)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
