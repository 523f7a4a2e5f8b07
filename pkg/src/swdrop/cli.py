"""Command-line runner: configuration, orchestration and deterministic output.

Usage::

    swdrop simulate --N 256 --eps 1e-3 --T 3 --out run1
    swdrop spectrum --N 128
    swdrop decay-fit --input runs/run1 --column E0
    swdrop convergence --grids 64,128,256 --workers 3

A configuration is a JSON document (``--config``) plus flag overrides;
flags win.  Outputs go to ``$SWDROP_OUTPUT_ROOT/<out>`` (default root
``./runs``, default ``out`` derived from the command and config hash).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import diagnostics, linear_stability
from .equilibrium import EquilibriumProfile, coefficient_ms, mass_integral, ode_residual, quartic_bump
from .eulerian import reconstruct, shape_distance
from .grid import build_grid, weighted_norm
from .lagrangian_solver import (
    InvalidHeight,
    IncompatibleMass,
    LagrangianSystem,
    SolverConfig,
    SolverError,
    StateError,
    Variant,
    lagrangian_map,
    make_state,
    perturbation_family,
    simulate,
)

COMMANDS = ("equilibrium", "simulate", "spectrum", "decay-fit", "inequalities", "convergence",
            "general-data")
FAMILIES = ("zero", "even_quartic", "odd_cubic", "mixed")
ENV_ROOT = "SWDROP_OUTPUT_ROOT"
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


class HeightFileError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "simulate"
    N: int = 128
    dt: float = 1e-3
    T: float = 1.0
    scheme: str = "implicit_midpoint"
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    eta_xi_floor: float = 0.25
    stride: int = 10
    nu: float = 0.0
    slip: float = 0.0
    family: str = "mixed"
    eps: float = 1e-3
    velocity_eps: float = 0.0
    center: bool = True
    linearized: bool = False
    height_file: str | None = None
    seed: int = 0
    snapshot_every: int = 10
    grids: list = field(default_factory=lambda: [64, 128, 256])
    workers: int = 1
    input: str | None = None
    column: str = "E0"
    window: list | None = None
    reference_rate: float | None = None
    out: str | None = None

    def validate(self) -> "RunConfig":
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(name, msg)

        need(self.command in COMMANDS, "command", f"must be one of {COMMANDS}")
        need(isinstance(self.N, int) and self.N >= 16 and self.N % 2 == 0, "N",
             "must be an even integer >= 16")
        for name in ("dt", "T", "newton_tol"):
            v = getattr(self, name)
            need(isinstance(v, (int, float)) and math.isfinite(v) and v > 0, name,
                 "must be a positive finite number")
        need(self.scheme in ("implicit_midpoint", "bdf1"), "scheme",
             "must be implicit_midpoint or bdf1")
        need(0 < self.eta_xi_floor < 1, "eta_xi_floor", "must lie in (0, 1)")
        for name in ("newton_max_iter", "stride", "snapshot_every", "workers"):
            v = getattr(self, name)
            need(isinstance(v, int) and v >= 1, name, "must be an integer >= 1")
        for name in ("nu", "slip", "eps", "velocity_eps"):
            v = getattr(self, name)
            need(isinstance(v, (int, float)) and math.isfinite(v) and v >= 0, name,
                 "must be a nonnegative finite number")
        need(self.family in FAMILIES, "family", f"must be one of {FAMILIES}")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed", "must be a nonnegative integer")
        need(isinstance(self.grids, list) and len(self.grids) >= 3
             and all(isinstance(n, int) and n >= 16 and n % 2 == 0 for n in self.grids)
             and all(b == 2 * a for a, b in zip(self.grids, self.grids[1:])), "grids",
             "must be at least three even sizes, each doubling the previous")
        if self.window is not None:
            need(isinstance(self.window, list) and len(self.window) == 2
                 and 0 <= self.window[0] < self.window[1], "window", "must be [t0, t1] with t0 < t1")
        if self.reference_rate is not None:
            need(self.reference_rate > 0, "reference_rate", "must be positive")
        need(round(self.T / self.dt) >= 1, "T", "must cover at least one step")
        if self.command == "decay-fit":
            need(self.input is not None, "input", "decay-fit needs --input (trajectory.csv or run dir)")
        return self

    def solver_config(self, **over) -> SolverConfig:
        kw = dict(dt=self.dt, T=self.T, scheme=self.scheme, newton_tol=self.newton_tol,
                  newton_max_iter=self.newton_max_iter, eta_xi_floor=self.eta_xi_floor,
                  stride=self.stride, variant=self.variant(), linearized=self.linearized)
        kw.update(over)
        return SolverConfig(**kw)

    def variant(self) -> Variant:
        return Variant(nu=float(self.nu), slip=float(self.slip))

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def config_from(doc: dict | None = None, **overrides) -> RunConfig:
    """Merge a JSON document and overrides (non-``None`` overrides win)."""
    names = {f.name for f in fields(RunConfig)}
    merged = {}
    for src in (doc or {}), {k: v for k, v in overrides.items() if v is not None}:
        for k, v in src.items():
            if k not in names:
                raise ConfigError(k, "unknown configuration field")
            merged[k] = v
    cfg = RunConfig(**merged)
    # JSON numbers for integer fields
    for name in ("N", "newton_max_iter", "stride", "snapshot_every", "workers", "seed"):
        v = getattr(cfg, name)
        if isinstance(v, float) and v.is_integer():
            setattr(cfg, name, int(v))
    return cfg.validate()


# ------------------------------------------------------------------ output helpers
def output_root() -> Path:
    return Path(os.environ.get(ENV_ROOT, "runs"))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_csv(path: Path, columns: dict) -> None:
    """Write equal-length columns with 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(c[i]) for c in cols])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def code_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # pragma: no cover - uninstalled source tree
        return "unknown"


def load_height_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``x, h`` samples from a CSV file with a header row.

    Raises
    ------
    HeightFileError
        Malformed file, non-increasing ``x``, negative ``h`` or nonzero
        endpoint heights.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise HeightFileError(f"cannot read {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]][:2] != ["x", "h"]:
        raise HeightFileError("expected a header with columns x,h")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise HeightFileError(f"malformed row: {exc}") from exc
    if data.shape[0] < 3 or not np.all(np.isfinite(data)):
        raise HeightFileError("need at least three finite rows")
    x, h = data[:, 0], data[:, 1]
    if np.any(np.diff(x) <= 0):
        raise HeightFileError("x must be strictly increasing")
    if np.any(h < 0):
        raise HeightFileError("h must be nonnegative")
    scale = float(np.max(h))
    if abs(h[0]) > 1e-12 * scale or abs(h[-1]) > 1e-12 * scale:
        raise HeightFileError(f"h must vanish at the endpoints (got {h[0]:g}, {h[-1]:g})")
    return x, h


# ------------------------------------------------------------------ commands
def _initial_state(cfg: RunConfig, system: LagrangianSystem):
    th = perturbation_family(cfg.family, cfg.eps)
    ve = cfg.velocity_eps
    vel = (lambda s: ve * (0.5 + s - s**3 / 3)) if ve else None
    return make_state(system, th, vel, center=cfg.center and system.mode == "near_equilibrium")


def _write_snapshots(root: Path, states, system, every: int) -> int:
    count = 0
    for k, st in enumerate(states):
        if k % every and k != len(states) - 1:
            continue
        snap = reconstruct(st, system)
        stem = root / "snapshots" / f"snap_{k:05d}"
        write_csv(stem.with_suffix(".csv"), {"xi": snap.xi, "x": snap.x, "h": snap.h,
                                             "u": snap.u, "eta_xi": snap.eta_xi})
        write_json(stem.with_suffix(".json"), snap.sidecar())
        count += 1
    return count


def _trajectory_summary(traj, system: LagrangianSystem) -> dict:
    reps = traj.reports
    t = np.array([r.t for r in reps])
    bal = diagnostics.balance_residuals(traj)
    out = {"n_steps": int(len(traj.steps["t"])), "t_final": float(traj.final.t), **bal}
    mass = np.array([r.mass for r in reps])
    out["mass_drift_rel"] = float(np.max(np.abs(mass - mass[0])) / mass[0])
    P = np.array([r.momentum for r in reps])
    scale = max(float(np.max([np.dot(system.mass_nodes, np.abs(s.theta_t)) for s in traj.states])),
                1e-300)
    out["momentum_drift_abs"] = float(np.max(np.abs(P - P[0])))
    out["momentum_drift_rel"] = float(np.max(np.abs(P - P[0])) / scale)
    dH = traj.steps["dH"]
    out["hamiltonian_monotone"] = bool(np.all(dH <= 0.0)) if dH.size else True
    ek = np.array([r.sum_Ek + r.E_delta for r in reps])
    if np.all(np.isfinite(ek)) and ek.size > 1:
        out["sum_Ek_plus_Edelta_monotone"] = bool(np.all(np.diff(ek) <= 1e-14 * max(np.max(np.abs(ek)), 1e-300)))
    out["newton_iterations_max"] = int(np.max(traj.steps["iterations"])) if dH.size else 0
    T = t[-1]
    for col in ("E_NL1", "E0", "hamiltonian_excess"):
        vals = np.array([getattr(r, col) for r in reps])
        try:
            out[f"decay_rate_{col}"] = linear_stability.decay_fit(t, vals) if T > 0 else None
        except linear_stability.FitError:
            out[f"decay_rate_{col}"] = None
    try:
        out["elliptic_ratio_max"] = diagnostics.elliptic_ratio_check(reps)
    except diagnostics.EmptyResult:
        out["elliptic_ratio_max"] = None
    if system.mode == "near_equilibrium":
        out["final_shape_distance"], out["final_shift"] = shape_distance(
            reconstruct(traj.final, system), EquilibriumProfile(system.params))
    e = np.array([1.0 + system.D @ s.theta for s in traj.states])
    out["eta_xi_min"] = float(e.min())
    out["eta_xi_max"] = float(e.max())
    phi = np.array([r.Phi for r in reps])
    if np.any(np.isfinite(phi)):
        out["Phi0"] = float(phi[0])
        out["Phi_max"] = float(np.nanmax(phi))
        out["Phi_bound_ok"] = bool(np.nanmax(phi) <= 4.0 * phi[0] + 1.0)
    if not system.variant.static:
        out["contact_a_final"] = float(traj.final.theta[0]) - 1.0
        out["contact_b_final"] = float(traj.final.theta[-1]) + 1.0
    return out


def _run_trajectory(cfg: RunConfig, system: LagrangianSystem, init, root: Path) -> dict:
    traj = simulate(init, cfg.solver_config(), system)
    rows = [r.as_row() for r in traj.reports]
    write_csv(root / "trajectory.csv", {k: [r[k] for r in rows] for k in rows[0]})
    summary = _trajectory_summary(traj, system)
    summary["snapshots_written"] = _write_snapshots(root, traj.states, system, cfg.snapshot_every)
    if traj.error is not None:
        raise _RunFailure(traj.error, summary)
    return summary


class _RunFailure(RuntimeError):
    def __init__(self, error: dict, summary: dict):
        super().__init__(error.get("message", "solver error"))
        self.error = error
        self.summary = summary


def cmd_equilibrium(cfg: RunConfig, root: Path) -> dict:
    prof = EquilibriumProfile()
    grid = build_grid(cfg.N, prof)
    xi = grid.xi
    derivs = {f"h{k}": prof.eval(xi, k) for k in range(5)}
    ms = coefficient_ms(prof, xi)
    write_csv(root / "equilibrium.csv", {"xi": xi, **derivs, "ms": ms})
    return {
        "mass": mass_integral(prof),
        "ode_residual": ode_residual(prof, grid),
        "third_minus_first_max": float(np.max(np.abs(derivs["h3"] - derivs["h1"]))),
        "h2_max": float(np.max(derivs["h2"])),
        "ms_min": float(np.min(ms)),
        "ms_at_0": float(coefficient_ms(prof, 0.0)),
    }


def cmd_simulate(cfg: RunConfig, root: Path) -> dict:
    system = LagrangianSystem(build_grid(cfg.N), cfg.variant(), linearized=cfg.linearized)
    return _run_trajectory(cfg, system, _initial_state(cfg, system), root)


def cmd_general_data(cfg: RunConfig, root: Path) -> dict:
    if cfg.height_file is None:
        prof = quartic_bump()
        system = LagrangianSystem(build_grid(cfg.N, prof), cfg.variant())
        init = make_state(system, np.zeros(cfg.N + 1))
        source = prof.descriptor
    else:
        x, h = load_height_file(cfg.height_file)
        system = LagrangianSystem(build_grid(cfg.N), cfg.variant(), mode="general")
        eta = lagrangian_map(x, h, system.grid)
        init = make_state(system, eta - system.grid.xi)
        source = {"height_file": Path(cfg.height_file).name}
    out = _run_trajectory(cfg, system, init, root)
    out["initial_data"] = source
    out["eta_xi_regime_ok"] = bool(out["eta_xi_min"] >= 0.5 and out["eta_xi_max"] <= 1.5)
    return out


def cmd_spectrum(cfg: RunConfig, root: Path) -> dict:
    grid = build_grid(cfg.N)
    ops = linear_stability.assemble(grid)
    res = linear_stability.spectrum(ops)
    ev = res.eigenvalues
    kernel = np.zeros(ev.size, dtype=bool)
    kernel[: res.kernel_dim] = True
    write_csv(root / "spectrum.csv", {"index": np.arange(ev.size), "re": ev.real,
                                      "im": ev.imag, "kernel": kernel})
    c1 = linear_stability.choose_c1(grid, ops=ops)
    slow = res.constrained[0]
    return {
        "spectral_abscissa": res.abscissa,
        "lambda_num": res.lambda_num,
        "energy_rate_prediction": 2.0 * res.lambda_num,
        "slowest_eigenvalue": [float(slow.real), float(slow.imag)],
        "kernel_dim": res.kernel_dim,
        "eigenpair_residual": res.residual,
        "stiffest_real_part": float(np.min(res.constrained.real)),
        "c1": c1.c1,
        "kappa_max": c1.kappa_max,
    }


def _read_trajectory(path: Path) -> dict:
    if path.is_dir():
        path = path / "trajectory.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise HeightFileError(f"{path} has no rows")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def cmd_decay_fit(cfg: RunConfig, root: Path) -> dict:
    data = _read_trajectory(Path(cfg.input))
    if cfg.column not in data:
        raise ConfigError("column", f"not in trajectory (have {sorted(data)})")
    window = tuple(cfg.window) if cfg.window else None
    rate = linear_stability.decay_fit(data["t"], data[cfg.column], window)
    out = {"column": cfg.column, "rate": rate, "window": list(window) if window else None}
    ref = cfg.reference_rate
    if ref is None:
        man = Path(cfg.input)
        man = (man if man.is_dir() else man.parent).parent
        # look for a sibling spectrum run in the same output root
        cands = sorted(man.glob("*/manifest.json"))
        for c in cands:
            doc = json.loads(c.read_text())
            if doc.get("command") == "spectrum" and doc["config"]["N"] == cfg.N:
                ref = doc["summary"]["energy_rate_prediction"]
                out["reference_source"] = c.parent.name
                break
    if ref is not None:
        out["reference_rate"] = ref
        out["relative_deviation"] = abs(rate - ref) / ref
    return out


def cmd_inequalities(cfg: RunConfig, root: Path) -> dict:
    estimates = []
    for k, p in ((1.0, 2.0), (2.0, 2.0), (0.0, 2.0), (1.5, 2.0), (1.0, 3.0)):
        for fam in ("monomials", "trig", "random"):
            estimates.append(diagnostics.hardy_check(k, p, fam, seed=cfg.seed).to_dict())
    for fam in ("monomials", "trig", "random"):
        estimates += [e.to_dict() for e in diagnostics.poincare_check(fam, seed=cfg.seed)]
    one = lambda s: np.ones_like(s)  # noqa: E731
    zero = lambda s: np.zeros_like(s)  # noqa: E731
    ident = lambda s: s  # noqa: E731
    oracles = [
        {"k": 1.0, "p": 2.0, "g": "1", "ratio": diagnostics.hardy_ratio(one, zero, 1.0, 2.0), "expected": 3.0},
        {"k": 1.0, "p": 2.0, "g": "s", "ratio": diagnostics.hardy_ratio(ident, one, 1.0, 2.0), "expected": 0.625},
        {"k": 0.0, "p": 2.0, "g": "s", "ratio": diagnostics.hardy_ratio(ident, one, 0.0, 2.0), "expected": 1.0},
    ]
    for o in oracles:
        o["abs_error"] = abs(o["ratio"] - o["expected"])
    write_json(root / "inequalities.json", {"estimates": estimates, "hardy_oracles": oracles})
    return {
        "n_estimates": len(estimates),
        "all_finite_positive": all(e["constant"] is not None and 0 < e["constant"] < np.inf for e in estimates),
        "all_stable": all(e["stable"] for e in estimates),
        "hardy_oracle_max_error": max(o["abs_error"] for o in oracles),
    }


def _convergence_member(args) -> tuple:
    cfg, N = args
    system = LagrangianSystem(build_grid(N), cfg.variant(), linearized=cfg.linearized)
    traj = simulate(_initial_state(cfg, system), cfg.solver_config(stride=10**9), system,
                    reports=False, raise_errors=True)
    return N, traj.final.theta, traj.final.theta_t


def run_parallel(func, items, workers: int = 1) -> list:
    """Map ``func`` over independent runs, optionally in worker processes."""
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(func, items))


def self_convergence(finals: dict, grids) -> dict:
    """Observed orders from successive differences on the coarsest nodes.

    Differences are measured in the ``h^{1/2}``-weighted norm on the
    coarse grid; the order of each consecutive pair of differences is
    ``log2(d_i / d_{i+1})``.
    """
    grids = sorted(grids)
    coarse = build_grid(grids[0])
    out = {}
    for idx, name in ((0, "theta"), (1, "theta_t")):
        diffs = []
        for a, b in zip(grids, grids[1:]):
            ua = finals[a][idx][:: a // grids[0]]
            ub = finals[b][idx][:: b // grids[0]]
            diffs.append(weighted_norm(coarse, ua - ub, 0.5))
        orders = [math.log2(d0 / d1) if d1 > 0 and d0 > 0 else None
                  for d0, d1 in zip(diffs, diffs[1:])]
        out[f"diffs_{name}"] = diffs
        out[f"orders_{name}"] = orders
        out[f"order_{name}"] = min(o for o in orders if o is not None) if any(
            o is not None for o in orders) else None
    return out


def cmd_convergence(cfg: RunConfig, root: Path) -> dict:
    results = run_parallel(_convergence_member, [(cfg, N) for N in cfg.grids], cfg.workers)
    finals = {N: (th, v) for N, th, v in results}
    for N, th, v in results:
        write_csv(root / f"final_N{N}.csv", {"xi": build_grid(N).xi, "theta": th, "theta_t": v})
    out = self_convergence(finals, cfg.grids)
    out["grids"] = list(cfg.grids)
    return out


HANDLERS = {
    "equilibrium": cmd_equilibrium,
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "decay-fit": cmd_decay_fit,
    "inequalities": cmd_inequalities,
    "convergence": cmd_convergence,
    "general-data": cmd_general_data,
}


def run(cfg: RunConfig, root: Path | None = None) -> tuple[int, Path]:
    """Execute a validated configuration; returns the exit status and output dir."""
    cfg.validate()
    base = output_root() if root is None else Path(root)
    out_dir = base / (cfg.out or f"{cfg.command}-{cfg.hash()}")
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": cfg.command, "config": cfg.to_dict(), "config_hash": cfg.hash(),
                "code_version": code_version()}
    status = 0
    try:
        manifest["summary"] = HANDLERS[cfg.command](cfg, out_dir)
        manifest["status"] = "ok"
    except _RunFailure as exc:
        manifest["summary"] = exc.summary
        manifest["status"] = "error"
        manifest["error"] = exc.error
        status = EXIT_RUNTIME
    except (SolverError, StateError, IncompatibleMass, InvalidHeight, HeightFileError,
            linear_stability.SpectrumError, linear_stability.AdmissibilityError,
            linear_stability.FitError, diagnostics.ProjectionError) as exc:
        err = exc.to_dict() if isinstance(exc, SolverError) else {
            "type": type(exc).__name__, "message": str(exc)}
        manifest["status"] = "error"
        manifest["error"] = err
        status = EXIT_RUNTIME
    if status:
        write_json(out_dir / "error.json", manifest["error"])
    write_json(out_dir / "manifest.json", manifest)
    return status, out_dir


# ------------------------------------------------------------------ argument parsing
def _int_list(text: str) -> list:
    return [int(s) for s in text.split(",") if s.strip()]


def _float_pair(text: str) -> list:
    vals = [float(s) for s in text.split(",")]
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("expected t0,t1")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swdrop", description="Viscous shallow-water droplet runs")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output directory name under the output root")
        p.add_argument("--N", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--scheme", choices=("implicit_midpoint", "bdf1"))
        p.add_argument("--newton-tol", dest="newton_tol", type=float)
        p.add_argument("--newton-max-iter", dest="newton_max_iter", type=int)
        p.add_argument("--eta-xi-floor", dest="eta_xi_floor", type=float)
        p.add_argument("--stride", type=int)
        p.add_argument("--nu", type=float)
        p.add_argument("--slip", type=float)
        p.add_argument("--family", choices=FAMILIES)
        p.add_argument("--eps", type=float)
        p.add_argument("--velocity-eps", dest="velocity_eps", type=float)
        p.add_argument("--no-center", dest="center", action="store_const", const=False)
        p.add_argument("--linearized", action="store_const", const=True)
        p.add_argument("--height-file", dest="height_file")
        p.add_argument("--seed", type=int)
        p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
        p.add_argument("--grids", type=_int_list)
        p.add_argument("--workers", type=int)
        p.add_argument("--input")
        p.add_argument("--column")
        p.add_argument("--window", type=_float_pair)
        p.add_argument("--reference-rate", dest="reference_rate", type=float)
    return ap


def _usage(exc) -> int:
    fld = getattr(exc, "field", "config")
    json.dump({"error": "usage", "field": fld, "message": str(exc)}, sys.stderr)
    sys.stderr.write("\n")
    return EXIT_USAGE


def main(argv=None) -> int:
    ap = build_parser()
    args = vars(ap.parse_args(argv))
    path = args.pop("config")
    try:
        doc = {}
        if path:
            try:
                doc = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError("config", str(exc)) from exc
            if not isinstance(doc, dict):
                raise ConfigError("config", "must be a JSON object")
        doc = {**doc, "command": args.pop("command")}
        cfg = config_from(doc, **args)
    except (ConfigError, TypeError) as exc:
        return _usage(exc)
    try:
        status, out_dir = run(cfg)
    except ConfigError as exc:
        return _usage(exc)
    man = json.loads((out_dir / "manifest.json").read_text())
    if status:
        json.dump({"error": "runtime", "detail": man["error"]}, sys.stderr)
        sys.stderr.write("\n")
    print(out_dir)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
