"""Energy reports, nonlinear energy functionals and inequality estimators."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .grid import Grid, build_grid, weighted_sq
from .lagrangian_solver import LagrangianSystem, LagState


class EmptyResult(ValueError):
    """No state qualified for the requested statistic."""


class BorderlineError(ValueError):
    """The Hardy inequality is not available for ``k + 1/p = 1``."""


class ProjectionError(ValueError):
    pass


NAN = float("nan")


@dataclass
class EnergyReport:
    t: float
    hamiltonian: float
    hamiltonian_excess: float
    mass: float
    momentum: float
    viscous_dissipation: float
    contact_line_dissipation: float
    slip_dissipation: float
    E0: float
    D0: float
    E_NL1: float
    E_NL2: float
    elliptic_ratio: float
    E_delta: float
    sum_Ek: float
    Phi: float
    jerk_available: bool = True

    def as_row(self) -> dict:
        return asdict(self)


@dataclass
class ReportContext:
    """Per-trajectory data shared by successive reports.

    ``ladder`` selects how ``theta_ttt`` is obtained: ``"jacobian"``
    differentiates the semi-discrete force along the flow, and
    ``"history"`` applies a second-order backward difference to stored
    accelerations.
    """

    system: LagrangianSystem
    ops: object = None
    c1: float = NAN
    ladder: str = "jacobian"
    history: deque = field(default_factory=lambda: deque(maxlen=3))

    @classmethod
    def for_system(cls, system: LagrangianSystem, c1: float | None = None,
                   ladder: str = "jacobian") -> "ReportContext":
        from .linear_stability import assemble, choose_c1

        ops = None
        # the linear pair only makes sense about the equilibrium
        if system.variant.static and system.mode == "near_equilibrium":
            ops = assemble(system.grid)
            if c1 is None:
                c1 = choose_c1(system.grid, ops=ops).c1
        if ladder not in ("jacobian", "history"):
            raise ValueError(f"unknown ladder {ladder!r}")
        return cls(system, ops, NAN if c1 is None else float(c1), ladder)

    def observe(self, state: LagState):
        """Record the acceleration of an accepted state for the history ladder."""
        a = self.system.acceleration(state.theta, state.theta_t)
        if self.history and state.t <= self.history[-1][0]:
            self.history.clear()
        self.history.append((state.t, a))


def time_ladder(state: LagState, system: LagrangianSystem, ctx: ReportContext | None = None):
    """Return ``(theta, theta_t, theta_tt, theta_ttt)``; the last may be ``None``."""
    th, v = state.theta, state.theta_t
    a = system.acceleration(th, v)
    if ctx is None or ctx.ladder == "jacobian":
        j = system.jerk(th, v, a)
    else:
        hist = list(ctx.history)
        if len(hist) == 3 and abs(hist[-1][0] - state.t) < 1e-12:
            (t0, a0), (t1, a1), (t2, a2) = hist
            dt1, dt2 = t1 - t0, t2 - t1
            if abs(dt1 - dt2) <= 1e-9 * dt2:
                j = (3 * a2 - 4 * a1 + a0) / (2 * dt2)
            else:
                j = None
        else:
            j = None
    return th, v, a, j


def _g4_derivs(y):
    e = 1.0 + y
    return 4.0 - 4.0 / e**5, 20.0 / e**6, -120.0 / e**7


def nonlinear_energies(grid: Grid, ladder, bc: str = "neumann_theta_xi_zero") -> dict:
    """``E_NL1``, ``E_NL2`` and ``E_delta`` from the time-derivative ladder."""
    th, v, a, j = ladder
    d = lambda f, k: grid.d(f, k, bc)  # noqa: E731
    ws = lambda f, p: weighted_sq(grid, f, p)  # noqa: E731
    dts = [th, v, a, j]
    enl1 = 0.0
    for k in range(3):
        if dts[k + 1] is None:
            enl1 = NAN
            break
        enl1 += ws(dts[k + 1], 0.5) + ws(d(dts[k], 2), 1.0) + ws(d(dts[k], 1), 0.0)
    enl2 = ws(d(th, 4), 1.5) + ws(d(th, 3), 0.5)
    for k in range(2):
        f = dts[k]
        enl2 += ws(d(f, 3), 1.0) + ws(d(f, 2), 0.0) + ws(d(f, 1), -0.5)
    # E_delta
    th_x = d(th, 1)
    g1, g2, g3 = _g4_derivs(th_x)
    v_x, v_xx = d(v, 1), d(v, 2)
    a_x, a_xx = d(a, 1), d(a, 2)
    th_xx = d(th, 2)
    h2 = grid.h**2
    M3 = 0.5 * h2 * (g2 * v_x * v_xx + g2 * a_x * th_xx + g3 * v_x**2 * th_xx)
    e_delta = -0.25 * grid.quad(h2 * g1 * a_xx**2) - grid.quad(M3 * a_xx)
    return {"E_NL1": enl1, "E_NL2": enl2, "E_delta": e_delta}


def phi_functional(grid: Grid, ladder, bc: str = "neumann_theta_xi_zero") -> float:
    """Local-existence energy ``Phi`` for ``eta = xi + theta`` and ``u = theta_t``."""
    th, v, a, j = ladder
    if j is None:
        return NAN
    d = lambda f, k: grid.d(f, k, bc)  # noqa: E731
    ws = lambda f, p: weighted_sq(grid, f, p)  # noqa: E731
    prof = grid.profile
    h1 = grid.h1
    h2 = np.asarray(prof.eval(grid.xi, 2))
    A0 = np.maximum(h1 * h1 - 2.0 * grid.h * h2, 0.0)
    us = [v, a, j]
    eta_x = [1.0 + d(th, 1), d(v, 1), d(a, 1)]
    eta_xx = [d(th, 2), d(v, 2), d(a, 2)]
    total = 0.0
    for k in range(3):
        total += ws(us[k], 0.5) + ws(eta_xx[k], 1.0) + ws(eta_x[k], 1.0)
        total += grid.quad(A0 * eta_x[k] ** 2)
    total += ws(d(th, 3), 1.0) + ws(d(v, 3), 1.0) + ws(d(th, 4), 1.5)
    return float(total)


def report(state: LagState, system: LagrangianSystem, ctx: ReportContext | None = None) -> EnergyReport:
    """Evaluate every monitored quantity at one state."""
    from .eulerian import reconstruct
    from .linear_stability import energy_pair, _pair_values

    if ctx is None:
        ctx = ReportContext(system)
    th, v = state.theta, state.theta_t
    snap = reconstruct(state, system)
    diss = system.dissipation(th, v)
    lad = time_ladder(state, system, ctx)
    bc = "neumann_theta_xi_zero" if system.variant.static else "one_sided"
    nl = nonlinear_energies(system.grid, lad, bc)
    E0 = D0 = sum_ek = NAN
    if ctx.ops is not None and np.isfinite(ctx.c1):
        pair = energy_pair(state, ctx.ops, ctx.c1)
        E0, D0 = pair.E0, pair.D0
        if lad[3] is not None:
            sum_ek = E0
            for k in (1, 2):
                sum_ek += _pair_values(ctx.ops, system.reduce(lad[k]), system.reduce(lad[k + 1]), ctx.c1)[0]
    ratio = nl["E_NL2"] / nl["E_NL1"] if nl["E_NL1"] > 0 else NAN
    return EnergyReport(
        t=state.t,
        hamiltonian=system.E_eq + system.hamiltonian_excess(th, v),
        hamiltonian_excess=system.hamiltonian_excess(th, v),
        mass=snap.mass,
        momentum=system.momentum(v),
        viscous_dissipation=diss["viscous"],
        contact_line_dissipation=diss["contact_line"],
        slip_dissipation=diss["slip"],
        E0=E0, D0=D0,
        E_NL1=nl["E_NL1"], E_NL2=nl["E_NL2"], elliptic_ratio=ratio,
        E_delta=nl["E_delta"], sum_Ek=sum_ek,
        Phi=phi_functional(system.grid, lad, bc),
        jerk_available=lad[3] is not None,
    )


def elliptic_ratio_check(reports: Sequence[EnergyReport], threshold: float = 1e-2) -> float:
    """Max of ``E_NL2 / E_NL1`` over reports in the small-data regime.

    Raises
    ------
    EmptyResult
        If no report has ``0 < E_NL2 <= threshold`` and finite ``E_NL1 > 0``.
    """
    vals = [r.E_NL2 / r.E_NL1 for r in reports
            if np.isfinite(r.E_NL1) and r.E_NL1 > 0 and 0 < r.E_NL2 <= threshold]
    if not vals:
        raise EmptyResult("no qualifying states for the elliptic ratio")
    return float(max(vals))


# ------------------------------------------------------------------ inequalities
@dataclass
class InequalityEstimate:
    id: str
    k: float | None
    p: float | None
    constant: float
    family: str
    grids: list
    per_grid: list
    stable: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _hardy_family(name: str, seed: int = 0) -> list:
    """Test functions on ``(0, 1)`` as ``(g, g')`` pairs."""
    fam = []
    if name == "monomials":
        for j in range(0, 7):
            P = Polynomial.basis(j)
            fam.append((P, P.deriv()))
    elif name == "trig":
        for j in range(1, 6):
            w = j * np.pi / 2
            fam.append((lambda s, w=w: np.cos(w * s), lambda s, w=w: -w * np.sin(w * s)))
            fam.append((lambda s, w=w: np.sin(w * s) + 1.0, lambda s, w=w: w * np.cos(w * s)))
    elif name == "random":
        rng = np.random.default_rng(seed)
        for _ in range(8):
            P = Polynomial(rng.standard_normal(7))
            fam.append((P, P.deriv()))
    else:
        raise ValueError(f"unknown family {name!r}")
    return fam


def hardy_ratio(g: Callable, dg: Callable, k: float, p: float, n_quad: int = 256) -> float:
    """LHS/RHS of the Hardy inequality on ``(0, 1)`` by Gauss-Legendre quadrature."""
    if abs(k + 1.0 / p - 1.0) < 1e-12:
        raise BorderlineError("k + 1/p = 1 is not covered")
    x, w = np.polynomial.legendre.leggauss(n_quad)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    gs = np.asarray(g(s), dtype=float)
    dgs = np.asarray(dg(s), dtype=float)
    if k + 1.0 / p > 1.0:
        lhs = np.dot(w, np.abs(s ** (k - 1) * gs) ** p)
        rhs = np.dot(w, np.abs(s**k * dgs) ** p + np.abs(s**k * gs) ** p)
    else:
        g0 = float(np.asarray(g(np.array([0.0])))[0])
        lhs = np.dot(w, np.abs(s ** (k - 1) * (gs - g0)) ** p)
        rhs = np.dot(w, np.abs(s**k * dgs) ** p)
    if rhs <= 0:
        return NAN
    return float(lhs / rhs)


def hardy_check(k: float, p: float, family: str | list = "monomials",
                grids: Sequence[int] = (64, 128, 256), seed: int = 0) -> InequalityEstimate:
    """Empirical Hardy constant: max over the family of LHS/RHS."""
    if abs(k + 1.0 / p - 1.0) < 1e-12:
        raise BorderlineError("k + 1/p = 1 is not covered")
    fam = _hardy_family(family, seed) if isinstance(family, str) else family
    label = family if isinstance(family, str) else "custom"
    per = []
    for n in grids:
        vals = [hardy_ratio(g, dg, k, p, n) for g, dg in fam]
        vals = [v for v in vals if np.isfinite(v)]
        per.append(max(vals))
    case = "hardy_case1" if k + 1.0 / p > 1 else "hardy_case2"
    stable = abs(per[-1] - per[-2]) <= 0.1 * abs(per[-1]) if len(per) > 1 else True
    return InequalityEstimate(f"{case}(k={k:g},p={p:g})", k, p, per[-1], label,
                              list(grids), per, bool(stable))


def _poincare_family(name: str, seed: int = 0) -> list:
    fam = []
    if name == "monomials":
        for j in range(0, 7):
            P = Polynomial.basis(j)
            fam.append((P, P.deriv()))
    elif name == "trig":
        for j in range(1, 6):
            w = j * np.pi / 2
            fam.append((lambda s, w=w: np.sin(w * s), lambda s, w=w: w * np.cos(w * s)))
            fam.append((lambda s, w=w: np.cos(w * s), lambda s, w=w: -w * np.sin(w * s)))
    elif name == "random":
        rng = np.random.default_rng(seed)
        for _ in range(16):
            P = Polynomial(rng.standard_normal(7))
            fam.append((P, P.deriv()))
    else:
        raise ValueError(f"unknown family {name!r}")
    return fam


def poincare_ratios(g: Callable, dg: Callable, grid: Grid) -> tuple[float, float]:
    """Ratios for ``int h g^2 <= C int h g'^2`` and ``int g^2 <= C int h g'^2``.

    ``g`` is first projected to satisfy ``int h g = 0``.
    """
    xi, h = grid.xi, grid.h
    gv = np.asarray(g(xi), dtype=float)
    dgv = np.asarray(dg(xi), dtype=float) * np.ones_like(xi)
    mass = grid.quad(h)
    gp = gv - grid.quad(h * gv) / mass
    resid = abs(grid.quad(h * gp))
    if not np.isfinite(resid):
        raise ProjectionError("non-finite test function values")
    if resid > 1e-12 * max(grid.quad(h * np.abs(gp)), 1e-300) and resid > 1e-15:
        raise ProjectionError("projection failed to remove the weighted mean")
    den = grid.quad(h * dgv**2)
    if den <= 1e-14 * max(1.0, grid.quad(h * gv**2)):
        return NAN, NAN
    return grid.quad(h * gp**2) / den, grid.quad(gp**2) / den


def poincare_check(family: str | list = "random", grids: Sequence[int] = (128, 256, 512),
                   profile=None, seed: int = 0) -> list[InequalityEstimate]:
    """Empirical constants of the weighted and unweighted Poincare inequalities."""
    fam = _poincare_family(family, seed) if isinstance(family, str) else family
    label = (f"{family}(seed={seed})" if family == "random" else family) if isinstance(family, str) else "custom"
    per_w, per_u = [], []
    for N in grids:
        grid = build_grid(N, profile)
        rw, ru = [], []
        for g, dg in fam:
            a, b = poincare_ratios(g, dg, grid)
            if np.isfinite(a):
                rw.append(a)
                ru.append(b)
        per_w.append(max(rw))
        per_u.append(max(ru))
    out = []
    for name, per in (("poincare_weighted", per_w), ("poincare_unweighted", per_u)):
        stable = abs(per[-1] - per[-2]) <= 0.1 * per[-1] if len(per) > 1 else True
        out.append(InequalityEstimate(name, None, None, per[-1], label, list(grids), per, bool(stable)))
    return out


def balance_residuals(traj) -> dict:
    """Summary of per-step balance records of a trajectory."""
    s = traj.steps
    if len(s["t"]) == 0:
        return {"max_balance_residual": 0.0, "max_dH": 0.0, "max_momentum_residual": 0.0}
    dt = traj.config.dt
    mom = np.abs(s["d_momentum"] / dt - s["momentum_sink"])
    return {
        "max_balance_residual": float(np.max(s["balance_residual"])),
        "max_dH": float(np.max(s["dH"])),
        "max_momentum_residual": float(np.max(mom)),
    }
