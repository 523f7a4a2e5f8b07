"""Lagrangian solver for the droplet perturbation system.

The flow map is ``eta = xi + theta`` on the reference interval.  With
``e = eta_xi`` the height is ``h = h_ref / e`` and the velocity is
``u = theta_t``.  The semi-discrete system comes from a discrete Lagrangian
and a discrete Rayleigh function:

* The potential energy is a sum of cell and node contributions, written in
  the strains ``e_c = 1 + (theta_{i+1} - theta_i) / dxi``:

      E = dxi sum_c [ g h^2/(2e) + gamma A/(6 e^3) + gamma alpha^2 e / 2 ]
        + dxi sum_i gamma h_i^2 d_i^2 / (2 ehat_i^5),

  where ``A = h'^2 - 2 h h''``, ``d_i`` is the jump of ``e`` across node
  ``i`` divided by ``dxi``, and ``ehat_i`` is the average of ``e`` over
  the two adjacent cells.  This is the continuous Hamiltonian expressed in
  Lagrangian variables, after one integration by parts in the surface
  energy.
* The kinetic energy uses lumped masses ``M_i = int h_ref`` over the dual
  cell of node ``i``.
* The dissipation consists of viscous friction ``2 mu int h u_xi^2 / e^2``,
  optional Navier slip ``(b^-1 / 2) int u^2 e`` and, in the dynamic-angle
  variant, contact-line friction ``(gamma nu / 4)(adot^2 + bdot^2)``.

The nodal force ``F = -dE/dtheta - dR/dtheta_t`` is a discrete divergence of
cell stresses.  This gives exact momentum conservation through translation
invariance, a fixed point at the equilibrium, and a semi-discrete energy
identity.  For the static angle, the endpoints are slaved by the
second-order one-sided closure ``theta_xi(+-1) = 0``.  In the dynamic
variant the endpoints are free, and the contact-line law appears as their
natural boundary condition.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import make_interp_spline
from scipy.sparse.linalg import splu

from .equilibrium import EquilibriumProfile, GeneralProfile, mass_integral
from .grid import Grid, build_grid


class SolverError(RuntimeError):
    """Base class for runtime failures of the time integrator."""

    code = "solver_error"

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), "t": self.t}


class FlowMapDegeneracy(SolverError):
    code = "flow_map_degeneracy"


class NewtonDivergence(SolverError):
    code = "newton_divergence"


class StateError(ValueError):
    """State violates a structural invariant (closure, shape, monotonicity)."""


class IncompatibleMass(ValueError):
    code = "incompatible_mass"


class InvalidHeight(ValueError):
    code = "invalid_height"


@dataclass(frozen=True)
class Variant:
    """Model variant: contact-line friction ``nu`` and inverse slip length.

    ``nu == 0`` selects the static contact angle, imposed through the
    closure; ``nu > 0`` selects the dynamic angle.
    """

    nu: float = 0.0
    slip: float = 0.0

    def __post_init__(self):
        if self.nu < 0 or self.slip < 0:
            raise ValueError("nu and slip must be nonnegative")

    @property
    def static(self) -> bool:
        return self.nu == 0.0

    @property
    def name(self) -> str:
        name = "static_angle" if self.static else f"dynamic_angle(nu={self.nu:g})"
        if self.slip:
            name += f"+navier_slip({self.slip:g})"
        return name


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    T: float = 1.0
    scheme: str = "implicit_midpoint"
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    eta_xi_floor: float = 0.25
    stride: int = 10
    variant: Variant = field(default_factory=Variant)
    linearized: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0 and self.newton_tol > 0):
            raise ValueError("dt, T and newton_tol must be positive")
        if not 0 < self.eta_xi_floor < 1:
            raise ValueError("eta_xi_floor must lie in (0, 1)")
        if self.scheme not in ("implicit_midpoint", "bdf1"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.newton_max_iter < 1 or self.stride < 1:
            raise ValueError("newton_max_iter and stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = asdict(self.variant)
        return d


@dataclass(frozen=True)
class LagState:
    """Nodal perturbation ``theta`` and velocity ``theta_t`` at time ``t``."""

    t: float
    theta: np.ndarray
    theta_t: np.ndarray
    mode: str = "near_equilibrium"
    variant: Variant = field(default_factory=Variant)

    @property
    def u(self) -> np.ndarray:
        return self.theta_t


def closure_matrix(N: int) -> sp.csr_matrix:
    """Prolongation from interior values to all nodes with ``theta_xi(+-1) = 0``.

    The endpoint rows are ``theta_0 = (4 theta_1 - theta_2) / 3`` and the
    mirror image at the right end.
    """
    n_in = N - 1
    rows = [0, 0] + list(range(1, N)) + [N, N]
    cols = [0, 1] + list(range(n_in)) + [n_in - 1, n_in - 2]
    vals = [4 / 3, -1 / 3] + [1.0] * n_in + [4 / 3, -1 / 3]
    return sp.csr_matrix((vals, (rows, cols)), shape=(N + 1, n_in))


def _forward_difference(N: int, dxi: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(N), np.ones(N)], [0, 1], shape=(N, N + 1), format="csr") / dxi


class LagrangianSystem:
    """Discrete Lagrangian model on a grid for a given reference profile.

    Parameters
    ----------
    grid : Grid
        Reference grid; ``grid.profile`` is the reference height.
    variant : Variant
        Static or dynamic angle, slip.
    linearized : bool
        Replace the force by its linearization at ``theta = 0``.
    mode : {None, "near_equilibrium", "general"}
        Defaults to ``near_equilibrium`` for the equilibrium reference.
        General mode additionally keeps ``1/2 <= eta_xi <= 3/2``.
    """

    def __init__(self, grid: Grid, variant: Variant | None = None, linearized: bool = False,
                 mode: str | None = None):
        self.grid = grid
        self.ref = grid.profile
        self.params = self.ref.params
        if self.params.R != 1.0:
            raise ValueError("the Lagrangian solver works on the reference interval [-1, 1] (R = 1)")
        self.variant = variant or Variant()
        self.linearized = False
        p = self.params
        N, dxi = grid.N, grid.dxi
        self.N, self.dxi = N, dxi
        is_eq = bool(getattr(self.ref, "is_equilibrium", False))
        if mode not in (None, "near_equilibrium", "general"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "near_equilibrium" and not is_eq:
            raise ValueError("near-equilibrium mode needs the equilibrium reference")
        self.mode = mode or ("near_equilibrium" if is_eq else "general")

        xc = 0.5 * (grid.xi[:-1] + grid.xi[1:])
        self.xc = xc
        self.hc = np.asarray(self.ref.eval(xc, 0))
        h1c = np.asarray(self.ref.eval(xc, 1))
        h2c = np.asarray(self.ref.eval(xc, 2))
        self.Ac = h1c * h1c - 2.0 * self.hc * h2c
        self.hn = np.asarray(grid.h)
        self.hi = self.hn[1:-1]
        if is_eq:
            # analytically zero: gamma alpha^2 = g h^2 + gamma A pointwise
            self.rc = np.zeros(N)
        else:
            self.rc = 0.5 * p.gamma * p.alpha**2 - 0.5 * p.g * self.hc**2 - 0.5 * p.gamma * self.Ac

        edges = np.concatenate(([-1.0], xc, [1.0]))
        prim = np.asarray(self.ref.antiderivative(edges))
        self.mass_nodes = np.diff(prim)
        self.total_mass = float(prim[-1] - prim[0])

        self.D = _forward_difference(N, dxi)
        self.DT = self.D.T.tocsr()
        if self.variant.static:
            self.P = closure_matrix(N)
        else:
            self.P = sp.identity(N + 1, format="csr")
        self.PT = self.P.T.tocsr()
        Mfull = sp.diags(self.mass_nodes)
        self.Mq = (self.PT @ Mfull @ self.P).tocsc()
        self._Mq_lu = splu(self.Mq)
        self.Mq_diag = self.Mq.diagonal()
        # trapezoid map from cell strains to nodal lengths (for the slip term)
        rows = np.concatenate(([0], np.arange(1, N), np.arange(1, N), [N]))
        cols = np.concatenate(([0], np.arange(0, N - 1), np.arange(1, N), [N - 1]))
        self.S = sp.csr_matrix((np.full(len(rows), 0.5 * dxi), (rows, cols)), shape=(N + 1, N))

        self.E_eq = self._energy_raw(np.ones(N))
        if linearized:
            z = np.zeros(N + 1)
            self.K_full = self.hess_E(z)
            self.C_full = self.damping_jacobians(z, z)[1]
            self.linearized = True

    # ------------------------------------------------------------------ strains
    def reduce(self, theta_full) -> np.ndarray:
        theta_full = np.asarray(theta_full, dtype=float)
        return theta_full[1:-1].copy() if self.variant.static else theta_full.copy()

    def prolong(self, q) -> np.ndarray:
        return self.P @ q

    def strains(self, theta):
        e = 1.0 + self.D @ theta
        d = (e[1:] - e[:-1]) / self.dxi
        eh = 0.5 * (e[1:] + e[:-1])
        return e, d, eh

    def check_flow_map(self, theta, floor: float, t: float | None = None):
        e = 1.0 + self.D @ theta
        emin = float(np.min(e))
        if not emin > floor:
            raise FlowMapDegeneracy(f"min eta_xi = {emin:.6g} <= floor {floor:g}", t)
        if self.mode == "general":
            emax = float(np.max(e))
            if emin < 0.5 or emax > 1.5:
                raise FlowMapDegeneracy(
                    f"eta_xi range [{emin:.6g}, {emax:.6g}] leaves [1/2, 3/2]", t)
        return e

    # ------------------------------------------------------------------ energy
    def _energy_raw(self, e) -> float:
        p = self.params
        w = 0.5 * p.g * self.hc**2 / e + p.gamma * self.Ac / (6 * e**3) + 0.5 * p.gamma * p.alpha**2 * e
        d = (e[1:] - e[:-1]) / self.dxi
        eh = 0.5 * (e[1:] + e[:-1])
        q = 0.5 * p.gamma * self.hi**2 * d**2 / eh**5
        return float(self.dxi * (np.sum(w) + np.sum(q)))

    def energy(self, theta) -> float:
        """Discrete potential energy ``E(theta)``."""
        return self.E_eq + self.energy_excess(theta)

    def energy_excess(self, theta) -> float:
        """``E(theta) - E(0)`` evaluated without cancellation."""
        if self.linearized:
            return 0.5 * float(theta @ (self.K_full @ theta))
        p = self.params
        delta = self.D @ theta
        e = 1.0 + delta
        d = (delta[1:] - delta[:-1]) / self.dxi
        eh = 0.5 * (e[1:] + e[:-1])
        cell = (self.rc * delta
                + 0.5 * p.g * self.hc**2 * delta**2 / e
                + p.gamma / 6.0 * self.Ac * delta**2 * (6 + 8 * delta + 3 * delta**2) / e**3)
        node = 0.5 * p.gamma * self.hi**2 * d**2 / eh**5
        return float(self.dxi * (math.fsum(cell) + math.fsum(node)))

    def stress(self, theta) -> np.ndarray:
        """Cell stresses ``dE/de_c``."""
        p = self.params
        delta = self.D @ theta
        e = 1.0 + delta
        dx = self.dxi
        w1 = (self.rc + 0.5 * p.g * self.hc**2 * delta * (1 + e) / e**2
              + 0.5 * p.gamma * self.Ac * delta * (1 + e) * (1 + e * e) / e**4)
        sig = dx * w1
        d = (delta[1:] - delta[:-1]) / dx
        eh = 0.5 * (e[1:] + e[:-1])
        g = p.gamma * self.hi**2
        q_d = g * d / eh**5
        q_e = -2.5 * g * d * d / eh**6
        sig[:-1] += dx * (-q_d / dx + 0.5 * q_e)
        sig[1:] += dx * (q_d / dx + 0.5 * q_e)
        return sig

    def grad_E(self, theta) -> np.ndarray:
        if self.linearized:
            return self.K_full @ theta
        return self.DT @ self.stress(theta)

    def hess_E(self, theta) -> sp.csr_matrix:
        """Sparse Hessian of ``E`` with respect to nodal ``theta``."""
        if self.linearized:
            return self.K_full
        p = self.params
        dx = self.dxi
        e, d, eh = self.strains(theta)
        main = dx * (p.g * self.hc**2 / e**3 + 2 * p.gamma * self.Ac / e**5)
        g = p.gamma * self.hi**2
        qdd = g / eh**5
        qde = -5.0 * g * d / eh**6
        qee = 15.0 * g * d * d / eh**7
        bLL = dx * (qdd / dx**2 - qde / dx + 0.25 * qee)
        bRR = dx * (qdd / dx**2 + qde / dx + 0.25 * qee)
        bLR = dx * (-qdd / dx**2 + 0.25 * qee)
        main = main.copy()
        main[:-1] += bLL
        main[1:] += bRR
        He = sp.diags([bLR, main, bLR], [-1, 0, 1], format="csr")
        return (self.DT @ He @ self.D).tocsr()

    # ------------------------------------------------------------- dissipation
    def _friction_coeffs(self, e):
        return 4.0 * self.params.mu * self.dxi * self.hc / e**2

    def grad_R(self, theta, v) -> np.ndarray:
        """Gradient of the Rayleigh function with respect to the velocity."""
        if self.linearized:
            return self.C_full @ v
        e = 1.0 + self.D @ theta
        s = self.D @ v
        out = self.DT @ (self._friction_coeffs(e) * s)
        var = self.variant
        if var.slip:
            out += var.slip * (self.S @ e) * v
        if not var.static:
            c = 0.5 * self.params.gamma * var.nu
            out[0] += c * v[0]
            out[-1] += c * v[-1]
        return out

    def damping_jacobians(self, theta, v):
        """Derivatives of ``grad_R`` with respect to ``theta`` and ``v``."""
        if self.linearized:
            return sp.csr_matrix((self.N + 1, self.N + 1)), self.C_full
        e = 1.0 + self.D @ theta
        s = self.D @ v
        kv = self._friction_coeffs(e)
        kt = -2.0 * kv * s / e
        Cv = self.DT @ sp.diags(kv) @ self.D
        Ct = self.DT @ sp.diags(kt) @ self.D
        var = self.variant
        if var.slip:
            Cv = Cv + sp.diags(var.slip * (self.S @ e))
            Ct = Ct + sp.diags(var.slip * v) @ self.S @ self.D
        if not var.static:
            c = 0.5 * self.params.gamma * var.nu
            bd = np.zeros(self.N + 1)
            bd[0] = bd[-1] = c
            Cv = Cv + sp.diags(bd)
        return Ct.tocsr(), Cv.tocsr()

    def dissipation(self, theta, v) -> dict:
        """Dissipation rates, each equal to ``v . dR_part/dv``."""
        e = 1.0 + self.D @ theta
        s = self.D @ v
        visc = float(np.sum(self._friction_coeffs(e) * s * s))
        var = self.variant
        slip = float(var.slip * np.sum((self.S @ e) * v * v)) if var.slip else 0.0
        cl = 0.5 * self.params.gamma * var.nu * (v[0] ** 2 + v[-1] ** 2) if not var.static else 0.0
        if self.linearized:
            visc = float(v @ (self.C_full @ v)) - slip - cl
        return {"viscous": visc, "slip": slip, "contact_line": float(cl),
                "total": visc + slip + float(cl)}

    # ------------------------------------------------------------------ force
    def force(self, theta, v) -> np.ndarray:
        return -self.grad_E(theta) - self.grad_R(theta, v)

    def force_jacobians(self, theta, v):
        Ct, Cv = self.damping_jacobians(theta, v)
        return (-self.hess_E(theta) - Ct).tocsr(), (-Cv).tocsr()

    def kinetic(self, v) -> float:
        return 0.5 * float(np.dot(self.mass_nodes, v * v))

    def momentum(self, v) -> float:
        return float(np.dot(self.mass_nodes, v))

    def hamiltonian_excess(self, theta, v) -> float:
        return self.kinetic(v) + self.energy_excess(theta)

    def mass_solve(self, rhs_q) -> np.ndarray:
        return self._Mq_lu.solve(np.asarray(rhs_q, dtype=float))

    def acceleration(self, theta, v) -> np.ndarray:
        """Nodal ``theta_tt`` from the semi-discrete mass system."""
        aq = self.mass_solve(self.PT @ self.force(theta, v))
        return self.P @ aq

    def jerk(self, theta, v, a=None) -> np.ndarray:
        """Nodal ``theta_ttt``: time derivative of the acceleration along the flow."""
        if a is None:
            a = self.acceleration(theta, v)
        Ft, Fv = self.force_jacobians(theta, v)
        return self.P @ self.mass_solve(self.PT @ (Ft @ v + Fv @ a))

    def residual_norm(self, r) -> float:
        """Weighted residual ``sqrt(sum r_i^2 / M_ii)``, an ``h^{1/2}``-weighted acceleration norm."""
        return float(np.sqrt(np.sum(r * r / self.Mq_diag)))


# ---------------------------------------------------------------- states
def make_state(system: LagrangianSystem, theta, theta_t=None, t: float = 0.0,
               center: bool = False, closure_rtol: float = 1e-2) -> LagState:
    """Build a valid state from nodal samples or callables.

    For the static angle, the samples must be compatible with
    ``theta_xi(+-1) = 0`` up to the discretization error.  The closure is
    then imposed exactly by overwriting the endpoint values.  ``center``
    removes the mass-weighted means, enforcing the zero-mean constraints.
    """
    xi = system.grid.xi
    th = np.asarray(theta(xi) if callable(theta) else theta, dtype=float).copy()
    if theta_t is None:
        v = np.zeros_like(th)
    else:
        v = np.asarray(theta_t(xi) if callable(theta_t) else theta_t, dtype=float).copy()
    if th.shape != xi.shape or v.shape != xi.shape:
        raise StateError("state arrays must match the grid")
    if not (np.all(np.isfinite(th)) and np.all(np.isfinite(v))):
        raise StateError("non-finite state values")
    if system.variant.static:
        for f in (th, v):
            _check_closure(f, system.dxi, closure_rtol)
        th = system.P @ th[1:-1]
        v = system.P @ v[1:-1]
    if center:
        m = system.mass_nodes
        th -= np.dot(m, th) / system.total_mass
        v -= np.dot(m, v) / system.total_mass
    return LagState(float(t), th, v, system.mode, system.variant)


def _check_closure(f, dxi, rtol):
    slope = np.abs(np.diff(f)) / dxi
    scale = float(np.max(slope)) if slope.size else 0.0
    left = abs(-3 * f[0] + 4 * f[1] - f[2]) / (2 * dxi)
    right = abs(3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dxi)
    # truncation of the one-sided slope is dxi^2 |f'''| / 3; allow twice that
    d3 = max(abs(np.diff(f[:4], 3)[0]), abs(np.diff(f[-4:], 3)[0])) / dxi**3
    if max(left, right) > rtol * scale + (2.0 / 3.0) * dxi**2 * d3 + 1e-10:
        raise StateError(
            f"samples violate theta_xi(+-1) = 0 (endpoint slopes {left:.3g}, {right:.3g})")


def validate_state(system: LagrangianSystem, state: LagState, floor: float = 0.25):
    n = system.N + 1
    if state.theta.shape != (n,) or state.theta_t.shape != (n,):
        raise StateError("state arrays must match the grid")
    if system.variant.static:
        for f in (state.theta, state.theta_t):
            ref = system.P @ f[1:-1]
            scale = max(1.0, float(np.max(np.abs(f))))
            if np.max(np.abs(ref - f)) > 1e-12 * scale:
                raise StateError("state violates the discrete closure theta_xi(+-1) = 0")
    system.check_flow_map(state.theta, floor, state.t)


# ------------------------------------------------------------------ stepping
@dataclass
class StepInfo:
    iterations: int
    residuals: list
    dH: float
    dissipation_mid: float
    balance_residual: float
    d_momentum: float
    momentum_sink: float


def spatial_force(state: LagState, system: LagrangianSystem, eta_xi_floor: float = 0.25) -> np.ndarray:
    """Nodal force ``F(theta, theta_t)`` of the semi-discrete system ``M theta_tt = F``."""
    system.check_flow_map(state.theta, eta_xi_floor, state.t)
    return system.force(state.theta, state.theta_t)


def step(state: LagState, config: SolverConfig, system: LagrangianSystem) -> tuple[LagState, StepInfo]:
    """Advance one implicit step; Newton on the increment of the reduced unknowns."""
    dt = config.dt
    P, PT, Mq = system.P, system.PT, system.Mq
    q0 = system.reduce(state.theta)
    w0 = system.reduce(state.theta_t)
    th0 = state.theta
    midpoint = config.scheme == "implicit_midpoint"

    def evaluate(inc, need_jac):
        pinc = P @ inc
        if midpoint:
            th = th0 + 0.5 * pinc
            v = pinc / dt
            r = Mq @ (2.0 * inc / dt - 2.0 * w0) / dt - PT @ system.force(th, v)
        else:
            th = th0 + pinc
            v = pinc / dt
            r = Mq @ (inc / dt - w0) / dt - PT @ system.force(th, v)
        if not need_jac:
            return r, th, v, None
        Ft, Fv = system.force_jacobians(th, v)
        if midpoint:
            J = 2.0 * Mq / dt**2 - PT @ (0.5 * Ft + Fv / dt) @ P
        else:
            J = Mq / dt**2 - PT @ (Ft + Fv / dt) @ P
        # rounding floor: the residual cannot be resolved below the
        # accumulated error of its terms, eps * (|J_theta| |theta| + ...)
        mag = (abs(Mq) @ (2.0 * np.abs(inc) / dt + 2.0 * np.abs(w0)) / dt
               + abs(PT) @ (abs(Ft) @ np.abs(th) + abs(Fv) @ np.abs(v)))
        floor = np.finfo(float).eps * system.residual_norm(mag)
        return r, th, v, (J, floor)

    inc = dt * w0
    r, th, v, (J, floor) = evaluate(inc, True)
    res = system.residual_norm(r)
    history = [res]
    it = 0
    # at least one correction so that tiny states are solved to relative accuracy
    while res > max(config.newton_tol, floor) or (it == 0 and res > 0.0):
        if it >= config.newton_max_iter:
            raise NewtonDivergence(
                f"residual {res:.3e} above tol after {it} iterations", state.t)
        delta = splu(J.tocsc()).solve(-r)
        lam = 1.0
        for _ in range(30):
            trial = inc + lam * delta
            th_full = th0 + (P @ trial)
            e_min = float(np.min(1.0 + system.D @ th_full))
            if e_min > 0.5 * config.eta_xi_floor:
                r_new = evaluate(trial, False)[0]
                res_new = system.residual_norm(r_new)
                if np.isfinite(res_new) and (res_new < res or res_new <= max(config.newton_tol, floor)):
                    break
            lam *= 0.5
        else:
            raise NewtonDivergence(f"line search failed at residual {res:.3e}", state.t)
        inc = trial
        it += 1
        r, th, v, (J, floor) = evaluate(inc, True)
        res = system.residual_norm(r)
        history.append(res)

    q1 = q0 + inc
    w1 = (2.0 * inc / dt - w0) if midpoint else inc / dt
    theta1 = P @ q1
    v1 = P @ w1
    t1 = state.t + dt
    system.check_flow_map(theta1, config.eta_xi_floor, t1)
    new = LagState(t1, theta1, v1, state.mode, state.variant)

    # energy and momentum bookkeeping at the midpoint (or end point for bdf1)
    dH = (system.hamiltonian_excess(theta1, v1)
          - system.hamiltonian_excess(state.theta, state.theta_t))
    diss = system.dissipation(th, v)["total"]
    dP = system.momentum(v1) - system.momentum(state.theta_t)
    sink = 0.0
    var = system.variant
    if var.slip:
        sink -= var.slip * float(np.sum((system.S @ (1.0 + system.D @ th)) * v))
    if not var.static:
        sink -= 0.5 * system.params.gamma * var.nu * (v[0] + v[-1])
    info = StepInfo(it, history, dH, diss, abs(dH / dt + diss), dP, sink)
    return new, info


# ---------------------------------------------------------------- trajectory
@dataclass
class Trajectory:
    states: list
    reports: list
    steps: dict
    config: SolverConfig
    error: dict | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> LagState:
        return self.states[-1]


def simulate(init: LagState, config: SolverConfig, system: LagrangianSystem,
             reports: bool = True, c1: float | None = None,
             callback: Callable | None = None, raise_errors: bool = False,
             ladder: str = "jacobian") -> Trajectory:
    """Integrate from ``init`` to ``config.T`` and record states at strides.

    Step errors halt the run.  The trajectory is returned with
    ``error`` set to a structured record, unless ``raise_errors`` is true.
    ``ladder`` selects how reports obtain ``theta_ttt`` (see
    :class:`swdrop.diagnostics.ReportContext`).
    """
    validate_state(system, init, config.eta_xi_floor)
    ctx = None
    if reports:
        from . import diagnostics  # diagnostics depends on this module

        ctx = diagnostics.ReportContext.for_system(system, c1=c1, ladder=ladder)
        if ladder == "history":
            ctx.observe(init)
    n = config.n_steps
    keys = ("t", "iterations", "final_residual", "dH", "dissipation", "balance_residual",
            "d_momentum", "momentum_sink")
    log = {k: [] for k in keys}
    states = [init]
    reps = [diagnostics.report(init, system, ctx)] if reports else []
    state = init
    error = None
    for k in range(1, n + 1):
        try:
            state, info = step(state, config, system)
        except SolverError as exc:
            if raise_errors:
                raise
            error = exc.to_dict()
            break
        if ctx is not None and ladder == "history":
            ctx.observe(state)
        log["t"].append(state.t)
        log["iterations"].append(info.iterations)
        log["final_residual"].append(info.residuals[-1])
        log["dH"].append(info.dH)
        log["dissipation"].append(info.dissipation_mid)
        log["balance_residual"].append(info.balance_residual)
        log["d_momentum"].append(info.d_momentum)
        log["momentum_sink"].append(info.momentum_sink)
        if k % config.stride == 0 or k == n:
            states.append(state)
            if reports:
                reps.append(diagnostics.report(state, system, ctx))
            if callback is not None:
                callback(state)
    steps = {k: np.asarray(v) for k, v in log.items()}
    return Trajectory(states, reps, steps, config, error)


# ---------------------------------------------------------------- initial data
def lagrangian_map(x, h_target, ref, rtol: float = 1e-8) -> np.ndarray:
    """Initial flow map ``eta_0`` at the grid nodes from a target height.

    ``eta_0`` pushes the reference mass onto the target mass:
    ``int_{a0}^{eta_0(xi)} h_target = int_{-1}^{xi} h_ref``.  The target
    height is interpolated by a cubic spline (piecewise linear when the
    spline is not positive), whose exact antiderivative is inverted by
    safeguarded Newton iteration.

    Parameters
    ----------
    x, h_target : array_like
        Samples of the target height on ``[a0, b0]``.
    ref : Grid
        Grid carrying the reference profile.

    Returns
    -------
    ndarray
        ``eta_0(xi_i)`` at the grid nodes.
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h_target, dtype=float)
    if x.shape != h.shape or x.size < 3:
        raise InvalidHeight("x and h must be 1-d arrays of equal length >= 3")
    if np.any(np.diff(x) <= 0):
        raise InvalidHeight("x must be strictly increasing")
    if np.any(h[1:-1] <= 0) or np.any(h < 0):
        raise InvalidHeight("target height must be positive in the interior")
    grid = ref
    m_ref = np.asarray(grid.profile.antiderivative(grid.xi))
    total_ref = float(m_ref[-1])
    hs = _height_interpolant(x, h)
    cum_s = hs.antiderivative()
    cum = cum_s(x) - cum_s(x[0])
    if np.any(np.diff(cum) <= 0):
        raise InvalidHeight("cumulative mass is not strictly increasing")
    mass = float(cum[-1])
    if abs(mass - total_ref) > rtol * total_ref:
        raise IncompatibleMass(
            f"target mass {mass:.12g} differs from reference mass {total_ref:.12g}")
    target = m_ref * (mass / total_ref) + cum_s(x[0])
    j = np.clip(np.searchsorted(cum, target - cum_s(x[0]), side="right") - 1, 0, len(x) - 2)
    lo, hi = x[j].copy(), x[j + 1].copy()
    eta = 0.5 * (lo + hi)
    # safeguarded Newton on cum(eta) = target inside each bracket
    for _ in range(100):
        f = cum_s(eta) - target
        lo = np.where(f < 0, eta, lo)
        hi = np.where(f > 0, eta, hi)
        d = hs(eta)
        with np.errstate(divide="ignore", invalid="ignore"):
            trial = eta - f / d
        bad = ~np.isfinite(trial) | (trial <= lo) | (trial >= hi)
        new = np.where(bad, 0.5 * (lo + hi), trial)
        if np.max(np.abs(new - eta)) <= 4 * np.finfo(float).eps * max(1.0, np.max(np.abs(x))):
            eta = new
            break
        eta = new
    eta[0], eta[-1] = x[0], x[-1]
    if np.any(np.diff(eta) <= 0):
        raise InvalidHeight("recovered flow map is not monotone")
    return eta


def _height_interpolant(x, h):
    """Cubic spline of the samples, or the linear interpolant if the spline dips below 0."""
    if x.size >= 6:
        spl = make_interp_spline(x, h, k=3)
        fine = np.linspace(x[0], x[-1], 8 * x.size)
        if np.all(spl(fine[1:-1]) > 0):
            return spl
    return make_interp_spline(x, h, k=1)


def perturbation_family(name: str, eps: float) -> Callable:
    """Named closure-compatible initial perturbations ``theta_0(xi)``."""
    fams = {
        "even_quartic": lambda s: eps * (1 - s**2) ** 2 / 4,
        "odd_cubic": lambda s: eps * (s - s**3 / 3),
        "mixed": lambda s: eps * ((1 - s**2) ** 2 / 4 + 0.5 * (s - s**3 / 3)),
        "zero": lambda s: 0.0 * s,
    }
    if name not in fams:
        raise ValueError(f"unknown perturbation family {name!r}; choose from {sorted(fams)}")
    return fams[name]


# ---------------------------------------------------------------- checkpoints
def config_hash(config: SolverConfig, extra: dict | None = None) -> str:
    blob = json.dumps({"config": config.to_dict(), "extra": extra or {}}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_checkpoint(path, state: LagState, config: SolverConfig, system: LagrangianSystem):
    doc = {
        "t": state.t,
        "theta": [float(v) for v in state.theta],
        "theta_t": [float(v) for v in state.theta_t],
        "config_hash": config_hash(config),
        "reference": system.ref.descriptor,
        "N": system.N,
        "variant": asdict(state.variant),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_checkpoint(path, system: LagrangianSystem, config: SolverConfig | None = None) -> LagState:
    with open(path) as fh:
        doc = json.load(fh)
    if doc["N"] != system.N:
        raise StateError("checkpoint grid size does not match the system")
    if doc["reference"] != system.ref.descriptor:
        raise StateError("checkpoint reference profile does not match the system")
    if config is not None and doc["config_hash"] != config_hash(config):
        raise StateError("checkpoint was written with a different configuration")
    st = LagState(doc["t"], np.array(doc["theta"]), np.array(doc["theta_t"]),
                  system.mode, Variant(**doc["variant"]))
    validate_state(system, st)
    return st


def default_system(N: int, profile=None, variant: Variant | None = None,
                   linearized: bool = False, mode: str | None = None) -> LagrangianSystem:
    return LagrangianSystem(build_grid(N, profile), variant, linearized, mode)
