"""Physical (Eulerian) fields reconstructed from Lagrangian states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .lagrangian_solver import LagrangianSystem, LagState, validate_state


class ReconstructionError(ValueError):
    pass


@dataclass
class EulerianSnapshot:
    t: float
    xi: np.ndarray
    x: np.ndarray
    h: np.ndarray
    u: np.ndarray
    eta_xi: np.ndarray
    a: float
    b: float
    slope_a: float
    slope_b: float
    adot: float
    bdot: float
    mass: float

    def sidecar(self) -> dict:
        return {"t": self.t, "a": self.a, "b": self.b, "slope_a": self.slope_a,
                "slope_b": self.slope_b, "adot": self.adot, "bdot": self.bdot}


def nodal_eta_xi(system: LagrangianSystem, theta) -> np.ndarray:
    """``eta_xi`` at nodes: cell averages inside, linear extrapolation at the ends."""
    e = 1.0 + system.D @ theta
    out = np.empty(system.N + 1)
    out[1:-1] = 0.5 * (e[:-1] + e[1:])
    out[0] = 1.5 * e[0] - 0.5 * e[1]
    out[-1] = 1.5 * e[-1] - 0.5 * e[-2]
    return out


def reconstruct(state: LagState, system: LagrangianSystem) -> EulerianSnapshot:
    """Height, velocity, contact points and contact slopes of a state.

    The contact slopes use the degenerate limit ``h_ref'(+-1) / eta_xi(+-1)^2``.
    """
    if system.variant.static:
        validate_state(system, state, floor=1e-12)
    th = state.theta
    x = system.grid.xi + th
    if np.any(np.diff(x) <= 0):
        raise ReconstructionError("flow map is not monotone")
    ex = nodal_eta_xi(system, th)
    if np.any(ex <= 0):
        raise ReconstructionError("non-positive eta_xi at a node")
    h = system.hn / ex
    h[0] = h[-1] = 0.0
    ref = system.ref
    slope_a = float(ref.eval(-1.0, 1)) / ex[0] ** 2
    slope_b = float(ref.eval(1.0, 1)) / ex[-1] ** 2
    # change of variables: int h dx = int (h eta_xi) dxi by the grid quadrature
    mass = float(system.grid.quad(h * ex))
    v = state.theta_t
    return EulerianSnapshot(state.t, system.grid.xi.copy(), x, h, v.copy(), ex,
                            float(x[0]), float(x[-1]), slope_a, slope_b,
                            float(v[0]), float(v[-1]), mass)


def contact_report(snapshots, alpha: float = 1.0, nu: float | None = None) -> dict:
    """Time series of contact-line data; with ``nu``, the boundary-law residual.

    The dynamic law reads ``nu adot = alpha^2 - h_x(a)^2`` and
    ``nu bdot = -(alpha^2 - h_x(b)^2)``.
    """
    snaps = list(snapshots)
    if len(snaps) < 2:
        raise ValueError("need at least two snapshots")
    col = lambda name: np.array([getattr(s, name) for s in snaps])  # noqa: E731
    out = {k: col(k) for k in ("t", "a", "b", "slope_a", "slope_b", "adot", "bdot")}
    out["angle_dev_a"] = alpha**2 - out["slope_a"] ** 2
    out["angle_dev_b"] = alpha**2 - out["slope_b"] ** 2
    if nu is not None:
        out["law_residual_a"] = nu * out["adot"] - out["angle_dev_a"]
        out["law_residual_b"] = nu * out["bdot"] + out["angle_dev_b"]
    return out


def resample(snap: EulerianSnapshot, n: int = 401):
    """Height on a uniform grid over ``[a, b]`` by linear interpolation (plotting only)."""
    xs = np.linspace(snap.a, snap.b, n)
    return xs, np.interp(xs, snap.x, snap.h)


def shape_distance(snap: EulerianSnapshot, profile, bounds: float = 0.5) -> tuple[float, float]:
    """``min_s max_i |h(x_i) - h_s(x_i - s)|`` and the minimizing shift ``s``."""
    R = profile.params.R

    def hs(xs):
        z = xs / R
        out = np.zeros_like(xs)
        m = np.abs(z) <= 1.0
        out[m] = profile.eval(z[m], 0)
        return out

    def dist(s):
        return float(np.max(np.abs(snap.h - hs(snap.x - s))))

    centre = 0.5 * (snap.a + snap.b)
    res = minimize_scalar(dist, bounds=(centre - bounds, centre + bounds), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun), float(res.x)
