"""Uniform grid on the reference interval, difference operators and weighted norms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .equilibrium import EquilibriumProfile, coefficient_ms


class GridConfigError(ValueError):
    pass


class DegeneracyError(ValueError):
    """Negative weight power applied to samples that do not vanish at the ends."""


BOUNDARY_MODES = ("neumann_theta_xi_zero", "one_sided")


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the ``m``-th derivative at ``z``.

    Standard Fornberg recursion; returns the weights for the nodes ``x``.
    """
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@dataclass(frozen=True)
class DiffOp:
    """Second-order finite-difference operator of a given derivative order.

    Attributes
    ----------
    order : int
        Derivative order, 1..4.
    bandwidth : int
        Half width of the interior central stencil.
    stencil : ndarray
        Interior central weights (unscaled, multiply by ``dxi**-order``).
    bc : str
        Boundary closure, one of :data:`BOUNDARY_MODES`.
    matrix : scipy.sparse.csr_matrix
        Assembled ``(N+1, N+1)`` operator.
    """

    order: int
    bandwidth: int
    stencil: np.ndarray
    bc: str
    matrix: sp.csr_matrix = field(repr=False)

    def __call__(self, samples):
        return apply_diff(self, samples)


@dataclass(frozen=True, eq=False)
class Grid:
    """Nodes ``xi_i = -1 + i dxi`` for ``i = 0..N`` with quadrature weights."""

    N: int
    xi: np.ndarray
    dxi: float
    weights: np.ndarray
    profile: object
    h: np.ndarray
    h1: np.ndarray
    ms: np.ndarray
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.N + 1

    def quad(self, samples) -> float:
        """End-corrected trapezoid quadrature over ``[-1, 1]``."""
        return float(np.dot(self.weights, samples))

    def diff(self, order: int, bc: str = "neumann_theta_xi_zero") -> DiffOp:
        key = (order, bc)
        if key not in self._ops:
            self._ops[key] = _build_diffop(self, order, bc)
        return self._ops[key]

    def d(self, samples, order: int = 1, bc: str = "neumann_theta_xi_zero"):
        return apply_diff(self.diff(order, bc), samples)


def build_grid(N: int, profile=None) -> Grid:
    """Uniform grid with ``N`` intervals (``N + 1`` nodes) on ``[-1, 1]``.

    Raises
    ------
    GridConfigError
        If ``N < 16`` or ``N`` is odd.
    """
    if int(N) != N or N < 16 or N % 2:
        raise GridConfigError(f"N must be an even integer >= 16, got {N!r}")
    N = int(N)
    profile = profile if profile is not None else EquilibriumProfile()
    xi = -1.0 + 2.0 * np.arange(N + 1) / N
    xi[0], xi[-1] = -1.0, 1.0
    dxi = 2.0 / N
    # trapezoid with Gregory end corrections: positive, exact on linears,
    # fourth-order accurate for smooth integrands
    w = np.full(N + 1, dxi)
    ends = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0]) * dxi
    w[:3] = ends
    w[-3:] = ends[::-1]
    h = np.asarray(profile.eval(xi, 0))
    h1 = np.asarray(profile.eval(xi, 1))
    ms = np.asarray(coefficient_ms(profile, xi))
    for arr in (xi, w, h, h1, ms):
        arr.setflags(write=False)
    return Grid(N, xi, dxi, w, profile, h, h1, ms)


_CENTRAL = {
    1: np.array([-0.5, 0.0, 0.5]),
    2: np.array([1.0, -2.0, 1.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}


def _build_diffop(grid: Grid, order: int, bc: str) -> DiffOp:
    if order not in _CENTRAL:
        raise ValueError(f"order must be 1..4, got {order}")
    if bc not in BOUNDARY_MODES:
        raise ValueError(f"unknown boundary mode {bc!r}")
    n = grid.N + 1
    stencil = _CENTRAL[order]
    half = len(stencil) // 2
    scale = grid.dxi ** (-order)
    rows, cols, vals = [], [], []
    for i in range(n):
        if half <= i <= n - 1 - half:
            for k, wk in enumerate(stencil):
                if wk != 0.0:
                    rows.append(i)
                    cols.append(i + k - half)
                    vals.append(wk * scale)
        elif bc == "neumann_theta_xi_zero":
            # even reflection about the endpoint: ghost u_{-j} = u_j
            for k, wk in enumerate(stencil):
                j = i + k - half
                if j < 0:
                    j = -j
                elif j > n - 1:
                    j = 2 * (n - 1) - j
                rows.append(i)
                cols.append(j)
                vals.append(wk * scale)
        else:
            width = order + 2
            lo = 0 if i < half else n - width
            idx = np.arange(lo, lo + width)
            wts = fornberg_weights(grid.xi[i], grid.xi[idx], order)
            rows.extend([i] * width)
            cols.extend(idx.tolist())
            vals.extend(wts.tolist())
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    return DiffOp(order, half, stencil.copy(), bc, mat)


def apply_diff(op: DiffOp, samples) -> np.ndarray:
    """Apply a difference operator to nodal samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != op.matrix.shape[1]:
        raise ValueError(
            f"sample length {samples.shape[0]} does not match grid size {op.matrix.shape[1]}")
    out = op.matrix @ samples
    if op.bc == "neumann_theta_xi_zero" and op.order % 2 == 1:
        # odd derivatives of an even reflection vanish at the mirror point
        out[0] = 0.0
        out[-1] = 0.0
    return out


_ALLOWED_POWERS = (-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)


def weighted_norm(grid: Grid, samples, weight_power: float) -> float:
    """``sqrt(int h^(2p) f^2)`` by the grid quadrature.

    For negative ``p`` the endpoint terms are replaced by their limit 0,
    which requires ``f`` to vanish there.
    """
    p = float(weight_power)
    if p not in _ALLOWED_POWERS:
        raise ValueError(f"weight power must be one of {_ALLOWED_POWERS}")
    f = np.asarray(samples, dtype=float)
    if f.shape != grid.xi.shape:
        raise ValueError("sample length does not match grid")
    if p < 0:
        scale = max(np.max(np.abs(f)), 1e-300)
        if abs(f[0]) > 1e-12 * scale or abs(f[-1]) > 1e-12 * scale:
            raise DegeneracyError("negative weight power needs samples vanishing at the endpoints")
        inner = slice(1, -1)
        val = np.dot(grid.weights[inner], grid.h[inner] ** (2 * p) * f[inner] ** 2)
    else:
        val = np.dot(grid.weights, grid.h ** (2 * p) * f * f)
    return float(np.sqrt(val))


def weighted_sq(grid: Grid, samples, weight_power: float) -> float:
    """Square of :func:`weighted_norm` with endpoints dropped for ``p < 0``."""
    p = float(weight_power)
    f = np.asarray(samples, dtype=float)
    if p < 0:
        inner = slice(1, -1)
        return float(np.dot(grid.weights[inner], grid.h[inner] ** (2 * p) * f[inner] ** 2))
    return float(np.dot(grid.weights, grid.h ** (2 * p) * f * f))
