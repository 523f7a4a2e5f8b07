"""Linearized dynamics about the equilibrium: operators, spectrum, energy pair.

The linearization of the discrete Lagrangian system at ``theta = 0`` is

    M theta_tt + C theta_t + K theta = 0,

on the interior unknowns, with endpoint values slaved by the closure
``theta_xi(+-1) = 0``.  ``K`` discretizes ``-2 (m_s theta_xi)_xi +
2 (h_s^2 theta_xixi)_xixi`` and ``C`` discretizes ``-4 mu (h_s theta_xit)_xi``.
Both are assembled as ``P^T D^T W D P`` with nonnegative diagonal or
block weights ``W``, so they are symmetric positive semidefinite and
annihilate constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .equilibrium import coefficient_ms
from .grid import Grid, build_grid
from .lagrangian_solver import LagrangianSystem, LagState, Variant


class SpectrumError(RuntimeError):
    pass


class AdmissibilityError(RuntimeError):
    """No coupling constant passed the positivity checks."""


class FitError(ValueError):
    pass


@dataclass(eq=False)
class LinearOperators:
    """Reduced (interior) linear operators and helpers.

    Attributes
    ----------
    M, K, C : scipy.sparse.csr_matrix
        Mass, stiffness and damping on interior unknowns.
    B : scipy.sparse.csr_matrix
        Discrete ``int h_s theta_xi^2`` form, ``C = 4 mu B``.
    P : scipy.sparse.csr_matrix
        Closure prolongation to all nodes.
    system : LagrangianSystem
    """

    M: sp.csr_matrix
    K: sp.csr_matrix
    C: sp.csr_matrix
    B: sp.csr_matrix
    P: sp.csr_matrix
    system: LagrangianSystem
    grid: Grid
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def constraint_basis(self) -> np.ndarray:
        """Orthonormal basis ``Z`` of ``{x : 1^T M x = 0}``."""
        if "Z" not in self._cache:
            w = self.M @ np.ones(self.n)
            Q, _ = np.linalg.qr(np.column_stack([w, np.eye(self.n)[:, : self.n - 1]]))
            self._cache["Z"] = Q[:, 1:]
        return self._cache["Z"]


def assemble(grid: Grid, profile=None, ms_override=None, variant: Variant | None = None) -> LinearOperators:
    """Assemble the linearized operators on ``grid``.

    Parameters
    ----------
    grid : Grid
    profile : optional
        Reference profile; defaults to ``grid.profile``.
    ms_override : array_like, optional
        Replacement values of the second-order coefficient at cell
        midpoints, used to probe the positivity hypotheses.
    """
    if profile is not None and profile is not grid.profile:
        grid = build_grid(grid.N, profile)
    system = LagrangianSystem(grid, variant or Variant())
    z = np.zeros(grid.N + 1)
    Kf = system.hess_E(z)
    if ms_override is not None:
        ms_c = np.broadcast_to(np.asarray(ms_override, dtype=float), (grid.N,))
        ms_true = coefficient_ms(system.ref, system.xc)
        Kf = Kf + system.DT @ sp.diags(2.0 * grid.dxi * (ms_c - ms_true)) @ system.D
    Cf = system.damping_jacobians(z, z)[1]
    Bf = system.DT @ sp.diags(grid.dxi * system.hc) @ system.D
    P, PT = system.P, system.PT
    M = system.Mq.tocsr()
    K = (PT @ Kf @ P).tocsr()
    C = (PT @ Cf @ P).tocsr()
    B = (PT @ Bf @ P).tocsr()
    return LinearOperators(M, K, C, B, P, system, grid)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    constrained: np.ndarray
    lambda_num: float
    kernel_dim: int
    abscissa: float
    residual: float


def _scaled_pencil(ops: LinearOperators, Z: np.ndarray | None):
    M = ops.M.toarray()
    K = ops.K.toarray()
    C = ops.C.toarray()
    if Z is not None:
        M, K, C = Z.T @ M @ Z, Z.T @ K @ Z, Z.T @ C @ Z
    L = la.cholesky(M, lower=True)
    Kh = la.solve_triangular(L, la.solve_triangular(L, K, lower=True).T, lower=True)
    Ch = la.solve_triangular(L, la.solve_triangular(L, C, lower=True).T, lower=True)
    return 0.5 * (Kh + Kh.T), 0.5 * (Ch + Ch.T)


def companion(ops: LinearOperators, constrained: bool = True) -> np.ndarray:
    """First-order companion matrix in mass-scaled variables."""
    Z = ops.constraint_basis() if constrained else None
    Kh, Ch = _scaled_pencil(ops, Z)
    m = Kh.shape[0]
    return np.block([[np.zeros((m, m)), np.eye(m)], [-Kh, -Ch]])


def kernel_dimension(ops: LinearOperators, rtol: float | None = None) -> int:
    """Dimension of the kernel of the companion operator.

    A kernel vector ``(theta, v)`` must have ``v = 0`` and ``K theta = 0``,
    so this is the number of eigenvalues of the pencil ``(K, M)`` below
    ``rtol`` times its spectral radius.  The default ``rtol = n eps`` is the
    usual numerical-rank tolerance; the spectral radius grows like
    ``N^4`` while the first nonzero eigenvalue stays O(1).
    """
    Kh, _ = _scaled_pencil(ops, None)
    w = la.eigvalsh(Kh)
    if rtol is None:
        rtol = w.size * np.finfo(float).eps
    return int(np.sum(np.abs(w) <= rtol * np.max(np.abs(w))))


def spectrum(ops: LinearOperators) -> SpectrumResult:
    """Eigenvalues of the linear flow, with the translation mode split off.

    The zero eigenvalue is defective: translation and the Galilean boost
    form a Jordan chain.  A dense solver would scatter a defective double
    root by about the square root of machine precision.  The kernel is
    therefore counted separately, and the remaining eigenvalues are those
    of the flow restricted to the invariant subspace
    ``{int h theta = 0, int h theta_t = 0}``.  The returned list is the
    single kernel eigenvalue 0 followed by the constrained eigenvalues,
    sorted by decreasing real part.
    """
    A = companion(ops, constrained=True)
    w, V = la.eig(A)
    if not np.all(np.isfinite(w)):
        raise SpectrumError("eigenvalue computation returned non-finite values")
    k = int(np.argmax(w.real))
    resid = float(np.linalg.norm(A @ V[:, k] - w[k] * V[:, k]) / np.linalg.norm(A, 2))
    if resid > 1e-8:
        raise SpectrumError(f"eigenpair residual {resid:.3e} too large")
    ev = w[np.lexsort((-w.imag, -w.real))]
    kdim = kernel_dimension(ops)
    absc = float(np.max(ev.real))
    full = np.concatenate(([0.0 + 0.0j] * kdim, ev))
    return SpectrumResult(full, ev, -absc, kdim, absc, resid)


def slowest_modes(ops: LinearOperators, k: int = 4, sigma: float = -1.0) -> np.ndarray:
    """Few eigenvalues nearest ``sigma`` by shift-invert on the sparse companion."""
    from scipy.sparse.linalg import eigs

    n = ops.n
    Minv_K = sp.linalg.spsolve(ops.M.tocsc(), ops.K.tocsc())
    Minv_C = sp.linalg.spsolve(ops.M.tocsc(), ops.C.tocsc())
    A = sp.bmat([[None, sp.identity(n)], [-Minv_K, -Minv_C]]).tocsc()
    vals = eigs(A, k=k + 2, sigma=sigma, return_eigenvectors=False)
    # drop the translation pair, split off zero by roundoff
    vals = vals[np.abs(vals) > 1e-3]
    return vals[np.argsort(-vals.real)][:k]


# ------------------------------------------------------------------ energy pair
@dataclass(frozen=True)
class EnergyPair:
    c1: float
    E0: float
    D0: float


def _pair_values(ops: LinearOperators, th, v, c1):
    M, K, C = ops.M, ops.K, ops.C
    Mv = M @ v
    E0 = 0.5 * v @ Mv + 0.5 * th @ (K @ th) + c1 * (th @ Mv + 0.5 * th @ (C @ th))
    D0 = v @ (C @ v) + c1 * (th @ (K @ th) - v @ Mv)
    return float(E0), float(D0)


def energy_pair(state: LagState, ops: LinearOperators, c1: float, center: bool = True) -> EnergyPair:
    """Linear energy ``E0`` and dissipation ``D0`` of a state.

    ``E0 = |h^{1/2} v|^2/2 + theta.K theta/2 + c1 (int h v theta + int h theta_xi^2)``
    and ``D0 = 2 int h v_xi^2 - c1 int h v^2 + c1 theta.K theta``, in their
    discrete forms, so that ``dE0/dt + D0 = 0`` along linear trajectories.
    ``center`` removes the mass-weighted means first.
    """
    sysm = ops.system
    th = sysm.reduce(state.theta)
    v = sysm.reduce(state.theta_t)
    if center:
        w = ops.M @ np.ones(ops.n)
        tot = w.sum()
        th = th - (w @ th) / tot
        v = v - (w @ v) / tot
    E0, D0 = _pair_values(ops, th, v, c1)
    return EnergyPair(c1, E0, D0)


def _pair_matrices(ops: LinearOperators, c1: float):
    Z = ops.constraint_basis()
    M = Z.T @ ops.M.toarray() @ Z
    K = Z.T @ ops.K.toarray() @ Z
    C = Z.T @ ops.C.toarray() @ Z
    E = 0.5 * np.block([[K + c1 * C, c1 * M], [c1 * M, M]])
    D = np.block([[c1 * K, np.zeros_like(K)], [np.zeros_like(K), C - c1 * M]])
    return 0.5 * (E + E.T), 0.5 * (D + D.T)


def kappa_max(ops: LinearOperators, c1: float) -> float:
    """Largest ``kappa`` with ``D0 >= kappa E0`` on the constrained subspace."""
    E, D = _pair_matrices(ops, c1)
    return float(la.eigh(D, E, eigvals_only=True, subset_by_index=[0, 0])[0])


@dataclass(frozen=True)
class C1Choice:
    c1: float
    kappa_max: float
    sweep: tuple


def choose_c1(grid: Grid, profile=None, kappa: float = 1e-3, ms_override=None,
              ops: LinearOperators | None = None) -> C1Choice:
    """Largest ``c1`` in ``{2^-10, ..., 2^0}`` making the energy pair admissible.

    Admissible means ``E0`` positive definite and ``D0 - kappa E0``
    positive semidefinite on the constrained subspace.  Both are checked
    through the smallest generalized eigenvalue.
    """
    if ops is None:
        ops = assemble(grid, profile, ms_override=ms_override)
    sweep = []
    best = None
    for j in range(-10, 1):
        c1 = 2.0**j
        E, D = _pair_matrices(ops, c1)
        scale = np.max(np.abs(np.diag(E)))
        e_min = float(la.eigvalsh(E, subset_by_index=[0, 0])[0])
        if e_min <= 1e-13 * scale:
            sweep.append((c1, e_min, None))
            continue
        km = float(la.eigh(D, E, eigvals_only=True, subset_by_index=[0, 0])[0])
        sweep.append((c1, e_min, km))
        if km >= kappa:
            best = (c1, km)
    if best is None:
        raise AdmissibilityError("no admissible c1 on the sweep 2^-10..2^0")
    return C1Choice(best[0], best[1], tuple(sweep))


# ------------------------------------------------------------------ decay fit
def decay_fit(t, values, window: tuple[float, float] | None = None) -> float:
    """Exponential rate ``r`` from a least-squares fit ``log v ~ c - r t``.

    The default window is ``[T/2, T]`` with ``T`` the last sample time.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is None:
        window = (0.5 * t[-1], t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < 2:
        raise FitError("fewer than two samples in the fit window")
    if np.any(~np.isfinite(v[sel])) or np.any(v[sel] <= 0):
        raise FitError("values must be positive on the fit window")
    slope = np.polyfit(t[sel], np.log(v[sel]), 1)[0]
    return float(-slope)
