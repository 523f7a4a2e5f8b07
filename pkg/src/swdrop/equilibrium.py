"""Equilibrium height profiles and the reference profiles used by the solver.

The steady droplet solves ``g h h' = gamma h h'''`` on ``(-R, R)`` with
``h(+-R) = 0`` and contact slopes ``h'(-R) = alpha``, ``h'(R) = -alpha``.  With
``lambda = sqrt(gamma / g)`` the solution is a difference of exponentials,

    h_s(x) = alpha lambda (1 + c - p(x) - q(x)) / (1 - c),

where ``p(x) = exp((x - R)/lambda)``, ``q(x) = exp(-(x + R)/lambda)`` and
``c = exp(-2R/lambda)``.  This scaled form never overflows, even for very
flat (pancake) drops with ``R >> lambda``.

Besides the closed-form :class:`EquilibriumProfile`, this module provides
:class:`GeneralProfile`, a non-equilibrium reference height ``h_0`` built
from a polynomial, from callables or from samples.  The general-data solver
uses it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import make_interp_spline


class DomainError(ValueError):
    """Raised for evaluation outside ``[-1, 1]`` or an unsupported order."""


class ProfileError(ValueError):
    """Raised when a reference profile violates its structural hypotheses."""


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionless constants of the droplet model.

    Parameters
    ----------
    g, gamma, alpha : float
        Gravity, surface tension and equilibrium contact slope.
    mu : float
        Viscosity, entering only the dissipation.
    R : float
        Half width of the equilibrium support.
    """

    g: float = 2.0
    gamma: float = 2.0
    alpha: float = 1.0
    mu: float = 0.5
    R: float = 1.0

    def __post_init__(self):
        for name in ("g", "gamma", "alpha", "R"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"{name} must be positive, got {val!r}")
        if not np.isfinite(self.mu) or self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu!r}")

    @property
    def lam(self) -> float:
        """Capillary length ``sqrt(gamma / g)``."""
        return float(np.sqrt(self.gamma / self.g))

    @classmethod
    def normalized(cls) -> "PhysicalParams":
        return cls()

    @classmethod
    def from_ratio(cls, R_over_lambda: float, alpha: float = 1.0, gamma: float = 2.0,
                   mu: float = 0.5) -> "PhysicalParams":
        """Parameters with ``R = 1`` and a prescribed ``R / lambda``."""
        lam = 1.0 / R_over_lambda
        return cls(g=gamma / lam**2, gamma=gamma, alpha=alpha, mu=mu, R=1.0)

    def to_dict(self) -> dict:
        return {"g": self.g, "gamma": self.gamma, "alpha": self.alpha,
                "mu": self.mu, "R": self.R}


def _check_order(order: int) -> int:
    if int(order) != order or not 0 <= order <= 4:
        raise DomainError(f"derivative order must be in 0..4, got {order!r}")
    return int(order)


def _check_xi(xi, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)) or np.any(xi < lo) or np.any(xi > hi):
        raise DomainError(f"coordinate outside [{lo}, {hi}]")
    return xi


@dataclass(frozen=True)
class EquilibriumProfile:
    """Closed-form equilibrium ``h_s`` and its derivatives.

    The profile is evaluated at the physical coordinate ``x = R xi`` for
    ``xi`` in ``[-1, 1]``, and derivatives are taken with respect to ``x``.
    With the normalized parameters ``R = 1``, so ``x`` and ``xi`` coincide.
    """

    params: PhysicalParams = field(default_factory=PhysicalParams)

    is_equilibrium = True

    @property
    def descriptor(self) -> dict:
        return {"kind": "equilibrium", **self.params.to_dict()}

    def _parts(self, x):
        p = self.params
        lam, R = p.lam, p.R
        c = np.exp(-2.0 * R / lam)
        denom = -np.expm1(-2.0 * R / lam)
        ep = np.exp((x - R) / lam)
        eq = np.exp(-(x + R) / lam)
        return lam, c, denom, ep, eq

    def eval(self, xi, order: int = 0):
        """Return the ``order``-th derivative of ``h_s`` at ``x = R xi``."""
        order = _check_order(order)
        xi = _check_xi(xi)
        p = self.params
        x = p.R * xi
        lam, c, denom, ep, eq = self._parts(x)
        scale = p.alpha * lam / denom
        if order == 0:
            val = scale * ((1.0 + c) - ep - eq)
            val = np.where(np.abs(xi) == 1.0, 0.0, val)
        else:
            val = -scale * lam ** (-order) * (ep + (-1) ** order * eq)
        return val if val.ndim else float(val)

    def antiderivative(self, xi):
        """Primitive of ``h_s`` in ``x``, normalized to vanish at ``x = -R``."""
        xi = _check_xi(xi)
        p = self.params
        x = p.R * xi
        lam, c, denom, ep, eq = self._parts(x)
        scale = p.alpha * lam / denom
        prim = scale * ((1.0 + c) * x - lam * ep + lam * eq)
        xm = -p.R
        _, _, _, ep0, eq0 = self._parts(xm)
        prim0 = scale * ((1.0 + c) * xm - lam * ep0 + lam * eq0)
        return prim - prim0

    def __call__(self, xi, order: int = 0):
        return self.eval(xi, order)


def coefficient_ms(profile, xi):
    """Coefficient of the second-order part of the linearized operator.

    Returns ``(g/2) h^2 + gamma (h'^2 - 2 h h'')``, which for the normalized
    constants is ``m_s = 2 h'^2 - 4 h h'' + h^2``.
    """
    p = profile.params
    h = profile.eval(xi, 0)
    h1 = profile.eval(xi, 1)
    h2 = profile.eval(xi, 2)
    return 0.5 * p.g * h * h + p.gamma * (h1 * h1 - 2.0 * h * h2)


def mass_integral(profile) -> float:
    """Closed-form ``int h_s dx`` over the support."""
    if isinstance(profile, EquilibriumProfile):
        p = profile.params
        lam, R = p.lam, p.R
        ratio = (1.0 + np.exp(-2 * R / lam)) / (-np.expm1(-2 * R / lam))
        return float(p.alpha * lam * (2.0 * R * ratio - 2.0 * lam))
    return float(profile.antiderivative(1.0))


def ode_residual(profile, grid) -> float:
    """Max over grid nodes of ``|d/dx(g h^2 / 2) - gamma h h'''|``."""
    p = profile.params
    xi = grid.xi
    h = profile.eval(xi, 0)
    h1 = profile.eval(xi, 1)
    h3 = profile.eval(xi, 3)
    return float(np.max(np.abs(p.g * h * h1 - p.gamma * h * h3)))


def comparability_constants(profile, xi) -> tuple[float, float]:
    """Fitted ``c1, c2`` with ``c1 (1 - xi^2) <= h <= c2 (1 - xi^2)``."""
    xi = np.asarray(xi, dtype=float)
    inner = xi[np.abs(xi) < 1.0]
    ratio = profile.eval(inner, 0) / (1.0 - inner**2)
    return float(np.min(ratio)), float(np.max(ratio))


@dataclass(frozen=True)
class GeneralProfile:
    """Reference height ``h_0`` on ``[-1, 1]`` given by derivative callables.

    Parameters
    ----------
    funcs : sequence of callables
        ``funcs[k](xi)`` returns the ``k``-th derivative for ``k = 0..4``.
    params : PhysicalParams
        Physical constants; ``R`` must be 1.
    primitive : callable, optional
        Antiderivative vanishing at -1.  Gauss quadrature is used if absent.
    label : str
        Free-form description recorded in checkpoints and manifests.
    """

    funcs: tuple
    params: PhysicalParams = field(default_factory=PhysicalParams)
    primitive: Callable | None = None
    label: str = "general"

    is_equilibrium = False

    def __post_init__(self):
        if len(self.funcs) != 5:
            raise ProfileError("need callables for derivative orders 0..4")
        if self.params.R != 1.0:
            raise ProfileError("general profiles live on the reference interval [-1, 1]")

    @property
    def descriptor(self) -> dict:
        return {"kind": "general", "label": self.label, **self.params.to_dict()}

    def eval(self, xi, order: int = 0):
        order = _check_order(order)
        xi = _check_xi(xi)
        val = np.asarray(self.funcs[order](xi), dtype=float)
        if order == 0:
            val = np.where(np.abs(xi) == 1.0, 0.0, val)
        return val if val.ndim else float(val)

    __call__ = eval

    def antiderivative(self, xi):
        xi = _check_xi(xi)
        if self.primitive is not None:
            return np.asarray(self.primitive(xi), dtype=float) - float(self.primitive(-1.0))
        nodes, weights = np.polynomial.legendre.leggauss(24)
        xi_arr = np.atleast_1d(xi)
        out = np.empty_like(xi_arr)
        for i, b in enumerate(xi_arr):
            s = 0.5 * (b + 1.0) * (nodes + 1.0) - 1.0
            out[i] = 0.5 * (b + 1.0) * np.dot(weights, self.funcs[0](s))
        return out if np.ndim(xi) else float(out[0])

    @classmethod
    def from_polynomial(cls, coeffs: Sequence[float] | Polynomial,
                        params: PhysicalParams | None = None, label: str = "polynomial"):
        """Profile from power-series coefficients in ``xi`` (lowest first)."""
        poly = coeffs if isinstance(coeffs, Polynomial) else Polynomial(coeffs)
        funcs = tuple(poly.deriv(k) if k else poly for k in range(5))
        prim = poly.integ()
        return cls(funcs, params or PhysicalParams(), primitive=prim, label=label)

    @classmethod
    def from_samples(cls, xi, h, params: PhysicalParams | None = None,
                     label: str = "samples"):
        """Quintic interpolating spline through nodal samples of ``h_0``."""
        spl = make_interp_spline(np.asarray(xi, float), np.asarray(h, float), k=5)
        funcs = tuple(spl.derivative(k) if k else spl for k in range(5))
        prim = spl.antiderivative()
        return cls(funcs, params or PhysicalParams(), primitive=prim, label=label)

    @classmethod
    def perturbed(cls, base: EquilibriumProfile, poly_coeffs: Sequence[float],
                  label: str = "perturbed"):
        """``base + poly`` with analytic derivatives of both parts."""
        poly = Polynomial(poly_coeffs)
        funcs = tuple(
            (lambda s, k=k: base.eval(s, k) + (poly.deriv(k) if k else poly)(s))
            for k in range(5)
        )
        pint = poly.integ()
        prim = lambda s: base.antiderivative(s) + pint(s) - pint(-1.0)  # noqa: E731
        return cls(funcs, base.params, primitive=prim, label=label)


def quartic_bump(params: PhysicalParams | None = None, mass: float | None = None) -> GeneralProfile:
    """Concave quartic ``(1-xi^2)/2 + c (1-xi^2)^2`` with matched mass.

    With ``alpha = 1`` the slopes at +-1 equal the contact slope.  ``c`` is
    chosen so that the integral equals ``mass`` (default: the equilibrium mass).
    """
    params = params or PhysicalParams()
    if mass is None:
        mass = mass_integral(EquilibriumProfile(params))
    a = 0.5 * params.alpha
    # int (1-x^2) = 4/3, int (1-x^2)^2 = 16/15
    c = (mass - a * 4.0 / 3.0) / (16.0 / 15.0)
    one = Polynomial([1.0, 0.0, -1.0])
    prof = GeneralProfile.from_polynomial(a * one + c * one**2, params, label=f"quartic_bump(c={c:.17g})")
    validate_reference(prof)
    return prof


def validate_reference(profile, n_check: int = 2049) -> tuple[float, float]:
    """Check concavity, endpoint slopes and comparability of a general profile.

    Returns the fitted comparability constants.
    """
    xi = np.linspace(-1.0, 1.0, n_check)
    alpha = profile.params.alpha
    h = profile.eval(xi, 0)
    if np.any(h[1:-1] <= 0):
        raise ProfileError("reference height must be positive in the interior")
    if np.any(profile.eval(xi, 2) > 1e-12):
        raise ProfileError("reference height must be concave")
    s = (profile.eval(-1.0, 1), profile.eval(1.0, 1))
    if abs(s[0] - alpha) > 1e-8 or abs(s[1] + alpha) > 1e-8:
        raise ProfileError(f"endpoint slopes {s} differ from +-alpha={alpha}")
    c1, c2 = comparability_constants(profile, xi)
    if not (c1 > 0 and np.isfinite(c2)):
        raise ProfileError("reference height not comparable to the distance function")
    return c1, c2
