import math

import numpy as np
import pytest

from swdrop.equilibrium import (
    DomainError,
    EquilibriumProfile,
    GeneralProfile,
    PhysicalParams,
    ProfileError,
    coefficient_ms,
    comparability_constants,
    mass_integral,
    ode_residual,
    quartic_bump,
    validate_reference,
)
from swdrop.grid import build_grid

E = math.e
# frozen closed-form values (computed with mpmath at 30 digits)
H0 = 0.462117157260009758502318483644  # (e - 1) / (e + 1)
MASS = 0.626070570998662607272322493862  # 4 / (e^2 - 1)
MS0 = 1.78644773296592741014969893434  # h^2 - 4 h h'' at 0


@pytest.fixture(scope="module")
def hs():
    return EquilibriumProfile()


def test_endpoint_value_is_exact_zero(hs):
    assert hs.eval(1.0, 0) == 0.0
    assert hs.eval(-1.0, 0) == 0.0


def test_even_symmetry(hs):
    assert hs.eval(0.0, 1) == pytest.approx(0.0, abs=1e-15)
    xi = np.linspace(0, 1, 11)
    np.testing.assert_allclose(hs.eval(xi, 0), hs.eval(-xi, 0), atol=1e-15)
    np.testing.assert_allclose(hs.eval(xi, 1), -hs.eval(-xi, 1), atol=1e-15)


def test_center_value(hs):
    assert hs.eval(0.0, 0) == pytest.approx(H0, rel=1e-14)
    assert H0 == pytest.approx((E - 1) / (E + 1), rel=1e-15)


def test_closed_form_matches_explicit_expression(hs):
    xi = np.linspace(-1, 1, 41)
    explicit = (E**2 + 1) / (E**2 - 1) - (np.exp(xi + 1) + np.exp(1 - xi)) / (E**2 - 1)
    np.testing.assert_allclose(hs.eval(xi, 0), explicit, atol=1e-15)


def test_contact_slopes(hs):
    assert hs.eval(-1.0, 1) == pytest.approx(1.0, rel=1e-14)
    assert hs.eval(1.0, 1) == pytest.approx(-1.0, rel=1e-14)


def test_domain_errors(hs):
    with pytest.raises(DomainError):
        hs.eval(1.5, 0)
    with pytest.raises(DomainError):
        hs.eval(0.0, 5)
    with pytest.raises(DomainError):
        hs.eval(np.nan, 0)


def test_derivatives_against_finite_differences(hs):
    xi = np.linspace(-0.9, 0.9, 7)
    d = 1e-5
    for k in range(1, 5):
        fd = (hs.eval(xi + d, k - 1) - hs.eval(xi - d, k - 1)) / (2 * d)
        np.testing.assert_allclose(hs.eval(xi, k), fd, rtol=1e-8, atol=1e-8)


def test_coefficient_ms(hs):
    assert coefficient_ms(hs, 1.0) == pytest.approx(2.0, rel=1e-14)
    assert coefficient_ms(hs, -1.0) == pytest.approx(2.0, rel=1e-14)
    assert coefficient_ms(hs, 0.0) == pytest.approx(MS0, rel=1e-13)
    # the rounded value quoted for m_s(0) is 1.7866; the closed form gives 1.78645
    assert abs(coefficient_ms(hs, 0.0) - 1.7866) < 2e-4


def test_ms_equals_normalized_formula(hs):
    xi = np.linspace(-1, 1, 33)
    h, h1, h2 = hs.eval(xi, 0), hs.eval(xi, 1), hs.eval(xi, 2)
    np.testing.assert_allclose(coefficient_ms(hs, xi), 2 * h1**2 - 4 * h * h2 + h**2, rtol=1e-14)


def test_mass_closed_form(hs):
    assert mass_integral(hs) == pytest.approx(MASS, rel=1e-14)
    assert MASS == pytest.approx(4 / (E**2 - 1), rel=1e-15)
    assert hs.antiderivative(1.0) == pytest.approx(MASS, rel=1e-14)


def test_mass_scales_linearly_in_alpha():
    base = mass_integral(EquilibriumProfile())
    scaled = mass_integral(EquilibriumProfile(PhysicalParams(alpha=2.5)))
    assert scaled == pytest.approx(2.5 * base, rel=1e-14)


def test_mass_of_general_parameters_by_quadrature():
    prof = EquilibriumProfile(PhysicalParams(g=3.0, gamma=0.7, alpha=0.6, R=1.7))
    x, w = np.polynomial.legendre.leggauss(200)
    quad = float(np.dot(w, prof.eval(x, 0))) * 1.7
    assert mass_integral(prof) == pytest.approx(quad, rel=1e-12)


@pytest.mark.parametrize("N", [16, 64, 512, 4096])
def test_ode_residual_and_identities(hs, N):
    grid = build_grid(N)
    assert ode_residual(hs, grid) <= 1e-12
    xi = grid.xi
    assert np.max(np.abs(hs.eval(xi, 3) - hs.eval(xi, 1))) <= 1e-12
    assert np.all(hs.eval(xi, 2) < 0)
    assert np.all(coefficient_ms(hs, xi) > 0)


def test_ode_residual_detects_perturbation(hs):
    grid = build_grid(128)
    pert = GeneralProfile.perturbed(hs, [0.01, 0.0, -0.01])
    assert ode_residual(pert, grid) > 1e-3


def test_pointwise_stress_identity(hs):
    # g h^2 / 2 + gamma (h'^2 - 2 h h'') / 2 = gamma alpha^2 / 2
    p = hs.params
    xi = np.linspace(-1, 1, 101)
    h, h1, h2 = hs.eval(xi, 0), hs.eval(xi, 1), hs.eval(xi, 2)
    lhs = 0.5 * p.g * h**2 + 0.5 * p.gamma * (h1**2 - 2 * h * h2)
    np.testing.assert_allclose(lhs, 0.5 * p.gamma * p.alpha**2, atol=1e-14)


def test_comparability(hs):
    c1, c2 = comparability_constants(hs, np.linspace(-1, 1, 2001))
    assert 0 < c1 <= c2 < np.inf
    # h / (1 - xi^2) runs from h(0) at the centre to |h'(1)| / 2 at the edges
    assert c1 == pytest.approx(H0, rel=1e-12)
    assert c2 == pytest.approx(0.5, abs=1e-3)


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(g=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(mu=-1.0)
    p = PhysicalParams.from_ratio(2.0)
    assert p.R == 1.0 and p.lam == pytest.approx(0.5)


def test_pancake_limit_is_flat_in_the_middle():
    prof = EquilibriumProfile(PhysicalParams.from_ratio(20.0))
    # height approaches alpha * lambda away from the edges
    assert prof.eval(0.0, 0) == pytest.approx(1.0 / 20.0, rel=1e-8)
    assert ode_residual(prof, build_grid(256)) < 1e-10


def test_quartic_bump_matches_mass_and_is_valid(hs):
    bump = quartic_bump()
    assert mass_integral(bump) == pytest.approx(MASS, rel=1e-14)
    c1, c2 = validate_reference(bump)
    assert c1 > 0
    assert bump.eval(-1.0, 1) == pytest.approx(1.0)
    assert ode_residual(bump, build_grid(64)) > 1e-3


def test_validate_reference_rejects_convex_profile():
    bad = GeneralProfile.from_polynomial([0.0, 0.0, 0.0, 0.0, 1.0])
    with pytest.raises(ProfileError):
        validate_reference(bad)


def test_general_profile_from_samples_reproduces_smooth_profile(hs):
    xi = np.linspace(-1, 1, 401)
    prof = GeneralProfile.from_samples(xi, hs.eval(xi, 0))
    pts = np.linspace(-0.95, 0.95, 17)
    np.testing.assert_allclose(prof.eval(pts, 0), hs.eval(pts, 0), atol=1e-12)
    np.testing.assert_allclose(prof.eval(pts, 2), hs.eval(pts, 2), atol=1e-6)
    assert prof.antiderivative(1.0) == pytest.approx(MASS, rel=1e-10)
