import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from swdrop.grid import build_grid, weighted_norm
from swdrop.lagrangian_solver import Variant, closure_matrix, default_system

GRIDS = {N: build_grid(N) for N in (16, 32, 64)}
SYSTEMS = {N: default_system(N) for N in (16, 32)}
DYN = default_system(32, variant=Variant(nu=1.0, slip=0.5))

sizes = st.sampled_from([16, 32, 64])
coef = st.floats(-1.0, 1.0, allow_nan=False)
small = st.floats(-0.05, 0.05, allow_nan=False)


def smooth(xi, cs):
    return sum(c * np.cos((k + 1) * np.pi * (xi + 1) / 2) for k, c in enumerate(cs))


@given(sizes, st.lists(coef, min_size=1, max_size=5))
def test_quadrature_kills_odd_functions(N, cs):
    g = GRIDS[N]
    f = sum(c * g.xi ** (2 * k + 1) for k, c in enumerate(cs))
    assert abs(g.quad(f)) <= 1e-14


@given(sizes, coef, coef)
def test_quadrature_exact_on_linears(N, a, b):
    g = GRIDS[N]
    assert abs(g.quad(a * g.xi + b) - 2 * b) <= 1e-14


@given(sizes, st.lists(coef, min_size=1, max_size=4))
def test_weighted_norm_decreases_with_power(N, cs):
    # h_s < 1, so a larger weight exponent gives a smaller norm
    g = GRIDS[N]
    f = smooth(g.xi, cs)
    vals = [weighted_norm(g, f, p) for p in (0.0, 0.5, 1.0, 1.5, 2.0)]
    assert all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(vals, vals[1:]))


@given(st.sampled_from([16, 32]), st.floats(-2.0, 2.0, allow_nan=False))
def test_force_vanishes_on_translations(N, c):
    s = SYSTEMS[N]
    z = np.zeros(N + 1)
    assert np.max(np.abs(s.force(np.full(N + 1, c), z))) <= 1e-9


@given(st.sampled_from([16, 32]), st.lists(coef, min_size=2, max_size=8))
def test_closure_prolongation_has_zero_endpoint_slope(N, cs):
    q = np.resize(np.asarray(cs), N - 1)
    th = closure_matrix(N) @ q
    assert abs(-3 * th[0] + 4 * th[1] - th[2]) <= 1e-14
    assert abs(3 * th[-1] - 4 * th[-2] + th[-3]) <= 1e-14


@settings(max_examples=50)
@given(st.sampled_from([16, 32]), st.lists(small, min_size=1, max_size=4))
def test_energy_excess_nonnegative_near_equilibrium(N, cs):
    s = SYSTEMS[N]
    th = s.P @ smooth(s.grid.xi[1:-1], cs)
    assert s.energy_excess(th) >= -1e-15


@settings(max_examples=50)
@given(st.lists(small, min_size=1, max_size=4), st.lists(coef, min_size=1, max_size=4))
def test_dissipation_nonnegative(cth, cv):
    xi = DYN.grid.xi
    d = DYN.dissipation(smooth(xi, cth), smooth(xi, cv))
    assert d["total"] >= 0 and min(d["viscous"], d["slip"], d["contact_line"]) >= 0
