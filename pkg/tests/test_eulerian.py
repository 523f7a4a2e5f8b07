import numpy as np
import pytest

from swdrop.equilibrium import EquilibriumProfile, PhysicalParams
from swdrop.eulerian import (
    ReconstructionError,
    contact_report,
    nodal_eta_xi,
    reconstruct,
    resample,
    shape_distance,
)
from swdrop.lagrangian_solver import (
    LagState,
    SolverConfig,
    StateError,
    Variant,
    default_system,
    make_state,
    simulate,
)

from conftest import mixed_state


def test_equilibrium_reconstruction(system64):
    snap = reconstruct(make_state(system64, np.zeros(65)), system64)
    np.testing.assert_array_equal(snap.h[1:-1], system64.grid.h[1:-1])
    assert snap.h[0] == 0.0 and snap.h[-1] == 0.0
    assert snap.a == -1.0 and snap.b == 1.0
    assert snap.slope_a == pytest.approx(1.0, rel=1e-14)
    assert snap.slope_b == pytest.approx(-1.0, rel=1e-14)
    assert snap.adot == 0.0 and snap.bdot == 0.0


def test_dilation_is_rejected(system64):
    with pytest.raises(StateError):
        make_state(system64, lambda s: 0.1 * s)


def test_reconstruction_matches_change_of_variables():
    # h(eta(xi)) = h_s(xi) / eta_xi(xi) with the exact eta_xi = 1 + eps (1 - xi^2)
    eps = 0.01
    hs = EquilibriumProfile()
    errs = []
    for N in (256, 512):
        system = default_system(N)
        st = make_state(system, lambda s: eps * (s - s**3 / 3))
        snap = reconstruct(st, system)
        xi = system.grid.xi
        exact = hs.eval(xi, 0) / (1 + eps * (1 - xi**2))
        errs.append(np.max(np.abs(snap.h[1:-1] - exact[1:-1])))
    assert errs[1] < errs[0]
    assert errs[1] <= 1e-6


def test_reconstruction_positions_and_mass(system128):
    st = make_state(system128, lambda s: 0.01 * (s - s**3 / 3))
    snap = reconstruct(st, system128)
    assert np.all(np.diff(snap.x) > 0)
    assert np.all(snap.h[1:-1] > 0)
    ref = system128.grid.quad(system128.grid.h)
    assert snap.mass == pytest.approx(ref, rel=1e-12)
    assert snap.slope_a == pytest.approx(1.0, abs=1e-3)


def test_non_monotone_map_rejected():
    system = default_system(64, variant=Variant(nu=1.0))
    th = -1.2 * (system.grid.xi - system.grid.xi**3 / 3)
    with pytest.raises(ReconstructionError):
        reconstruct(LagState(0.0, th, np.zeros(65)), system)


def test_nodal_eta_xi_exact_on_quadratic_strain(system64):
    xi = system64.grid.xi
    th = 0.02 * (xi - xi**3 / 3)
    ex = nodal_eta_xi(system64, th)
    np.testing.assert_allclose(ex, 1 + 0.02 * (1 - xi**2), atol=2e-5)


def test_contact_report_static(short_static_run):
    system, traj = short_static_run
    rep = contact_report(reconstruct(s, system) for s in traj.states)
    assert np.max(np.abs(rep["slope_a"] - 1.0)) <= 1e-3
    assert np.max(np.abs(rep["slope_b"] + 1.0)) <= 1e-3
    assert "law_residual_a" not in rep


def test_contact_report_equilibrium(system64):
    z = make_state(system64, np.zeros(65))
    snap = reconstruct(z, system64)
    rep = contact_report([snap, snap])
    assert np.all(rep["adot"] == 0) and np.all(rep["bdot"] == 0)
    assert np.all(rep["angle_dev_a"] == 0)
    with pytest.raises(ValueError):
        contact_report([snap])


def test_contact_report_dynamic_law():
    # the initial velocity violates the law; after the boundary layer the
    # residual is first order in dxi, from the nodal strain extrapolation
    var = Variant(nu=1.0, slip=1.0)
    worst = []
    for N in (64, 128):
        system = default_system(N, variant=var)
        init = mixed_state(system, 1e-2, center=False)
        traj = simulate(init, SolverConfig(dt=1e-3, T=0.5, stride=50, variant=var), system,
                        reports=False)
        rep = contact_report((reconstruct(s, system) for s in traj.states), nu=1.0)
        late = rep["t"] >= 0.1
        scale = np.max(np.abs(rep["adot"]))
        res = max(np.max(np.abs(rep["law_residual_a"][late])),
                  np.max(np.abs(rep["law_residual_b"][late])))
        assert res <= 0.05 * scale
        worst.append(res)
    assert worst[1] <= 0.6 * worst[0]


def test_shape_distance_of_translate(system64):
    z = make_state(system64, np.full(65, 0.1))
    snap = reconstruct(z, system64)
    d, s = shape_distance(snap, EquilibriumProfile())
    assert d <= 1e-8 and s == pytest.approx(0.1, abs=1e-6)


def test_resample(system64):
    snap = reconstruct(make_state(system64, np.zeros(65)), system64)
    xs, h = resample(snap, 101)
    assert xs[0] == -1.0 and xs[-1] == 1.0 and h[0] == 0.0


def test_small_and_large_bond_number_shapes():
    x = np.linspace(-1, 1, 401)
    # small drops: h / lambda ~ (alpha R / (2 lambda)) (1 - x^2), heights in capillary units
    p = PhysicalParams.from_ratio(0.25)
    cap = EquilibriumProfile(p)
    parabola = p.alpha * p.R / (2 * p.lam) * (1 - x**2)
    assert np.max(np.abs(cap.eval(x, 0) / p.lam - parabola)) <= 0.02 * parabola.max()
    pancake = EquilibriumProfile(PhysicalParams.from_ratio(16.0))
    mid = np.abs(x) <= 0.5
    assert np.max(np.abs(pancake.eval(x[mid], 0) - 1 / 16)) <= 0.02 / 16
