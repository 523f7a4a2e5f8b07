"""Acceptance criteria 1 to 11, each at its stated tolerance.

Every test records one PASS/FAIL line, repeated in the terminal summary.
"""

import math

import numpy as np
import pytest

from swdrop.cli import self_convergence
from swdrop.diagnostics import (
    balance_residuals,
    elliptic_ratio_check,
    hardy_check,
    hardy_ratio,
    poincare_check,
)
from swdrop.equilibrium import (
    EquilibriumProfile,
    coefficient_ms,
    ode_residual,
    quartic_bump,
)
from swdrop.eulerian import reconstruct, shape_distance
from swdrop.grid import build_grid
from swdrop.lagrangian_solver import (
    LagrangianSystem,
    SolverConfig,
    Variant,
    default_system,
    make_state,
    simulate,
    spatial_force,
)
from swdrop.linear_stability import assemble, decay_fit, spectrum

from conftest import mixed_state

# documented constant of the per-step balance bound |dH/dt + D| <= C (dt^2 + dxi^2)
BALANCE_C = 1e-6


def drift_metrics(traj, system):
    reps = traj.reports
    mass = np.array([r.mass for r in reps])
    mom = np.array([r.momentum for r in reps])
    scale = max(max(np.dot(system.mass_nodes, np.abs(s.theta_t)) for s in traj.states), 1e-300)
    return (float(np.max(np.abs(mass - mass[0])) / mass[0]),
            float(np.max(np.abs(mom - mom[0]))),
            float(np.max(np.abs(mom - mom[0])) / scale))


def rate(traj, col):
    t = np.array([r.t for r in traj.reports])
    return decay_fit(t, np.array([getattr(r, col) for r in traj.reports]))


# ---------------------------------------------------------------- 1
def test_c01_equilibrium_identities(criterion):
    hs = EquilibriumProfile()
    worst_ode = worst_d3 = 0.0
    signs = True
    for N in (16, 64, 256, 1024, 4096):
        grid = build_grid(N)
        xi = grid.xi
        worst_ode = max(worst_ode, ode_residual(hs, grid))
        worst_d3 = max(worst_d3, float(np.max(np.abs(hs.eval(xi, 3) - hs.eval(xi, 1)))))
        signs &= bool(np.all(hs.eval(xi, 2) < 0) and np.all(coefficient_ms(hs, xi) > 0))
    ok = worst_ode <= 1e-12 and worst_d3 <= 1e-12 and signs
    criterion(1, ok, f"ode {worst_ode:.1e}, h'''-h' {worst_d3:.1e}, h''<0 and m_s>0: {signs}")
    assert ok


# ---------------------------------------------------------------- 2
def test_c02_fixed_point(criterion):
    system = default_system(64)
    z = make_state(system, np.zeros(65))
    traj = simulate(z, SolverConfig(dt=1e-3, T=10.0, stride=1000), system)
    n = len(traj.steps["t"])
    th = max(float(np.max(np.abs(s.theta))) for s in traj.states)
    md, pd, _ = drift_metrics(traj, system)
    H = np.array([r.hamiltonian for r in traj.reports])
    hd = float(np.max(np.abs(H - H[0])))
    bal = float(np.max(traj.steps["balance_residual"]))
    ok = n == 10_000 and th <= 1e-12 and max(md, pd, hd, bal) <= 1e-12
    criterion(2, ok, f"{n} steps, max|theta| {th:.1e}, drifts mass {md:.1e} "
                     f"momentum {pd:.1e} H {hd:.1e}")
    assert ok


# ---------------------------------------------------------------- 3
@pytest.mark.slow
def test_c03_conservation(criterion):
    N, dt = 256, 2e-3
    system = default_system(N)
    traj = simulate(mixed_state(system, 1e-3), SolverConfig(dt=dt, T=10.0, stride=250), system)
    md, _, pr = drift_metrics(traj, system)
    bal = float(np.max(traj.steps["balance_residual"]))
    bound = BALANCE_C * (dt**2 + system.grid.dxi**2)
    mono = bool(np.all(traj.steps["dH"] <= 0))
    ok = traj.error is None and md <= 1e-8 and pr <= 1e-6 and bal <= bound and mono
    criterion(3, ok, f"mass {md:.1e}, momentum rel {pr:.1e}, balance {bal:.1e} "
                     f"<= {bound:.1e} (C={BALANCE_C:g}), H monotone: {mono}")
    assert ok


# ---------------------------------------------------------------- 4
def test_c04_linearization(criterion):
    system = default_system(128)
    ops = assemble(system.grid)
    errs = []
    for eps in (1e-4, 1e-5, 1e-6):
        st = make_state(system, lambda s: eps * (s - s**3 / 3))
        F = system.PT @ spatial_force(st, system)
        errs.append(np.linalg.norm(F + ops.K @ system.reduce(st.theta)))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = all(70 <= r <= 130 for r in ratios)
    criterion(4, ok, f"error ratios per decade {ratios[0]:.1f}, {ratios[1]:.1f}")
    assert ok


# ---------------------------------------------------------------- 5
@pytest.mark.slow
def test_c05_linear_stability(criterion):
    parts = []
    ok = True
    lam64 = None
    for N in (64, 128, 256, 512):
        res = spectrum(assemble(build_grid(N)))
        ok &= res.abscissa < 0 and res.kernel_dim == 1
        parts.append(f"N={N}: {res.abscissa:.3f}/{res.kernel_dim}")
        if N == 64:
            lam64 = res.lambda_num
    lin = default_system(64, linearized=True)
    traj = simulate(mixed_state(lin, 1e-3), SolverConfig(dt=1e-3, T=3.0, stride=10), lin)
    r = rate(traj, "E0")
    dev = abs(r - 2 * lam64) / (2 * lam64)
    ok &= dev <= 0.05
    criterion(5, ok, f"abscissa/kernel {', '.join(parts)}; linear fit {r:.3f} vs "
                     f"{2 * lam64:.3f} ({100 * dev:.1f}%)")
    assert ok


# ---------------------------------------------------------------- 6, 7
@pytest.fixture(scope="module")
def decay_runs():
    out = {}
    for N, eps in ((128, 1e-3), (256, 1e-3), (128, 1e-2)):
        system = default_system(N)
        lam = spectrum(assemble(system.grid)).lambda_num
        traj = simulate(mixed_state(system, eps), SolverConfig(dt=2e-3, T=3.0, stride=25), system)
        out[N, eps] = (system, traj, lam)
    return out


@pytest.mark.slow
def test_c06_nonlinear_decay(criterion, decay_runs):
    ok = True
    parts = []
    for (N, eps), (system, traj, lam) in decay_runs.items():
        r = rate(traj, "E_NL1")
        d, _ = shape_distance(reconstruct(traj.final, system), EquilibriumProfile())
        dev = abs(r - 2 * lam) / (2 * lam)
        ok &= traj.error is None and r > 0 and d <= 5e-4
        if eps == 1e-3:
            ok &= dev <= 0.15
        parts.append(f"N={N} eps={eps:g}: rate {r:.3f} vs {2 * lam:.3f}, shape {d:.1e}")
    criterion(6, ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_c07_elliptic_ratio(criterion, decay_runs):
    r128 = elliptic_ratio_check(decay_runs[128, 1e-3][1].reports)
    r256 = elliptic_ratio_check(decay_runs[256, 1e-3][1].reports)
    rel = abs(r128 - r256) / r256
    ok = math.isfinite(r128) and math.isfinite(r256) and rel <= 0.2
    criterion(7, ok, f"max E_NL2/E_NL1 {r128:.5f} (N=128), {r256:.5f} (N=256), diff {100 * rel:.2f}%")
    assert ok


# ---------------------------------------------------------------- 8
@pytest.mark.slow
def test_c08_dynamic_energy_law(criterion):
    var = Variant(nu=1.0, slip=1.0)
    system = default_system(64, variant=var)
    init = mixed_state(system, 1e-2, center=False)
    stats = []
    for dt in (2e-3, 1e-3):
        traj = simulate(init, SolverConfig(dt=dt, T=1.0, stride=100, variant=var), system,
                        reports=False)
        b = balance_residuals(traj)
        dmax = float(np.max(traj.steps["dissipation"]))
        stats.append((dt, b, dmax, traj.error))
    ok = all(e is None for *_, e in stats)
    # balance residual bounded by dt^2 times the dissipation scale and halving dt cuts it ~4x
    ok &= all(b["max_balance_residual"] <= dt**2 * dmax for dt, b, dmax, _ in stats)
    order = stats[0][1]["max_balance_residual"] / stats[1][1]["max_balance_residual"]
    ok &= order >= 3.0
    ok &= all(b["max_dH"] <= 0 for _, b, _, _ in stats)
    mom = max(b["max_momentum_residual"] for _, b, _, _ in stats)
    ok &= mom <= 1e-10
    criterion(8, ok, f"balance {stats[0][1]['max_balance_residual']:.1e} -> "
                     f"{stats[1][1]['max_balance_residual']:.1e} (ratio {order:.2f}), "
                     f"H nonincreasing, momentum residual {mom:.1e}")
    assert ok


# ---------------------------------------------------------------- 9
def test_c09_general_data(criterion):
    prof = quartic_bump()
    system = LagrangianSystem(build_grid(128, prof), Variant())
    init = make_state(system, np.zeros(129))
    traj = simulate(init, SolverConfig(dt=1e-3, T=0.5, stride=25), system)
    e = np.array([1.0 + system.D @ s.theta for s in traj.states])
    phi = np.array([r.Phi for r in traj.reports])
    ok = (traj.error is None and system.mode == "general" and e.min() >= 0.5 and e.max() <= 1.5
          and np.all(np.isfinite(phi)) and phi.max() <= 4 * phi[0] + 1)
    criterion(9, ok, f"eta_xi in [{e.min():.4f}, {e.max():.4f}], Phi max {phi.max():.3f} "
                     f"<= {4 * phi[0] + 1:.3f}")
    assert ok


# ---------------------------------------------------------------- 10
def test_c10_inequalities(criterion):
    ests = []
    for k, p in ((1.0, 2.0), (2.0, 2.0), (0.0, 2.0), (1.5, 2.0), (1.0, 3.0)):
        for fam in ("monomials", "trig", "random"):
            ests.append(hardy_check(k, p, fam))
    ests += poincare_check("random", grids=(256, 512))
    good = all(0 < e.constant < np.inf and e.stable for e in ests)
    one = (lambda s: np.ones_like(s), lambda s: np.zeros_like(s))
    lin = (lambda s: s, lambda s: np.ones_like(s))
    oracle = max(abs(hardy_ratio(*one, 1.0, 2.0) - 3.0),
                 abs(hardy_ratio(*lin, 1.0, 2.0) - 0.625),
                 abs(hardy_ratio(*lin, 0.0, 2.0) - 1.0))
    ok = good and oracle <= 1e-6
    wp = ests[-2]
    criterion(10, ok, f"{len(ests)} estimates finite/positive/stable: {good}; weighted Poincare "
                      f"{wp.per_grid[0]:.4f} -> {wp.per_grid[1]:.4f}; oracle error {oracle:.1e}")
    assert ok


# ---------------------------------------------------------------- 11
def test_c11_self_convergence(criterion):
    grids = (64, 128, 256)
    finals = {}
    for N in grids:
        system = default_system(N)
        traj = simulate(mixed_state(system, 1e-2), SolverConfig(dt=1e-3, T=0.2, stride=10**9),
                        system, reports=False)
        finals[N] = (traj.final.theta, traj.final.theta_t)
    conv = self_convergence(finals, grids)
    ok = conv["order_theta"] >= 1.5 and conv["order_theta_t"] >= 1.5
    criterion(11, ok, f"observed order theta {conv['order_theta']:.2f}, "
                      f"theta_t {conv['order_theta_t']:.2f}")
    assert ok
