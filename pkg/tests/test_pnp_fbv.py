import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imexstab.errors import NumericFailure
from imexstab.imex_core import StepperHistory, run_sbdf2, sbdf2_step
from imexstab.mesh import build_piecewise, build_uniform, dxx_matrix
from imexstab.pnp_fbv import (
    CURRENT,
    PnpFbvProblem,
    PnpParams,
    PnpState,
    default_initial_state,
    explicit_rhs,
    fbv_fluxes,
    robin_residuals,
    solve_poisson,
    steady_residual,
)
from imexstab.steady import find_steady_state

M30 = build_uniform(30)


def test_fbv_examples():
    p = PnpParams()
    assert fbv_fluxes(p, 1.0, 1.0, 0.0, 0.0) == (0.0, 0.0)
    assert fbv_fluxes(PnpParams(j_ra=0.0), 2.0, 1.0, 0.0, 0.0)[0] == pytest.approx(8.0)
    assert fbv_fluxes(p, 1.0, 1.0, 0.0, np.log(4.0))[1] == pytest.approx(-6.0, rel=1e-14)
    with pytest.raises(NumericFailure):
        fbv_fluxes(p, 1.0, 1.0, 800.0, 0.0)


@pytest.mark.parametrize("kw", [dict(eps=0.0), dict(delta=-1.0), dict(k_ca=-1.0), dict(drive="power")])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        PnpParams(**kw)


def test_poisson_neutral_zero_drive():
    ones = np.ones(M30.N)
    pot = solve_poisson(PnpParams(v=0.0), M30, ones, ones)
    assert np.max(np.abs(pot.phi)) == 0.0


def test_poisson_linear_robin():
    # phi = a + b x with a = b (anode) and b = 2 - (a + b) (cathode) -> a = b = 2/3
    ones = np.ones(M30.N)
    pot = solve_poisson(PnpParams(eps=1.0, delta=1.0, v=2.0), M30, ones, ones)
    np.testing.assert_allclose(pot.phi, 2 / 3 * (1 + M30.nodes), rtol=1e-12)
    assert pot.dphi_left == pytest.approx(-2 / 3) and pot.dphi_right == pytest.approx(2 / 3)


def test_poisson_current_mode_linear():
    ones = np.ones(M30.N)
    p = PnpParams(eps=1.0, delta=1.0, drive=CURRENT, j_ext=0.1)
    pot = solve_poisson(p, M30, ones, ones, q=0.3)
    np.testing.assert_allclose(pot.phi, 0.3 * (1 + M30.nodes), rtol=1e-12)
    assert pot.v == pytest.approx(0.9, rel=1e-12)
    with pytest.raises(ValueError):
        solve_poisson(p, M30, ones, ones)


def test_poisson_dirichlet_limit():
    ones = np.ones(M30.N)
    pot = solve_poisson(PnpParams(eps=1.0, delta=0.0, v=2.0), M30, ones, ones)
    np.testing.assert_allclose(pot.phi, 2 * M30.nodes, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.02, 1.0), st.floats(0.0, 3.0), st.sampled_from(["voltage", "current"]))
def test_poisson_residual_random(seed, eps, delta, drive):
    rng = np.random.default_rng(seed)
    mesh = build_piecewise(0.1, 1 / 150, 4 / 75)
    if drive == CURRENT and delta == 0.0:
        delta = 0.5
    p = PnpParams(eps=eps, delta=delta, drive=drive, j_ext=0.2)
    cp, cm = 1 + 0.5 * rng.random(mesh.N), 1 + 0.5 * rng.random(mesh.N)
    q = rng.standard_normal() if drive == CURRENT else None
    pot = solve_poisson(p, mesh, cp, cm, q)
    assert pot.residual <= 1e-10
    r0, r1 = robin_residuals(p, mesh, cp, cm, pot, q)
    assert abs(r0) <= 1e-10 and abs(r1) <= 1e-10


def test_explicit_rhs_equilibrium():
    p = PnpParams(v=0.0)
    s = default_initial_state(p, M30)
    flat = PnpState(np.ones(M30.N), np.ones(M30.N))
    assert np.max(np.abs(explicit_rhs(p, M30, flat))) < 1e-14
    # g(1) vanishes up to roundoff in stencil entries of size ~1/h^2
    assert steady_residual(p, M30, flat) < 1e-12
    assert s.c_plus[0] == 1.0 and s.q is None


def test_migration_matches_laplacian_of_potential():
    p = PnpParams(v=2.0)
    prob = PnpFbvProblem(p, M30)
    u = np.ones(prob.dim)
    phi = prob.potential(u).phi
    f = prob.eval_f(u)
    lphi = dxx_matrix(M30) @ phi
    np.testing.assert_allclose(f[1:M30.N - 1], lphi[1:-1], rtol=1e-10, atol=1e-9)
    np.testing.assert_allclose(f[M30.N + 1:2 * M30.N - 1], -lphi[1:-1], rtol=1e-10, atol=1e-9)


def test_initial_state_and_packing():
    m = build_uniform(8)
    s = default_initial_state(PnpParams(drive=CURRENT), m)
    assert s.c_plus[2] == pytest.approx(1.1) and s.c_minus[0] == 1.0 and s.q == 0.0
    u = s.pack()
    assert u.size == 2 * m.N + 1
    back = PnpState.unpack(u, m.N)
    np.testing.assert_array_equal(back.c_plus, s.c_plus)
    assert back.q == 0.0
    with pytest.raises(ValueError):
        PnpState.unpack(np.zeros(5), m.N)


@settings(max_examples=50)
@given(st.integers(3, 40), st.integers(0, 10**6), st.booleans())
def test_pack_roundtrip(n, seed, with_q):
    rng = np.random.default_rng(seed)
    s = PnpState(rng.random(n), rng.random(n), float(rng.random()) if with_q else None)
    b = PnpState.unpack(s.pack(), n)
    np.testing.assert_array_equal(b.c_plus, s.c_plus)
    np.testing.assert_array_equal(b.c_minus, s.c_minus)
    assert b.q == s.q


def test_implicit_part():
    prob = PnpFbvProblem(PnpParams(drive=CURRENT), M30)
    assert np.max(np.abs(prob.apply_g(np.ones(prob.dim)))) < 1e-12
    rng = np.random.default_rng(3)
    x = rng.standard_normal(prob.dim)
    G = prob.g_matrix()
    np.testing.assert_allclose(G @ x, prob.apply_g(x), rtol=1e-12)
    rhs = (1.5 * np.eye(prob.dim) - 0.01 * G) @ x
    np.testing.assert_allclose(prob.solve_shifted(1.5, 0.01, rhs), x, rtol=1e-10)


def test_laplacian_second_order_on_sine():
    errs = []
    for n in (20, 40, 80):
        m = build_uniform(n)
        prob = PnpFbvProblem(PnpParams(), m)
        s = np.sin(np.pi * m.nodes)
        g = prob.apply_g(np.concatenate([s, s]))[: m.N]
        errs.append(np.max(np.abs(g[1:-1] + np.pi**2 * s[1:-1])))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_mass_conservation_and_balance():
    p = PnpParams(eps=0.05, v=2.0)
    mesh = build_uniform(90)
    prob = PnpFbvProblem(p, mesh)
    dt = 1e-3
    u0 = prob.initial_state()
    w = prob.conserved_weights()[0]
    m0 = w @ u0
    vol = mesh.volumes
    levels = []

    def check(n, t, u):
        levels.append(u)
        assert abs(w @ u - m0) <= 1e-10 * m0

    run_sbdf2(prob, u0, dt, 200, callback=check)
    # c_plus inventory obeys the discrete SBDF2 balance with total influx -F - G
    u_a, u_b, u_c = levels[-3:]
    M = lambda u: vol @ u[: mesh.N]
    influx = lambda u: -sum(prob.boundary_fluxes(u))
    lhs = (1.5 * M(u_c) - 2 * M(u_b) + 0.5 * M(u_a)) / dt
    rhs = 2 * influx(u_b) - influx(u_a)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-10)


def test_neutral_state_fixed_point():
    from imexstab.adaptive import AdaptiveConfig, integrate

    prob = PnpFbvProblem(PnpParams(v=0.0), M30)
    u = np.ones(prob.dim)
    # dt_max stays below the threshold so roundoff is not amplified
    tr = integrate(prob, u, 0.0, 5.0, AdaptiveConfig(dt_max=1e-3), stride=1000)
    np.testing.assert_allclose(tr.final_state, u, atol=1e-11)


def test_steady_state_residuals():
    p = PnpParams(eps=0.05, v=2.0)
    mesh = build_uniform(90)
    prob = PnpFbvProblem(p, mesh)
    ss = find_steady_state(prob, prob.initial_state(), 1e-3, t_max=60)
    assert ss.residual <= 1e-8
    assert prob.steady_residual(ss.u) == pytest.approx(ss.residual)
    pert = ss.u + 0.1 * np.sin(2 * np.pi * np.tile(mesh.nodes, 2))
    assert prob.steady_residual(pert) > 1e-3
    # steady states are fixed points of the scheme
    h = StepperHistory(ss.u, ss.u, 0.0, 2e-3)
    np.testing.assert_allclose(sbdf2_step(prob, h, 2e-3), ss.u, atol=1e-8)
    assert prob.min_concentration(ss.u) > 0


def test_current_mode_steady_state_carries_current():
    p = PnpParams(eps=0.1, drive=CURRENT, j_ext=0.3)
    prob = PnpFbvProblem(p, build_uniform(40))
    ss = find_steady_state(prob, prob.initial_state(), 2e-3, t_max=80)
    assert ss.residual < 1e-8
    F, G = prob.boundary_fluxes(ss.u)
    # at steady state the cathode reaction delivers j_ext and the anode balances it
    assert G / 4 == pytest.approx(0.3, rel=1e-6)
    assert -F == pytest.approx(G, rel=1e-6)


def test_snapshot_csv(tmp_path):
    prob = PnpFbvProblem(PnpParams(), M30)
    prob.snapshot_to_csv(prob.initial_state(), tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "x,c_plus,c_minus,phi" and len(rows) == M30.N + 1
