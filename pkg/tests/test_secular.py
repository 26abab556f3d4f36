import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perihelion import secular as sec
from perihelion.orbital import kepler_eccentric_anomaly

STAR = sec.PlanarSecularState(-0.006, -0.8, 652.0, 1.45, 24.394)


def brute_potential(b, r, G, g, n=20000):
    """Direct midpoint sum over the mean anomaly with Cartesian positions."""
    ell = 2 * np.pi * (np.arange(n) + 0.5) / n
    e = np.sqrt(1 - G * G)
    xi = kepler_eccentric_anomaly(e, ell)
    P = np.array([-np.cos(g), -np.sin(g)])
    Q = np.array([np.sin(g), -np.cos(g)])
    x = np.outer(np.cos(xi) - e, P) + np.outer(G * np.sin(xi), Q)
    d = np.linalg.norm(np.array([r, 0.0]) - b * x, axis=1)
    return np.mean(1 / d)


def test_mass_params_equal_binary():
    kappa = sec.kappa_for_beta(80.0, 1.0)
    p = sec.derive_mass_params(1.0, kappa)
    assert p.beta == pytest.approx(80.0, rel=1e-13)
    assert p.betabar == pytest.approx(80.0, rel=1e-13)
    assert p.beta_lower == pytest.approx(40.0) and p.beta_upper == pytest.approx(80.0)
    # mu = 1 gives 4 kappa^2 / (2 + kappa) = 80
    assert kappa == pytest.approx(10 + np.sqrt(140), rel=1e-13)


def test_mass_params_formulas():
    mu, kappa = 0.3, 2.0
    p = sec.derive_mass_params(mu, kappa)
    assert p.gamma_const == pytest.approx(kappa ** 3 * (1 + mu) ** 4 / (mu ** 3 * (1 + mu + kappa)))
    assert p.beta == pytest.approx(kappa ** 2 * (1 + mu) ** 2 / (mu ** 2 * (1 + mu + kappa)))
    assert p.betabar == pytest.approx(mu * p.beta)
    q = sec.derive_mass_params(mu, kappa, sec.ONE_CENTRIC)
    assert q.beta == pytest.approx(kappa ** 2 * (1 + mu) ** 2 / (mu ** 2 * (1 + kappa)))
    assert q.beta_upper == pytest.approx(q.beta + q.betabar)
    assert q.beta_lower == pytest.approx(q.betabar)


def test_mass_params_errors():
    with pytest.raises(ValueError):
        sec.derive_mass_params(0.0, 1.0)
    with pytest.raises(ValueError):
        sec.derive_mass_params(1.0, 1.0, "heliocentric")


def test_potential_zero_beta():
    assert sec.averaged_potential(0.0, 7.0, 0.3, 0.2) == 1 / 7.0


def test_potential_against_brute_force():
    for b, r, G, g in [(1.0, 5.0, 0.4, 0.3), (2.5, 9.0, -0.7, 2.0), (-1.0, 4.0, 0.1, 1.0)]:
        assert sec.averaged_potential(b, r, G, g) == pytest.approx(
            brute_potential(b, r, G, g), rel=1e-9)


def test_potential_rules_agree():
    a = sec.averaged_potential(1.0, 6.0, 0.5, 0.4, rule=sec.QUAD_MEAN)
    b = sec.averaged_potential(1.0, 6.0, 0.5, 0.4, rule=sec.QUAD_ECCENTRIC)
    assert a == pytest.approx(b, abs=1e-13)


def test_homogeneity():
    b, r, G, g = 3.0, 50.0, 0.5, 0.7
    lhs = sec.averaged_potential(b, r, G, g)
    assert abs(lhs - sec.averaged_potential(1.0, r / b, G, g) / b) <= 1e-12


def test_circular_orbit_has_no_perihelion():
    vals = [sec.averaged_potential(1.0, 4.0, 1.0, g) for g in np.linspace(0, 6, 9)]
    assert np.ptp(vals) <= 1e-12


def test_node_doubling(rng):
    for _ in range(20):
        r = rng.uniform(4.5, 40)
        G = rng.uniform(-0.99, 0.99)
        g = rng.uniform(0, 2 * np.pi)
        a = sec.averaged_potential(1.0, r, G, g, n_nodes=2 ** 10)
        b = sec.averaged_potential(1.0, r, G, g, n_nodes=2 ** 11)
        assert abs(a - b) <= 1e-12


def test_potential_broadcasts():
    out = sec.averaged_potential(1.0, np.array([5.0, 6.0]), 0.3, np.array([[0.1], [0.2]]))
    assert out.shape == (2, 2)


def test_potential_errors():
    with pytest.raises(ValueError):
        sec.averaged_potential(1.0, 5.0, 0.3, 0.1, n_nodes=1000)
    with pytest.raises(ValueError):
        sec.averaged_potential(1.0, 5.0, 1.3, 0.1)
    with pytest.raises(sec.NearCollisionError):
        # G = 0, g = 0: the inner orbit is the segment from 0 to (2, 0), through x'
        sec.averaged_potential(1.0, 1.0, 0.0, 0.0, n_nodes=2 ** 12)


def test_secular_zero_beta_is_kepler():
    p = sec.params_from_betas(0.0, 0.0)
    s = sec.PlanarSecularState(0.1, 0.3, 9.0, 0.5, 2.0)
    ref = 0.1 ** 2 / 2 + (2.0 - 0.3) ** 2 / (2 * 81) - 1 / 9.0
    assert sec.secular_hamiltonian(s, p) == pytest.approx(ref, abs=1e-15)
    assert sec.series_hamiltonian(s, p) == pytest.approx(ref, abs=1e-15)


def test_series_vs_quadrature_starred():
    p = sec.params_from_betas(80.0, 80.0)
    hq = sec.secular_hamiltonian(STAR, p)
    hs = sec.series_hamiltonian(STAR, p, 10)
    assert abs(hs - hq) / abs(hq) <= 1e-10


def test_series_converges_geometrically():
    p = sec.params_from_betas(80.0, 80.0)
    s = sec.PlanarSecularState(0.0, 0.2, 500.0, 0.3, 24.394)
    hq = sec.secular_hamiltonian(s, p, n_nodes=2 ** 11)
    errs = [abs(sec.series_hamiltonian(s, p, nu) - hq) for nu in (2, 4, 6)]
    assert errs[1] < errs[0] and errs[2] < errs[1]
    ratio = 80 * (1 + np.sqrt(1 - 0.04)) / 500
    assert errs[2] / errs[1] < 3 * ratio ** 2


@pytest.mark.parametrize("frame", [sec.JACOBI, sec.ONE_CENTRIC])
def test_series_vs_quadrature_unequal(frame):
    p = sec.params_from_betas(3.0, 7.0, frame)
    s = sec.PlanarSecularState(0.0, 0.5, 200.0, 0.9, 1.0)
    hq = sec.secular_hamiltonian(s, p)
    hs = sec.series_hamiltonian(s, p, 12)
    assert abs(hs - hq) / abs(hq) <= 1e-12


def test_state_validation():
    with pytest.raises(ValueError):
        sec.PlanarSecularState(0, 1.2, 5, 0, 1)
    with pytest.raises(ValueError):
        sec.PlanarSecularState(0, 0.2, -5, 0, 1)


def test_amplitudes():
    a = sec.series_amplitudes(80.0, 80.0, 9)
    assert np.all(a[1::2] == 0)
    assert a[2] == pytest.approx(6400.0)
    b = sec.series_amplitudes(2.0, 5.0, 3, sec.ONE_CENTRIC)
    assert a[0] == 1 and b[0] == 1
    assert b[1] == pytest.approx(5.0)


@pytest.fixture(scope="module")
def table():
    return sec.expansion_coeffs(sec.params_from_betas(80.0, 80.0), 10)


def test_odd_coefficients_vanish(table):
    G, g = np.meshgrid(np.linspace(-0.99, 0.99, 21), np.linspace(0, 2 * np.pi, 21))
    for nu in (1, 3, 5, 7, 9):
        assert np.max(np.abs(table.evaluate(nu, G, g))) <= 1e-10


def test_q2_closed_form(table):
    G, g = np.meshgrid(np.linspace(-1, 1, 50), np.linspace(0, np.pi, 50))
    assert np.max(np.abs(table.evaluate(2, G, g) - sec.q2_closed_form(G, g))) <= 1e-10
    assert np.allclose(sec.q2_closed_form(1.0, np.linspace(0, 3, 7)), -0.25, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10), st.floats(-0.99, 0.99), st.floats(-4, 4))
def test_pi_periodicity(nu, G, g):
    tab = sec.CoeffTable(80.0, 80.0, sec.JACOBI, 10, np.zeros(1), np.zeros(1))
    assert tab.evaluate(nu, G, g + np.pi) == pytest.approx(tab.evaluate(nu, G, g), rel=1e-13,
                                                           abs=1e-14)


def test_table_harmonics_reconstruct(table):
    for iG in (3, 30, 60):
        G = table.G_grid[iG]
        for g in (0.1, 1.3):
            for nu in (2, 4, 8):
                rec = sum(table.harmonics[nu, p, iG] * np.cos(2 * p * g)
                          for p in range(table.harmonics.shape[1]))
                assert rec == pytest.approx(table.evaluate(nu, G, g), abs=1e-12)


def test_gradient_matches_fd(table):
    G, g, h = 0.3, 0.8, 1e-6
    dG, dg = table.gradient(4, G, g)
    assert dG == pytest.approx((table.evaluate(4, G + h, g) - table.evaluate(4, G - h, g)) / (2 * h),
                               rel=1e-6)
    assert dg == pytest.approx((table.evaluate(4, G, g + h) - table.evaluate(4, G, g - h)) / (2 * h),
                               rel=1e-6)


def test_table_json(table):
    blob = json.loads(table.to_json())
    assert blob["nu_max"] == 10
    assert {"nu", "p", "values"} <= set(blob["coefficients"][0])


def test_fast_equilibrium():
    assert sec.fast_equilibrium(25.0) == (0.0, 625.0)
    with pytest.raises(ValueError):
        sec.fast_equilibrium(0.0)
    R0, r0 = sec.fast_equilibrium(3.0)
    h = 1e-4
    d = (sec.fast_hamiltonian(0, r0 + h, 3.0) - sec.fast_hamiltonian(0, r0 - h, 3.0)) / (2 * h)
    assert abs(d) < 1e-10


def test_h_slow0_even_for_zero_C():
    G = np.linspace(-0.9, 0.9, 11)
    a = sec.h_slow0(G, 0.4, 0.0, 80.0, 625.0)
    assert np.allclose(a, a[::-1], atol=0, rtol=1e-14)


def test_h_slow0_matches_series_leading_order():
    # at the fast equilibrium the quadrupole term of the series is the beta^2 part
    C, beta = 25.0, 80.0
    r0 = C * C
    p = sec.params_from_betas(beta, beta)
    G, g = 0.4, 0.9
    slow2 = sec.slow_hamiltonian(G, g, r0, C, p, nu_max=2)
    assert slow2 == pytest.approx(float(sec.h_slow0(G, g, C, beta, r0)), rel=1e-12)


def test_slow0_equilibria():
    C, beta = 25.0, 80.0
    r0 = C * C
    eq = sec.slow0_equilibria(C, beta, r0)
    assert {k for *_, k, _ in eq} == {"min", "max"}
    for g, G, _, _ in eq:
        assert np.allclose(sec.h_slow0_gradient(G, g, C, beta, r0), 0, atol=1e-15)
