import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import bisect
from perihelion import orbital as orb
from perihelion.euler import e0_planar


def test_kepler_circular_is_identity():
    assert orb.solve_kepler(1.0, 1.0, 0.7) == pytest.approx(0.7, abs=1e-15)


def test_kepler_half_period_fixed():
    assert orb.solve_kepler(1.0, 0.6, np.pi) == pytest.approx(np.pi, abs=1e-14)


def test_kepler_against_bisection():
    xi = orb.solve_kepler(1.0, 0.6, 1.0)
    ref = bisect(lambda x: x - 0.8 * np.sin(x) - 1.0, 0.0, 2 * np.pi)
    assert abs(xi - ref) <= 1e-14


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 0.999999), st.floats(-50, 50))
def test_kepler_residual(e, ell):
    xi = orb.kepler_eccentric_anomaly(e, ell)
    assert abs(xi - e * np.sin(xi) - ell) <= 1e-14 * max(1.0, abs(ell))


def test_kepler_vectorised_and_parabolic_limit():
    ell = np.linspace(-7, 7, 101)
    xi = orb.kepler_eccentric_anomaly(1.0, ell)
    assert np.max(np.abs(xi - np.sin(xi) - ell)) <= 1e-14 * 7


def test_kepler_rejects_hyperbolic():
    with pytest.raises(orb.KeplerConvergenceError):
        orb.kepler_eccentric_anomaly(1.2, 0.3)


def test_elements_validation():
    with pytest.raises(ValueError):
        orb.OrbitalElements(1.0, 1.2)
    with pytest.raises(ValueError):
        orb.OrbitalElements(-1.0, 0.0)
    with pytest.raises(ValueError):
        orb.OrbitalElements(1.0, 0.3, Theta=0.5)
    el = orb.OrbitalElements(2.0, 1.0)
    assert el.a == 4.0 and el.e == pytest.approx(np.sqrt(0.75))


def test_ellipse_factors_circular():
    for ell in np.linspace(0, 6, 7):
        e, varrho, _, _ = orb.ellipse_factors(orb.OrbitalElements(1.0, 1.0, ell=ell))
        assert e == 0.0 and varrho == pytest.approx(1.0, abs=1e-15)


def test_ellipse_factors_perihelion():
    e, varrho, p, nu = orb.ellipse_factors(orb.OrbitalElements(1.0, 0.6, ell=0.0))
    assert e == pytest.approx(0.8) and varrho == pytest.approx(0.2, abs=1e-15)
    assert nu == 0.0


def test_ellipse_identity_random(rng):
    worst = 0.0
    for _ in range(1000):
        G = rng.uniform(-1, 1)
        el = orb.OrbitalElements(1.0, G, g=rng.uniform(0, 2 * np.pi),
                                 ell=rng.uniform(0, 2 * np.pi))
        _, varrho, p, nu = orb.ellipse_factors(el)
        worst = max(worst, abs(p - varrho * np.cos(nu + el.g)))
    assert worst <= 1e-12


def test_c1_examples():
    G, g = orb.c1_to_orbital(orb.ActionAngle(0.5, 0.0))
    assert G == pytest.approx(np.sqrt(0.75)) and g == 0.0
    G, g = orb.c1_to_orbital(orb.ActionAngle(0.5, np.pi / 2))
    assert G == pytest.approx(0.0, abs=1e-16)
    assert g == pytest.approx(-np.arctan(np.sqrt(3)), abs=1e-15)


def test_c1_roundtrip_energy():
    calG, gamma, r = 0.3, 1.1, 10.0
    G, g = orb.c1_to_orbital(orb.ActionAngle(calG, gamma))
    assert e0_planar(r, G, g) == pytest.approx(orb.e0_action_angle(calG, gamma, r), abs=1e-12)


def test_c1_level_set_random(rng):
    for _ in range(200):
        calG = rng.uniform(-0.99, 0.99)
        if abs(calG) < 1e-3:
            continue
        gamma = rng.uniform(-np.pi / 2, np.pi / 2)
        G, g = orb.c1_to_orbital(orb.ActionAngle(calG, gamma))
        assert np.sqrt(1 - G * G) * np.cos(g) == pytest.approx(calG, abs=1e-12)


def test_c1_degenerate():
    with pytest.raises(orb.DegenerateInputError):
        orb.c1_to_orbital(orb.ActionAngle(0.0, 0.3))
    with pytest.raises(ValueError):
        orb.ActionAngle(1.0, 0.3)


def test_c2_examples():
    R, r = orb.c2_to_radial(orb.RadialPair(1.0, np.pi))
    assert R == pytest.approx(0.0, abs=1e-15) and r == pytest.approx(2.0, abs=1e-15)
    R, r = orb.c2_to_radial(orb.RadialPair(2.0, 2.0))
    xi = bisect(lambda x: x - np.sin(x) - 2.0, 0.0, 2 * np.pi)
    assert r == pytest.approx(4 * (1 - np.cos(xi)), abs=1e-13)
    assert abs(R * R / 2 - 1 / r + 1 / 8) <= 1e-12
    assert R > 0


@settings(max_examples=300, deadline=None)
@given(st.floats(0.2, 10), st.floats(0.01, 2 * np.pi - 0.01))
def test_c2_energy_identity(y, x):
    assert abs(orb.radial_energy_defect(y, x)) <= 1e-12


def test_c2_singular():
    with pytest.raises(orb.DegenerateInputError):
        orb.c2_to_radial(orb.RadialPair(0.0, 1.0))
    with pytest.raises(orb.DegenerateInputError):
        orb.c2_to_radial(orb.RadialPair(1.0, 0.0))


def test_planar_cartesian_kepler_energy():
    el = orb.OrbitalElements(1.3, 0.7, g=0.4, ell=2.2)
    x, y, xp = orb.planar_cartesian(el, 5.0)
    assert y @ y / 2 - 1 / np.linalg.norm(x) == pytest.approx(-1 / (2 * 1.3 ** 2), abs=1e-13)
    assert x[0] * y[1] - x[1] * y[0] == pytest.approx(0.7, abs=1e-13)
    assert np.array_equal(xp, [5.0, 0.0])
