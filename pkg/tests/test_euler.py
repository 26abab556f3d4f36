import numpy as np
import pytest

from perihelion import euler as eu
from perihelion import flow
from perihelion.orbital import OrbitalElements


def test_e0_values():
    for r in (0.5, 1.5, 3.0):
        assert eu.e0_planar(r, 0.0, 0.0) == r
        assert eu.e0_planar(r, 0.0, np.pi) == pytest.approx(-r, abs=1e-15)
    assert eu.e0_planar(3.0, 0.5, 0.0) == pytest.approx(0.25 + 3 * np.sqrt(0.75), abs=1e-15)


def test_kepler_limit_of_J():
    st = eu.CartesianState((0.3, 0.9), (1.1, -0.2))
    J = eu.euler_hamiltonian(st, eu.EulerConfig(0.0, (4.0, 0.0)))
    x, y = np.array(st.x), np.array(st.y)
    assert J == y @ y / 2 - 1 / np.linalg.norm(x)


def test_far_centre_limit():
    st = eu.CartesianState((0.3, 0.9), (1.1, -0.2))
    kep = eu.euler_hamiltonian(st, eu.EulerConfig(0.0, (1.0, 0.0)))
    for R in (1e2, 1e3, 1e4):
        J = eu.euler_hamiltonian(st, eu.EulerConfig(0.7, (R, 0.0)))
        assert abs(J - kep) * R == pytest.approx(0.7, rel=1e-1)


def test_elements_match_cartesian():
    el = OrbitalElements(1.0, 0.5, 0.0, g=0.2, ell=0.3)
    st, xp = eu.state_from_elements(el, 5.0)
    cfg = eu.EulerConfig(0.7, xp)
    assert eu.euler_hamiltonian_elements(el, 5.0, 0.7) == pytest.approx(
        eu.euler_hamiltonian(st, cfg), abs=1e-12)
    assert eu.euler_integral_elements(el, 5.0, 0.7) == pytest.approx(
        eu.euler_integral(st, cfg), abs=1e-12)


def test_merging_centres():
    st = eu.CartesianState((0.3, 0.9), (1.1, -0.2))
    E = eu.euler_integral(st, eu.EulerConfig(0.5, (0.0, 0.0)))
    M = eu.angular_momentum(st)
    assert E == pytest.approx(M @ M, abs=1e-15)


def test_E0_from_cartesian(rng):
    for _ in range(50):
        el = OrbitalElements(1.0, rng.uniform(-0.95, 0.95), g=rng.uniform(-3, 3),
                             ell=rng.uniform(0, 6))
        r = rng.uniform(0.5, 5)
        st, xp = eu.state_from_elements(el, r)
        E = eu.euler_integral(st, eu.EulerConfig(0.0, xp))
        assert E == pytest.approx(float(eu.e0_planar(r, el.G, el.g)), abs=1e-12)


def test_symmetric_form_cross_check():
    # centres m+ at -v0 and m- at +v0; shift of the asymmetric frame to the midpoint
    v0 = np.array([0.6, 0.2])
    u = np.array([0.3, -0.7])
    v = np.array([0.4, 1.3])
    mp, mm = 1.0, 0.4
    cfg = eu.EulerConfig(mm, tuple(2 * v0))
    st = eu.CartesianState(tuple(u), tuple(v + v0))
    J = eu.euler_hamiltonian(st, cfg)
    assert J == pytest.approx(eu.symmetric_hamiltonian(u, v, v0, mp, mm), abs=1e-14)
    E_asym = eu.euler_integral(st, cfg)
    E_sym = eu.symmetric_integral(u, v, v0, mp, mm)
    assert E_sym - 2 * (v0 @ v0) * J == pytest.approx(E_asym, abs=1e-13)


def test_collision_rejected():
    with pytest.raises(eu.CollisionError):
        eu.euler_hamiltonian(eu.CartesianState((1, 0), (0, 0)), eu.EulerConfig(0.5, (1, 0)))
    with pytest.raises(eu.CollisionError):
        eu.euler_integral(eu.CartesianState((1, 0), (1, 0)), eu.EulerConfig(0.5, (1, 0)))


def test_euler_integral_conserved():
    cfg = eu.EulerConfig(0.6, (1.5, 0.3))
    y0 = np.array([0.9, -0.4, 0.1, 1.05])
    traj = flow.integrate_model(flow.euler_rhs, y0, 100.0, (cfg.Mprime, *cfg.xprime), 1e-12)

    def E(v):
        return eu.euler_integral(eu.CartesianState(v[2:], v[:2]), cfg)

    vals = np.array([E(v) for v in traj.y])
    assert np.max(np.abs(vals - vals[0])) <= 1e-9
    J = np.array([eu.euler_hamiltonian(eu.CartesianState(v[2:], v[:2]), cfg) for v in traj.y])
    assert np.max(np.abs(J - J[0])) <= 1e-9


@pytest.mark.parametrize("r", [0.5, 1.5])
def test_portrait_below_bifurcation(r):
    pc = eu.classify_portrait(r)
    assert pc.energies("min") == [-r]
    assert pc.energies("saddle") == [r]
    assert pc.energies("max") == [1 + r * r / 4]
    assert pc.rotational_band == (r < 1)
    tops = sorted(e.G for e in pc.equilibria if e.kind == "max")
    assert tops[1] == pytest.approx(np.sqrt(1 - r * r / 4), abs=1e-15)
    for e in pc.equilibria:
        assert np.max(np.abs(eu.e0_gradient(r, e.G, e.g))) <= 1e-10


def test_portrait_above_bifurcation():
    pc = eu.classify_portrait(3.0)
    assert not pc.has_saddle
    assert pc.energies("max") == [3.0] and pc.energies("min") == [-3.0]
    assert pc.admissible_energy == (-3.0, 3.0)
    assert "S0" not in pc.separatrices


def test_portrait_rejects_bifurcation():
    with pytest.raises(ValueError):
        eu.classify_portrait(2.0)
    with pytest.raises(ValueError):
        eu.classify_portrait(-1.0)


def test_vertical_branch_domain():
    assert eu.vertical_branch_domain(0.5) == [(-np.pi, np.pi)]
    for lo, hi in eu.vertical_branch_domain(3.0):
        for g in np.linspace(lo, hi, 11):
            assert abs(np.cos(g)) <= 1 / 3 + 1e-12
    # just outside, the branch is complex
    lo, hi = eu.vertical_branch_domain(3.0)[1]
    assert 1 - 9 * np.cos(lo - 1e-3) ** 2 < 0


def test_level_curve_membership():
    pts = eu.level_curve(1.5, 0.3, 200)
    assert np.max(np.abs(eu.e0_planar(1.5, pts[:, 1], pts[:, 0]) - 0.3)) <= 1e-12


def test_separatrix_at_t0():
    so = eu.SeparatrixOrbit(0.5)
    G, g = eu.separatrix_orbit(so, 0.0)
    assert G == pytest.approx(np.sqrt(0.75), abs=1e-15)
    assert abs(g) == pytest.approx(np.pi, abs=1e-7)
    assert eu.e0_planar(0.5, np.sqrt(0.75), np.pi) == pytest.approx(0.5, abs=1e-15)


def test_separatrix_level_and_limits():
    for r in (0.3, 0.5, 1.2, 1.8):
        for sign in (1, -1):
            so = eu.SeparatrixOrbit(r, t0=0.7, sign=sign)
            t = np.linspace(-20, 20, 801)
            G, g = eu.separatrix_orbit(so, t)
            assert np.max(np.abs(eu.e0_planar(r, G, g) - r)) <= 1e-10
            Ge, ge = eu.separatrix_orbit(so, np.array([-60.0, 60.0]))
            assert np.all(np.abs(Ge) < 1e-6) and np.all(np.abs(ge) < 1e-3)


def test_separatrix_rejects_bad_r():
    with pytest.raises(ValueError):
        eu.SeparatrixOrbit(2.0)


def test_separatrix_matches_flow():
    so = eu.SeparatrixOrbit(0.5, t0=0.0)
    G0, g0 = eu.separatrix_orbit(so, -5.0)
    traj = flow.integrate_model(flow.e0_rhs, np.array([G0, g0]), 5.0, [0.5], 1e-13, t0=-5.0)
    ts = np.linspace(-5, 5, 201)
    G, g = eu.separatrix_orbit(so, ts)
    num = np.array([traj(t) for t in ts])
    dg = np.angle(np.exp(1j * (num[:, 1] - g)))
    assert max(np.max(np.abs(num[:, 0] - G)), np.max(np.abs(dg))) <= 1e-6


def test_renormalizability_and_distinct_levels():
    assert eu.verify_renormalizability(10.0, 50, level=3.0) <= 1e-8
    u = []
    for level in (3.0, -4.0):
        pts = eu.level_set_samples(10.0, level, 5)
        from perihelion.secular import averaged_potential
        u.append(averaged_potential(1.0, 10.0, pts[0, 1], pts[0, 0], n_nodes=2 ** 12))
    assert abs(u[0] - u[1]) > 1e-4


def test_level_set_errors():
    with pytest.raises(eu.LevelSetEmptyError):
        eu.level_set_samples(10.0, 50.0, 10)
    with pytest.raises(eu.LevelSetEmptyError):
        eu.level_set_samples(1.0, 1.0 + 1e-3, 10)


def test_bracket_vanishes(rng):
    for _ in range(20):
        r = rng.uniform(2.5, 15)
        assert abs(eu.u_e0_bracket(r, rng.uniform(-0.9, 0.9), rng.uniform(-3, 3))) <= 1e-6


def test_bracket_detects_noncommuting():
    # {G, E0} = -dE0/dg in the pair (g, G); a non-zero control value
    val = flow.poisson_bracket(lambda z: z[1], lambda z: eu.e0_planar(3.0, z[1], z[0]),
                               (0.7, 0.4), 1)
    assert val == pytest.approx(-eu.e0_gradient(3.0, 0.4, 0.7)[0], rel=1e-8)
