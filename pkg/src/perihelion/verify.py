"""Invariant suites shared by ``perihelion verify`` and the test-suite.

Each suite returns a list of :class:`Check` rows; a suite passes when every
row does.
"""
from dataclasses import dataclass

import numpy as np

from . import euler, orbital, secular
from .flow import poisson_bracket

SUITES = ("brackets", "renormalizability", "parity", "identities")


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    tol: float
    detail: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tol)


def brackets_suite(n_points=200, seed=0, n_nodes=secular.DEFAULT_NODES):
    """``{U, E0}`` in ``(g, G)`` and ``{J, E}`` in Cartesian variables."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        r = rng.uniform(2.5, 20.0)
        G = rng.uniform(-0.95, 0.95)
        g = rng.uniform(-np.pi, np.pi)
        worst = max(worst, abs(euler.u_e0_bracket(r, G, g, n_nodes=n_nodes)))
    cfg = euler.EulerConfig(0.7, (1.3, 0.4))
    worst_je = 0.0
    n_je = 0
    while n_je < n_points:
        z = np.concatenate([rng.uniform(-2, 2, 2), rng.uniform(-1, 1, 2)])
        x = z[:2]
        if min(np.linalg.norm(x), np.linalg.norm(x - cfg.xp)) < 0.2:
            continue

        def J(w):
            return euler.euler_hamiltonian(euler.CartesianState(w[2:], w[:2]), cfg)

        def E(w):
            return euler.euler_integral(euler.CartesianState(w[2:], w[:2]), cfg)

        worst_je = max(worst_je, abs(poisson_bracket(J, E, z, 2)))
        n_je += 1
    return [Check("brackets", "{U,E0}", worst, 1e-6, f"{n_points} points, {n_nodes} nodes"),
            Check("brackets", "{J,E}", worst_je, 1e-6, f"{n_points} points")]


def renormalizability_suite(r=10.0, n_samples=50, n_nodes=2 ** 12):
    rows = []
    for level in (3.0, -5.0):
        dev = euler.verify_renormalizability(r, n_samples, level=level, n_nodes=n_nodes)
        rows.append(Check("renormalizability", f"spread r={r:g} level={level:g}", dev, 1e-8,
                          f"{n_samples} samples, {n_nodes} nodes"))
    return rows


def parity_suite(nu_max=secular.DEFAULT_NU_MAX, n_grid=50, q2=None):
    """Odd coefficients vanish for ``beta = betabar`` and ``q_2`` has its closed form.

    ``q2`` replaces the closed form (used to check that the suite can fail).
    """
    q2 = secular.q2_closed_form if q2 is None else q2
    table = secular.CoeffTable(80.0, 80.0, secular.JACOBI, nu_max, np.zeros(1), np.zeros(1))
    G, g = np.meshgrid(np.linspace(-0.98, 0.98, n_grid), np.linspace(0, np.pi, n_grid))
    odd = max(float(np.max(np.abs(table.evaluate(nu, G, g)))) for nu in range(1, nu_max, 2))
    diff = float(np.max(np.abs(table.evaluate(2, G, g) - q2(G, g))))
    return [Check("parity", "max |q_odd|", odd, 1e-10, f"nu <= {nu_max - 1}, {n_grid}x{n_grid}"),
            Check("parity", "q2 closed form", diff, 1e-10, f"{n_grid}x{n_grid} grid")]


STARRED = secular.PlanarSecularState(-0.006, -0.8, 652.0, 1.45, 24.394)


def identities_suite(nu_max=secular.DEFAULT_NU_MAX, n_nodes=secular.DEFAULT_NODES, seed=0):
    rng = np.random.default_rng(seed)
    ys = rng.uniform(0.3, 5.0, 1000)
    xs = rng.uniform(0.05, 2 * np.pi - 0.05, 1000)
    c2 = max(abs(orbital.radial_energy_defect(y, x)) for y, x in zip(ys, xs))

    b, r, G, g = 3.0, 50.0, 0.5, 0.7
    hom = abs(secular.averaged_potential(b, r, G, g, n_nodes=n_nodes)
              - secular.averaged_potential(1.0, r / b, G, g, n_nodes=n_nodes) / b)

    e = rng.uniform(0, 0.99, 200)
    ell = rng.uniform(-10, 10, 200)
    kep = max(abs(orbital.kepler_eccentric_anomaly(ei, li) - ei
                  * np.sin(orbital.kepler_eccentric_anomaly(ei, li)) - li)
              for ei, li in zip(e, ell))

    params = secular.params_from_betas(80.0, 80.0)
    hs = secular.series_hamiltonian(STARRED, params, nu_max)
    hq = secular.secular_hamiltonian(STARRED, params, n_nodes=n_nodes)
    hs2 = secular.series_hamiltonian(STARRED, params, nu_max + 2)
    return [Check("identities", "c2 energy identity", c2, 1e-12, "1000 samples"),
            Check("identities", "homogeneity", hom, 1e-12, f"{n_nodes} nodes"),
            Check("identities", "Kepler residual", kep, 1e-14, "200 samples"),
            Check("identities", "series vs quadrature", abs(hs - hq) / abs(hq), 1e-10,
                  f"nu_max={nu_max}, {n_nodes} nodes"),
            Check("identities", f"nu_max {nu_max} -> {nu_max + 2}", abs(hs2 - hs) / abs(hs),
                  1e-9, "relative change of H at the starred state")]


def run_suites(names=SUITES, nu_max=secular.DEFAULT_NU_MAX, n_nodes=secular.DEFAULT_NODES,
               n_points=200, seed=0):
    rows = []
    for name in names:
        if name == "brackets":
            rows += brackets_suite(n_points, seed, n_nodes)
        elif name == "renormalizability":
            rows += renormalizability_suite(n_nodes=max(n_nodes, 2 ** 12))
        elif name == "parity":
            rows += parity_suite(nu_max)
        elif name == "identities":
            rows += identities_suite(nu_max, n_nodes, seed)
        else:
            raise ValueError(f"unknown suite {name!r}")
    return rows


def format_table(rows):
    lines = [f"{'suite':<18} {'check':<28} {'value':>10} {'tol':>8}  result  detail"]
    for c in rows:
        lines.append(f"{c.suite:<18} {c.name:<28} {c.value:>10.2e} {c.tol:>8.0e}  "
                     f"{'PASS' if c.passed else 'FAIL':<6}  {c.detail}")
    return "\n".join(lines)
