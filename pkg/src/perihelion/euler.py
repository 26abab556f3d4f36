"""Two-centre (Euler) problem: Hamiltonian, Euler integral, and the E0 phase portrait."""
from dataclasses import dataclass

import numpy as np

from .flow import poisson_bracket
from .orbital import eccentricity, ellipse_factors, planar_cartesian
from .secular import DEFAULT_NODES, averaged_potential

COLLISION_EPS = 1e-12
BIFURCATION_TOL = 1e-12
ARCCOS_SLACK = 1e-12
SEPARATRIX_TUBE = 1e-2


class CollisionError(ValueError):
    pass


class LevelSetEmptyError(ValueError):
    pass


@dataclass(frozen=True)
class EulerConfig:
    """Asymmetric two-centre problem: unit mass at the origin, ``Mprime`` at ``xprime``."""
    Mprime: float
    xprime: tuple

    @property
    def xp(self):
        return np.asarray(self.xprime, dtype=float)


@dataclass(frozen=True)
class CartesianState:
    y: tuple
    x: tuple


def _vec3(v):
    v = np.asarray(v, dtype=float)
    return np.pad(v, (0, 3 - v.size)) if v.size < 3 else v


def _distances(state, cfg):
    x = np.asarray(state.x, dtype=float)
    d0 = np.linalg.norm(x)
    d1 = np.linalg.norm(cfg.xp - x)
    if d0 < COLLISION_EPS or (cfg.Mprime and d1 < COLLISION_EPS):
        raise CollisionError("particle collides with a centre")
    return d0, d1


def euler_hamiltonian(state, cfg):
    """``J = |y|^2/2 - 1/|x| - M'/|x' - x|``."""
    d0, d1 = _distances(state, cfg)
    y = np.asarray(state.y, dtype=float)
    pot = cfg.Mprime / d1 if cfg.Mprime else 0.0
    return float(y @ y / 2 - 1 / d0 - pot)


def angular_momentum(state):
    return np.cross(_vec3(state.x), _vec3(state.y))


def eccentricity_vector(state):
    """``L = y x M - x/|x|``."""
    x3 = _vec3(state.x)
    return np.cross(_vec3(state.y), angular_momentum(state)) - x3 / np.linalg.norm(x3)


def e0_cartesian(state, cfg):
    """``E0 = |M|^2 - x' . L``."""
    M = angular_momentum(state)
    return float(M @ M - _vec3(cfg.xp) @ eccentricity_vector(state))


def euler_integral(state, cfg):
    """``E = |M|^2 - x' . L + M' (x' - x) . x' / |x' - x|``."""
    _, d1 = _distances(state, cfg)
    e1 = 0.0
    if cfg.Mprime:
        xp = cfg.xp
        e1 = cfg.Mprime * float((xp - np.asarray(state.x, float)) @ xp) / d1
    return e0_cartesian(state, cfg) + e1


def symmetric_hamiltonian(u, v, v0, m_plus, m_minus):
    """``J`` with centres ``m_plus`` at ``-v0`` and ``m_minus`` at ``+v0``."""
    u, v, v0 = (np.asarray(a, dtype=float) for a in (u, v, v0))
    return float(u @ u / 2 - m_plus / np.linalg.norm(v + v0) - m_minus / np.linalg.norm(v - v0))


def symmetric_integral(u, v, v0, m_plus, m_minus):
    """Euler integral of the symmetric form, ``|v x u|^2 + (v0 . u)^2 + 2 v . v0 (...)``."""
    u3, v3, w3 = _vec3(u), _vec3(v), _vec3(v0)
    M = np.cross(v3, u3)
    rp = np.linalg.norm(v3 + w3)
    rm = np.linalg.norm(v3 - w3)
    return float(M @ M + (w3 @ u3) ** 2 + 2 * (v3 @ w3) * (m_plus / rp - m_minus / rm))


def _denominator(el, r):
    _, varrho, p, _ = ellipse_factors(el)
    a = el.Lambda ** 2
    incl = np.sqrt(1 - (el.Theta / el.G) ** 2) if el.Theta else 1.0
    return r * r + 2 * r * a * incl * p + a * a * varrho ** 2, a, incl, p


def euler_hamiltonian_elements(el, r, Mprime):
    """``J`` in orbital elements with the outer centre at distance ``r``."""
    d2, *_ = _denominator(el, r)
    return float(-1 / (2 * el.Lambda ** 2) - Mprime / np.sqrt(d2))


def euler_integral_elements(el, r, Mprime):
    """``E = E0 + E1`` in orbital elements."""
    d2, a, incl, p = _denominator(el, r)
    e0 = el.G ** 2 + r * incl * eccentricity(el.Lambda, el.G) * np.cos(el.g)
    return float(e0 + Mprime * r * (r + a * incl * p) / np.sqrt(d2))


def state_from_elements(el, r):
    """Planar Cartesian state and configuration for elements ``el`` and distance ``r``."""
    x, y, xp = planar_cartesian(el, r)
    return CartesianState(tuple(y), tuple(x)), tuple(xp)


# -- the E0 portrait -----------------------------------------------------------------

def e0_planar(r, G, g, Lambda=1.0):
    """``E0 = G^2 + r e(Lambda, G) cos g``."""
    G = np.asarray(G, dtype=float)
    return G ** 2 + r * eccentricity(Lambda, G) * np.cos(g)


def e0_gradient(r, G, g):
    """``(dE0/dg, dE0/dG)`` for ``Lambda = 1``."""
    s = np.sqrt(1 - G * G)
    return np.array([-r * s * np.sin(g), 2 * G - r * G * np.cos(g) / s])


def e0_hessian(r, G, g):
    """Hessian in the ordering ``(g, G)``."""
    s = np.sqrt(1 - G * G)
    gg = -r * s * np.cos(g)
    gG = r * G * np.sin(g) / s
    GG = 2 - r * np.cos(g) / s ** 3
    return np.array([[gg, gG], [gG, GG]])


def refine_equilibrium(r, z, tol=1e-14, max_iter=50):
    """Damped Newton on ``grad E0 = 0`` with the analytic Hessian, ``z = (g, G)``."""
    z = np.asarray(z, dtype=float).copy()
    for _ in range(max_iter):
        grad = e0_gradient(r, z[1], z[0])
        n0 = np.linalg.norm(grad)
        if n0 <= tol:
            break
        step = np.linalg.solve(e0_hessian(r, z[1], z[0]), -grad)
        lam = 1.0
        while lam > 1e-6:
            zt = z + lam * step
            if abs(zt[1]) < 1 and np.linalg.norm(e0_gradient(r, zt[1], zt[0])) < n0:
                break
            lam *= 0.5
        z = zt
    return z


@dataclass(frozen=True)
class Equilibrium:
    g: float
    G: float
    kind: str
    energy: float


@dataclass
class PortraitClassification:
    r: float
    equilibria: list
    admissible_energy: tuple
    separatrices: dict
    rotational_band: bool

    def energies(self, kind):
        return sorted({e.energy for e in self.equilibria if e.kind == kind})

    @property
    def has_saddle(self):
        return any(e.kind == "saddle" for e in self.equilibria)


def vertical_branch_domain(r):
    """g-intervals (within ``[-pi, pi]``) where ``G = sqrt(1 - r^2 cos^2 g)`` is real."""
    if r <= 1:
        return [(-np.pi, np.pi)]
    half = np.arccos(1 / r)
    c = np.pi / 2
    return [(-c - (c - half), -half), (half, c + (c - half))]


def classify_portrait(r):
    """Equilibria, critical energies and separatrices of ``E0`` at fixed ``r`` (``Lambda = 1``)."""
    if not r > 0:
        raise ValueError("r must be positive")
    if abs(r - 2) <= BIFURCATION_TOL:
        raise ValueError("r = 2 is the bifurcation value; no portrait is returned")
    eq = []

    def add(z, kind):
        z = refine_equilibrium(r, z)
        eq.append(Equilibrium(float(z[0]), float(z[1]), kind, float(e0_planar(r, z[1], z[0]))))

    for gm in (-np.pi, np.pi):
        add((gm, 0.0), "min")
    if r < 2:
        add((0.0, 0.0), "saddle")
        top = np.sqrt(1 - r * r / 4)
        add((0.0, top), "max")
        add((0.0, -top), "max")
        admissible = (-r, 1 + r * r / 4)
        seps = {"S0": {"level": r, "equation": "G^2 + r sqrt(1-G^2) cos g = r"}}
    else:
        add((0.0, 0.0), "max")
        admissible = (-r, r)
        seps = {}
    seps["S1"] = {"level": 1.0, "horizontal": [-1.0, 1.0],
                  "vertical_domain": vertical_branch_domain(r)}
    return PortraitClassification(float(r), eq, admissible, seps, bool(r < 1))


def level_curve(r, level, n=400):
    """Points ``(g, G)`` of ``E0 = level`` sampled along ``G``; both signs of ``g``."""
    G = np.linspace(-1, 1, n + 2)[1:-1]
    s = np.sqrt(1 - G * G)
    c = (level - G * G) / (r * s)
    ok = np.abs(c) <= 1
    g = np.arccos(np.clip(c[ok], -1, 1))
    G = G[ok]
    return np.concatenate([np.column_stack([g, G]), np.column_stack([-g[::-1], G[::-1]])])


@dataclass(frozen=True)
class SeparatrixOrbit:
    """Closed-form motion of ``E0`` along the saddle level ``E0 = r`` (``0 < r < 2``)."""
    r: float
    t0: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if not 0 < self.r < 2:
            raise ValueError("separatrix motions exist only for 0 < r < 2")

    @property
    def sigma(self):
        return float(np.sqrt(self.r * (2 - self.r)))

    @property
    def alpha2(self):
        return 2.0 - self.r


def separatrix_orbit(so, t):
    """``(G(t), g(t))`` on the saddle level; ``g`` in ``(-pi, pi]``.

    On the ``sign = +1`` branch ``G > 0`` and ``g`` runs from ``0+`` through
    the arccos branch before ``t0`` and its negative after; ``sign = -1`` is
    the mirror ``G -> -G``, ``g -> -g``.
    """
    t = np.asarray(t, dtype=float)
    ch2 = np.cosh(so.sigma * (t - so.t0)) ** 2
    G = so.sigma / np.sqrt(ch2)
    arg = (1 - so.alpha2 / ch2) / np.sqrt(1 - so.sigma ** 2 / ch2)
    if np.any(np.abs(arg) > 1 + ARCCOS_SLACK):
        raise ValueError("arccos argument outside [-1, 1]")
    g = np.arccos(np.clip(arg, -1, 1))
    g = np.where(t <= so.t0, g, -g)
    return so.sign * G, so.sign * g


# -- renormalizable integrability ---------------------------------------------------------

def level_set_samples(r, level, n_samples, tube=SEPARATRIX_TUBE):
    """``n_samples`` points ``(g, G)`` on ``E0 = level`` spread along ``G``."""
    if 0 < r < 2 and abs(level - r) < tube:
        raise LevelSetEmptyError("level lies inside the excluded tube around the saddle level")
    G = np.linspace(-1, 1, 20001)[1:-1]
    c = (level - G * G) / (r * np.sqrt(1 - G * G))
    ok = np.abs(c) < 1
    if ok.sum() < 2:
        raise LevelSetEmptyError(f"E0 = {level} is empty at r = {r}")
    Gs = G[ok]
    # stay clear of the turning points where dg/dG blows up
    lo, hi = Gs.min(), Gs.max()
    pad = 0.02 * (hi - lo)
    Gq = np.linspace(lo + pad, hi - pad, n_samples)
    cq = (level - Gq ** 2) / (r * np.sqrt(1 - Gq ** 2))
    gq = np.arccos(np.clip(cq, -1, 1))
    gq = np.where(np.arange(n_samples) % 2 == 0, gq, -gq)
    return np.column_stack([gq, Gq])


def verify_renormalizability(r, n_samples=50, level=3.0, n_nodes=2 ** 12):
    """Relative spread ``max |U - mean U| / |mean U|`` of ``U`` along an ``E0`` level set."""
    pts = level_set_samples(r, level, n_samples)
    U = averaged_potential(1.0, r, pts[:, 1], pts[:, 0], n_nodes=n_nodes)
    m = float(np.mean(U))
    return float(np.max(np.abs(U - m)) / abs(m))


def u_e0_bracket(r, G, g, n_nodes=DEFAULT_NODES, h=1e-5):
    """``{U, E0}`` in the canonical pair ``(g, G)`` by finite differences."""
    def U(z):
        return averaged_potential(1.0, r, z[1], z[0], n_nodes=n_nodes)

    def E(z):
        return float(e0_planar(r, z[1], z[0]))

    return poisson_bracket(U, E, (g, G), 1, h=h)
