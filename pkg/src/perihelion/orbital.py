"""Kepler equation, ellipse geometry and the two canonical changes of variables.

Units: gravity constant 1, semi-major axis ``a = Lambda**2``.
"""
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
KEPLER_MAX_ITER = 64
KEPLER_TOL = 1e-15


class KeplerConvergenceError(RuntimeError):
    pass


class DegenerateInputError(ValueError):
    """Input sits on a singular point of a coordinate change."""


@dataclass(frozen=True)
class OrbitalElements:
    Lambda: float
    G: float
    Theta: float = 0.0
    g: float = 0.0
    ell: float = 0.0

    def __post_init__(self):
        if not self.Lambda > 0:
            raise ValueError("Lambda must be positive")
        if abs(self.G) > self.Lambda:
            raise ValueError("|G| must not exceed Lambda")
        if abs(self.Theta) > abs(self.G):
            raise ValueError("|Theta| must not exceed |G|")

    @property
    def a(self):
        return self.Lambda ** 2

    @property
    def e(self):
        return eccentricity(self.Lambda, self.G)


@dataclass(frozen=True)
class ActionAngle:
    calG: float
    gamma: float

    def __post_init__(self):
        if not abs(self.calG) < 1.0:
            raise ValueError("|calG| must be < 1")


@dataclass(frozen=True)
class RadialPair:
    y: float
    x: float


def wrap_angle(x, period=TWO_PI):
    """Reduce into ``[0, period)``."""
    return np.mod(x, period)


def eccentricity(Lambda, G):
    return np.sqrt(np.maximum(0.0, 1.0 - (np.asarray(G, dtype=float) / Lambda) ** 2))


def kepler_eccentric_anomaly(e, ell):
    """Solve ``xi - e sin(xi) = ell`` for ``0 <= e <= 1`` (vectorised).

    Newton from ``ell + e sin(ell)`` inside the bracket ``[ell - e, ell + e]``;
    a step leaving the bracket is replaced by bisection.
    """
    e = np.asarray(e, dtype=float)
    ell = np.asarray(ell, dtype=float)
    e, ell = np.broadcast_arrays(e, ell)
    if np.any((e < 0) | (e > 1)):
        raise KeplerConvergenceError("eccentricity outside [0, 1]")
    turns = np.floor(ell / TWO_PI)
    m = ell - TWO_PI * turns
    lo = m - e
    hi = m + e
    xi = m + e * np.sin(m)
    res = xi - e * np.sin(xi) - m
    done = np.abs(res) <= KEPLER_TOL * np.maximum(1.0, np.abs(m))
    for _ in range(KEPLER_MAX_ITER):
        if np.all(done):
            break
        pos = res > 0
        hi = np.where(pos, np.minimum(hi, xi), hi)
        lo = np.where(pos, lo, np.maximum(lo, xi))
        with np.errstate(divide="ignore", invalid="ignore"):
            trial = xi - res / (1.0 - e * np.cos(xi))
        bad = ~np.isfinite(trial) | (trial <= lo) | (trial >= hi)
        trial = np.where(bad, 0.5 * (lo + hi), trial)
        xi = np.where(done, xi, trial)
        res = xi - e * np.sin(xi) - m
        scale = np.maximum(1.0, np.abs(m))
        done = done | (np.abs(res) <= KEPLER_TOL * scale) | (hi - lo <= 4e-16 * scale)
    if not np.all(done):
        raise KeplerConvergenceError("Kepler iteration did not converge")
    out = xi + TWO_PI * turns
    return out if out.ndim else float(out)


def solve_kepler(Lambda, G, ell):
    """Eccentric anomaly of the ellipse with actions ``(Lambda, G)`` at mean anomaly ``ell``."""
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    if np.any(np.abs(G) > Lambda):
        raise ValueError("|G| must not exceed Lambda")
    return kepler_eccentric_anomaly(eccentricity(Lambda, G), ell)


def ellipse_factors(el):
    """Return ``(e, varrho, p, nu)`` for the elements ``el``.

    ``varrho = 1 - e cos(xi)`` is the radius in units of ``a``; ``p`` is
    ``varrho cos(nu + g)`` written in eccentric anomaly, ``nu`` the true anomaly.
    """
    e = eccentricity(el.Lambda, el.G)
    xi = solve_kepler(el.Lambda, el.G, el.ell)
    cx, sx = np.cos(xi), np.sin(xi)
    k = el.G / el.Lambda
    varrho = 1.0 - e * cx
    p = (cx - e) * np.cos(el.g) - k * sx * np.sin(el.g)
    nu = np.arctan2(k * sx, cx - e)
    return float(e), float(varrho), float(p), float(nu)


def c1_to_orbital(aa):
    """Action-angle pair ``(calG, gamma)`` -> Delaunay pair ``(G, g)``.

    The principal ``arctan`` branch is continuous in ``gamma`` for fixed
    ``calG != 0``, so it is used for every ``gamma``; ``g`` is not wrapped.
    """
    calG, gamma = aa.calG, aa.gamma
    if calG == 0.0:
        raise DegenerateInputError("calG = 0: branch of the angle map undefined")
    s = np.sqrt(1.0 - calG * calG)
    G = s * np.cos(gamma)
    k = 0 if calG > 0 else 1
    g = -np.arctan(s * np.sin(gamma) / calG) + k * np.pi
    return float(G), float(g)


def e0_action_angle(calG, gamma, r):
    """``E0`` written in the action-angle pair: ``calG r + (1 - calG^2) cos^2 gamma``."""
    return calG * r + (1.0 - calG * calG) * np.cos(gamma) ** 2


COLLISION_EPS = 1e-12


def c2_to_radial(rp):
    """Radial pair ``(y, x)`` -> ``(R, r)`` with ``R^2/2 - 1/r = -1/(2 y^2)``.

    ``R`` carries the sign of ``sin xi'`` (outgoing before apocentre, incoming
    after); on ``0 < x <= pi`` this is the positive square root.
    """
    y, x = rp.y, rp.x
    if y == 0:
        raise DegenerateInputError("y must be non-zero")
    xi = kepler_eccentric_anomaly(1.0, x)
    one_minus = 1.0 - np.cos(xi)
    if one_minus < COLLISION_EPS:
        raise DegenerateInputError("collision limit: 1 - cos(xi') too small")
    R = np.sin(xi) / (y * one_minus)
    r = y * y * one_minus
    return float(R), float(r)


def radial_energy_defect(y, x):
    """``R^2/2 - 1/r + 1/(2 y^2)`` after the radial change (zero in exact arithmetic)."""
    R, r = c2_to_radial(RadialPair(y, x))
    return R * R / 2 - 1.0 / r + 1.0 / (2 * y * y)


def planar_cartesian(el, r):
    """Cartesian state ``(x, y, xprime)`` of the planar configuration.

    The outer body sits at ``xprime = (r, 0)``; the perihelion direction makes
    the angle ``g - pi`` with it and the sign of ``G`` sets the sense of motion.
    """
    a = el.Lambda ** 2
    e = eccentricity(el.Lambda, el.G)
    xi = solve_kepler(el.Lambda, el.G, el.ell)
    k = el.G / el.Lambda
    n = el.Lambda ** -3
    P = np.array([-np.cos(el.g), -np.sin(el.g)])
    Q = np.array([np.sin(el.g), -np.cos(el.g)])  # k x P
    cx, sx = np.cos(xi), np.sin(xi)
    x = a * (cx - e) * P + a * k * sx * Q
    rate = n * a / (1.0 - e * cx)
    y = rate * (-sx * P + k * cx * Q)
    return x, y, np.array([r, 0.0])
