"""Mass parameters, averaged Newtonian potentials and the secular Hamiltonians.

Two independent evaluation routes are kept:

* quadrature in the mean anomaly (Kepler solve at every node) for the
  averaged potential ``U_b`` itself;
* a Legendre expansion averaged in the eccentric anomaly, which gives the
  coefficients ``q_nu(G, g)`` of the series Hamiltonian together with their
  exact derivatives.  The series integrand is a trigonometric polynomial of
  degree ``nu + 1`` in the eccentric anomaly, so ``nu_max + 2`` nodes already
  average it exactly.

``Lambda`` is fixed to 1 throughout.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import brentq


JACOBI = "jacobi"
ONE_CENTRIC = "one-centric"
FRAMES = (JACOBI, ONE_CENTRIC)

DEFAULT_NODES = 2 ** 10
DEFAULT_NU_MAX = 10
NEAR_COLLISION = 1e-8


class NearCollisionError(ValueError):
    """Quadrature denominator came too close to zero."""


@dataclass(frozen=True)
class MassParams:
    mu: float
    kappa: float
    gamma_const: float
    beta: float
    betabar: float
    beta_lower: float
    beta_upper: float
    frame: str = JACOBI


def _check_frame(frame):
    if frame not in FRAMES:
        raise ValueError(f"unknown frame {frame!r}; expected one of {FRAMES}")


def beta_bounds(beta, betabar, frame=JACOBI):
    """``(beta_lower, beta_upper)`` for the given frame."""
    _check_frame(frame)
    if frame == JACOBI:
        lower = beta * betabar / (beta + betabar) if beta + betabar else 0.0
        return lower, max(beta, betabar)
    return betabar, beta + betabar


def derive_mass_params(mu, kappa, frame=JACOBI):
    _check_frame(frame)
    if not (mu > 0 and kappa > 0):
        raise ValueError("mu and kappa must be positive")
    tail = 1 + mu + kappa if frame == JACOBI else 1 + kappa
    gamma = kappa ** 3 * (1 + mu) ** 4 / (mu ** 3 * tail)
    beta = kappa ** 2 * (1 + mu) ** 2 / (mu ** 2 * tail)
    betabar = mu * beta
    lower, upper = beta_bounds(beta, betabar, frame)
    return MassParams(mu, kappa, gamma, beta, betabar, lower, upper, frame)


def params_from_betas(beta, betabar, frame=JACOBI):
    """MassParams when only ``beta, betabar`` are given (mass ratios unknown)."""
    lower, upper = beta_bounds(beta, betabar, frame)
    return MassParams(float("nan"), float("nan"), float("nan"), beta, betabar,
                      lower, upper, frame)


def kappa_for_beta(beta, mu, frame=JACOBI):
    """Invert the mass map for ``kappa`` at fixed ``mu`` (beta grows with kappa)."""
    f = lambda k: derive_mass_params(mu, k, frame).beta - beta
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    return brentq(f, 1e-12, hi, xtol=1e-14, rtol=1e-15)


# -- quadrature route -------------------------------------------------------

@njit(cache=True)
def _kepler_scalar(e, m):
    """Safeguarded Newton for ``xi - e sin xi = m`` with ``m`` in ``[0, 2 pi)``."""
    lo = m - e
    hi = m + e
    xi = m + e * np.sin(m)
    for _ in range(64):
        res = xi - e * np.sin(xi) - m
        if abs(res) <= 1e-15 * max(1.0, m):
            break
        if res > 0:
            hi = min(hi, xi)
        else:
            lo = max(lo, xi)
        trial = xi - res / (1.0 - e * np.cos(xi))
        if not (lo < trial < hi):
            trial = 0.5 * (lo + hi)
        xi = trial
    return xi


@njit(cache=True)
def _quadrature_kernel(b, r, G, g, Lambda, incl, n, in_ell):
    """Trapezoid over ``n`` nodes, uniform in ``l`` (Kepler solve per node) or in ``xi``.

    In the eccentric anomaly ``dl = varrho dxi``, which removes the perihelion
    spike of the mean-anomaly integrand for nearly radial ellipses.
    """
    a = Lambda * Lambda
    k = G / Lambda
    e = np.sqrt(max(0.0, 1.0 - k * k))
    cg = np.cos(g)
    sg = np.sin(g)
    acc = 0.0
    dmin = np.inf
    for j in range(n):
        node = 2.0 * np.pi * j / n
        xi = _kepler_scalar(e, node) if in_ell else node
        cx = np.cos(xi)
        sx = np.sin(xi)
        varrho = 1.0 - e * cx
        p = (cx - e) * cg - k * sx * sg
        d2 = r * r + 2.0 * r * b * a * incl * p + b * b * a * a * varrho * varrho
        if d2 <= 0.0:
            return np.inf, 0.0
        dmin = min(dmin, d2)
        w = 1.0 if in_ell else varrho
        acc += w / np.sqrt(d2)
    return acc / n, dmin


QUAD_ECCENTRIC = "eccentric"
QUAD_MEAN = "mean"


def averaged_potential(beta_arg, r, G, g, Lambda=1.0, Theta=0.0, n_nodes=DEFAULT_NODES,
                       rule=QUAD_ECCENTRIC):
    """``(1/2pi) int dl / |x' - b x(l)|`` by the trapezoidal rule.

    ``rule="eccentric"`` places the nodes uniformly in the eccentric anomaly
    (weight ``varrho``); ``rule="mean"`` places them uniformly in ``l`` and
    solves Kepler's equation at each node.  Both are spectrally accurate for
    moderate ``e``; only the first stays so as ``e -> 1``.
    ``r``, ``G`` and ``g`` broadcast against each other.  Negative
    ``beta_arg`` is allowed (``U_{-b}`` flips the inner position).
    """
    if n_nodes < 2 or n_nodes & (n_nodes - 1):
        raise ValueError("n_nodes must be a power of two")
    if rule not in (QUAD_ECCENTRIC, QUAD_MEAN):
        raise ValueError(f"unknown quadrature rule {rule!r}")
    r, G, g = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r, G, g)))
    if np.any(np.abs(G) > Lambda):
        raise ValueError("|G| must not exceed Lambda")
    out = np.empty(r.shape)
    for idx in np.ndindex(r.shape):
        if beta_arg == 0:
            out[idx] = 1.0 / r[idx]
            continue
        incl = np.sqrt(1 - (Theta / G[idx]) ** 2) if Theta else 1.0
        u, dmin = _quadrature_kernel(float(beta_arg), r[idx], G[idx], g[idx], float(Lambda),
                                     incl, n_nodes, rule == QUAD_MEAN)
        if dmin < NEAR_COLLISION * r[idx] ** 2:
            raise NearCollisionError("averaged potential evaluated too close to a collision")
        out[idx] = u
    return out if out.ndim else float(out)


def _potential_terms(beta, betabar, frame, r, G, g, n_nodes):
    """Return the (weight, U) pairs entering the secular Hamiltonian."""
    _check_frame(frame)
    tot = beta + betabar
    if tot == 0:
        return [(1.0, 1.0 / r)]
    if frame == JACOBI:
        return [(betabar / tot, averaged_potential(beta, r, G, g, n_nodes=n_nodes)),
                (beta / tot, averaged_potential(-betabar, r, G, g, n_nodes=n_nodes))]
    return [(betabar / tot, averaged_potential(tot, r, G, g, n_nodes=n_nodes)),
            (beta / tot, 1.0 / r)]


def secular_hamiltonian(state, params, frame=None, n_nodes=DEFAULT_NODES):
    """Secular Hamiltonian at ``state = (R, G, r, g)`` by quadrature.

    ``params`` is a :class:`MassParams`; ``state`` a :class:`PlanarSecularState`
    or anything exposing ``R, G, r, g, C``.
    """
    frame = frame or params.frame
    R, G, r, g, C = state.R, state.G, state.r, state.g, state.C
    kin = R * R / 2 + (C - G) ** 2 / (2 * r * r)
    pot = sum(w * u for w, u in _potential_terms(params.beta, params.betabar, frame,
                                                  r, G, g, n_nodes))
    return kin - pot


@dataclass(frozen=True)
class PlanarSecularState:
    R: float
    G: float
    r: float
    g: float
    C: float
    Lambda: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if abs(self.G) > self.Lambda:
            raise ValueError("|G| must not exceed Lambda")

    def as_array(self):
        return np.array([self.R, self.G, self.r, self.g])


# -- series route -----------------------------------------------------------

def series_amplitudes(beta, betabar, nu_max, frame=JACOBI):
    """``amp[nu]`` with potential ``-(1/r) sum amp[nu] <S_nu> / r^nu`` (``amp[0]`` = 1).

    ``<S_nu>`` is the average of the solid Legendre harmonic
    ``|x|^nu P_nu(cos angle(x, x'))``.
    """
    _check_frame(frame)
    tot = beta + betabar
    nu = np.arange(nu_max + 1)
    if tot == 0:
        amp = np.zeros(nu_max + 1)
    elif frame == JACOBI:
        amp = betabar / tot * float(beta) ** nu + beta / tot * (-float(betabar)) ** nu
    else:
        amp = betabar / tot * float(tot) ** nu
        amp[0] += beta / tot
    amp[0] = 1.0
    return amp


def series_nodes(nu_max):
    """Eccentric-anomaly nodes: a power of two above ``nu_max + 2``."""
    n = 8
    while n < nu_max + 3:
        n *= 2
    xi = 2 * np.pi * np.arange(n) / n
    return np.cos(xi), np.sin(xi)


@njit(cache=True)
def legendre_averages(G, g, nu_max, cx, sx, S, SG, Sg):
    """Averages over the orbit of the solid Legendre harmonics and their derivatives.

    Fills ``S[nu]`` with ``<|x|^nu P_nu(u/|x|)>`` where ``u = x . x'/|x'|``,
    and ``SG``/``Sg`` with the derivatives in ``G`` and ``g``.
    """
    n = cx.size
    e2 = 1.0 - G * G
    if e2 < 1e-28:
        e2 = 1e-28
    e = np.sqrt(e2)
    de = -G / e
    cg = np.cos(g)
    sg = np.sin(g)
    for k in range(nu_max + 1):
        S[k] = 0.0
        SG[k] = 0.0
        Sg[k] = 0.0
    for j in range(n):
        c = cx[j]
        s = sx[j]
        X = c - e
        Y = G * s
        w = 1.0 - e * c
        wG = -c * de
        u = -X * cg + Y * sg
        uG = de * cg + s * sg
        ug = X * sg + Y * cg
        rho2 = w * w
        rho2G = 2.0 * w * wG
        # homogeneous recurrence for rho^k P_k(u / rho)
        p0 = 1.0
        p0G = 0.0
        p0g = 0.0
        p1 = u
        p1G = uG
        p1g = ug
        S[0] += w
        SG[0] += wG
        if nu_max >= 1:
            S[1] += w * p1
            SG[1] += wG * p1 + w * p1G
            Sg[1] += w * p1g
        for k in range(1, nu_max):
            a = (2.0 * k + 1.0) / (k + 1.0)
            b = k / (k + 1.0)
            p2 = a * u * p1 - b * rho2 * p0
            p2G = a * (uG * p1 + u * p1G) - b * (rho2G * p0 + rho2 * p0G)
            p2g = a * (ug * p1 + u * p1g) - b * rho2 * p0g
            S[k + 1] += w * p2
            SG[k + 1] += wG * p2 + w * p2G
            Sg[k + 1] += w * p2g
            p0, p0G, p0g = p1, p1G, p1g
            p1, p1G, p1g = p2, p2G, p2g
    for k in range(nu_max + 1):
        S[k] /= n
        SG[k] /= n
        Sg[k] /= n


@njit(cache=True)
def series_hamiltonian_kernel(R, G, r, g, C, amp, nu_max, cx, sx):
    S = np.empty(nu_max + 1)
    SG = np.empty(nu_max + 1)
    Sg = np.empty(nu_max + 1)
    legendre_averages(G, g, nu_max, cx, sx, S, SG, Sg)
    pot = 0.0
    ir = 1.0 / r
    pw = ir
    for k in range(nu_max + 1):
        pot += amp[k] * S[k] * pw
        pw *= ir
    return 0.5 * R * R + (C - G) ** 2 / (2.0 * r * r) - pot


def series_hamiltonian(state, params, nu_max=DEFAULT_NU_MAX, frame=None):
    """Secular Hamiltonian from the truncated Legendre series."""
    frame = frame or params.frame
    amp = series_amplitudes(params.beta, params.betabar, nu_max, frame)
    cx, sx = series_nodes(nu_max)
    return float(series_hamiltonian_kernel(state.R, state.G, state.r, state.g, state.C,
                                           amp, nu_max, cx, sx))


@dataclass(frozen=True)
class CoeffTable:
    """Coefficients ``q_nu(G, g)`` of ``H = kin - 1/r + (1/r) sum q_nu (beta/r)^nu``.

    Each ``q_nu`` is stored as a cosine series in ``2g`` sampled on ``G_grid``:
    ``q_nu(G, g) = sum_p harmonics[nu, p, iG] cos(2 p g)``.
    """
    beta: float
    betabar: float
    frame: str
    nu_max: int
    G_grid: np.ndarray
    harmonics: np.ndarray = field(repr=False)

    def _scale(self):
        amp = series_amplitudes(self.beta, self.betabar, self.nu_max, self.frame)
        with np.errstate(divide="ignore", invalid="ignore"):
            sc = -amp / float(self.beta) ** np.arange(self.nu_max + 1)
        sc[0] = 0.0
        return np.where(np.isfinite(sc), sc, 0.0)

    def evaluate(self, nu, G, g):
        """Exact ``q_nu(G, g)`` (not interpolated from the table)."""
        G = np.asarray(G, dtype=float)
        g = np.asarray(g, dtype=float)
        cx, sx = series_nodes(self.nu_max)
        sc = self._scale()[nu]
        out = np.empty(np.broadcast(G, g).shape)
        S = np.empty(self.nu_max + 1)
        SG = np.empty_like(S)
        Sg = np.empty_like(S)
        for idx, (Gi, gi) in enumerate(zip(*(a.ravel() for a in np.broadcast_arrays(G, g)))):
            legendre_averages(Gi, gi, self.nu_max, cx, sx, S, SG, Sg)
            out.flat[idx] = sc * S[nu]
        return out if out.ndim else float(out)

    def gradient(self, nu, G, g):
        """``(dq/dG, dq/dg)`` at a single point."""
        cx, sx = series_nodes(self.nu_max)
        S = np.empty(self.nu_max + 1)
        SG = np.empty_like(S)
        Sg = np.empty_like(S)
        legendre_averages(float(G), float(g), self.nu_max, cx, sx, S, SG, Sg)
        sc = self._scale()[nu]
        return sc * SG[nu], sc * Sg[nu]

    def to_json(self):
        rows = []
        for nu in range(self.nu_max + 1):
            for p in range(self.harmonics.shape[1]):
                rows.append({"nu": nu, "p": p,
                             "values": [float(v) for v in self.harmonics[nu, p]]})
        return json.dumps({"beta": self.beta, "betabar": self.betabar, "frame": self.frame,
                           "nu_max": self.nu_max,
                           "G_grid": [float(v) for v in self.G_grid],
                           "coefficients": rows}, indent=1)


def expansion_coeffs(params, nu_max=DEFAULT_NU_MAX, G_grid=None, frame=None):
    """Build the coefficient table of the series Hamiltonian.

    The cosine harmonics in ``2g`` are extracted by an exact discrete Fourier
    transform over ``g`` (``q_nu`` has at most ``nu/2 + 1`` such harmonics,
    odd-``nu`` parts of the Jacobi frame carry odd multiples of ``g``).
    """
    frame = frame or params.frame
    if G_grid is None:
        G_grid = np.linspace(-0.99, 0.99, 67)
    G_grid = np.asarray(G_grid, dtype=float)
    table = CoeffTable(params.beta, params.betabar, frame, nu_max, G_grid,
                       np.zeros((nu_max + 1, nu_max + 1, G_grid.size)))
    ng = 2 * (nu_max + 2)
    gs = np.pi * np.arange(ng) / ng * 2
    cx, sx = series_nodes(nu_max)
    S = np.empty(nu_max + 1)
    SG = np.empty_like(S)
    Sg = np.empty_like(S)
    sc = table._scale()
    vals = np.empty((nu_max + 1, ng, G_grid.size))
    for j, gj in enumerate(gs):
        for i, Gi in enumerate(G_grid):
            legendre_averages(Gi, gj, nu_max, cx, sx, S, SG, Sg)
            vals[:, j, i] = sc * S
    # cosine coefficients of multiples of g; keep the even multiples 2p
    spec = np.fft.rfft(vals, axis=1).real / ng
    spec[:, 1:, :] *= 2
    harm = table.harmonics
    for p in range(nu_max + 1):
        if 2 * p < spec.shape[1]:
            harm[:, p, :] = spec[:, 2 * p, :]
    return table


def q2_closed_form(G, g):
    """Quadrupole coefficient for ``beta = betabar`` in closed form."""
    G = np.asarray(G, dtype=float)
    return -(5 - 3 * G ** 2) / 8 - 15 / 8 * (1 - G ** 2) * np.cos(2 * np.asarray(g))


def h_slow0(G, g, C, beta, r0):
    """Lowest-order slow Hamiltonian frozen at the fast equilibrium ``r0``."""
    return ((-2 * C * G + G ** 2) / (2 * r0 ** 2)
            - beta ** 2 * (5 - 3 * G ** 2) / (8 * r0 ** 3)
            - beta ** 2 * 15 * (1 - G ** 2) * np.cos(2 * g) / (8 * r0 ** 3))


def h_slow0_gradient(G, g, C, beta, r0):
    """``(dH/dg, dH/dG)`` of :func:`h_slow0`."""
    k = beta ** 2 / (8 * r0 ** 3)
    dg = 30 * k * (1 - G ** 2) * np.sin(2 * g)
    dG = (G - C) / r0 ** 2 + 6 * k * G + 30 * k * G * np.cos(2 * g)
    return dg, dG


def slow0_equilibria(C, beta, r0):
    """Equilibria ``(g, G, kind)`` of :func:`h_slow0` with ``g`` in ``[0, pi)``.

    ``dH/dg`` vanishes on ``g in {0, pi/2}``; on each line ``dH/dG`` is linear
    in ``G``, so there is at most one root with ``|G| < 1`` per line.
    """
    k = beta ** 2 / (8 * r0 ** 3)
    out = []
    for g in (0.0, np.pi / 2):
        slope = 1 / r0 ** 2 + 6 * k + 30 * k * np.cos(2 * g)
        if slope == 0:
            continue
        G = C / r0 ** 2 / slope
        if abs(G) >= 1:
            continue
        # Hessian in (g, G): d2/dg2 = 60 k (1 - G^2) cos 2g, d2/dG2 = slope, mixed 0
        hgg = 60 * k * (1 - G ** 2) * np.cos(2 * g)
        kind = "saddle" if hgg * slope < 0 else ("min" if slope > 0 else "max")
        out.append((g, float(G), kind, float(h_slow0(G, g, C, beta, r0))))
    return out


def fast_equilibrium(C):
    """Minimum ``(R0, r0)`` of the fast Hamiltonian ``R^2/2 + C^2/(2r^2) - 1/r``."""
    if C == 0:
        raise ValueError("the fast Hamiltonian has no minimum for C = 0")
    return 0.0, C * C


def fast_hamiltonian(R, r, C):
    return R * R / 2 + C * C / (2 * r * r) - 1 / r


def slow_hamiltonian(G, g, r, C, params, nu_max=DEFAULT_NU_MAX, frame=None):
    """Slow part: series potential beyond ``-1/r`` plus ``(-2CG + G^2)/(2r^2)``."""
    frame = frame or params.frame
    amp = series_amplitudes(params.beta, params.betabar, nu_max, frame)
    amp[0] = 0.0
    cx, sx = series_nodes(nu_max)
    # kernel with R=0 and the kinetic part removed
    tot = series_hamiltonian_kernel(0.0, G, r, g, 0.0, amp, nu_max, cx, sx) - G * G / (2 * r * r)
    return float(tot + (-2 * C * G + G * G) / (2 * r * r))
