"""Hamiltonian flows: the secular series system, the E0 model and the Euler problem.

State ordering for the secular system is ``(R, G, r, g)``; Hamilton's
equations read ``R' = -H_r, G' = -H_g, r' = H_R = R, g' = H_G``.
"""
import csv
import io
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import brentq

from . import integrator as ig
from .secular import (DEFAULT_NU_MAX, JACOBI, ONE_CENTRIC, legendre_averages, params_from_betas,
                      series_amplitudes, series_hamiltonian_kernel, series_nodes)

TRUST_FACTOR = 1.5
MAX_STEPS = 2_000_000


class IntegrationError(RuntimeError):
    """Base class for aborted integrations."""


class StepCollapseError(IntegrationError):
    pass


class DomainExitError(IntegrationError):
    """The orbit left the region where the series Hamiltonian is trusted."""


class NoCrossingError(IntegrationError):
    pass


# -- secular series system ---------------------------------------------------
# prm layout: [C, nu_max, trust_factor, beta_upper, n_nodes, amp(nu_max+1), cx(n), sx(n)]

_P_C, _P_NU, _P_TRUST, _P_BUP, _P_N, _P_AMP = 0, 1, 2, 3, 4, 5


@njit(cache=True)
def _unpack(prm):
    nu = int(prm[_P_NU])
    n = int(prm[_P_N])
    amp = prm[_P_AMP:_P_AMP + nu + 1]
    cx = prm[_P_AMP + nu + 1:_P_AMP + nu + 1 + n]
    sx = prm[_P_AMP + nu + 1 + n:_P_AMP + nu + 1 + 2 * n]
    return nu, amp, cx, sx


@njit(ig.RHS_SIG, cache=True)
def secular_rhs(t, y, prm, out):
    R = y[0]
    G = y[1]
    r = y[2]
    g = y[3]
    C = prm[_P_C]
    nu, amp, cx, sx = _unpack(prm)
    S = np.empty(nu + 1)
    SG = np.empty(nu + 1)
    Sg = np.empty(nu + 1)
    legendre_averages(G, g, nu, cx, sx, S, SG, Sg)
    ir = 1.0 / r
    d = C - G
    Hr = -d * d * ir * ir * ir
    HG = -d * ir * ir
    Hg = 0.0
    pw = ir  # r^-(k+1)
    for k in range(nu + 1):
        Hr += (k + 1) * amp[k] * S[k] * pw * ir
        HG -= amp[k] * SG[k] * pw
        Hg -= amp[k] * Sg[k] * pw
        pw *= ir
    out[0] = -Hr
    out[1] = -Hg
    out[2] = R
    out[3] = HG


@njit(ig.INSIDE_SIG, cache=True)
def secular_inside(y, prm):
    G = y[1]
    if not (abs(G) < 1.0):
        return False
    e = np.sqrt(1.0 - G * G)
    return y[2] > prm[_P_TRUST] * prm[_P_BUP] * (1.0 + e)


@njit(ig.INSIDE_SIG, cache=True)
def always_inside(y, prm):
    return True


@dataclass(frozen=True)
class SecularSystem:
    """Truncated series Hamiltonian of the planar secular problem at fixed ``C``."""
    C: float
    beta: float
    betabar: float
    frame: str = JACOBI
    nu_max: int = DEFAULT_NU_MAX
    trust_factor: float = TRUST_FACTOR
    prm: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        params = params_from_betas(self.beta, self.betabar, self.frame)
        amp = series_amplitudes(self.beta, self.betabar, self.nu_max, self.frame)
        cx, sx = series_nodes(self.nu_max)
        head = [self.C, self.nu_max, self.trust_factor, params.beta_upper, cx.size]
        object.__setattr__(self, "prm", np.concatenate([head, amp, cx, sx]).astype(float))

    @classmethod
    def from_params(cls, C, params, nu_max=DEFAULT_NU_MAX, **kw):
        return cls(C, params.beta, params.betabar, params.frame, nu_max, **kw)

    @property
    def params(self):
        return params_from_betas(self.beta, self.betabar, self.frame)

    def with_nu_max(self, nu_max):
        return SecularSystem(self.C, self.beta, self.betabar, self.frame, nu_max,
                             self.trust_factor)

    def hamiltonian(self, y):
        nu, amp, cx, sx = _unpack(self.prm)
        R, G, r, g = (float(v) for v in y)
        return float(series_hamiltonian_kernel(R, G, r, g, self.C, amp, nu, cx, sx))

    def field(self, y):
        out = np.empty(4)
        secular_rhs(0.0, np.asarray(y, dtype=float), self.prm, out)
        return out

    def inside(self, y):
        return bool(secular_inside(np.asarray(y, dtype=float), self.prm))


def vector_field(state, params, nu_max=DEFAULT_NU_MAX):
    """Hamiltonian vector field ``(dR, dG, dr, dg)/dt`` of the series Hamiltonian."""
    system = SecularSystem.from_params(state.C, params, nu_max)
    y = state.as_array()
    if not system.inside(y):
        raise DomainExitError("state outside the series trust region")
    return system.field(y)


# -- trajectories -----------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    dense: np.ndarray = field(repr=False)
    energy: np.ndarray = None
    order: int = 7

    def __call__(self, t):
        """Dense-output state at time ``t`` (inside the integrated span)."""
        t = float(t)
        ts = self.t
        forward = ts[-1] >= ts[0]
        if forward:
            k = np.searchsorted(ts, t, side="right") - 1
        else:
            k = np.searchsorted(-ts, -t, side="right") - 1
        k = min(max(k, 0), len(ts) - 2)
        h = ts[k + 1] - ts[k]
        return ig.dense_eval(self.dense[k], self.y[k], (t - ts[k]) / h)

    @property
    def t_end(self):
        return self.t[-1]

    def relative_energy_drift(self):
        e = self.energy
        return float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "R", "G", "r", "g", "energy"])
        for ti, yi, ei in zip(self.t, self.y, self.energy):
            w.writerow([repr(float(ti))] + [repr(float(v)) for v in yi] + [repr(float(ei))])
        return buf.getvalue()


def _raise_for(status, where):
    if status == ig.STATUS_STEP_COLLAPSE:
        raise StepCollapseError(f"step size collapsed near {where}")
    if status == ig.STATUS_DOMAIN:
        raise DomainExitError(f"left the trusted domain near {where}")
    if status == ig.STATUS_MAX_STEPS:
        raise StepCollapseError(f"step budget exhausted near {where}")


def tolerances(tol):
    """``(rtol, atol)`` used for a requested tolerance."""
    return tol, tol * 1e-2


def run(rhs, inside, prm, y0, t_end, tol, t0=0.0, max_steps=MAX_STEPS):
    """Raw integration with the compiled stepper; returns ``(status, ts, ys, Fs)``."""
    rtol, atol = tolerances(tol)
    return ig.integrate_steps(rhs, inside, np.ascontiguousarray(prm, dtype=float),
                              np.ascontiguousarray(y0, dtype=float), float(t0),
                              float(t_end), float(rtol), float(atol), int(max_steps))


def integrate(state0, t_end, tol=1e-12, system=None, params=None, nu_max=DEFAULT_NU_MAX):
    """Integrate the secular series flow from ``state0`` to ``t_end``.

    Negative ``t_end`` integrates backwards.  Raises :class:`DomainExitError`
    or :class:`StepCollapseError` on failure.
    """
    if system is None:
        system = SecularSystem.from_params(state0.C, params, nu_max)
    y0 = state0.as_array() if hasattr(state0, "as_array") else np.asarray(state0, float)
    status, ts, ys, Fs = run(secular_rhs, secular_inside, system.prm, y0, t_end, tol)
    _raise_for(status, f"t={ts[-1]:.6g}")
    energy = np.array([system.hamiltonian(v) for v in ys])
    return Trajectory(ts.copy(), ys.copy(), Fs.copy(), energy)


# -- events -----------------------------------------------------------------

@dataclass(frozen=True)
class EventSpec:
    """Scalar event ``fn(state)``; ``direction`` +1, -1 or 0 (both)."""
    fn: object
    direction: int = 0
    tol: float = 1e-12


def detect_event(traj, spec, skip_start=True):
    """First root of ``spec.fn`` along a trajectory, refined on the dense output.

    Returns ``(t, state)``; raises :class:`NoCrossingError` if none exists.
    """
    vals = np.array([spec.fn(v) for v in traj.y])
    sign_t = 1.0 if traj.t[-1] >= traj.t[0] else -1.0
    for k in range(len(vals) - 1):
        fa, fb = vals[k], vals[k + 1]
        if k == 0 and skip_start and fa == 0:
            continue
        if fa == 0 or not (fa * fb <= 0):
            continue
        rising = (fb > fa) == (sign_t > 0)
        if spec.direction > 0 and not rising or spec.direction < 0 and rising:
            continue
        if fb == 0:
            return float(traj.t[k + 1]), traj.y[k + 1].copy()
        t0, t1 = sorted((traj.t[k], traj.t[k + 1]))
        ts = brentq(lambda s: spec.fn(traj(s)), t0, t1, xtol=spec.tol, rtol=4 * np.finfo(float).eps)
        return float(ts), traj(ts)
    raise NoCrossingError("no crossing with the requested orientation")


# -- the E0 model flow and the Euler problem ----------------------------------

@njit(ig.RHS_SIG, cache=True)
def e0_rhs(t, y, prm, out):
    """Flow of ``E0 = G^2 + r sqrt(1 - G^2) cos g`` at fixed ``r``; ``y = (G, g)``."""
    r = prm[0]
    G = y[0]
    g = y[1]
    s = np.sqrt(1.0 - G * G)
    out[0] = r * s * np.sin(g)
    out[1] = 2.0 * G - r * G * np.cos(g) / s


@njit(ig.RHS_SIG, cache=True)
def euler_rhs(t, y, prm, out):
    """Planar asymmetric two-centre problem; ``y = (x1, x2, y1, y2)``, prm = (M', x'1, x'2)."""
    M = prm[0]
    x1 = y[0]
    x2 = y[1]
    d1 = prm[1] - x1
    d2 = prm[2] - x2
    r3 = (x1 * x1 + x2 * x2) ** 1.5
    q3 = (d1 * d1 + d2 * d2) ** 1.5
    out[0] = y[2]
    out[1] = y[3]
    out[2] = -x1 / r3 + M * d1 / q3
    out[3] = -x2 / r3 + M * d2 / q3


def integrate_model(rhs, y0, t_end, prm, tol=1e-12, t0=0.0):
    """Integrate one of the model flows; returns a Trajectory without energy log."""
    status, ts, ys, Fs = run(rhs, always_inside, np.asarray(prm, float), y0, t_end, tol, t0)
    _raise_for(status, f"t={ts[-1]:.6g}")
    return Trajectory(ts.copy(), ys.copy(), Fs.copy(), np.zeros(len(ts)))


# -- Poisson brackets ---------------------------------------------------------

def gradient_fd(f, z, h):
    """Central differences with one Richardson extrapolation (steps ``h`` and ``h/2``)."""
    z = np.asarray(z, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), z.shape)
    grad = np.empty(z.size)
    for i in range(z.size):
        e = np.zeros(z.size)
        e[i] = h[i]
        d1 = (f(z + e) - f(z - e)) / (2 * h[i])
        d2 = (f(z + e / 2) - f(z - e / 2)) / h[i]
        grad[i] = (4 * d2 - d1) / 3
    return grad


def poisson_bracket(f, k, z, n_dof, h=1e-5, scale=None):
    """``{f, k}`` at ``z = (q_1..q_n, p_1..p_n)`` by finite differences.

    Step in coordinate ``i`` is ``h * scale[i]``.
    """
    z = np.asarray(z, dtype=float)
    sc = np.ones(z.size) if scale is None else np.asarray(scale, dtype=float)
    gf = gradient_fd(f, z, h * sc)
    gk = gradient_fd(k, z, h * sc)
    q = slice(0, n_dof)
    p = slice(n_dof, 2 * n_dof)
    return float(np.dot(gf[q], gk[p]) - np.dot(gf[p], gk[q]))


# -- libration experiment ----------------------------------------------------

@dataclass
class LibrationOrbit:
    initial: tuple
    winding: float
    inside_neighbourhood: bool
    completed: bool
    note: str = ""


@dataclass
class LibrationReport:
    center: tuple
    neighbourhood: tuple
    T: float
    orbits: list

    @property
    def all_wind(self):
        return all(o.completed and o.inside_neighbourhood and abs(o.winding) >= 2 * np.pi
                   for o in self.orbits)

    def summary(self):
        n = len(self.orbits)
        wound = sum(abs(o.winding) >= 2 * np.pi for o in self.orbits)
        inside = sum(o.inside_neighbourhood for o in self.orbits)
        done = sum(o.completed for o in self.orbits)
        return {"orbits": n, "winding_ge_2pi": wound, "inside_neighbourhood": inside,
                "completed": done, "center": list(self.center),
                "neighbourhood_halfwidths": list(self.neighbourhood), "T": self.T}


def winding_angle(g, G, center):
    """Total signed angle swept by ``(g - g_c, G - G_c)`` about the centre."""
    ang = np.unwrap(np.arctan2(np.asarray(G) - center[1], np.asarray(g) - center[0]))
    return float(ang[-1] - ang[0])


def libration_experiment(params, init_box, T, center=(np.pi, 0.0), neighbourhood=(1.0, 0.8),
                         n_orbits=20, R0=0.0, r0=None, nu_max=DEFAULT_NU_MAX, tol=1e-10,
                         seed=0, samples=4000):
    """Integrate an ensemble with ``C = 0`` and measure winding about ``center``.

    ``init_box = ((g_lo, g_hi), (G_lo, G_hi))``; the neighbourhood is the box
    ``|g - g_c| <= neighbourhood[0]``, ``|G - G_c| <= neighbourhood[1]``.
    Orbits that leave the trusted region are reported, not raised.
    """
    system = SecularSystem.from_params(0.0, params, nu_max)
    if r0 is None:
        r0 = 4.0 * params.beta_upper
    rng = np.random.default_rng(seed)
    (glo, ghi), (Glo, Ghi) = init_box
    orbits = []
    for _ in range(n_orbits):
        g0 = rng.uniform(glo, ghi)
        G0 = rng.uniform(Glo, Ghi)
        y0 = np.array([R0, G0, r0, g0])
        status, ts, ys, Fs = run(secular_rhs, secular_inside, system.prm, y0, T, tol)
        tt = np.linspace(ts[0], ts[-1], samples)
        traj = Trajectory(ts, ys, Fs, None)
        pts = np.array([traj(s) for s in tt[1:-1]] + [ys[-1]])
        pts = np.vstack([ys[:1], pts])
        gs, Gs = pts[:, 3], pts[:, 1]
        inside = bool(np.all(np.abs(gs - center[0]) <= neighbourhood[0])
                      and np.all(np.abs(Gs - center[1]) <= neighbourhood[1]))
        note = "" if status == ig.STATUS_OK else f"stopped with status {status} at t={ts[-1]:.4g}"
        orbits.append(LibrationOrbit((float(g0), float(G0), float(r0), float(R0)),
                                     winding_angle(gs, Gs, center), inside,
                                     status == ig.STATUS_OK, note))
    return LibrationReport(tuple(center), tuple(neighbourhood), float(T), orbits)


# Demonstration constants for the libration experiment (one-centric frame).
# The existence statement behind the experiment gives no numbers; these are
# chosen so that the dipole term dominates and r stays above 4*beta_upper.
LIBRATION_DEMO_BETAS = (1.0, 399.0)


def libration_demo(frame=None):
    """Return ``(params, r0, R0, T)`` for the demonstration ensemble.

    ``r0 = 4 beta_upper``, ``R0 = r0**-1/2`` (outgoing, apocentre near ``2 r0``)
    and ``T`` is the unperturbed time to fall back to ``r0``.
    """
    frame = ONE_CENTRIC if frame is None else frame
    params = params_from_betas(*LIBRATION_DEMO_BETAS, frame)
    r0 = 4.0 * params.beta_upper
    R0 = 1.0 / np.sqrt(r0)
    # radial Kepler orbit with a = r0: r = a (1 - cos E), t = a^1.5 (E - sin E)
    T = (np.pi + 2.0) * r0 ** 1.5
    return params, r0, R0, T
