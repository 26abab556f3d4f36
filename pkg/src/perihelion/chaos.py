"""Poincare return map of the secular flow, fixed points, manifolds and covering relations.

Points of the section are written ``z = (g, G)`` with ``g`` reduced into
``[0, pi)``; the coefficients of the series Hamiltonian are pi-periodic in
``g`` when ``beta = betabar``.
"""
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import integrator as ig
from .flow import (DomainExitError, IntegrationError, NoCrossingError, SecularSystem,
                   StepCollapseError, secular_inside, secular_rhs, tolerances)

HALF_TURN = np.pi

STAR_C = 24.394
STAR_BETA = 80.0
STAR_STATE = (-0.0060, -0.804, 652.256, 1.4524)  # (R, G, r, g)
# series order for return maps: fixed points move < 1e-6 from 20 to 24, but ~2e-3 from 10 to 12
SECTION_NU_MAX = 20
Q1 = (0.203945459, 0.665706)
Q2 = (0.278077917, 0.714484)

MAP_TOL = 1e-12
EVENT_TTOL = 1e-9
RETURN_HORIZON = 5e6
TRANSVERSAL_MIN = 1e-3


class LiftError(ValueError):
    """The seed has no real radial momentum on the energy shell."""


class MapError(RuntimeError):
    """The return map could not be evaluated at a seed."""


def wrap_g(g):
    return np.mod(g, HALF_TURN)


def wrap_diff(d):
    """Angle difference reduced into ``(-pi/2, pi/2]``."""
    return -np.mod(-d + HALF_TURN / 2, HALF_TURN) + HALF_TURN / 2


@dataclass(frozen=True)
class SectionPlane:
    """Plane through the pivot ``(r*, G*, g*)`` orthogonal to the flow there."""
    system: SecularSystem
    pivot: tuple          # (R*, G*, r*, g*)
    energy: float
    V_star: np.ndarray    # (v_r, v_G, v_g)
    R_sign: float = -1.0
    orientation: float = 1.0

    @classmethod
    def through(cls, system, pivot, R_sign=None):
        """Build the plane from a 4-dimensional pivot state; the energy is taken there."""
        pivot = tuple(float(v) for v in pivot)
        dy = system.field(pivot)
        V = np.array([dy[2], dy[1], dy[3]])
        if not np.any(V):
            raise ValueError("velocity vanishes at the pivot")
        sign = R_sign if R_sign is not None else (-1.0 if pivot[0] < 0 else 1.0)
        return cls(system, pivot, system.hamiltonian(pivot), V, float(sign),
                   float(np.sign(V @ V)))

    @classmethod
    def starred(cls, nu_max=SECTION_NU_MAX):
        system = SecularSystem(STAR_C, STAR_BETA, STAR_BETA, nu_max=nu_max)
        return cls.through(system, STAR_STATE)

    @property
    def normal4(self):
        """Normal vector in ``(R, G, r, g)`` ordering."""
        v_r, v_G, v_g = self.V_star
        return np.array([0.0, v_G, v_r, v_g])

    @property
    def offset(self):
        return float(self.normal4 @ np.asarray(self.pivot))

    def plane_residual(self, y):
        dg = y[3] - self.pivot[3]
        v_r, v_G, v_g = self.V_star
        return v_r * (y[2] - self.pivot[2]) + v_G * (y[1] - self.pivot[1]) + v_g * dg

    def to_dict(self):
        return {"pivot": list(self.pivot), "energy": self.energy,
                "V_star": [float(v) for v in self.V_star], "R_sign": self.R_sign,
                "C": self.system.C, "beta": self.system.beta,
                "betabar": self.system.betabar, "nu_max": self.system.nu_max}


def lift(z, plane):
    """Section point ``z = (g, G)`` -> state ``(R, G, r, g)`` on the plane and energy shell."""
    g, G = float(wrap_g(z[0])), float(z[1])
    if not abs(G) < 1.0:
        raise LiftError("|G| must be < 1")
    v_r, v_G, v_g = plane.V_star
    _, G0, r0, g0 = plane.pivot
    r = r0 - (v_G * (G - G0) + v_g * (g - g0)) / v_r
    rest = plane.system.hamiltonian((0.0, G, r, g))
    disc = 2.0 * (plane.energy - rest)
    if disc < 0:
        raise LiftError("seed lies off the energy shell")
    return np.array([plane.R_sign * np.sqrt(disc), G, r, g])


def project(y):
    return np.array([wrap_g(y[3]), y[1]])


@dataclass
class Return:
    z: np.ndarray
    y: np.ndarray
    tau: float
    transversality: float


def flow_to_section(y0, plane, t_max=RETURN_HORIZON, tol=MAP_TOL, backward=False):
    """Follow the flow from a state on the plane to the next same-orientation crossing."""
    rtol, atol = tolerances(tol)
    span = -t_max if backward else t_max
    status, t, y, _ = ig.integrate_to_crossing(
        secular_rhs, secular_inside, plane.system.prm, np.ascontiguousarray(y0, dtype=float),
        0.0, span, rtol, atol, 10 ** 6, plane.normal4, plane.offset, int(plane.orientation),
        3, HALF_TURN, True, EVENT_TTOL)
    if status == ig.STATUS_DOMAIN:
        raise DomainExitError("orbit left the trusted region before returning")
    if status == ig.STATUS_NO_EVENT:
        raise NoCrossingError("no return within the horizon")
    if status != ig.STATUS_EVENT:
        raise StepCollapseError(f"integration failed with status {status}")
    return float(t), y


def return_map(z, plane, backward=False, tol=MAP_TOL):
    """One application of the return map (or of its inverse when ``backward``)."""
    y0 = lift(z, plane)
    t, y = flow_to_section(y0, plane, tol=tol, backward=backward)
    dy = plane.system.field(y)
    trans = float(plane.normal4 @ dy) / np.linalg.norm(plane.V_star) / np.linalg.norm(dy[1:])
    if abs(trans) < TRANSVERSAL_MIN:
        raise MapError("crossing is not transversal")
    return Return(project(y), y, t, trans)


def poincare_map(z, plane, backward=False, tol=MAP_TOL):
    """``P(z)`` (or ``P^-1(z)``) as a section point ``(g mod pi, G)``."""
    return return_map(z, plane, backward, tol).z


# -- maps of the plane ---------------------------------------------------------

def thread_count():
    """Worker cap from ``PERIHELION_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("PERIHELION_THREADS", "1")))
    except ValueError:
        return 1


class PlaneMap:
    """A map of the plane with optional inverse; ``period`` wraps the first coordinate."""

    def __init__(self, f, inverse=None, period=None):
        self._f = f
        self._inv = inverse
        self.period = period

    def __call__(self, z):
        return np.asarray(self._f(np.asarray(z, dtype=float)), dtype=float)

    def inverse(self, z):
        if self._inv is None:
            raise NotImplementedError("map has no inverse")
        return np.asarray(self._inv(np.asarray(z, dtype=float)), dtype=float)

    def many(self, points, inverse=False):
        """Images of an ``(n, 2)`` array; failed evaluations come back as NaN rows."""
        fn = self.inverse if inverse else self
        pts = np.asarray(points, dtype=float).reshape(-1, 2)

        def one(p):
            try:
                return fn(p)
            except (IntegrationError, LiftError, MapError):
                return np.full(2, np.nan)

        workers = thread_count()
        if workers > 1 and len(pts) > 1:
            with ThreadPoolExecutor(workers) as ex:
                return np.array(list(ex.map(one, pts)))
        return np.array([one(p) for p in pts])


class SectionMap(PlaneMap):
    """Return map of the secular flow to a :class:`SectionPlane`."""

    def __init__(self, plane, tol=MAP_TOL):
        self.plane = plane
        self.tol = tol
        super().__init__(lambda z: poincare_map(z, plane, False, tol),
                         lambda z: poincare_map(z, plane, True, tol), HALF_TURN)


def displacement(a, b, period=None):
    """``a - b`` with the first coordinate taken on the nearest branch."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if period is not None:
        d = d.copy()
        d[..., 0] = d[..., 0] - period * np.round(d[..., 0] / period)
    return d


def near_branch(z, ref, period=None):
    """Representative of ``z`` whose first coordinate is closest to ``ref``."""
    return np.asarray(ref, dtype=float) + displacement(z, ref, period)


# -- linearisation and fixed points -----------------------------------------------

def jacobian(z, fmap, h=None, steps=(1e-4, 5e-5, 2.5e-5)):
    """Central-difference Jacobian ``DP(z)``.

    With ``h`` given a single central difference is used.  Otherwise central
    differences at the ``steps`` are Richardson-combined pairwise and the pair
    whose two extrapolations agree best is returned.
    """
    z = np.asarray(z, dtype=float)

    def central(step):
        M = np.empty((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = step
            M[:, i] = displacement(fmap(z + e), fmap(z - e), fmap.period) / (2 * step)
        return M

    if h is not None:
        return central(h)
    cs = [central(s) for s in steps]
    rich = [(4 * cs[k + 1] - cs[k]) / 3 for k in range(len(cs) - 1)]
    if len(rich) == 1:
        return rich[0]
    errs = [np.max(np.abs(rich[k + 1] - rich[k])) for k in range(len(rich) - 1)]
    return rich[int(np.argmin(errs)) + 1]


HYPERBOLIC = "hyperbolic"
ELLIPTIC = "elliptic"
DEGENERATE = "degenerate"


@dataclass
class FixedPointRecord:
    location: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray   # columns, unit length
    kind: str
    residual: float

    @property
    def stable(self):
        """Unit stable eigenvector (hyperbolic points)."""
        return self.eigenvectors[:, int(np.argmin(np.abs(self.eigenvalues)))].real

    @property
    def unstable(self):
        return self.eigenvectors[:, int(np.argmax(np.abs(self.eigenvalues)))].real

    @property
    def multiplier(self):
        return float(np.max(np.abs(self.eigenvalues)))

    def to_dict(self):
        ev = self.eigenvalues
        return {"location": [float(v) for v in self.location], "kind": self.kind,
                "residual": self.residual,
                "eigenvalues": [[float(v.real), float(v.imag)] for v in ev],
                "det": float(np.prod(ev).real)}


def classify(J, unit_tol=1e-4):
    """Eigen-decomposition of a 2x2 linearisation and its type."""
    vals, vecs = np.linalg.eig(J)
    if np.all(np.abs(vals.imag) <= 1e-12 * np.abs(vals).max()):
        vals = vals.real
        vecs = vecs.real
        a = np.sort(np.abs(vals))
        kind = HYPERBOLIC if a[1] > 1 + unit_tol and a[0] < 1 - unit_tol else DEGENERATE
    else:
        kind = ELLIPTIC if np.all(np.abs(np.abs(vals) - 1) <= unit_tol) else DEGENERATE
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    return vals, vecs, kind


def fixed_point_record(z, fmap, J=None):
    J = jacobian(z, fmap) if J is None else J
    vals, vecs, kind = classify(J)
    res = float(np.linalg.norm(displacement(fmap(z), z, fmap.period)))
    loc = np.array(z, dtype=float)
    if fmap.period is not None:
        loc[0] = np.mod(loc[0], fmap.period)
    return FixedPointRecord(loc, vals, vecs, kind, res)


@dataclass
class CensusReport:
    fixed_points: list
    n_seeds: int
    n_dropped: int

    def hyperbolic(self):
        return [p for p in self.fixed_points if p.kind == HYPERBOLIC]

    def elliptic(self):
        return [p for p in self.fixed_points if p.kind == ELLIPTIC]

    def nearest(self, target, kind=None, period=HALF_TURN):
        pool = [p for p in self.fixed_points if kind is None or p.kind == kind]
        if not pool:
            return None, np.inf
        d = [np.linalg.norm(displacement(p.location, target, period)) for p in pool]
        k = int(np.argmin(d))
        return pool[k], float(d[k])


def newton_fixed_point(z0, fmap, tol=1e-11, max_iter=40, h_newton=1e-6):
    """Damped Newton on ``P(z) - z``; returns the root or ``None``."""
    z = np.asarray(z0, dtype=float).copy()
    eye = np.eye(2)
    try:
        F = displacement(fmap(z), z, fmap.period)
        for _ in range(max_iter):
            nf = np.linalg.norm(F)
            if nf <= tol:
                return z
            step = np.linalg.solve(jacobian(z, fmap, h=h_newton) - eye, -F)
            lam = 1.0
            while lam > 1e-4:
                zt = z + lam * step
                try:
                    Ft = displacement(fmap(zt), zt, fmap.period)
                    if np.linalg.norm(Ft) < nf:
                        break
                except (IntegrationError, LiftError, MapError):
                    pass
                lam *= 0.5
            else:
                return None
            z, F = zt, Ft
        return z if np.linalg.norm(F) <= tol else None
    except (IntegrationError, LiftError, MapError, np.linalg.LinAlgError):
        return None


def newton_fixed_points(seeds, fmap, tol=1e-11, dedupe=1e-6, max_iter=40):
    """Newton census from the ``seeds``; duplicates closer than ``dedupe`` are merged."""
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    roots, dropped = [], 0
    for s in seeds:
        z = newton_fixed_point(s, fmap, tol, max_iter)
        if z is None:
            dropped += 1
            continue
        if fmap.period is not None:
            z[0] = np.mod(z[0], fmap.period)
        if any(np.linalg.norm(displacement(z, r, fmap.period)) < dedupe for r in roots):
            continue
        roots.append(z)
    records = []
    for z in roots:
        try:
            records.append(fixed_point_record(z, fmap))
        except (IntegrationError, LiftError, MapError):
            dropped += 1
    return CensusReport(records, len(seeds), dropped)


def seed_grid(g_range, G_range, ng, nG):
    g = np.linspace(*g_range, ng)
    G = np.linspace(*G_range, nG)
    return np.array([(a, b) for a in g for b in G])


# Window around the reported saddle pair; a full-strip census is ~5x slower.
CENSUS_WINDOW = ((0.1, 0.4), (0.6, 0.8))
CENSUS_SEEDS = (10, 10)


def window_census(fmap, window=CENSUS_WINDOW, seeds=CENSUS_SEEDS, tol=1e-11):
    """Newton census from a uniform seed grid over ``window = ((g0, g1), (G0, G1))``."""
    return newton_fixed_points(seed_grid(window[0], window[1], *seeds), fmap, tol=tol)


def saddle_pair(census, targets=(Q1, Q2)):
    """Hyperbolic fixed points nearest each target, with their distances."""
    out = [census.nearest(t, HYPERBOLIC) for t in targets]
    if any(fp is None for fp, _ in out):
        raise MapError("census found no hyperbolic fixed point")
    return out


# -- invariant manifolds ---------------------------------------------------------------

@dataclass
class ManifoldBranch:
    which: str
    sign: int
    points: np.ndarray       # unwrapped polyline
    truncated: bool = False

    @property
    def arc_length(self):
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


def grow_manifold(fp, which, fmap, arc_budget=1.0, delta0=1e-4, n_iter=6, n_seed=16,
                  max_gap=5e-3, max_points=4000):
    """Grow both branches of the stable or unstable manifold of a saddle.

    A fundamental domain between ``x0 = fp + delta0 v`` and its image is
    pushed forward by ``P`` (unstable) or ``P^-1`` (stable); midpoints are
    inserted in the fundamental-domain parameter whenever consecutive image
    points are farther apart than ``max_gap``.  Growth stops at
    ``arc_budget`` per branch.
    """
    if fp.kind != HYPERBOLIC:
        raise ValueError("manifolds are grown only at hyperbolic points")
    if which not in ("stable", "unstable"):
        raise ValueError("which must be 'stable' or 'unstable'")
    step = fmap.inverse if which == "stable" else fmap
    v = fp.stable if which == "stable" else fp.unstable
    base = fp.location
    branches = []
    for sign in (1, -1):
        x0 = base + sign * delta0 * v
        x1 = near_branch(step(x0), x0, fmap.period)

        def seed(s):
            return x0 + s * (x1 - x0)

        def push(s, k):
            p = seed(s)
            for _ in range(k):
                p = near_branch(step(p), p, fmap.period)
            return p

        pts = [base]
        truncated = False
        arc = 0.0
        for k in range(n_iter):
            ss = list(np.linspace(0.0, 1.0, n_seed + 1))
            try:
                imgs = [push(s, k) for s in ss]
            except (IntegrationError, LiftError, MapError):
                truncated = True
                break
            i = 0
            while i < len(ss) - 1 and len(ss) < max_points:
                if np.linalg.norm(displacement(imgs[i + 1], imgs[i], fmap.period)) > max_gap:
                    sm = 0.5 * (ss[i] + ss[i + 1])
                    try:
                        pm = push(sm, k)
                    except (IntegrationError, LiftError, MapError):
                        truncated = True
                        break
                    ss.insert(i + 1, sm)
                    imgs.insert(i + 1, pm)
                    if ss[i + 1] - ss[i] < 1e-12:
                        i += 1
                else:
                    i += 1
            for p in imgs:
                p = near_branch(p, pts[-1], fmap.period)
                arc += np.linalg.norm(p - pts[-1])
                pts.append(p)
                if arc >= arc_budget:
                    break
            if arc >= arc_budget or truncated:
                break
        branches.append(ManifoldBranch(which, sign, np.array(pts), truncated))
    return branches


# -- h-sets and covering relations -------------------------------------------------------

@dataclass(frozen=True)
class HSet:
    """Parallelogram ``q + a A v_s + b B v_u`` with ``|a|, |b| <= 1``.

    ``c_N`` sends a point to ``(u, s) = (b, a)``: the first coordinate runs
    along the unstable direction, so the exit set is ``u = +-1`` and the
    entry set ``s = +-1``.
    """
    q: tuple
    v_s: tuple
    v_u: tuple
    A: float
    B: float
    period: float = None

    def __post_init__(self):
        M = self.frame
        if abs(np.linalg.det(M)) < 1e-12:
            raise ValueError("v_s and v_u must be linearly independent")

    @classmethod
    def at(cls, fp, A, B, period=HALF_TURN):
        return cls(tuple(fp.location), tuple(fp.stable), tuple(fp.unstable), float(A),
                   float(B), period)

    @property
    def frame(self):
        """Columns: the images of the unit vectors of ``[-1, 1]^2``."""
        return np.column_stack([self.B * np.asarray(self.v_u), self.A * np.asarray(self.v_s)])

    def to_cube(self, x):
        """``c_N``: plane points -> ``(u, s)`` coordinates."""
        x = np.asarray(x, dtype=float)
        d = displacement(x, self.q, self.period)
        return np.linalg.solve(self.frame, d.reshape(-1, 2).T).T.reshape(x.shape)

    def from_cube(self, us):
        us = np.asarray(us, dtype=float)
        return np.asarray(self.q) + us.reshape(-1, 2) @ self.frame.T

    def exit_edges(self, n):
        t = np.linspace(-1, 1, n)
        return [self.from_cube(np.column_stack([np.full(n, side), t])) for side in (-1, 1)]

    def entry_edges(self, n):
        t = np.linspace(-1, 1, n)
        return [self.from_cube(np.column_stack([t, np.full(n, side)])) for side in (-1, 1)]

    def fiber(self, s0, n):
        t = np.linspace(-1, 1, n)
        return self.from_cube(np.column_stack([t, np.full(n, s0)]))

    def grid(self, n):
        t = np.linspace(-1, 1, n)
        uu, ss = np.meshgrid(t, t, indexing="ij")
        return self.from_cube(np.column_stack([uu.ravel(), ss.ravel()])).reshape(n, n, 2)

    def to_dict(self):
        return {"q": list(self.q), "vs": list(self.v_s), "vu": list(self.v_u),
                "A": self.A, "B": self.B}


@dataclass(frozen=True)
class Sampling:
    edge: int = 512
    fiber: int = 1024
    grid: int = 48
    fibers: tuple = (0.0, -0.5, 0.5, -0.25, 0.25, -0.75, 0.75)

    def doubled(self):
        return Sampling(2 * self.edge, 2 * self.fiber, 2 * self.grid, self.fibers)

    def to_dict(self):
        return {"edge": self.edge, "fiber": self.fiber, "grid": self.grid,
                "fibers": list(self.fibers)}


class ImageSamples:
    """Images of an h-set's exit edges and interior grid; fibres on demand."""

    def __init__(self, hset, fmap, sampling):
        self.hset = hset
        self.fmap = fmap
        self.sampling = sampling
        self.exits = [fmap.many(e) for e in hset.exit_edges(sampling.edge)]
        n = sampling.grid
        self.grid = fmap.many(hset.grid(n).reshape(-1, 2)).reshape(n, n, 2)
        self._fibers = {}

    def fiber(self, s0):
        if s0 not in self._fibers:
            self._fibers[s0] = self.fmap.many(self.hset.fiber(s0, self.sampling.fiber))
        return self._fibers[s0]

    @staticmethod
    def _nan_rows(a):
        return int(np.isnan(a.reshape(-1, 2)).any(axis=1).sum())

    @property
    def failed(self):
        return sum(self._nan_rows(a) for a in (*self.exits, self.grid))


def sample_images(M, fmap, sampling):
    return ImageSamples(M, fmap, sampling)


@dataclass
class CoveringVerdict:
    holds: bool
    inconclusive: bool
    stretch: bool
    exit_ok: bool
    entry_ok: bool
    q0: float
    witness_counts: dict
    margins: dict
    witnesses: dict = field(default=None, repr=False)

    def to_dict(self):
        return {"verdict": self.holds, "inconclusive": self.inconclusive,
                "stretch": self.stretch, "exit": self.exit_ok, "entry": self.entry_ok,
                "q0": self.q0, "witness_counts": self.witness_counts,
                "margins": self.margins}


def _crosses_entry(us):
    """Does a sampled polyline (in cube coordinates) meet ``s = +-1, |u| <= 1``?"""
    u, s = us[:, 0], us[:, 1]
    for level in (-1.0, 1.0):
        d = s - level
        hit = np.nonzero(d == 0)[0]
        if np.any(np.abs(u[hit]) <= 1):
            return True
        k = np.nonzero(d[:-1] * d[1:] < 0)[0]
        if k.size:
            t = d[k] / (d[k] - d[k + 1])
            uc = u[k] + t * (u[k + 1] - u[k])
            if np.any(np.abs(uc) <= 1):
                return True
    return False


def check_covering(M, N, fmap=None, sampling=Sampling(), images=None, keep_witnesses=False):
    """Numerical test of ``M =>_f N``.

    (1) some horizontal fibre ``s = q0`` of ``M`` is mapped into
        ``{|u| > 1} U {|s| < 1}`` of ``N`` with its end points on opposite
        sides ``u < -1`` and ``u > 1``;
    (2) no sampled image of the exit edges of ``M`` lies in ``N``;
    (3) the images of the grid lines of ``M`` (including its boundary) never
        meet the entry edges of ``N``.

    Any failed map evaluation makes the verdict inconclusive (and not true).
    """
    if images is None:
        images = sample_images(M, fmap, sampling)
    if images.failed:
        return CoveringVerdict(False, True, False, False, False, float("nan"),
                               {"failed": images.failed}, {})
    to = N.to_cube
    q0 = float("nan")
    stretch = False
    fiber_margin = -np.inf
    for s0 in images.sampling.fibers:
        pts = images.fiber(s0)
        if images._nan_rows(pts):
            return CoveringVerdict(False, True, False, False, False, float("nan"),
                                   {"failed": images._nan_rows(pts)}, {})
        us = to(pts)
        ok_pts = (np.abs(us[:, 0]) > 1) | (np.abs(us[:, 1]) < 1)
        ends = us[0, 0] * us[-1, 0] < 0 and abs(us[0, 0]) > 1 and abs(us[-1, 0]) > 1
        inside = np.abs(us[:, 0]) <= 1
        margin = 1 - np.max(np.abs(us[inside, 1])) if inside.any() else 1.0
        if ok_pts.all() and ends:
            stretch = True
            q0 = float(s0)
            fiber_margin = margin
            break
        fiber_margin = max(fiber_margin, margin)
    exit_us = [to(e) for e in images.exits]
    in_N = [np.all(np.abs(us) <= 1, axis=1) for us in exit_us]
    exit_hits = int(sum(m.sum() for m in in_N))
    exit_margin = float(min(np.min(np.max(np.abs(us), axis=1)) for us in exit_us) - 1)
    g_us = to(images.grid.reshape(-1, 2)).reshape(images.grid.shape)
    lines = [g_us[i, :, :] for i in range(g_us.shape[0])] + \
            [g_us[:, j, :] for j in range(g_us.shape[1])]
    entry_hits = int(sum(_crosses_entry(line) for line in lines))
    exit_ok = exit_hits == 0
    entry_ok = entry_hits == 0
    wit = None
    if keep_witnesses:
        wit = {"fiber": to(images.fiber(q0)).tolist() if stretch else None,
               "exits": [us.tolist() for us in exit_us]}
    counts = {"fiber_points": images.sampling.fiber, "exit_points": 2 * images.sampling.edge,
              "grid_lines": len(lines), "exit_hits": exit_hits, "entry_line_hits": entry_hits}
    margins = {"fiber": float(fiber_margin), "exit": exit_margin}
    return CoveringVerdict(stretch and exit_ok and entry_ok, False, stretch, exit_ok,
                           entry_ok, q0, counts, margins, wit)


# -- horseshoe search -----------------------------------------------------------------------

RELATIONS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass
class HorseshoeResult:
    found: bool
    hsets: list
    relations: list           # CoveringVerdict per RELATIONS entry
    relations_doubled: list
    fixed_points: list
    sampling: Sampling
    tried: int
    best_count: int

    def certificate(self, params=None):
        return {
            "found": self.found,
            "fixed_points": [fp.to_dict() for fp in self.fixed_points],
            "eigen_data": [{"stable": [float(v) for v in fp.stable],
                            "unstable": [float(v) for v in fp.unstable],
                            "eigenvalues": [float(np.real(v)) for v in fp.eigenvalues]}
                           for fp in self.fixed_points],
            "hsets": [h.to_dict() for h in self.hsets],
            "relations": [dict(pair=[i + 1, j + 1], **v.to_dict())
                          for (i, j), v in zip(RELATIONS, self.relations)],
            "relations_doubled": [dict(pair=[i + 1, j + 1], **v.to_dict())
                                  for (i, j), v in zip(RELATIONS, self.relations_doubled)],
            "sampling": {"densities": [self.sampling.to_dict(),
                                       self.sampling.doubled().to_dict()]},
            "search": {"candidates_tried": self.tried, "best_relation_count": self.best_count},
            "params": params or {},
        }


def _disjoint(N1, N2, n=64):
    """Sampled test that two parallelograms do not overlap."""
    for a, b in ((N1, N2), (N2, N1)):
        pts = a.grid(n).reshape(-1, 2)
        if np.any(np.all(np.abs(b.to_cube(pts)) <= 1, axis=1)):
            return False
    return True


DEFAULT_SEARCH_GRID = {"A1": (0.05, 0.055, 0.06), "B1": (0.008, 0.01),
                       "A2": (0.045, 0.05), "B2": (0.008, 0.01)}


def detect_horseshoe(fp1, fp2, fmap, search_grid, sampling=Sampling(), screen=None):
    """Search ``(A1, B1, A2, B2)`` over ``search_grid`` for four covering relations.

    ``search_grid`` maps ``"A1", "B1", "A2", "B2"`` to candidate values.  A
    cheap screening density rejects most candidates; survivors are checked at
    ``sampling`` and at its doubled density.
    """
    for fp in (fp1, fp2):
        if fp.kind != HYPERBOLIC:
            raise ValueError("both fixed points must be hyperbolic")
    screen = screen or Sampling(edge=48, fiber=96, grid=16, fibers=sampling.fibers)
    cache = {}

    def images(idx, fp, A, B, smp):
        key = (idx, A, B, smp)
        if key not in cache:
            cache[key] = sample_images(HSet.at(fp, A, B, fmap.period), fmap, smp)
        return cache[key]

    def relations(hs, smp, keep=False):
        out = []
        for i, j in RELATIONS:
            fp = (fp1, fp2)[i]
            img = images(i, fp, hs[i].A, hs[i].B, smp)
            out.append(check_covering(hs[i], hs[j], images=img, keep_witnesses=keep))
        return out

    tried, best, best_set = 0, -1, None
    for A1 in search_grid["A1"]:
        for B1 in search_grid["B1"]:
            for A2 in search_grid["A2"]:
                for B2 in search_grid["B2"]:
                    hs = [HSet.at(fp1, A1, B1, fmap.period), HSet.at(fp2, A2, B2, fmap.period)]
                    if not _disjoint(*hs):
                        continue
                    tried += 1
                    rel = relations(hs, screen)
                    count = sum(v.holds for v in rel)
                    if count > best:
                        best, best_set = count, (hs, rel)
                    if count < 4:
                        continue
                    full = relations(hs, sampling)
                    if not all(v.holds for v in full):
                        continue
                    dbl = relations(hs, sampling.doubled())
                    if all(v.holds for v in dbl):
                        return HorseshoeResult(True, hs, full, dbl, [fp1, fp2], sampling,
                                               tried, 4)
    hs, rel = best_set if best_set else ([], [])
    return HorseshoeResult(False, hs, rel, [], [fp1, fp2], sampling, tried, max(best, 0))


def write_certificate(result, path, params=None):
    from .io import atomic_write_text
    atomic_write_text(path, json.dumps(result.certificate(params), indent=2, sort_keys=True))
