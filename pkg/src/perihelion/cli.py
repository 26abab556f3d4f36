"""Command-line front end: ``perihelion portrait | horseshoe | verify``.

Every command writes plain datasets (CSV with ``#`` header comments, JSON
certificates) into ``--out``; nothing is plotted.
"""
import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

from . import chaos, euler, flow, secular, verify
from .io import SCHEMA_VERSION, atomic_write_text, manifest_hash

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NONCONVERGENCE = 3
EXIT_VERIFY = 4

SLOW0_C = 25.0
SLOW0_BETA = 80.0


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- output helpers -------------------------------------------------------------

def make_manifest(command, config):
    return {"schema_version": SCHEMA_VERSION, "command": command,
            "config": {k: config[k] for k in sorted(config)}}


def csv_text(header, rows, manifest, notes=()):
    buf = io.StringIO()
    buf.write(f"# perihelion {manifest['command']} dataset\n")
    buf.write(f"# manifest_sha256: {manifest_hash(manifest)}\n")
    buf.write(f"# manifest: {json.dumps(manifest, sort_keys=True)}\n")
    for n in notes:
        buf.write(f"# {n}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(out, name, header, rows, manifest, notes=()):
    path = os.path.join(out, name)
    atomic_write_text(path, csv_text(header, rows, manifest, notes))
    return path


def write_json(out, name, payload, manifest):
    path = os.path.join(out, name)
    payload = dict(payload, manifest=manifest, manifest_sha256=manifest_hash(manifest))
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
    return path


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(type(v))


def mass_params(args, frame=secular.JACOBI):
    """``MassParams`` from ``--beta/--betabar`` or ``--mu/--kappa``."""
    if args.mu is not None and args.kappa is not None:
        return secular.derive_mass_params(args.mu, args.kappa, frame)
    if args.mu is not None and args.beta is not None:
        return secular.derive_mass_params(args.mu, secular.kappa_for_beta(args.beta, args.mu,
                                                                          frame), frame)
    beta = args.beta
    betabar = args.betabar if args.betabar is not None else beta
    return secular.params_from_betas(beta, betabar, frame)


def level_points(fun, levels, g, G):
    """Zero crossings of ``fun - level`` along ``G`` columns of a grid, linearly interpolated."""
    gg, GG = np.meshgrid(g, G, indexing="ij")
    F = fun(GG, gg)
    rows = []
    for k, lev in enumerate(levels):
        d = F - lev
        i, j = np.nonzero(np.sign(d[:, :-1]) * np.sign(d[:, 1:]) < 0)
        w = d[i, j] / (d[i, j] - d[i, j + 1])
        for a, b in zip(g[i], G[j] + w * (G[j + 1] - G[j])):
            rows.append((k, lev, a, b))
    return rows


# -- portrait -------------------------------------------------------------------

def cmd_portrait(args):
    os.makedirs(args.out, exist_ok=True)
    if args.slow0:
        return _portrait_slow0(args)
    if args.r is None:
        raise CliError("portrait needs --r or --slow0", EXIT_DOMAIN)
    r = args.r
    try:
        pc = euler.classify_portrait(r)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from exc
    manifest = make_manifest("portrait", {"r": r, "n_levels": args.levels, "n": args.n})
    header = ["kind", "label", "level", "g", "G"]
    rows = [("equilibrium", e.kind, e.energy, e.g, e.G) for e in pc.equilibria]
    lo, hi = pc.admissible_energy
    for lev in np.linspace(lo, hi, args.levels + 2)[1:-1]:
        for g, G in euler.level_curve(r, lev, args.n):
            rows.append(("level", "", lev, g, G))
    if "S0" in pc.separatrices:
        for g, G in euler.level_curve(r, r, args.n):
            rows.append(("separatrix", "S0", r, g, G))
    for g, G in euler.level_curve(r, 1.0, args.n):
        rows.append(("separatrix", "S1", 1.0, g, G))
    for G in (-1.0, 1.0):
        for g in np.linspace(-np.pi, np.pi, args.n):
            rows.append(("separatrix", "S1", 1.0, g, G))
    notes = ["E0 = G^2 + r sqrt(1 - G^2) cos g, Lambda = 1; angles in radians",
             f"admissible energies [{lo!r}, {hi!r}]"]
    path = write_csv(args.out, f"portrait_r{r:g}.csv", header, rows, manifest, notes)
    for e in sorted(pc.equilibria, key=lambda e: e.energy):
        print(f"{e.kind:<7} g={e.g:+.6f} G={e.G:+.6f} E0={e.energy:.12g}")
    print(f"wrote {path}")
    return EXIT_OK


def _portrait_slow0(args):
    C = SLOW0_C if args.C is None else args.C
    beta = SLOW0_BETA if args.beta is None else args.beta
    if args.betabar is not None and args.betabar != beta:
        raise CliError("the lowest-order slow Hamiltonian assumes beta = betabar", EXIT_DOMAIN)
    try:
        r0 = secular.fast_equilibrium(C)[1]
    except ValueError as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from exc
    manifest = make_manifest("portrait", {"slow0": True, "C": C, "beta": beta, "r0": r0,
                                          "n_levels": args.levels, "n": args.n})
    eq = secular.slow0_equilibria(C, beta, r0)
    g = np.linspace(0, np.pi, args.n)
    G = np.linspace(-1, 1, args.n)

    def fun(G_, g_):
        return secular.h_slow0(G_, g_, C, beta, r0)

    vals = fun(*np.meshgrid(G, g))
    levels = np.linspace(vals.min(), vals.max(), args.levels + 2)[1:-1]
    rows = [("equilibrium", kind, e, ge, Ge) for ge, Ge, kind, e in eq]
    for ge, Ge, kind, e in eq:
        if kind == "saddle":
            rows += [("separatrix", kind, lev, a, b) for _, lev, a, b in
                     level_points(fun, [e], g, G)]
    rows += [("level", "", lev, a, b) for _, lev, a, b in level_points(fun, levels, g, G)]
    notes = [f"H_slow0 at the fast equilibrium r0 = C^2 = {r0!r}; beta = betabar",
             "g in [0, pi) (the Hamiltonian is pi-periodic in g)"]
    path = write_csv(args.out, f"portrait_slow0_C{C:g}_beta{beta:g}.csv",
                     ["kind", "label", "level", "g", "G"], rows, manifest, notes)
    for ge, Ge, kind, e in eq:
        print(f"{kind:<7} g={ge:+.6f} G={Ge:+.6f} H={e:.12g}")
    print(f"wrote {path}")
    return EXIT_OK


# -- horseshoe ------------------------------------------------------------------

def cmd_horseshoe(args):
    os.makedirs(args.out, exist_ok=True)
    if args.experiment == "libration":
        return _libration(args)
    C = chaos.STAR_C if args.C is None else args.C
    beta = chaos.STAR_BETA if args.beta is None else args.beta
    betabar = beta if args.betabar is None else args.betabar
    nu_max = chaos.SECTION_NU_MAX if args.nu_max is None else args.nu_max
    tol = args.tol if args.tol is not None else chaos.MAP_TOL
    if C != chaos.STAR_C or beta != chaos.STAR_BETA or betabar != beta:
        raise CliError("the horseshoe pipeline runs on the starred section only "
                       "(C = 24.394, beta = betabar = 80)", EXIT_DOMAIN)
    config = {"C": C, "beta": beta, "betabar": betabar, "nu_max": nu_max, "tol": tol,
              "census_window": chaos.CENSUS_WINDOW, "census_seeds": chaos.CENSUS_SEEDS,
              "search_grid": {k: list(v) for k, v in chaos.DEFAULT_SEARCH_GRID.items()},
              "sampling": chaos.Sampling().to_dict(), "manifold_arc": args.arc}
    manifest = make_manifest("horseshoe", config)
    t0 = time.time()
    plane = chaos.SectionPlane.starred(nu_max)
    fmap = chaos.SectionMap(plane, tol)
    census = chaos.window_census(fmap)
    print(f"census: {len(census.fixed_points)} fixed points from {census.n_seeds} seeds "
          f"({census.n_dropped} dropped) in {time.time() - t0:.0f} s")
    try:
        pair = chaos.saddle_pair(census)
    except chaos.MapError as exc:
        raise CliError(str(exc), EXIT_NONCONVERGENCE) from exc
    fp1, fp2 = pair[0][0], pair[1][0]
    rows = []
    for k, fp in enumerate(census.fixed_points):
        lam = np.real(fp.eigenvalues)
        rows.append((k, fp.kind, fp.location[0], fp.location[1], lam[0], lam[1], fp.residual))
    write_csv(args.out, "fixed_points.csv", ["id", "kind", "g", "G", "lambda1", "lambda2",
                                              "residual"], rows, manifest,
              ["section coordinates z = (g mod pi, G)"])
    mrows = []
    for k, fp in enumerate((fp1, fp2), start=1):
        for which in ("unstable", "stable"):
            for br in chaos.grow_manifold(fp, which, fmap, arc_budget=args.arc, n_iter=4):
                mrows += [(k, which, br.sign, i, p[0], p[1]) for i, p in enumerate(br.points)]
    write_csv(args.out, "manifolds.csv", ["saddle", "which", "branch", "index", "g", "G"],
              mrows, manifest, ["polylines in unwrapped g; saddle 1 is nearest q1"])
    print(f"manifolds grown in {time.time() - t0:.0f} s")
    result = chaos.detect_horseshoe(fp1, fp2, fmap, chaos.DEFAULT_SEARCH_GRID)
    hrows = []
    for k, h in enumerate(result.hsets, start=1):
        corners = h.from_cube(np.array([[-1, -1], [1, -1], [1, 1], [-1, 1], [-1, -1]]))
        hrows += [(k, i, c[0], c[1]) for i, c in enumerate(corners)]
        imgs = fmap.many(np.vstack(h.exit_edges(128)))
        hrows += [(k, f"image{i}", c[0], c[1]) for i, c in enumerate(imgs)]
    write_csv(args.out, "hsets.csv", ["hset", "vertex", "g", "G"], hrows, manifest,
              ["corners in cube order (s, u) = (-1,-1), (1,-1), (1,1), (-1,1); "
               "image rows are P of the exit edges"])
    params = dict(config, targets={"q1": chaos.Q1, "q2": chaos.Q2},
                  distances=[pair[0][1], pair[1][1]], plane=plane.to_dict())
    cert_path = write_json(args.out, "certificate.json", result.certificate(params), manifest)
    for (i, j), v in zip(chaos.RELATIONS, result.relations):
        print(f"N{i + 1} => N{j + 1}: {'holds' if v.holds else 'not established'}")
    print(f"horseshoe {'found' if result.found else 'not found'} "
          f"({result.tried} candidates, {time.time() - t0:.0f} s); wrote {cert_path}")
    return EXIT_OK if result.found else EXIT_NONCONVERGENCE


def _libration(args):
    nu_max = secular.DEFAULT_NU_MAX if args.nu_max is None else args.nu_max
    C = 0.0 if args.C is None else args.C
    if C != 0:
        raise CliError("the libration experiment requires --C 0", EXIT_DOMAIN)
    params, r0, R0, T = flow.libration_demo()
    if args.beta is not None or args.mu is not None:
        params = mass_params(args, secular.ONE_CENTRIC)
        r0 = 4.0 * params.beta_upper
        R0 = 1.0 / np.sqrt(r0)
        T = (np.pi + 2.0) * r0 ** 1.5
    tol = args.tol if args.tol is not None else 1e-10
    box = ((np.pi - 0.15, np.pi + 0.15), (-0.15, 0.15))
    config = {"C": C, "beta": params.beta, "betabar": params.betabar, "frame": params.frame,
              "r0": r0, "R0": R0, "T": T, "init_box": box, "n_orbits": args.orbits,
              "seed": args.seed, "nu_max": nu_max, "tol": tol}
    manifest = make_manifest("horseshoe", dict(config, experiment="libration"))
    rep = flow.libration_experiment(params, box, T, R0=R0, r0=r0, n_orbits=args.orbits,
                                    nu_max=nu_max, tol=tol, seed=args.seed)
    rows = [(k, o.initial[0], o.initial[1], o.winding, int(o.inside_neighbourhood),
             int(o.completed), o.note) for k, o in enumerate(rep.orbits)]
    write_csv(args.out, "libration.csv", ["orbit", "g0", "G0", "winding", "inside",
                                          "completed", "note"], rows, manifest,
              ["winding in radians about (g, G) = (pi, 0)",
               "demonstration constants; one-centric frame"])
    write_json(args.out, "libration.json", {"summary": rep.summary(),
                                            "all_wind": rep.all_wind}, manifest)
    s = rep.summary()
    print(f"libration: {s['winding_ge_2pi']}/{s['orbits']} orbits wind >= 2 pi, "
          f"{s['inside_neighbourhood']} stay inside, {s['completed']} complete T={T:.4g}")
    return EXIT_OK


# -- verify ---------------------------------------------------------------------

def cmd_verify(args):
    nu_max = secular.DEFAULT_NU_MAX if args.nu_max is None else args.nu_max
    names = verify.SUITES if args.suite == "all" else (args.suite,)
    rows = verify.run_suites(names, nu_max=nu_max, n_nodes=args.nodes, seed=args.seed)
    print(f"quadrature nodes: {args.nodes}   nu_max: {nu_max}")
    print(verify.format_table(rows))
    if args.out:
        manifest = make_manifest("verify", {"suite": args.suite, "nodes": args.nodes,
                                            "nu_max": nu_max, "seed": args.seed})
        write_csv(args.out, "verify.csv", ["suite", "check", "value", "tol", "passed",
                                           "detail"],
                  [(c.suite, c.name, float(c.value), c.tol, int(c.passed), c.detail)
                   for c in rows], manifest)
    return EXIT_OK if all(c.passed for c in rows) else EXIT_VERIFY


# -- parser ---------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--C", type=float, default=None, help="total angular momentum")
    common.add_argument("--beta", type=float, default=None)
    common.add_argument("--betabar", type=float, default=None)
    common.add_argument("--mu", type=float, default=None, help="mass ratio (with --kappa)")
    common.add_argument("--kappa", type=float, default=None)
    common.add_argument("--nu-max", type=int, default=None,
                        help="series order (default 10; 20 for return maps)")
    common.add_argument("--tol", type=float, default=None, help="integration tolerance")
    common.add_argument("--nodes", type=int, default=secular.DEFAULT_NODES,
                        help="quadrature nodes (power of two)")
    common.add_argument("--out", default="perihelion-out", help="output directory")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="perihelion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    pp = sub.add_parser("portrait", parents=[common], help="phase-portrait datasets")
    pp.add_argument("--r", type=float, default=None)
    pp.add_argument("--slow0", action="store_true",
                    help="lowest-order slow Hamiltonian at r0 = C^2")
    pp.add_argument("--levels", type=int, default=12)
    pp.add_argument("--n", type=int, default=400, help="samples per curve")
    ph = sub.add_parser("horseshoe", parents=[common],
                        help="fixed points, manifolds and covering relations")
    ph.add_argument("--experiment", choices=("horseshoe", "libration"), default="horseshoe")
    ph.add_argument("--arc", type=float, default=0.1, help="manifold arc length per branch")
    ph.add_argument("--orbits", type=int, default=20, help="libration ensemble size")
    pv = sub.add_parser("verify", parents=[common], help="invariant suites")
    pv.add_argument("--suite", choices=("all",) + verify.SUITES, default="all")
    pv.set_defaults(out=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"portrait": cmd_portrait, "horseshoe": cmd_horseshoe, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, secular.NearCollisionError, euler.CollisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (flow.IntegrationError, chaos.MapError, chaos.LiftError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
