"""Command-line front end: run studies, write CSV and SVG.

Exit codes: 0 success, 2 solver failure, 3 configuration error.
Output directory precedence: --out, then $TFEM_OUT, then the config's
``output`` key, then ./tfem-out.
"""
import argparse
import dataclasses
import math
import os
import sys
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import plotting
from .errors import ConfigurationError, SolverError, TfemError
from .harness import problems
from .harness.studies import (MeshFamily, MortarFamily, SERIES_H_2D, SERIES_H_3D, grid_count, nominal_size,
                              random_csv_rows, random_suite, run_convergence, run_single, solve_poisson,
                              study_band_extent, sweep_C, write_csv)
from .mesh import mortar_vertex_maps, write_mesh
from .solve import SolverConfig
from .tempering import C_C, Fixed, HighOrder, PowerLaw, TheoreticalOpt, jmin

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3

TOP_KEYS = {"study", "dim", "order", "physics", "problem", "freq", "period", "h_inverse", "output",
            "seed", "label", "npts"}
MESH_KEYS = {"family", "band", "hbar", "extent", "offset", "convention", "ratio"}
POLICY_KEYS = {"kind", "C", "k", "Jmin", "w1", "w2", "Cc", "order"}
SOLVER_KEYS = {"method", "rel_tol", "max_iter", "ordering", "refine_steps"}

#: default C lattice of the sensitivity sweeps, quarter decades 1e-4 .. 1e2
C_LATTICE = tuple(10.0 ** (i / 4) for i in range(-16, 9))


@dataclasses.dataclass
class RunConfig:
    study: str = "convergence"
    dim: int = 2
    order: int = 1
    physics: str = "poisson"
    problem: str = "default"
    freq: int = 1
    period: float = 0.1
    h_inverse: tuple = ()
    output: str = None
    seed: int = 0
    label: str = None
    npts: int = 4
    mesh: dict = dataclasses.field(default_factory=dict)
    policy: dict = dataclasses.field(default_factory=dict)
    solver: dict = dataclasses.field(default_factory=dict)

    def h_list(self):
        if self.h_inverse:
            return [1.0 / n for n in self.h_inverse]
        return list(SERIES_H_2D if self.dim == 2 else SERIES_H_3D)


def _check_keys(table, allowed, where):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(extra)}")


def parse_config(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse config: {exc}") from None
    tables = {k: data.pop(k) for k in ("mesh", "policy", "solver") if k in data}
    _check_keys(data, TOP_KEYS, "top level")
    for name, allowed in (("mesh", MESH_KEYS), ("policy", POLICY_KEYS), ("solver", SOLVER_KEYS)):
        t = tables.get(name, {})
        if not isinstance(t, dict):
            raise ConfigurationError(f"[{name}] must be a table")
        for v in t.values():
            if isinstance(v, dict):
                raise ConfigurationError(f"[{name}] allows one nesting level only")
        _check_keys(t, allowed, f"[{name}]")
    if "h_inverse" in data:
        hs = data["h_inverse"]
        if not isinstance(hs, list) or not all(isinstance(n, (int, float)) and n > 0 for n in hs):
            raise ConfigurationError("h_inverse must be a list of positive numbers")
        data["h_inverse"] = tuple(hs)
    cfg = RunConfig(**data, **tables)
    if cfg.dim not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {cfg.dim}")
    if cfg.physics not in ("poisson", "elasticity", "advection"):
        raise ConfigurationError(f"unknown physics {cfg.physics!r}")
    return cfg


def load_config(path):
    if not os.path.isfile(path):
        bundled = resources.files("tfem") / "configs" / path
        if not bundled.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        return parse_config(bundled.read_text())
    with open(path) as fh:
        return parse_config(fh.read())


def make_policy(table, dim):
    t = dict(table)
    kind = t.pop("kind", "power")
    try:
        if kind == "power":
            return PowerLaw(float(t.pop("C", 1.0)), float(t.pop("k", dim + 1)))
        if kind == "fixed":
            return Fixed(float(t.pop("Jmin")))
        if kind == "optimal":
            return TheoreticalOpt(float(t.pop("w1")), float(t.pop("w2")), float(t.pop("Cc", C_C)))
        if kind == "highorder":
            return HighOrder(float(t.pop("C", 1.0)), int(t.pop("order", 1)))
        if kind == "none":
            return None
    except KeyError as exc:
        raise ConfigurationError(f"policy {kind!r} requires {exc.args[0]!r}") from None
    raise ConfigurationError(f"unknown policy kind {kind!r}")


def make_solver(table):
    try:
        return SolverConfig(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None


def make_family(cfg):
    m = dict(cfg.mesh)
    kind = m.pop("family", "band")
    if kind == "mortar":
        return MortarFamily(ratio=int(m.get("ratio", 5)))
    if kind not in ("band", "regular"):
        raise ConfigurationError(f"unknown mesh family {kind!r}")
    m.pop("ratio", None)
    band = m.pop("band", kind == "band")
    hbar = m.pop("hbar", "zero")
    return MeshFamily(dim=cfg.dim, band=bool(band), hbar_rule=hbar, **m)


def make_problem(cfg):
    if cfg.physics == "elasticity":
        return problems.make_elasticity_problem()
    if cfg.physics == "advection":
        return problems.make_advection_problem()
    if cfg.problem == "periodic":
        return problems.periodic_band_problem(cfg.dim, cfg.period)
    if cfg.problem not in ("default", "sin-cos"):
        raise ConfigurationError(f"unknown problem {cfg.problem!r}")
    return problems.poisson_2d(cfg.freq) if cfg.dim == 2 else problems.poisson_3d()


def resolve_out(flag, cfg_out=None):
    out = flag or os.environ.get("TFEM_OUT") or cfg_out or "tfem-out"
    os.makedirs(out, exist_ok=True)
    return out


def _emit(rows, out, stem, plot, timing):
    csv_path = os.path.join(out, stem + ".csv")
    write_csv(rows, csv_path, timing=timing)
    # figures are drawn from the file on disk, never from in-memory results
    plot(plotting.read_csv(csv_path), os.path.join(out, stem + ".svg"))
    print(f"wrote {csv_path}")
    return csv_path


def _print_slopes(report):
    for key, label in (("l2", "L2"), ("h1_out", "H1(outside band)"), ("jump", "jump")):
        v = report.slopes.get(key, float("nan"))
        if math.isfinite(v):
            print(f"fitted {label} slope: {v:.3f}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run_convergence(args):
    cfg = load_config(args.config)
    policy = make_policy(cfg.policy, cfg.dim)
    solver = make_solver(cfg.solver)
    family = make_family(cfg)
    problem = make_problem(cfg)
    hs = cfg.h_list()
    label = cfg.label or os.path.splitext(os.path.basename(args.config))[0]
    if args.dry_run:
        print(f"study: {cfg.study} ({label})  dim={cfg.dim} order={cfg.order} physics={cfg.physics}")
        print(f"problem: {problem.descriptor}")
        print(f"mesh family: {family}")
        print(f"policy: {policy}")
        print(f"solver: {solver}")
        for h in hs:
            n = grid_count(h, cfg.dim)
            print(f"  h = 1/{1 / h:g}  ->  n = {n}, nominal size {nominal_size(n, cfg.dim):.6g}")
        return EXIT_OK
    out = resolve_out(args.out, cfg.output)
    report = run_convergence(problem, family, policy, hs, cfg.order, solver, cfg.physics, label,
                             jobs=args.jobs)
    report.fit(cfg.npts)
    _emit(report.csv_rows(), out, label, plotting.plot_convergence, args.timing)
    _print_slopes(report)
    if report.error:
        print(f"solver failure: {report.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_sweep_c(args):
    problem = problems.poisson_2d() if args.dim == 2 else problems.poisson_3d()
    C_list = args.C or C_LATTICE
    hs = [1.0 / n for n in args.h]
    if args.dry_run:
        print(f"sweep-c dim={args.dim} h=1/{args.h} k={args.k or args.dim + 1} C={list(C_list)}")
        return EXIT_OK
    out = resolve_out(args.out)
    table = sweep_C(problem, args.dim, hs, C_list, args.k, jobs=args.jobs, study=f"sweep-c-{args.dim}d")
    _emit(table.csv_rows(), out, f"sweep_c_{args.dim}d", plotting.plot_sweep, args.timing)
    for h in hs:
        hn = nominal_size(grid_count(h, args.dim), args.dim)
        print(f"h={hn:.5g}: best C (L2) = {table.best_C(hn):.4g}, "
              f"beats regular mesh over {table.beats_reference_span(hn):.2f} decades")
    return EXIT_OK


def cmd_band_extent(args):
    problem = problems.periodic_band_problem(args.dim, args.period)
    C_list = args.C or C_LATTICE
    if args.dry_run:
        print(f"band-extent dim={args.dim} h=1/{args.h} L={args.extents} C={list(C_list)}")
        return EXIT_OK
    out = resolve_out(args.out)
    table = study_band_extent(problem, args.extents, C_list, 1.0 / args.h, args.dim, args.k, jobs=args.jobs)
    _emit(table.csv_rows(), out, f"band_extent_{args.dim}d", plotting.plot_band_extent, args.timing)
    for L in args.extents:
        print(f"L={L:g}: best C (L2) = {table.best_C(L):.4g}")
    return EXIT_OK


def _write_part(mesh, idx, u, ue, path):
    node_data = {"u_h": u[idx], "u_exact": ue[idx]}
    write_mesh(mesh, path, node_data=node_data)
    print(f"wrote {path}")


def cmd_mortar_demo(args):
    family = MortarFamily(ratio=args.ratio)
    problem = problems.poisson_2d()
    if args.dry_run:
        print(f"mortar-demo h=1/{args.h} ratio 1:{args.ratio}")
        return EXIT_OK
    out = resolve_out(args.out)
    h = 1.0 / args.h
    policy = PowerLaw(1.0, 3.0)
    tempered = run_single(problem, family, policy, h)
    rows = [dict(study="mortar-tfem", dim=2, order=1, **_row_fields(tempered))]
    left, right, hn = family.parts(h)
    mesh, _ = family.build(h)
    x, _, _ = solve_poisson(problem, mesh, jmin(policy, family.jmin_size(hn), 2), 1)
    ue = problem.exact(mesh.vertices)
    il, ir = mortar_vertex_maps(left, right, 0, 0.5)
    _write_part(left, il, x, ue, os.path.join(out, "mortar_coarse.msh"))
    _write_part(right, ir, x, ue, os.path.join(out, "mortar_fine.msh"))
    nodal = os.path.join(out, "mortar_nodal_values.txt")
    with open(nodal, "w") as fh:
        fh.write("# part vertex x y u_h u_exact\n")
        for part, idx, pm in (("coarse", il, left), ("fine", ir, right)):
            for i, g in enumerate(idx):
                vals = (pm.vertices[i, 0], pm.vertices[i, 1], x[g], ue[g])
                fh.write(f"{part} {i} " + " ".join(repr(float(v)) for v in vals) + "\n")
    print(f"wrote {nodal}")
    csv_path = os.path.join(out, "mortar_demo.csv")
    write_csv(rows, csv_path, timing=args.timing)
    plotting.plot_field(mesh, x, os.path.join(out, "mortar_demo.svg"), "stitched 1:%d pair" % args.ratio)
    print(f"wrote {csv_path}")
    print(f"L2 error {tempered.l2:.4g}, H1 error outside band {tempered.h1_out:.4g}")
    return EXIT_OK


def _row_fields(r):
    return dict(h=r.h, hbar=r.hbar, C=r.C, k=r.k, Jmin=r.Jmin, l2=r.l2, h1_out=r.h1_out, jump=r.jump,
                ndof=r.ndof, seconds=r.seconds)


def _physics_series(args, physics, problem, default_hinv):
    hs = [1.0 / n for n in (args.h or default_hinv)]
    family = MeshFamily(dim=2)
    policy = PowerLaw(1.0, 3.0)
    if args.dry_run:
        print(f"{physics}: {problem.descriptor}, h^-1 = {[round(1 / h) for h in hs]}, policy {policy}")
        return EXIT_OK
    out = resolve_out(args.out)
    report = run_convergence(problem, family, policy, hs, 1, None, physics, physics, jobs=args.jobs)
    _emit(report.csv_rows(), out, physics, plotting.plot_convergence, args.timing)
    _print_slopes(report)
    if report.error:
        print(f"solver failure: {report.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_elasticity(args):
    return _physics_series(args, "elasticity", problems.make_elasticity_problem(), (10, 20, 40, 80, 160))


def cmd_advection(args):
    return _physics_series(args, "advection", problems.make_advection_problem(), (10, 20, 40, 80, 160))


def cmd_random_suite(args):
    h = 1.0 / args.h
    if args.dry_run:
        print(f"random-suite n={args.n} seeds {args.seed}..{args.seed + args.n - 1} h=1/{args.h}")
        return EXIT_OK
    out = resolve_out(args.out)
    cases = random_suite(args.n, args.seed, h=h, jobs=args.jobs)
    _emit(random_csv_rows(cases, h), out, "random_suite", plotting.plot_random, args.timing)
    ok = sum(abs(c.rel_h1_tfem / c.rel_h1_ref - 1) <= 0.05 for c in cases)
    print(f"H1 within 5% of regular mesh: {ok}/{len(cases)}")
    print(f"worst L2 ratio: {max(c.rel_l2_tfem / c.rel_l2_ref for c in cases):.3f}")
    return EXIT_OK


def _parse_vertex(tok):
    try:
        x, y = (float(v) for v in tok.split(","))
    except ValueError:
        raise ConfigurationError(f"vertex must be 'x,y', got {tok!r}") from None
    return x, y


def cmd_analyze_element(args):
    from .degeneracy import asymptotic_eigenvalues, shape_params, spectral
    V = np.array([_parse_vertex(t) for t in args.vertices])
    if V.shape != (3, 2):
        raise ConfigurationError("exactly three vertices are required")
    shape = shape_params(V)
    spec = spectral(shape)
    a2, a3 = asymptotic_eigenvalues(shape.f, shape.s)
    print(f"{'quantity':<14}{'value':>24}")
    print(f"{'f':<14}{shape.f:>24.12g}")
    print(f"{'s':<14}{shape.s:>24.12g}")
    print(f"{'c':<14}{shape.c:>24.12g}")
    for i, (lam, v, e) in enumerate(zip(spec.lam, spec.v, spec.e), 1):
        vec = " ".join(f"{c:.6g}" for c in v)
        print(f"{f'lambda{i}':<14}{lam:>24.12g}   v = ({vec})   energy {e:.6g}")
    print(f"{'lambda2/asym':<14}{spec.lam[1] / a2:>24.12g}")
    print(f"{'lambda3/asym':<14}{spec.lam[2] / a3:>24.12g}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="tfem", description="Tempered FEM studies")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (overrides $TFEM_OUT)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--timing", action="store_true", help="record wall time in the CSV")
        sp.add_argument("--dry-run", action="store_true", help="print the plan without solving")
        return sp

    sp = common(sub.add_parser("run-convergence", help="convergence series from a config file"))
    sp.add_argument("config")
    sp.set_defaults(func=cmd_run_convergence)

    sp = common(sub.add_parser("sweep-c", help="error against C"))
    sp.add_argument("--dim", type=int, choices=(2, 3), default=2)
    sp.add_argument("--h", type=int, nargs="+", default=[80], help="inverse mesh sizes")
    sp.add_argument("--k", type=float, default=None)
    sp.add_argument("--C", type=float, nargs="+", default=None)
    sp.set_defaults(func=cmd_sweep_c)

    sp = common(sub.add_parser("band-extent", help="error against C for several band lengths"))
    sp.add_argument("--dim", type=int, choices=(2, 3), default=2)
    sp.add_argument("--h", type=int, default=80)
    sp.add_argument("--k", type=float, default=None)
    sp.add_argument("--period", type=float, default=0.1)
    sp.add_argument("--extents", type=float, nargs="+", default=[0.1, 0.2, 0.4, 0.8])
    sp.add_argument("--C", type=float, nargs="+", default=None)
    sp.set_defaults(func=cmd_band_extent)

    sp = common(sub.add_parser("mortar-demo", help="stitched coarse/fine pair"))
    sp.add_argument("--h", type=int, default=20)
    sp.add_argument("--ratio", type=int, default=5)
    sp.set_defaults(func=cmd_mortar_demo)

    for name, fn in (("elasticity", cmd_elasticity), ("advection", cmd_advection)):
        sp = common(sub.add_parser(name, help=f"{name} convergence series"))
        sp.add_argument("--h", type=int, nargs="+", default=None, help="inverse mesh sizes")
        sp.set_defaults(func=fn)

    sp = common(sub.add_parser("random-suite", help="seeded random problems"))
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--h", type=int, default=40)
    sp.set_defaults(func=cmd_random_suite)

    sp = sub.add_parser("analyze-element", help="shape and spectrum of one triangle")
    sp.add_argument("--vertices", nargs=3, required=True, metavar="X,Y")
    sp.set_defaults(func=cmd_analyze_element)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TfemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
