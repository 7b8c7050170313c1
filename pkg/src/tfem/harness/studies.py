"""Convergence, sensitivity and band-length studies plus the random suite.

Mesh size convention
--------------------
A study is parametrised by a nominal size h.  In 2D h is the element
diameter of the right-triangle grid, so the grid has n = round(sqrt(2)/h)
cells per unit length; in 3D h is the grid spacing, n = round(1/h).  The
clamp floor J_min = C h^k uses the nominal size of the mesh actually built
(sqrt(2)/n or 1/n).  Mesh.h itself stays the grid spacing 1/n.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import csv
import io
import math
import multiprocessing
import time

import numpy as np

from ..assembly import (MaterialPlaneStrain, assemble_advection_supg, assemble_elasticity,
                        assemble_poisson)
from ..errors import InvalidArgumentError, SolverError
from ..mesh import BandSpec, build_band_mesh, build_mortar_mesh, build_structured_mesh
from ..mortar import extract_gamma, jump_norm
from ..solve import solve
from ..tempering import (Fixed, PowerLaw, jmin as policy_jmin, optimal_D, policy_constant,
                         policy_exponent)
from .norms import exact_l2_norm, h1_error_outside_band, h1_seminorm_error, l2_error, w_seminorm_max
from .problems import ManufacturedProblem, poisson_2d

CSV_FIELDS = ("study", "dim", "order", "h", "hbar", "C", "k", "Jmin", "l2", "h1_out", "jump", "ndof",
              "seconds")

#: abscissae of the 2D and 3D convergence series
SERIES_H_2D = tuple(1.0 / n for n in (10, 14, 20, 28, 40, 56, 80, 113, 160, 226, 320, 452, 640))
SERIES_H_3D = tuple(1.0 / n for n in (10, 12, 15, 20, 25, 31, 40, 50, 63, 80, 100))


def grid_count(h, dim, convention="diameter"):
    """Cells per unit length for nominal size h."""
    if not h > 0:
        raise InvalidArgumentError(f"h must be positive, got {h}")
    scale = math.sqrt(2.0) if (dim == 2 and convention == "diameter") else 1.0
    return max(2, int(round(scale / h)))


def nominal_size(n, dim, convention="diameter"):
    scale = math.sqrt(2.0) if (dim == 2 and convention == "diameter") else 1.0
    return scale / n


@dataclass(frozen=True)
class MeshFamily:
    """How to build the mesh for a nominal size.

    hbar_rule: "zero", "h2" (hbar = h^2 with h the grid spacing) or a number.
    Without a band the regular mesh uses ``diagonal`` ("mirror" matches the
    triangle layout of the band meshes).
    """
    dim: int = 2
    band: bool = True
    hbar_rule: object = "zero"
    extent: float = 1.0
    offset: float = 0.5
    convention: str = "diameter"
    box: tuple = None
    diagonal: str = "mirror"

    def hbar(self, spacing):
        if not self.band:
            return None
        if self.hbar_rule == "zero":
            return 0.0
        if self.hbar_rule == "h2":
            return spacing ** 2
        return float(self.hbar_rule)

    def build(self, h):
        n = grid_count(h, self.dim, self.convention)
        hn = nominal_size(n, self.dim, self.convention)
        counts = None
        if self.box is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.box)
            counts = tuple(max(2, int(round((hi[i] - lo[i]) * n))) for i in range(self.dim))
            n = None
        if not self.band:
            return build_structured_mesh(self.dim, n, box=self.box, counts=counts,
                                         diagonal=self.diagonal), hn
        spacing = 1.0 / (n if n is not None else max(counts))
        lo = 0.0 if self.box is None else self.box[0][1]
        hi = 1.0 if self.box is None else self.box[1][1]
        spec = BandSpec(position=0.5 if self.box is None else 0.5 * (self.box[0][0] + self.box[1][0]),
                        width=self.hbar(spacing), extent=self.extent, center=0.5 * (lo + hi),
                        offset=self.offset)
        return build_band_mesh(self.dim, n, spec, box=self.box, counts=counts), hn


@dataclass(frozen=True)
class MortarFamily:
    """Coarse left half stitched to a ``ratio`` times finer right half.

    The nominal size is that of the coarse side.  J_min is evaluated at the
    fine-side size so that no ordinary fine cell falls under the clamp.
    """
    ratio: int = 5
    dim: int = 2
    band: bool = True
    convention: str = "diameter"

    def parts(self, h):
        """(left, right, nominal size) before stitching."""
        n = grid_count(h, 2, self.convention)
        n += n % 2
        hn = nominal_size(n, 2, self.convention)
        left = build_structured_mesh(2, None, box=((0.0, 0.0), (0.5, 1.0)), counts=(n // 2, n))
        m = n * self.ratio
        right = build_structured_mesh(2, None, box=((0.5, 0.0), (1.0, 1.0)), counts=(m // 2, m),
                                      diagonal="\\")
        return left, right, hn

    def build(self, h):
        left, right, hn = self.parts(h)
        return build_mortar_mesh(left, right, 0, 0.5), hn

    def jmin_size(self, hn):
        return hn / self.ratio


@dataclass
class ConvRow:
    h: float
    hbar: float
    Jmin: float
    C: float
    k: float
    l2: float
    h1_out: float
    jump: float
    ndof: int
    seconds: float
    extra: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    study: str
    dim: int
    order: int
    rows: list
    slopes: dict = field(default_factory=dict)
    error: str = None

    def fit(self, npts=4):
        self.rows.sort(key=lambda r: -r.h)
        self.slopes = {key: fit_slope([r.h for r in self.rows], [getattr(r, key) for r in self.rows], npts)
                       for key in ("l2", "h1_out", "jump")}
        return self

    def csv_rows(self):
        return [dict(study=self.study, dim=self.dim, order=self.order, h=r.h, hbar=r.hbar, C=r.C, k=r.k,
                     Jmin=r.Jmin, l2=r.l2, h1_out=r.h1_out, jump=r.jump, ndof=r.ndof, seconds=r.seconds)
                for r in self.rows]


def fit_slope(h, err, npts=4):
    """Least-squares slope of log(err) against log(h) over the last npts points."""
    h = np.asarray(h, dtype=float)[-npts:]
    e = np.asarray(err, dtype=float)[-npts:]
    ok = np.isfinite(e) & (e > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)[0])


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def write_csv(rows, path=None, timing=False):
    """Write rows in the common schema.  seconds is 0.0 unless timing."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in rows:
        vals = []
        for k in CSV_FIELDS:
            v = row.get(k, float("nan"))
            if k == "seconds" and not timing:
                v = 0.0
            vals.append(_fmt(float(v)) if isinstance(v, (float, np.floating)) else _fmt(v))
        w.writerow(vals)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

def _policy_jmin(policy, hn, dim, order):
    if policy is None:
        return 0.0
    return policy_jmin(policy, hn, dim, order)


def solve_poisson(problem, mesh, Jmin, order=1, solver=None):
    sysm = assemble_poisson(mesh, order, None, problem.source, problem.dirichlet, Jmin=Jmin)
    x, stats = solve(sysm, solver)
    return x, sysm, stats


def _measure(problem, mesh, order, x, dofmap, physics):
    l2 = l2_error(mesh, order, x, problem.exact, dofmap=dofmap)
    h1 = h1_error_outside_band(mesh, order, x, problem.grad, dofmap=dofmap)
    jump = float("nan")
    if physics == "poisson" and order == 1 and mesh.dim == 2 and mesh.hbar == 0 and len(mesh.band_nodes):
        jump = jump_norm(extract_gamma(mesh), x)
    return l2, h1, jump


def run_single(problem, family, policy, h, order=1, solver=None, physics="poisson", materials=None):
    """One (mesh, policy) solve; returns a ConvRow."""
    t0 = time.perf_counter()
    mesh, hn = family.build(h)
    hj = family.jmin_size(hn) if hasattr(family, "jmin_size") else hn
    Jmin = _policy_jmin(policy, hj, mesh.dim, order) if family.band else 0.0
    if physics == "poisson":
        x, sysm, _ = solve_poisson(problem, mesh, Jmin, order, solver)
        dm = sysm.dofmap
    elif physics == "elasticity":
        mats = materials or MaterialPlaneStrain(problem.extras.get("E", 1.0), problem.extras.get("nu", 0.3))
        tags = sorted(set(mesh.facet_tags.tolist()))
        sysm = assemble_elasticity(mesh, None, mats, {"dirichlet": {t: problem.exact for t in tags}},
                                   problem.source, Jmin=Jmin)
        x, _ = solve(sysm, solver)
        dm = sysm.dofmap
    elif physics == "advection":
        sysm = assemble_advection_supg(mesh, problem.extras["velocity"], dirichlet_fn=problem.exact,
                                       dirichlet_tags=problem.extras["inflow_tags"], source=problem.source,
                                       order=order, Jmin=Jmin)
        x, _ = solve(sysm, solver)
        dm = sysm.dofmap
    else:
        raise InvalidArgumentError(f"unknown physics {physics!r}")
    l2, h1, jump = _measure(problem, mesh, order, x, dm, physics)
    C = policy_constant(policy) if (family.band and policy is not None) else float("nan")
    k = policy_exponent(policy, mesh.dim) if (family.band and policy is not None) else float("nan")
    if isinstance(policy, Fixed):
        C = float(policy.Jmin)
    hbar = mesh.hbar if mesh.hbar is not None else float("nan")
    return ConvRow(hn, float(hbar), float(Jmin), float(C), float(k), l2, h1, jump,
                   int(len(x)), time.perf_counter() - t0)


_SHARED = None


def _call_shared(item):
    return _SHARED(item)


def parallel_map(fn, items, jobs=1):
    """Ordered map; with jobs > 1 a fork pool runs ``fn`` (closures allowed)."""
    global _SHARED
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    _SHARED = fn
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            return list(pool.map(_call_shared, items))
    finally:
        _SHARED = None


def run_convergence(problem, family, policy, h_list, order=1, solver=None, physics="poisson",
                    study="convergence", jobs=1, materials=None):
    """One row per h; slopes fitted on the last 4 points.

    A solver failure returns the rows collected so far with ``error`` set.
    """
    h_list = list(h_list)
    if any(a <= b for a, b in zip(h_list, h_list[1:])):
        raise InvalidArgumentError("h_list must be strictly descending")
    rows = []
    report = ConvergenceReport(study, family.dim, order, rows)
    tasks = [(problem, family, policy, h, order, solver, physics, materials) for h in h_list]
    try:
        if jobs > 1:
            rows.extend(parallel_map(lambda i: run_single(*tasks[i]), range(len(tasks)), jobs))
        else:
            for t in tasks:
                rows.append(run_single(*t))
    except SolverError as exc:
        report.error = str(exc)
    return report.fit()


# ---------------------------------------------------------------------------
# C sensitivity
# ---------------------------------------------------------------------------

@dataclass
class SweepTable:
    study: str
    dim: int
    rows: list  # ConvRow with C set
    reference: dict  # h -> ConvRow of the regular mesh

    def errors(self, h, key="l2"):
        sel = sorted((r for r in self.rows if abs(r.h - h) < 1e-12), key=lambda r: r.C)
        return np.array([r.C for r in sel]), np.array([getattr(r, key) for r in sel])

    def best_C(self, h, key="l2"):
        C, e = self.errors(h, key)
        return float(C[int(np.argmin(e))])

    def beats_reference_span(self, h, key="l2"):
        """Width in decades of the contiguous C-range around the optimum where
        the tempered error is below the regular-mesh error (0 if never)."""
        C, e = self.errors(h, key)
        ref = getattr(self.reference[h], key)
        i = int(np.argmin(e))
        if e[i] >= ref:
            return 0.0
        lo = hi = i
        while lo > 0 and e[lo - 1] < ref:
            lo -= 1
        while hi < len(e) - 1 and e[hi + 1] < ref:
            hi += 1
        return float(np.log10(C[hi] / C[lo]))

    def plateau_width(self, h, key="h1_out", factor=2.0):
        """Decades of C over which the error stays within factor * minimum."""
        C, e = self.errors(h, key)
        ok = e <= factor * e.min()
        return float(np.log10(C[ok].max() / C[ok].min()))

    def csv_rows(self):
        out = []
        for r in sorted(self.rows, key=lambda r: (-r.h, r.C)):
            out.append(dict(study=self.study, dim=self.dim, order=1, h=r.h, hbar=r.hbar, C=r.C, k=r.k,
                            Jmin=r.Jmin, l2=r.l2, h1_out=r.h1_out, jump=r.jump, ndof=r.ndof,
                            seconds=r.seconds))
        for h, r in sorted(self.reference.items(), key=lambda kv: -kv[0]):
            out.append(dict(study=self.study + "-reference", dim=self.dim, order=1, h=r.h, hbar=r.hbar,
                            C=float("nan"), k=float("nan"), Jmin=0.0, l2=r.l2, h1_out=r.h1_out,
                            jump=r.jump, ndof=r.ndof, seconds=r.seconds))
        return out


def sweep_C(problem, dim, h_list, C_list, k=None, family=None, solver=None, study="sweep-c", jobs=1,
            with_reference=True):
    """Errors against C for J_min = C h^k (k defaults to dim + 1)."""
    k = dim + 1 if k is None else k
    family = family or MeshFamily(dim=dim)
    tasks = [(problem, family, PowerLaw(C, k), h, 1, solver) for h in h_list for C in C_list]
    rows = parallel_map(lambda i: run_single(*tasks[i]), range(len(tasks)), jobs)
    ref = {}
    if with_reference:
        reg = replace(family, band=False)
        for h in h_list:
            r = run_single(problem, reg, None, h, 1, solver)
            ref[_nominal_of(family, h)] = r
    return SweepTable(study, dim, rows, ref)


def _nominal_of(family, h):
    return nominal_size(grid_count(h, family.dim, family.convention), family.dim, family.convention)


def study_band_extent(problem, extents, C_list, h, dim=2, k=None, solver=None, jobs=1):
    """Errors against (C, L) on bands of extent L (2D length, or 3D strip area)."""
    k = dim + 1 if k is None else k
    tables = {}
    for L in extents:
        fam = MeshFamily(dim=dim, extent=L)
        tables[L] = sweep_C(problem, dim, [h], C_list, k, fam, solver, study=f"band-extent-L{L}",
                            jobs=jobs, with_reference=False)
    return BandExtentTable(dim, _nominal_of(MeshFamily(dim=dim), h), tables)


@dataclass
class BandExtentTable:
    dim: int
    h: float
    tables: dict

    def best_C(self, L, key="l2"):
        return self.tables[L].best_C(self.h, key)

    def error(self, L, C, key="l2"):
        Cs, e = self.tables[L].errors(self.h, key)
        return float(e[int(np.argmin(np.abs(np.log(Cs / C))))])

    def csv_rows(self):
        out = []
        for L, t in sorted(self.tables.items()):
            for row in t.csv_rows():
                row["study"] = f"band-extent L={L!r}"
                out.append(row)
        return out


# ---------------------------------------------------------------------------
# random regression suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomProblemSpec:
    seed: int
    width: float
    height: float
    band_fraction: float
    linear: tuple
    quadratic: tuple
    sine: tuple  # (amplitude, kx, ky, phase)
    cosine: tuple
    gaussian: tuple  # (amplitude, cx, cy, sigma)


def random_spec(seed, extent_range=(0.5, 2.0), band_range=(0.2, 1.0), freq_range=(0.25, 1.5)):
    rng = np.random.default_rng(seed)
    W, H = rng.uniform(*extent_range, size=2)
    frac = rng.uniform(*band_range)
    lin = tuple(rng.uniform(-1, 1, size=3))
    quad = tuple(rng.uniform(-1, 1, size=3))

    def wave():
        amp = rng.uniform(-1, 1)
        kx, ky = 2 * np.pi * rng.uniform(*freq_range, size=2) * rng.choice([-1, 1], size=2)
        return (amp, kx, ky, rng.uniform(0, 2 * np.pi))
    sine, cosine = wave(), wave()
    gauss = (rng.uniform(-1, 1), rng.uniform(0, W), rng.uniform(0, H),
             rng.uniform(0.1, 0.3) * min(W, H))
    return RandomProblemSpec(int(seed), float(W), float(H), float(frac), lin, quad, sine, cosine, gauss)


def random_problem(spec):
    """Closed-form u with hand-coded gradient and Laplacian for each term."""
    a0, ax, ay = spec.linear
    qxx, qxy, qyy = spec.quadratic
    (sa, skx, sky, sp_), (ca, ckx, cky, cp) = spec.sine, spec.cosine
    ga, gx, gy, gs = spec.gaussian

    def parts(X):
        x, y = X[:, 0], X[:, 1]
        st = skx * x + sky * y + sp_
        ct = ckx * x + cky * y + cp
        r2 = (x - gx) ** 2 + (y - gy) ** 2
        g = ga * np.exp(-r2 / (2 * gs * gs))
        return x, y, st, ct, r2, g

    def u(X):
        x, y, st, ct, r2, g = parts(X)
        return (a0 + ax * x + ay * y + qxx * x * x + qxy * x * y + qyy * y * y
                + sa * np.sin(st) + ca * np.cos(ct) + g)

    def grad(X):
        x, y, st, ct, r2, g = parts(X)
        gxv = ax + 2 * qxx * x + qxy * y + sa * skx * np.cos(st) - ca * ckx * np.sin(ct) - g * (x - gx) / gs ** 2
        gyv = ay + qxy * x + 2 * qyy * y + sa * sky * np.cos(st) - ca * cky * np.sin(ct) - g * (y - gy) / gs ** 2
        return np.column_stack([gxv, gyv])

    def source(X):
        x, y, st, ct, r2, g = parts(X)
        lap = (2 * qxx + 2 * qyy - sa * (skx ** 2 + sky ** 2) * np.sin(st)
               - ca * (ckx ** 2 + cky ** 2) * np.cos(ct) + g * (r2 / gs ** 4 - 2 / gs ** 2))
        return -lap

    return ManufacturedProblem(2, u, grad, source, f"random seed={spec.seed}", extras={"spec": spec})


@dataclass
class RandomCase:
    seed: int
    rel_l2_tfem: float
    rel_h1_tfem: float
    rel_l2_ref: float
    rel_h1_ref: float
    ndof: int


def _random_case(seed, h, C, k, solver):
    spec = random_spec(seed)
    prob = random_problem(spec)
    box = ((0.0, 0.0), (spec.width, spec.height))
    n = grid_count(h, 2)
    hn = nominal_size(n, 2)
    counts = (max(2, int(round(spec.width * n))), max(2, int(round(spec.height * n))))
    band = BandSpec(position=0.5 * spec.width, width=0.0, extent=spec.band_fraction * spec.height,
                    center=0.5 * spec.height)
    mb = build_band_mesh(2, None, band, box=box, counts=counts)
    mr = build_structured_mesh(2, None, box=box, counts=counts, diagonal="mirror")
    out = []
    for mesh, J in ((mb, C * hn ** k), (mr, 0.0)):
        x, sysm, _ = solve_poisson(prob, mesh, J, 1, solver)
        l2 = l2_error(mesh, 1, x, prob.exact, dofmap=sysm.dofmap)
        h1 = h1_error_outside_band(mesh, 1, x, prob.grad, dofmap=sysm.dofmap)
        nl2 = exact_l2_norm(mesh, prob.exact, mesh.interior_cells)
        nh1 = h1_seminorm_error(mesh, 1, np.zeros(sysm.dofmap.ndof), prob.grad, mesh.interior_cells,
                                sysm.dofmap)
        out.append((l2 / nl2, h1 / nh1, len(x)))
    return RandomCase(int(seed), out[0][0], out[0][1], out[1][0], out[1][1], out[0][2])


def random_suite(n_tests=100, seed0=0, h=1.0 / 40, C=1.0, k=3.0, solver=None, jobs=1):
    seeds = [seed0 + i for i in range(n_tests)]
    return parallel_map(lambda s: _random_case(s, h, C, k, solver), seeds, jobs)


def random_csv_rows(cases, h=1.0 / 40, C=1.0, k=3.0):
    hn = nominal_size(grid_count(h, 2), 2)
    rows = []
    for c in cases:
        for kind, l2, h1 in (("tfem", c.rel_l2_tfem, c.rel_h1_tfem), ("reference", c.rel_l2_ref, c.rel_h1_ref)):
            rows.append(dict(study=f"random-{kind}-seed{c.seed}", dim=2, order=1, h=hn, hbar=0.0,
                             C=C if kind == "tfem" else float("nan"), k=k if kind == "tfem" else float("nan"),
                             Jmin=C * hn ** k if kind == "tfem" else 0.0, l2=l2, h1_out=h1,
                             jump=float("nan"), ndof=c.ndof, seconds=0.0))
    return rows


# ---------------------------------------------------------------------------
# optimality of the tempering weight on a thin band
# ---------------------------------------------------------------------------

def composite_error(problem, mesh, D, solver=None):
    """|e|^2_{H1(outside)} + D |e|^2_{H1(band)} with J_min set so that J/J_min = D."""
    caps = mesh.band_cells
    Jcap = float(np.abs(mesh.determinants()[caps]).max())
    Jmin = Jcap / D if D < 1 else 0.0
    x, sysm, _ = solve_poisson(problem, mesh, Jmin, 1, solver)
    out = h1_error_outside_band(mesh, 1, x, problem.grad, dofmap=sysm.dofmap)
    band = h1_seminorm_error(mesh, 1, x, problem.grad, caps, sysm.dofmap)
    return out ** 2 + D * band ** 2


def optimality_check(problem=None, n=20, hbar_factor=0.05, factors=(0.1, 1.0, 10.0), solver=None):
    """Composite error at optimal_D and at scaled values of it.

    The band has width hbar = hbar_factor * h^2 (h grid spacing);
    w1, w2 are sampled maxima of |grad u| and |hess u| on the band.
    """
    problem = problem or poisson_2d()
    h = 1.0 / n
    hbar = hbar_factor * h * h
    mesh = build_band_mesh(2, n, BandSpec(width=hbar))
    caps = mesh.band_cells
    w1 = w_seminorm_max(lambda X: np.linalg.norm(problem.grad(X), axis=1), mesh, caps)
    w2 = w_seminorm_max(lambda X: np.linalg.norm(problem.hessian(X), ord=2, axis=(1, 2)), mesh, caps)
    D0 = optimal_D(hbar, h, w1, w2)
    return {"D_opt": D0, "w1": w1, "w2": w2,
            "errors": {f: composite_error(problem, mesh, min(D0 * f, 1.0), solver) for f in factors}}
