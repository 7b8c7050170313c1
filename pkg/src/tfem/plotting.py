"""SVG figures rendered from study CSV rows (pure post-processing)."""
import csv
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "tfem"
plt.rcParams["svg.fonttype"] = "none"

LABELS = {"l2": "L2 error", "h1_out": "H1 error outside band", "jump": "jump L2(Gamma)"}


def read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out = {}
            for k, v in r.items():
                if k == "study":
                    out[k] = v
                else:
                    try:
                        out[k] = float(v)
                    except ValueError:
                        out[k] = v
            rows.append(out)
    return rows


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _groups(rows, key="study"):
    g = OrderedDict()
    for r in rows:
        g.setdefault(r[key], []).append(r)
    return g


def _finite(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = np.isfinite(xs) & np.isfinite(ys) & (ys > 0) & (xs > 0)
    return xs[ok], ys[ok]


def plot_convergence(rows, path, keys=("l2", "h1_out"), guides=(2.0, 1.0)):
    """Log-log error against h, one panel per error column, with slope guides."""
    fig, axes = plt.subplots(1, len(keys), figsize=(5 * len(keys), 4))
    axes = np.atleast_1d(axes)
    for ax, key, slope in zip(axes, keys, guides):
        anchor = None
        for name, grp in _groups(rows).items():
            x, y = _finite([r["h"] for r in grp], [r[key] for r in grp])
            if len(x) == 0:
                continue
            ax.loglog(x, y, "o-", label=name, markersize=4)
            if anchor is None:
                anchor = (x, y)
        if anchor is not None and slope:
            x, y = anchor
            xs = np.array([x.min(), x.max()])
            ax.loglog(xs, 0.5 * y.min() * (xs / x.min()) ** slope, "k--", lw=1, label=f"slope {slope:g}")
        ax.set_xlabel("h")
        ax.set_ylabel(LABELS.get(key, key))
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_sweep(rows, path, keys=("l2", "h1_out"), group_key="h"):
    """Error against C per mesh size; regular-mesh errors as dashed lines."""
    fig, axes = plt.subplots(1, len(keys), figsize=(5 * len(keys), 4))
    axes = np.atleast_1d(axes)
    tempered = [r for r in rows if not str(r["study"]).endswith("-reference")]
    refs = [r for r in rows if str(r["study"]).endswith("-reference")]
    for ax, key in zip(axes, keys):
        for gval, grp in _groups(tempered, group_key).items():
            x, y = _finite([r["C"] for r in grp], [r[key] for r in grp])
            line, = ax.loglog(x, y, "o-", markersize=3, label=f"{group_key}={gval:.4g}")
            for r in refs:
                if abs(r["h"] - grp[0]["h"]) < 1e-12 and r[key] > 0:
                    ax.axhline(r[key], ls="--", color=line.get_color(), lw=1)
        ax.set_xlabel("C")
        ax.set_ylabel(LABELS.get(key, key))
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_band_extent(rows, path, keys=("l2", "h1_out")):
    fig, axes = plt.subplots(1, len(keys), figsize=(5 * len(keys), 4))
    axes = np.atleast_1d(axes)
    for ax, key in zip(axes, keys):
        for name, grp in _groups(rows).items():
            x, y = _finite([r["C"] for r in grp], [r[key] for r in grp])
            ax.loglog(x, y, "o-", markersize=3, label=name)
        ax.set_xlabel("C")
        ax.set_ylabel(LABELS.get(key, key))
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_random(rows, path):
    """Relative errors per test, sorted by the regular-mesh value."""
    tf = {r["study"].split("seed")[-1]: r for r in rows if r["study"].startswith("random-tfem")}
    rf = {r["study"].split("seed")[-1]: r for r in rows if r["study"].startswith("random-reference")}
    seeds = sorted(rf, key=lambda s: rf[s]["l2"])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, key in zip(axes, ("l2", "h1_out")):
        order = sorted(seeds, key=lambda s: rf[s][key])
        idx = np.arange(len(order))
        ax.semilogy(idx, [rf[s][key] for s in order], "o", markersize=3, label="reference mesh")
        ax.semilogy(idx, [tf[s][key] for s in order], "x", markersize=3, label="TFEM")
        ax.set_xlabel("test")
        ax.set_ylabel("relative " + LABELS[key])
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_field(mesh, values, path, title=None):
    """Flat-shaded nodal field on the non-degenerate cells of a 2D mesh."""
    import matplotlib.tri as mtri
    keep = np.abs(mesh.determinants()) > 0
    tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.cells[keep])
    fig, ax = plt.subplots(figsize=(5, 4.5))
    tc = ax.tripcolor(tri, np.asarray(values, float), shading="gouraud", rasterized=True)
    if len(tri.triangles) <= 5000:
        ax.triplot(tri, lw=0.2, color="k")
    fig.colorbar(tc, ax=ax)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
