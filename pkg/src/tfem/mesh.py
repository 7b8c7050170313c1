"""Simplicial meshes with embedded bands of caps and zero-measure bands.

Construction of the band mesh (normal along x, the default orientation)::

    left block  | gap |  right block
    regular     |     |  rows inside the band shifted by s*h (s = 1/2)

The left block is a regular grid ending at the grid line nearest the band
position.  The right block starts ``hbar`` further; its rows strictly inside
the band interval are offset so that the two interface chains interleave.
The gap between the chains is tiled by zipping the two sorted chains, which
gives alternating caps of base h and height hbar.  With ``hbar = 0`` the
right chain coincides geometrically with the left one but keeps its own
vertex indices.  Chain endpoints (and the interface outside the band) are
shared vertices.

3D meshes are extrusions of the 2D ones along z; every prism is split into
three tetrahedra using the global vertex order, which keeps the mesh
conforming and turns the 2D caps into a slab of flat tetrahedra.
"""
from dataclasses import dataclass, field
import json

import numpy as np

from .errors import InvalidArgumentError, MeshMismatchError, MshParseError
from .femcore import cell_jacobians, determinant

INTERIOR = 1
BAND = 2
BOUNDARY_TAG0 = 10
GEOM_TOL = 1e-12


@dataclass(frozen=True)
class Vertex:
    id: int
    coords: tuple


@dataclass(frozen=True)
class Cell:
    vertex_ids: tuple
    tag: int


@dataclass(frozen=True)
class BandSpec:
    """Band of caps.  ``orientation`` is the axis normal to the band.

    ``center`` (middle of the band along its length) and ``offset`` (shift of
    the opposite chain as a fraction of h) extend the basic description.
    """
    position: float = 0.5
    width: float = 0.0
    extent: float = 1.0
    orientation: int = 0
    center: float = 0.5
    offset: float = 0.5


@dataclass
class Mesh:
    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    cell_tags: np.ndarray
    boundary_facets: np.ndarray
    facet_tags: np.ndarray
    h: float
    hbar: float = None
    band_nodes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    cell_regions: np.ndarray = None
    band_axis: int = None
    chains: tuple = None
    lo: np.ndarray = None
    hi: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        self.cell_tags = np.asarray(self.cell_tags, dtype=np.int64)
        self.boundary_facets = np.asarray(self.boundary_facets, dtype=np.int64).reshape(-1, self.dim)
        self.facet_tags = np.asarray(self.facet_tags, dtype=np.int64)
        self.band_nodes = np.asarray(self.band_nodes, dtype=np.int64).reshape(-1, 3)
        if self.cell_regions is None:
            self.cell_regions = np.zeros(len(self.cells), dtype=np.int64)
        self.cell_regions = np.asarray(self.cell_regions, dtype=np.int64)
        if self.lo is None:
            self.lo = self.vertices.min(axis=0)
        if self.hi is None:
            self.hi = self.vertices.max(axis=0)
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.chains is not None:
            self.chains = tuple(np.asarray(c, dtype=np.int64) for c in self.chains)
        for arr in (self.vertices, self.cells, self.cell_tags, self.boundary_facets,
                    self.facet_tags, self.band_nodes, self.cell_regions, self.lo, self.hi):
            arr.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    def vertex(self, i):
        return Vertex(int(i), tuple(self.vertices[i]))

    def cell(self, i):
        return Cell(tuple(int(v) for v in self.cells[i]), int(self.cell_tags[i]))

    def determinants(self):
        return determinant(cell_jacobians(self.vertices, self.cells))

    def measure(self):
        fact = 2.0 if self.dim == 2 else 6.0
        return float(np.abs(self.determinants()).sum() / fact)

    @property
    def band_cells(self):
        return np.flatnonzero(self.cell_tags == BAND)

    @property
    def interior_cells(self):
        return np.flatnonzero(self.cell_tags == INTERIOR)

    def facets_with_tags(self, tags):
        sel = np.isin(self.facet_tags, list(tags))
        return self.boundary_facets[sel]

    def longest_edges(self, cells=None):
        conn = self.cells if cells is None else self.cells[cells]
        X = self.vertices[conn]
        k = conn.shape[1]
        best = np.zeros(len(conn))
        for a in range(k):
            for b in range(a + 1, k):
                best = np.maximum(best, np.linalg.norm(X[:, a] - X[:, b], axis=1))
        return best


def cell_mapping_determinant(mesh, cell):
    """Signed determinant of the reference-to-physical map (2*area, 6*volume)."""
    F = cell_jacobians(mesh.vertices, mesh.cells[[cell]])
    return float(determinant(F)[0])


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _grid_triangles(ids, diagonal="/"):
    """Two triangles per quad of a node-id grid indexed [i (x), j (y)]."""
    v00 = ids[:-1, :-1].ravel()
    v10 = ids[1:, :-1].ravel()
    v01 = ids[:-1, 1:].ravel()
    v11 = ids[1:, 1:].ravel()
    if diagonal == "/":
        t1 = np.column_stack([v00, v10, v11])
        t2 = np.column_stack([v00, v11, v01])
    elif diagonal == "\\":
        t1 = np.column_stack([v00, v10, v01])
        t2 = np.column_stack([v10, v11, v01])
    else:
        raise InvalidArgumentError(f"unknown diagonal {diagonal!r}")
    return np.vstack([t1, t2])


_MIRROR = {"/": "\\", "\\": "/"}


def _orient(cells, ref_coords):
    """Swap two vertices where the reference geometry is negatively oriented."""
    cells = cells.copy()
    J = determinant(cell_jacobians(ref_coords, cells))
    neg = J < 0
    cells[neg, 1], cells[neg, 2] = cells[neg, 2].copy(), cells[neg, 1].copy()
    return cells


def _boundary_facets(vertices, cells, lo, hi):
    dim = vertices.shape[1]
    k = cells.shape[1]
    local = [tuple(j for j in range(k) if j != i) for i in range(k)]
    facets = np.vstack([cells[:, list(f)] for f in local])
    key = np.sort(facets, axis=1)
    _, idx, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    bnd = facets[np.sort(idx[counts == 1])]
    tags = np.full(len(bnd), -1, dtype=np.int64)
    X = vertices[bnd]
    for ax in range(dim):
        for side, val in ((0, lo[ax]), (1, hi[ax])):
            on = np.all(np.abs(X[:, :, ax] - val) <= GEOM_TOL, axis=1)
            tags[on & (tags < 0)] = BOUNDARY_TAG0 + 2 * ax + side
    if (tags < 0).any():
        raise MeshMismatchError("open facet found away from the domain boundary")
    return bnd, tags


def _zip_chains(a, b, ta, tb):
    """Tile the gap between two sorted chains sharing their end vertices.

    Returns caps (apex first is NOT guaranteed) and band node rows
    (apex, base0, base1).
    """
    caps, nodes = [], []
    i = j = 0
    while i < len(a) - 1 or j < len(b) - 1:
        adv_a = j == len(b) - 1 or (i < len(a) - 1 and ta[i + 1] <= tb[j + 1])
        if adv_a:
            tri, row = (a[i], b[j], a[i + 1]), (b[j], a[i], a[i + 1])
            i += 1
        else:
            tri, row = (a[i], b[j], b[j + 1]), (a[i], b[j], b[j + 1])
            j += 1
        if len(set(tri)) == 3:
            caps.append(tri)
            nodes.append(row)
    return np.array(caps, dtype=np.int64).reshape(-1, 3), np.array(nodes, dtype=np.int64).reshape(-1, 3)


def _extrude(vertices2, tris, nz, z0=0.0, z1=1.0):
    """Extrude a triangle mesh into tetrahedra, 3 per prism."""
    nv = len(vertices2)
    zs = np.linspace(z0, z1, nz + 1)
    verts = np.column_stack([np.tile(vertices2, (nz + 1, 1)), np.repeat(zs, nv)])
    s = np.sort(tris, axis=1)
    a, b, c = s[:, 0], s[:, 1], s[:, 2]
    tets = []
    for layer in range(nz):
        o0, o1 = layer * nv, (layer + 1) * nv
        tets.append(np.column_stack([a + o0, b + o0, c + o0, c + o1]))
        tets.append(np.column_stack([a + o0, b + o0, b + o1, c + o1]))
        tets.append(np.column_stack([a + o0, a + o1, b + o1, c + o1]))
    # order: layer-major, then the three pieces of each prism contiguous per tri
    ntri = len(tris)
    out = np.stack(tets).reshape(nz, 3, ntri, 4).transpose(0, 2, 1, 3).reshape(-1, 4)
    return verts, out


def _counts_box(dim, n, box, counts):
    if box is None:
        box = (np.zeros(dim), np.ones(dim))
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if counts is None:
        counts = [n] * dim
    counts = [int(c) for c in counts]
    if len(lo) != dim or len(counts) != dim:
        raise InvalidArgumentError("box/counts must match dim")
    if min(counts) < 2 and n is not None and n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    if min(counts) < 1:
        raise InvalidArgumentError("counts must be positive")
    return lo, hi, counts


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_structured_mesh(dim, n, box=None, counts=None, diagonal="/"):
    """Regular simplicial mesh of the unit square/cube (or a box).

    2D: n x n squares cut into 2 triangles; 3D: n^3 cubes cut into 6 tets.
    diagonal "mirror" uses "/" left of the middle column and "\\" right of
    it, the layout of the band meshes without the band.
    """
    if dim not in (2, 3):
        raise InvalidArgumentError(f"dim must be 2 or 3, got {dim}")
    if n is not None and n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    lo, hi, counts = _counts_box(dim, n, box, counts)
    nx, ny = counts[0], counts[1]
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    ids = np.arange(len(verts)).reshape(nx + 1, ny + 1)
    if diagonal == "mirror":
        m = int(round(nx / 2))
        tris = np.vstack([_grid_triangles(ids[: m + 1], "/"), _grid_triangles(ids[m:], "\\")])
    else:
        tris = _grid_triangles(ids, diagonal)
    hs = (hi - lo) / np.array(counts)
    if dim == 3:
        verts, cells = _extrude(verts, tris, counts[2], lo[2], hi[2])
        cells = _orient(cells, verts)
    else:
        cells = tris
    bnd, tags = _boundary_facets(verts, cells, lo, hi)
    return Mesh(dim=dim, vertices=verts, cells=cells, cell_tags=np.full(len(cells), INTERIOR),
                boundary_facets=bnd, facet_tags=tags, h=float(hs.max()), hbar=None, lo=lo, hi=hi)


def _band_2d(lo, hi, counts, band, diagonal):
    """Canonical 2D band mesh with the band normal along x."""
    nx, ny = counts
    hx = (hi[0] - lo[0]) / nx
    hy = (hi[1] - lo[1]) / ny
    h = max(hx, hy)
    hbar = float(band.width)
    s = float(band.offset)
    if hbar < 0 or hbar >= min(hx, hy):
        raise InvalidArgumentError(f"band width must satisfy 0 <= width < h, got {hbar}")
    if not 0 < s < 1:
        raise InvalidArgumentError("band offset must lie in (0, 1)")
    length = hi[1] - lo[1]
    if band.extent <= 0 or band.extent > length + GEOM_TOL:
        raise InvalidArgumentError(f"band extent {band.extent} outside (0, {length}]")
    il = int(round((band.position - lo[0]) / hx))
    if il < 1 or il > nx - 1:
        raise InvalidArgumentError("band position must lie strictly inside the domain")
    nl = max(1, int(round(band.extent / hy)))
    nl = min(nl, ny)
    j0 = int(round((band.center - lo[1]) / hy - nl / 2))
    j0 = min(max(j0, 0), ny - nl)
    j1 = j0 + nl
    xl = lo[0] + il * hx
    yreg = lo[1] + hy * np.arange(ny + 1)
    yreg[-1] = hi[1]

    # left block
    xs_left = lo[0] + hx * np.arange(il + 1)
    XL, YL = np.meshgrid(xs_left, yreg, indexing="ij")
    verts = [np.column_stack([XL.ravel(), YL.ravel()])]
    left_ids = np.arange((il + 1) * (ny + 1)).reshape(il + 1, ny + 1)
    nv = left_ids.size

    # right block rows: regular outside the band, shifted inside
    y_band = yreg[j0] + hy * (np.arange(nl) + s)
    yr = np.concatenate([yreg[: j0 + 1], y_band, yreg[j1:]])
    inside = np.zeros(len(yr), dtype=bool)
    inside[j0 + 1: j0 + 1 + nl] = True
    ncol = nx - il
    xs_right = xl + hx * np.arange(ncol + 1)
    xs_right[-1] = hi[0]
    right_ids = np.empty((ncol + 1, len(yr)), dtype=np.int64)
    # first column: shared with the left block outside the band
    reg_row = np.concatenate([np.arange(j0 + 1), np.full(nl, -1), np.arange(j1, ny + 1)])
    col0 = []
    for r in range(len(yr)):
        if inside[r]:
            right_ids[0, r] = nv
            col0.append((xl + hbar, yr[r]))
            nv += 1
        else:
            right_ids[0, r] = left_ids[il, reg_row[r]]
    if col0:
        verts.append(np.array(col0))
    XR, YR = np.meshgrid(xs_right[1:], yr, indexing="ij")
    verts.append(np.column_stack([XR.ravel(), YR.ravel()]))
    right_ids[1:] = nv + np.arange(ncol * len(yr)).reshape(ncol, len(yr))
    verts = np.vstack(verts)

    # right block mirrors the left one about the band line
    tl = _grid_triangles(left_ids, diagonal)
    tr = _grid_triangles(right_ids, _MIRROR[diagonal])
    chain_a = left_ids[il, j0: j1 + 1]
    chain_b = right_ids[0, j0: j0 + nl + 2]
    caps, nodes = _zip_chains(chain_a, chain_b, verts[chain_a, 1], verts[chain_b, 1])
    cells = np.vstack([tl, tr, caps])
    tags = np.concatenate([np.full(len(tl) + len(tr), INTERIOR), np.full(len(caps), BAND)])
    regions = np.concatenate([np.zeros(len(tl)), np.ones(len(tr)), np.full(len(caps), 2)])
    ref = verts.copy()
    ref[chain_b[1:-1], 0] = xl + 0.25 * hx
    return verts, ref, cells, tags, regions, nodes, (chain_a, chain_b), h, xl


def build_band_mesh(dim, n, band=None, box=None, counts=None, diagonal="/"):
    """Unit square/cube with a band of caps (or a flat slab) at band.position."""
    band = band or BandSpec()
    if dim not in (2, 3):
        raise InvalidArgumentError(f"dim must be 2 or 3, got {dim}")
    if n is not None and n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    lo, hi, counts = _counts_box(dim, n, box, counts)
    ax = int(band.orientation)
    if not 0 <= ax < 2:
        raise InvalidArgumentError("band orientation must be axis 0 or 1")
    # work in a frame where the band normal is the first axis
    perm = [ax, 1 - ax] + ([2] if dim == 3 else [])
    lo_c, hi_c = lo[perm], hi[perm]
    cnt_c = [counts[p] for p in perm]
    verts2, ref2, tris, tags, regions, nodes, chains, h2, _ = _band_2d(
        lo_c[:2], hi_c[:2], cnt_c[:2], band, diagonal)
    if dim == 3:
        nv2 = len(verts2)
        verts, cells = _extrude(verts2, tris, cnt_c[2], lo_c[2], hi_c[2])
        ref, _ = _extrude(ref2, tris, cnt_c[2], lo_c[2], hi_c[2])
        tags = np.repeat(tags, 3)
        tags = np.tile(tags, cnt_c[2])
        regions = np.tile(np.repeat(regions, 3), cnt_c[2])
        h = max(h2, (hi_c[2] - lo_c[2]) / cnt_c[2])
        # zero-measure bookkeeping only for 2D
        nodes = np.zeros((0, 3), dtype=np.int64)
        chains = tuple(np.concatenate([c + k * nv2 for k in range(cnt_c[2] + 1)]) for c in chains)
    else:
        verts, ref, cells, h = verts2, ref2, tris, h2
    inv = np.argsort(perm)
    verts = verts[:, inv]
    ref = ref[:, inv]
    cells = _orient(cells, ref)
    bnd, ftags = _boundary_facets(verts, cells, lo, hi)
    return Mesh(dim=dim, vertices=verts, cells=cells, cell_tags=tags, boundary_facets=bnd,
                facet_tags=ftags, h=float(h), hbar=float(band.width),
                band_nodes=nodes if band.width == 0 else np.zeros((0, 3), dtype=np.int64),
                cell_regions=regions, band_axis=ax, chains=chains, lo=lo, hi=hi)


def _right_remap(n_left, n_right, sl, sr):
    # the two interface endpoints are shared, everything else is appended
    remap = np.arange(n_right) + n_left
    remap[sr[0]] = sl[0]
    remap[sr[-1]] = sl[-1]
    keep = np.ones(n_right, dtype=bool)
    keep[[sr[0], sr[-1]]] = False
    new_idx = np.cumsum(keep) - 1 + n_left
    remap[keep] = new_idx[keep]
    return remap, keep


def mortar_vertex_maps(left, right, interface_axis=0, interface_pos=0.5):
    """Indices of the left and right part vertices in the stitched mesh."""
    ax, tg = int(interface_axis), 1 - int(interface_axis)
    sel_l = np.flatnonzero(np.abs(left.vertices[:, ax] - interface_pos) <= GEOM_TOL)
    sel_r = np.flatnonzero(np.abs(right.vertices[:, ax] - interface_pos) <= GEOM_TOL)
    if len(sel_l) < 2 or len(sel_r) < 2:
        raise MeshMismatchError("no shared interface at the requested position")
    sl = sel_l[np.argsort(left.vertices[sel_l, tg], kind="stable")]
    sr = sel_r[np.argsort(right.vertices[sel_r, tg], kind="stable")]
    return np.arange(len(left.vertices)), _right_remap(len(left.vertices), len(right.vertices), sl, sr)[0]


def build_mortar_mesh(left, right, interface_axis=0, interface_pos=0.5):
    """Stitch two 2D meshes sharing an interface line with zero-area caps."""
    if left.dim != 2 or right.dim != 2:
        raise InvalidArgumentError("mortar stitching is available in 2D only")
    ax = int(interface_axis)
    tg = 1 - ax
    sel_l = np.flatnonzero(np.abs(left.vertices[:, ax] - interface_pos) <= GEOM_TOL)
    sel_r = np.flatnonzero(np.abs(right.vertices[:, ax] - interface_pos) <= GEOM_TOL)
    if len(sel_l) < 2 or len(sel_r) < 2:
        raise MeshMismatchError("no shared interface at the requested position")
    sl = sel_l[np.argsort(left.vertices[sel_l, tg], kind="stable")]
    sr = sel_r[np.argsort(right.vertices[sel_r, tg], kind="stable")]
    tl, trr = left.vertices[sl, tg], right.vertices[sr, tg]
    if abs(tl[0] - trr[0]) > GEOM_TOL or abs(tl[-1] - trr[-1]) > GEOM_TOL:
        raise MeshMismatchError("interfaces are geometrically disjoint")
    remap, keep = _right_remap(len(left.vertices), len(right.vertices), sl, sr)
    verts = np.vstack([left.vertices, right.vertices[keep]])
    rcells = remap[right.cells]
    chain_a = sl
    chain_b = remap[sr]
    caps, nodes = _zip_chains(chain_a, chain_b, verts[chain_a, tg], verts[chain_b, tg])
    cells = np.vstack([left.cells, rcells, caps])
    tags = np.concatenate([np.full(len(left.cells), INTERIOR), np.full(len(rcells), INTERIOR),
                           np.full(len(caps), BAND)])
    regions = np.concatenate([np.zeros(len(left.cells)), np.ones(len(rcells)), np.full(len(caps), 2)])
    ref = verts.copy()
    # the right side lies on the + side of the interface
    side = np.sign(right.vertices[:, ax].mean() - interface_pos) or 1.0
    gap = 0.25 * min(left.h, right.h)
    ref[chain_b[1:-1], ax] += side * gap
    ncap = len(caps)
    if ncap:
        cells[-ncap:] = _orient(caps, ref)
    lo = np.minimum(left.lo, right.lo)
    hi = np.maximum(left.hi, right.hi)
    bnd, ftags = _boundary_facets(verts, cells, lo, hi)
    if side < 0:
        chains = (chain_b, chain_a)
    else:
        chains = (chain_a, chain_b)
    return Mesh(dim=2, vertices=verts, cells=cells, cell_tags=tags, boundary_facets=bnd,
                facet_tags=ftags, h=float(max(left.h, right.h)), hbar=0.0, band_nodes=nodes,
                cell_regions=regions, band_axis=ax, chains=chains, lo=lo, hi=hi)


def cap_flatness(mesh):
    """Flatness (altitude over longest edge) of every BAND cell in 2D."""
    X = mesh.vertices[mesh.cells[mesh.band_cells]]
    J = np.abs(determinant(np.swapaxes(X[:, 1:] - X[:, :1], 1, 2)))
    edges = np.stack([np.linalg.norm(X[:, i] - X[:, (i + 1) % 3], axis=1) for i in range(3)], axis=1)
    longest = edges.max(axis=1)
    return J / longest ** 2


# ---------------------------------------------------------------------------
# MSH v2.2 ASCII
# ---------------------------------------------------------------------------

_TYPE_OF = {(2, 2): 1, (2, 3): 2, (3, 3): 2, (3, 4): 4}
_NODES_OF = {1: 2, 2: 3, 4: 4, 15: 1}


def write_mesh(mesh, path, node_data=None):
    """Write MSH 2.2 ASCII.  Elementary tag of a cell = region + 1.

    ``node_data`` maps a field name to one scalar per vertex; each becomes a
    $NodeData block.
    """
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    for i, x in enumerate(mesh.vertices):
        c = list(x) + [0.0] * (3 - mesh.dim)
        lines.append(f"{i + 1} " + " ".join(f"{v:.17g}" for v in c))
    lines += ["$EndNodes", "$Elements", str(len(mesh.boundary_facets) + mesh.n_cells)]
    eid = 1
    ftype = 1 if mesh.dim == 2 else 2
    for f, t in zip(mesh.boundary_facets, mesh.facet_tags):
        lines.append(f"{eid} {ftype} 2 {t} {t} " + " ".join(str(v + 1) for v in f))
        eid += 1
    ctype = 2 if mesh.dim == 2 else 4
    for c, t, r in zip(mesh.cells, mesh.cell_tags, mesh.cell_regions):
        lines.append(f"{eid} {ctype} 2 {t} {r + 1} " + " ".join(str(v + 1) for v in c))
        eid += 1
    lines.append("$EndElements")
    meta = {
        "dim": mesh.dim, "h": mesh.h, "hbar": mesh.hbar, "band_axis": mesh.band_axis,
        "lo": mesh.lo.tolist(), "hi": mesh.hi.tolist(),
        "band_nodes": mesh.band_nodes.tolist(),
        "chains": None if mesh.chains is None else [c.tolist() for c in mesh.chains],
    }
    lines += ["$TfemData", json.dumps(meta), "$EndTfemData"]
    for name, vals in (node_data or {}).items():
        vals = np.asarray(vals, dtype=float).reshape(-1)
        if len(vals) != mesh.n_vertices:
            raise InvalidArgumentError(f"field {name!r} has {len(vals)} values for {mesh.n_vertices} nodes")
        lines += ["$NodeData", "1", f'"{name}"', "1", "0.0", "3", "0", "1", str(len(vals))]
        lines += [f"{i + 1} {v:.17g}" for i, v in enumerate(vals)]
        lines.append("$EndNodeData")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    with open(path) as fh:
        raw = fh.read().splitlines()
    pos = 0
    nodes = {}
    order = []
    elements = []
    meta = {}

    def take():
        nonlocal pos
        if pos >= len(raw):
            raise MshParseError("unexpected end of file", pos)
        pos += 1
        return raw[pos - 1].strip(), pos

    def integer(tok, ln):
        try:
            return int(tok)
        except ValueError:
            raise MshParseError(f"expected integer, got {tok!r}", ln) from None

    while pos < len(raw):
        line, ln = take()
        if not line:
            continue
        if line == "$MeshFormat":
            fmt, ln = take()
            parts = fmt.split()
            if len(parts) < 3 or not parts[0].startswith("2"):
                raise MshParseError(f"unsupported mesh format {fmt!r}", ln)
            if parts[1] != "0":
                raise MshParseError("binary MSH is not supported", ln)
            end, ln = take()
            if end != "$EndMeshFormat":
                raise MshParseError("missing $EndMeshFormat", ln)
        elif line == "$Nodes":
            cnt, ln = take()
            count = integer(cnt, ln)
            for _ in range(count):
                row, ln = take()
                parts = row.split()
                if len(parts) != 4:
                    raise MshParseError(f"malformed node line {row!r}", ln)
                nid = integer(parts[0], ln)
                if nid in nodes:
                    raise MshParseError(f"duplicate node id {nid}", ln)
                try:
                    nodes[nid] = [float(v) for v in parts[1:]]
                except ValueError:
                    raise MshParseError(f"malformed coordinates {row!r}", ln) from None
                order.append(nid)
            end, ln = take()
            if end != "$EndNodes":
                raise MshParseError("missing $EndNodes", ln)
        elif line == "$Elements":
            cnt, ln = take()
            count = integer(cnt, ln)
            for _ in range(count):
                row, ln = take()
                parts = [integer(t, ln) for t in row.split()]
                if len(parts) < 3:
                    raise MshParseError(f"malformed element line {row!r}", ln)
                etype, ntags = parts[1], parts[2]
                if etype not in _NODES_OF:
                    raise MshParseError(f"unsupported element type {etype}", ln)
                conn = parts[3 + ntags:]
                if len(conn) != _NODES_OF[etype]:
                    raise MshParseError("wrong node count for element", ln)
                tags = parts[3:3 + ntags] + [0, 0]
                elements.append((etype, tags[0], tags[1], conn, ln))
            end, ln = take()
            if end != "$EndElements":
                raise MshParseError("missing $EndElements", ln)
        elif line == "$TfemData":
            js, ln = take()
            try:
                meta = json.loads(js)
            except json.JSONDecodeError as exc:
                raise MshParseError(f"bad metadata: {exc}", ln) from None
            end, ln = take()
            if end != "$EndTfemData":
                raise MshParseError("missing $EndTfemData", ln)
        elif line.startswith("$"):
            # skip unknown sections
            name = line[1:]
            while True:
                nxt, ln = take()
                if nxt == f"$End{name}":
                    break
        else:
            raise MshParseError(f"unexpected content {line!r}", ln)
    if not nodes:
        raise MshParseError("no $Nodes section", None)
    index = {nid: k for k, nid in enumerate(order)}
    xyz = np.array([nodes[n] for n in order])
    dim = meta.get("dim") or (3 if any(e[0] == 4 for e in elements) else 2)
    ctype = 2 if dim == 2 else 4
    ftype = 1 if dim == 2 else 2

    def conn_of(e):
        try:
            return [index[v] for v in e[3]]
        except KeyError as exc:
            raise MshParseError(f"element references unknown node {exc.args[0]}", e[4]) from None

    cells = [conn_of(e) for e in elements if e[0] == ctype]
    cell_tags = [e[1] for e in elements if e[0] == ctype]
    regions = [max(e[2] - 1, 0) for e in elements if e[0] == ctype]
    facets = [conn_of(e) for e in elements if e[0] == ftype]
    ftags = [e[1] for e in elements if e[0] == ftype]
    if not cells:
        raise MshParseError("no cells found", None)
    verts = xyz[:, :dim]
    return Mesh(dim=dim, vertices=verts, cells=np.array(cells), cell_tags=np.array(cell_tags),
                boundary_facets=np.array(facets, dtype=np.int64).reshape(-1, dim),
                facet_tags=np.array(ftags, dtype=np.int64),
                h=meta.get("h", float("nan")), hbar=meta.get("hbar"),
                band_nodes=np.array(meta.get("band_nodes", []), dtype=np.int64).reshape(-1, 3),
                cell_regions=np.array(regions), band_axis=meta.get("band_axis"),
                chains=None if meta.get("chains") is None else tuple(meta["chains"]),
                lo=meta.get("lo"), hi=meta.get("hi"))
