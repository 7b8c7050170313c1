import numpy as np
import pytest

from tfem.errors import InvalidArgumentError, MeshMismatchError, MshParseError
from tfem.mesh import (BAND, INTERIOR, BandSpec, build_band_mesh, build_mortar_mesh,
                       build_structured_mesh, cap_flatness, cell_mapping_determinant, mortar_vertex_maps,
                       read_mesh, write_mesh)


@pytest.mark.parametrize("dim,n,nv,nc", [(2, 10, 121, 200), (2, 2, 9, 8), (3, 2, 27, 48)])
def test_structured_counts(dim, n, nv, nc):
    m = build_structured_mesh(dim, n)
    assert m.n_vertices == nv and m.n_cells == nc
    assert m.h == pytest.approx(1.0 / n)
    assert len(m.band_cells) == 0 and m.hbar is None


def test_structured_rejects_small_n():
    with pytest.raises(InvalidArgumentError):
        build_structured_mesh(2, 1)


def test_band_cap_area():
    m = build_band_mesh(2, 10, BandSpec(width=1e-3))
    area = np.abs(m.determinants()[m.band_cells]) / 2
    assert np.allclose(area, 5e-5, rtol=0, atol=1e-15)


def test_collapsed_band_determinants():
    m = build_band_mesh(2, 10, BandSpec(width=0.0))
    J = np.abs(m.determinants())
    assert J[m.band_cells].min() == 0.0
    assert np.all(J[m.band_cells] == 0.0)
    assert J[m.interior_cells].min() > 0
    assert len(m.band_nodes) == 2 * 10 - 1


def test_band_cell_count_quarter_width():
    n = 4
    m = build_band_mesh(2, n, BandSpec(width=0.25 / n))
    assert len(m.band_cells) == 2 * n - 1


def test_band_partial_extent():
    m = build_band_mesh(2, 10, BandSpec(width=0.0, extent=0.4))
    assert len(m.band_cells) == 2 * 4 - 1
    assert m.measure() == pytest.approx(1.0, abs=1e-12)


def test_band_width_errors():
    with pytest.raises(InvalidArgumentError):
        build_band_mesh(2, 10, BandSpec(width=0.1))
    with pytest.raises(InvalidArgumentError):
        build_band_mesh(2, 10, BandSpec(extent=1.5))


@pytest.mark.parametrize("mesh", [
    lambda: build_structured_mesh(2, 7),
    lambda: build_structured_mesh(3, 3),
    lambda: build_band_mesh(2, 10, BandSpec(width=1e-3)),
    lambda: build_band_mesh(2, 10, BandSpec(width=0.0)),
    lambda: build_band_mesh(3, 4, BandSpec(width=1e-3)),
    lambda: build_band_mesh(3, 4, BandSpec(width=0.0)),
    lambda: build_band_mesh(2, 8, BandSpec(width=0.0, offset=0.3)),
], ids=["s2", "s3", "b2", "z2", "b3", "z3", "asym"])
def test_measure_is_one(mesh):
    assert mesh().measure() == pytest.approx(1.0, abs=1e-12)


def test_cap_flatness_matches_width():
    n, w = 10, 1e-3
    m = build_band_mesh(2, n, BandSpec(width=w))
    assert np.allclose(cap_flatness(m), w * n, rtol=0, atol=1e-12)


def test_slab_geometry():
    from tfem.femcore import longest_edge, min_altitude
    n, w = 4, 1e-3
    m = build_band_mesh(3, n, BandSpec(width=w))
    X = m.vertices[m.cells[m.band_cells]]
    alts = [min_altitude(x) for x in X]
    edges = [longest_edge(x) for x in X]
    assert min(alts) <= w * (1 + 1e-9)
    assert max(edges) <= np.sqrt(2) / n * (1 + 1e-12)


def test_determinant_examples():
    m = build_structured_mesh(2, 2)
    i = m.interior_cells[0]
    assert abs(cell_mapping_determinant(m, i)) == pytest.approx(0.25)
    from tfem.mesh import Mesh
    cap = Mesh(2, [[0, 0], [0.1, 0], [0.05, 1e-3]], [[0, 1, 2]], [BAND], np.zeros((0, 2)), [], 0.1)
    assert cell_mapping_determinant(cap, 0) == pytest.approx(1e-4, rel=1e-12)
    flat = Mesh(2, [[0, 0], [0.1, 0], [0.05, 0]], [[0, 1, 2]], [BAND], np.zeros((0, 2)), [], 0.1)
    assert cell_mapping_determinant(flat, 0) == 0.0


def _halves(nl, nr):
    left = build_structured_mesh(2, None, box=((0.0, 0.0), (0.5, 1.0)), counts=(max(nl // 2, 1), nl))
    right = build_structured_mesh(2, None, box=((0.5, 0.0), (1.0, 1.0)), counts=(max(nr // 2, 1), nr))
    return left, right


def test_mortar_cap_count():
    left, right = _halves(4, 8)
    m = build_mortar_mesh(left, right)
    # sorted union of 5 + 9 nodes, shared endpoints merged
    assert len(m.band_cells) == (4 + 1) + (8 + 1) - 2 - 2
    assert np.all(m.determinants()[m.band_cells] == 0)
    assert m.measure() == pytest.approx(1.0, abs=1e-12)


def test_mortar_disjoint():
    left = build_structured_mesh(2, None, box=((0.0, 0.0), (0.5, 1.0)), counts=(2, 4))
    right = build_structured_mesh(2, None, box=((0.5, 0.0), (1.0, 0.5)), counts=(2, 4))
    with pytest.raises(MeshMismatchError):
        build_mortar_mesh(left, right)
    far = build_structured_mesh(2, None, box=((0.6, 0.0), (1.0, 1.0)), counts=(2, 4))
    with pytest.raises(MeshMismatchError):
        build_mortar_mesh(left, far)


def test_mortar_vertex_maps():
    left, right = _halves(4, 8)
    m = build_mortar_mesh(left, right)
    il, ir = mortar_vertex_maps(left, right)
    assert np.array_equal(m.vertices[il], left.vertices)
    assert np.array_equal(m.vertices[ir], right.vertices)


def test_round_trip(tmp_path):
    m = build_band_mesh(2, 10, BandSpec(width=0.0))
    p = tmp_path / "band.msh"
    write_mesh(m, p)
    r = read_mesh(p)
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.cells, m.cells)
    assert np.array_equal(r.cell_tags, m.cell_tags)
    assert set(r.cell_tags.tolist()) == {INTERIOR, BAND}


def test_round_trip_3d_slab(tmp_path):
    m = build_band_mesh(3, 3, BandSpec(width=0.0))
    p = tmp_path / "slab.msh"
    write_mesh(m, p)
    r = read_mesh(p)
    assert np.abs(r.determinants()).min() == 0.0
    assert np.array_equal(r.vertices, m.vertices)


def test_node_data_round_trip(tmp_path):
    m = build_structured_mesh(2, 3)
    p = tmp_path / "data.msh"
    write_mesh(m, p, node_data={"u": np.arange(m.n_vertices, dtype=float)})
    assert "$NodeData" in p.read_text()
    assert np.array_equal(read_mesh(p).vertices, m.vertices)
    with pytest.raises(InvalidArgumentError):
        write_mesh(m, p, node_data={"u": np.zeros(3)})


def test_duplicate_vertex_ids(tmp_path):
    m = build_structured_mesh(2, 2)
    p = tmp_path / "dup.msh"
    write_mesh(m, p)
    lines = p.read_text().splitlines()
    i = lines.index("$Nodes")
    lines[i + 3] = "1" + lines[i + 3][lines[i + 3].index(" "):]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(MshParseError) as err:
        read_mesh(p)
    assert err.value.line is not None


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\nthree\n")
    with pytest.raises(MshParseError):
        read_mesh(p)


def test_mesh_immutable():
    m = build_structured_mesh(2, 3)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0
