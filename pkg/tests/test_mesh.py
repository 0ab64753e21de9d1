import numpy as np
import pytest

from fractalflux.geometry import (
    UNIT_BOX,
    build_two_sided_domain,
    flat_interface,
    koch_prefractal,
    minkowski_prefractal,
)
from fractalflux.mesh import (
    MeshError,
    MeshMode,
    MeshQualityError,
    MeshResourceError,
    merge_interface,
    read_mesh,
    triangulate,
    write_mesh,
    write_vtk,
)

SQRT3 = np.sqrt(3.0)


@pytest.fixture(scope="module")
def flat_domain():
    return build_two_sided_domain(UNIT_BOX, flat_interface())


@pytest.fixture(scope="module")
def mink1_domain():
    return build_two_sided_domain(UNIT_BOX, minkowski_prefractal(1))


@pytest.fixture(scope="module")
def koch1_domain():
    return build_two_sided_domain(UNIT_BOX, koch_prefractal(1))


# Hand-counted reference for the coarsest flat split: a 2x2 grid of cells,
# four triangles each, 9 grid nodes + 4 cell centers, and the three chain
# nodes doubled.
def test_flat_half_mesh_frozen_counts(flat_domain):
    m = triangulate(flat_domain, 0.5)
    assert m.n_triangles == 16
    assert m.n_vertices == 16
    unique_locs = np.unique(m.vertices, axis=0)
    assert len(unique_locs) == 13
    assert m.n_pairs == 3
    assert len(m.interface_edges) == 2
    assert m.min_angle() == pytest.approx(45.0, abs=1e-9)
    assert m.side_area(+1) == 0.5
    assert m.side_area(-1) == 0.5


def test_pairs_ordered_along_chain(mink1_domain):
    m = triangulate(mink1_domain, 1.0 / 8.0)
    pts = m.pair_points
    chain = mink1_domain.interface
    np.testing.assert_allclose(pts[0], chain.vertices[0], atol=0)
    np.testing.assert_allclose(pts[-1], chain.vertices[-1], atol=0)
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    np.testing.assert_allclose(gaps, 1.0 / 8.0, atol=1e-15)
    # every chain vertex appears among the pair points, in chain order
    idx = [
        int(np.flatnonzero((pts == v).all(axis=1))[0]) for v in chain.vertices
    ]
    assert idx == sorted(idx)


@pytest.mark.parametrize("generation,h", [(0, 0.5), (1, 0.25), (1, 0.125)])
def test_refinement_quadruples_triangles(generation, h):
    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(generation))
    coarse = triangulate(dom, h)
    fine = triangulate(dom, h / 2.0)
    for side in (+1, -1):
        n_c = int((coarse.triangle_side == side).sum())
        n_f = int((fine.triangle_side == side).sum())
        assert n_f == 4 * n_c


def test_edges_tile_every_segment_exactly():
    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(2))
    m = triangulate(dom, 1.0 / 16.0)
    chain = dom.interface
    pts = m.pair_points
    for s in range(chain.n_segments):
        sel = m.edge_segment == s
        assert sel.sum() >= 1
        total = m.edge_lengths[sel].sum()
        assert total == pytest.approx(chain.segment_lengths[s], rel=1e-12)
        # edge endpoints stay on the owning segment
        a = chain.segment_starts[s]
        b = chain.segment_ends[s]
        for e in np.flatnonzero(sel):
            for pt in pts[m.interface_edges[e]]:
                cross = (b[0] - a[0]) * (pt[1] - a[1]) - (b[1] - a[1]) * (pt[0] - a[0])
                assert abs(cross) < 1e-12


def test_double_nodes_coincide_and_split_sides(mink1_domain):
    m = triangulate(mink1_domain, 1.0 / 8.0)
    plus_ids, minus_ids = m.interface_pairs.T
    np.testing.assert_array_equal(m.vertices[plus_ids], m.vertices[minus_ids])
    plus_used = set(np.unique(m.plus_triangles))
    minus_used = set(np.unique(m.minus_triangles))
    assert set(plus_ids) <= plus_used
    assert set(minus_ids) <= minus_used
    assert not (set(plus_ids) & minus_used)
    assert not (set(minus_ids) & plus_used)


def test_orientation_and_side_areas(mink1_domain):
    from fractalflux.fem import triangle_geometry

    m = triangulate(mink1_domain, 1.0 / 8.0)
    area, _ = triangle_geometry(m.vertices, m.triangles)
    assert (area > 0).all()
    assert m.side_area(+1) == pytest.approx(mink1_domain.volume_plus, abs=1e-13)
    assert m.side_area(-1) == pytest.approx(mink1_domain.volume_minus, abs=1e-13)


def test_structured_rejects_off_grid_h(flat_domain, mink1_domain, koch1_domain):
    with pytest.raises(MeshError):
        triangulate(flat_domain, 0.3)
    with pytest.raises(MeshError):
        triangulate(mink1_domain, 1.0 / 6.0)
    with pytest.raises(MeshError):
        triangulate(koch1_domain, 1.0 / 12.0, mode=MeshMode.STRUCTURED)


def test_unstructured_koch_quality_and_areas(koch1_domain):
    m = triangulate(koch1_domain, (1.0 / 3.0) / 4.0, mode=MeshMode.UNSTRUCTURED)
    assert m.min_angle() >= 25.0
    assert m.side_area(+1) == pytest.approx(0.5 + SQRT3 / 36.0, abs=1e-12)
    assert m.side_area(-1) == pytest.approx(0.5 - SQRT3 / 36.0, abs=1e-12)
    # 4 segments of length 1/3 split into 4 pieces each
    assert m.n_pairs == 17
    assert len(m.interface_edges) == 16
    chain = koch1_domain.interface
    for s in range(chain.n_segments):
        sel = m.edge_segment == s
        assert m.edge_lengths[sel].sum() == pytest.approx(chain.segment_lengths[s], rel=1e-12)


def test_unstructured_koch_deeper_generation():
    dom = build_two_sided_domain(UNIT_BOX, koch_prefractal(2))
    m = triangulate(dom, (1.0 / 9.0) / 2.0, mode="unstructured")
    assert m.min_angle() >= 25.0
    area_plus_exact = 0.5 + SQRT3 / 36.0 * (1.0 + 4.0 / 9.0)
    assert m.side_area(+1) == pytest.approx(area_plus_exact, abs=1e-12)


def test_unstructured_flat_matches_volumes(flat_domain):
    m = triangulate(flat_domain, 0.1, mode="unstructured")
    assert m.side_area(+1) == pytest.approx(0.5, abs=1e-12)
    assert m.min_angle() >= 25.0


def test_merge_all_glues_sheets(mink1_domain):
    m = triangulate(mink1_domain, 1.0 / 8.0)
    g = merge_interface(m)
    assert g.is_merged
    assert g.n_vertices == m.n_vertices - m.n_pairs
    assert g.n_pairs == 0
    assert len(g.merged_vertices) == m.n_pairs
    assert g.side_area(+1) == m.side_area(+1)
    # the glued mesh is vertex-conforming across the chain
    shared = set(np.unique(g.plus_triangles)) & set(np.unique(g.minus_triangles))
    assert len(shared) == m.n_pairs


def test_merge_partial_keeps_live_segments(mink1_domain):
    m = triangulate(mink1_domain, 1.0 / 8.0)
    g = merge_interface(m, segment_ids=[0, 1, 2])
    merged_edges = len(m.interface_edges) - len(g.interface_edges)
    assert merged_edges == int(np.isin(m.edge_segment, [0, 1, 2]).sum())
    # the joint with segment 3 stays in the table as a degenerate row
    deg = g.interface_pairs[:, 0] == g.interface_pairs[:, 1]
    assert deg.sum() == 1
    assert set(np.unique(g.edge_segment)) == {3, 4, 5, 6, 7}


def test_merge_twice_equals_merge_once(mink1_domain):
    m = triangulate(mink1_domain, 1.0 / 8.0)
    once = merge_interface(m)
    twice = merge_interface(merge_interface(m, segment_ids=[0, 1, 2]))
    assert np.array_equal(once.triangles, twice.triangles)
    assert np.array_equal(np.sort(once.merged_vertices), np.sort(twice.merged_vertices))


def test_merge_rejects_bad_segments(mink1_domain):
    m = triangulate(mink1_domain, 1.0 / 8.0)
    with pytest.raises(MeshError):
        merge_interface(m, segment_ids=[99])


def test_mesh_text_roundtrip(tmp_path, mink1_domain):
    m = triangulate(mink1_domain, 1.0 / 8.0)
    p = tmp_path / "mesh.txt"
    write_mesh(m, p, scenario="deadbeef")
    r = read_mesh(p)
    assert np.array_equal(m.vertices, r.vertices)
    assert np.array_equal(m.triangles, r.triangles)
    assert np.array_equal(m.triangle_side, r.triangle_side)
    assert np.array_equal(m.interface_pairs, r.interface_pairs)
    assert np.array_equal(m.interface_edges, r.interface_edges)
    assert np.array_equal(m.edge_segment, r.edge_segment)
    assert np.array_equal(m.edge_lengths, r.edge_lengths)
    assert r.mode is MeshMode.STRUCTURED and r.h == m.h
    assert np.array_equal(
        m.domain.interface.vertices, r.domain.interface.vertices
    )


def test_mesh_text_roundtrip_unstructured_and_merged(tmp_path, koch1_domain, mink1_domain):
    mk = triangulate(koch1_domain, (1.0 / 3.0) / 3.0, mode="unstructured")
    p1 = tmp_path / "koch.txt"
    write_mesh(mk, p1)
    rk = read_mesh(p1)
    assert np.array_equal(mk.vertices, rk.vertices)
    assert rk.mode is MeshMode.UNSTRUCTURED

    mg = merge_interface(triangulate(mink1_domain, 1.0 / 8.0), segment_ids=[4])
    p2 = tmp_path / "merged.txt"
    write_mesh(mg, p2)
    rg = read_mesh(p2)
    assert np.array_equal(mg.merged_vertices, rg.merged_vertices)
    assert np.array_equal(mg.interface_pairs, rg.interface_pairs)


def test_vtk_export(tmp_path, flat_domain):
    m = triangulate(flat_domain, 0.5)
    p = tmp_path / "mesh.vtk"
    write_vtk(m, p, point_data={"u": np.arange(m.n_vertices, dtype=float)})
    lines = p.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DATASET UNSTRUCTURED_GRID" in lines
    assert f"POINTS {m.n_vertices} double" in lines
    assert f"CELLS {m.n_triangles} {4 * m.n_triangles}" in lines
    assert "SCALARS side int 1" in lines
    assert "SCALARS u double 1" in lines
    with pytest.raises(MeshError):
        write_vtk(m, p, point_data={"bad": np.zeros(3)})


def test_dof_cap_enforced(flat_domain, monkeypatch):
    with pytest.raises(MeshResourceError):
        triangulate(flat_domain, 1.0 / 64.0, max_dof=100)
    monkeypatch.setenv("FRACTALFLUX_MAX_DOF", "100")
    with pytest.raises(MeshResourceError):
        triangulate(flat_domain, 1.0 / 64.0)
    monkeypatch.setenv("FRACTALFLUX_MAX_DOF", "not-a-number")
    with pytest.raises(MeshResourceError):
        triangulate(flat_domain, 0.5)


def test_quality_floor_raises(flat_domain):
    with pytest.raises(MeshQualityError):
        triangulate(flat_domain, 0.5, min_angle_floor=50.0)


def test_rejects_nonpositive_h(flat_domain):
    with pytest.raises(MeshError):
        triangulate(flat_domain, 0.0)


@pytest.mark.parametrize("generation", [0, 1, 2, 3])
def test_minkowski_family_structured_sweep(generation):
    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(generation))
    seg = dom.interface.segment_lengths[0]
    m = triangulate(dom, seg / 2.0)
    assert m.n_pairs == len(np.unique(dom.interface.vertices, axis=0)) + dom.interface.n_segments * 1
    assert m.side_area(+1) == pytest.approx(0.5, abs=1e-13)
    assert m.min_angle() == pytest.approx(45.0, abs=1e-9)
