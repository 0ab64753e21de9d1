"""Chain generators, domains, and the sampled shape-class audits.

Expected values here are hand-derived: segment counts and lengths follow
from the motif definitions (8 segments at scale 1/4, 4 segments at scale
1/3), the triadic bump area is base^2 * sqrt(3)/36 by the triangle formula,
and the square-wave motif cancels area by symmetry.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalflux.geometry import (
    UNIT_BOX,
    AdmissibilityConstraints,
    AdmissibilityMode,
    Box,
    GenerationLimitError,
    GeometryError,
    InterfaceFamily,
    PolylineInterface,
    SamplingBudget,
    build_two_sided_domain,
    chain_is_simple,
    chain_length,
    chain_sample_points,
    check_admissible,
    check_epsilon_cone,
    check_uniform_domain,
    flat_interface,
    koch_prefractal,
    minkowski_prefractal,
    perimeter_density_scan,
    points_in_polygon,
    read_polyline,
    segment_ball_clipped_fraction,
    shoelace_area,
    write_polyline,
)


def test_flat_interface_is_one_segment():
    chain = flat_interface()
    assert chain.n_segments == 1
    assert chain.family is InterfaceFamily.FLAT
    assert chain.total_length == 1.0


@pytest.mark.parametrize("g", [0, 1, 2, 3, 4])
def test_minkowski_counts_and_lengths(g):
    chain = minkowski_prefractal(g)
    assert chain.n_segments == 8**g
    # Dyadic coordinates keep these sums exact in floating point.
    assert chain.total_length == 2.0**g
    assert np.all(chain.segment_lengths == 0.25**g)
    assert chain.is_axis_aligned()


def test_minkowski_generation_one_vertices():
    chain = minkowski_prefractal(1, start=(0.0, 0.0), end=(1.0, 0.0))
    expected = np.array(
        [
            (0.0, 0.0),
            (0.25, 0.0),
            (0.25, 0.25),
            (0.5, 0.25),
            (0.5, 0.0),
            (0.5, -0.25),
            (0.75, -0.25),
            (0.75, 0.0),
            (1.0, 0.0),
        ]
    )
    assert np.array_equal(chain.vertices, expected)


@pytest.mark.parametrize("g", [0, 1, 2, 3])
def test_koch_counts_and_lengths(g):
    chain = koch_prefractal(g)
    assert chain.n_segments == 4**g
    assert chain.total_length == pytest.approx((4.0 / 3.0) ** g, rel=1e-14)
    if g > 0:
        assert not chain.is_axis_aligned()


def test_generation_cap():
    with pytest.raises(GenerationLimitError):
        minkowski_prefractal(7)
    with pytest.raises(GeometryError):
        koch_prefractal(-1)


def test_minkowski_stays_clear_of_top_and_bottom():
    # Excursions are bounded by sum of base/4**k strictly below 1/3.
    for g in range(5):
        chain = minkowski_prefractal(g)
        assert chain.vertices[:, 1].max() < 0.5 + 1.0 / 3.0 + 1e-15
        assert chain.vertices[:, 1].min() > 0.5 - 1.0 / 3.0 - 1e-15


@pytest.mark.parametrize("g", [0, 1, 2, 3, 4])
def test_minkowski_volume_conservation(g):
    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(g))
    assert dom.volume_plus == pytest.approx(0.5, abs=1e-14)
    assert dom.volume_minus == pytest.approx(0.5, abs=1e-14)


def test_flat_volumes_exact():
    dom = build_two_sided_domain(UNIT_BOX, flat_interface())
    assert dom.volume_plus == 0.5
    assert dom.volume_minus == 0.5


def test_koch_volume_gains_bump_area():
    # One equilateral excursion of base 1/3 and height sqrt(3)/6:
    # area = 0.5 * (1/3) * (sqrt(3)/6) = sqrt(3)/36, added to the hot side.
    dom = build_two_sided_domain(UNIT_BOX, koch_prefractal(1))
    assert dom.volume_plus == pytest.approx(0.5 + math.sqrt(3.0) / 36.0, abs=1e-14)
    assert dom.volume_minus == pytest.approx(0.5 - math.sqrt(3.0) / 36.0, abs=1e-14)


def test_domain_rejects_bad_anchors_and_escapes():
    bad_anchor = PolylineInterface(np.array([[0.1, 0.5], [1.0, 0.5]]))
    with pytest.raises(GeometryError):
        build_two_sided_domain(UNIT_BOX, bad_anchor)
    touches_top = PolylineInterface(
        np.array([[0.0, 0.5], [0.5, 1.0], [1.0, 0.5]])
    )
    with pytest.raises(GeometryError):
        build_two_sided_domain(UNIT_BOX, touches_top)


def test_domain_rejects_self_crossing_chain():
    bowtie = PolylineInterface(
        np.array([[0.0, 0.4], [0.7, 0.7], [0.7, 0.3], [0.0, 0.6], [1.0, 0.5]])
    )
    with pytest.raises(GeometryError):
        build_two_sided_domain(UNIT_BOX, bowtie)


@pytest.mark.parametrize("g", [1, 2, 3])
def test_simplicity_routes_agree_minkowski(g):
    chain = minkowski_prefractal(g)
    assert chain_is_simple(chain, method="sweep")
    assert chain_is_simple(chain, method="shapely")


@pytest.mark.parametrize("g", [1, 2, 3])
def test_simplicity_routes_agree_koch(g):
    chain = koch_prefractal(g)
    assert chain_is_simple(chain, method="sweep")
    assert chain_is_simple(chain, method="shapely")


def test_minkowski_generation_four_simple_via_shapely():
    assert chain_is_simple(minkowski_prefractal(4), method="shapely")


def test_vertex_touching_counts_as_non_simple():
    # Fourth vertex touches the interior of the first segment.
    chain = PolylineInterface(
        np.array([[0.0, 0.5], [0.4, 0.5], [0.4, 0.8], [0.2, 0.5], [0.2, 0.9]])
    )
    assert not chain_is_simple(chain, method="sweep")
    assert not chain_is_simple(chain, method="shapely")


def test_crossing_detected_by_both_routes():
    chain = PolylineInterface(
        np.array([[0.0, 0.4], [0.8, 0.8], [0.8, 0.2], [0.1, 0.9]])
    )
    assert not chain_is_simple(chain, method="sweep")
    assert not chain_is_simple(chain, method="shapely")


def test_shoelace_reference_values():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert shoelace_area(square) == 1.0
    assert shoelace_area(square[::-1]) == -1.0
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    assert shoelace_area(tri) == 1.0


@settings(max_examples=60, deadline=None)
@given(
    x=st.floats(0.01, 0.99),
    y=st.floats(0.01, 0.99),
)
def test_point_in_polygon_matches_shapely(x, y):
    from shapely.geometry import Point, Polygon

    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(2))
    poly = Polygon(dom.plus_ring)
    p = np.array([[x, y]])
    # Skip points hugging the boundary where conventions may differ.
    if poly.exterior.distance(Point(x, y)) < 1e-9:
        return
    assert points_in_polygon(p, dom.plus_ring)[0] == poly.contains(Point(x, y))


@settings(max_examples=40, deadline=None)
@given(
    cx=st.floats(0.05, 0.95),
    cy=st.floats(0.15, 0.85),
    r=st.floats(0.01, 0.3),
)
def test_ball_clipping_matches_shapely_buffer(cx, cy, r):
    from shapely.geometry import LineString, Point

    chain = minkowski_prefractal(2)
    frac = segment_ball_clipped_fraction(
        chain.segment_starts, chain.segment_ends, np.array([cx, cy]), r
    )
    mine = float(np.dot(frac, chain.segment_lengths))
    disk = Point(cx, cy).buffer(r, quad_segs=256)
    theirs = LineString(chain.vertices).intersection(disk).length
    assert mine == pytest.approx(theirs, abs=2e-4 * max(r, 0.01) + 1e-12)


def test_polyline_roundtrip(tmp_path):
    chain = koch_prefractal(2)
    path = tmp_path / "chain.txt"
    write_polyline(path, chain, scenario_hash="abc123")
    back = read_polyline(path)
    assert np.array_equal(back.vertices, chain.vertices)
    assert back.family is chain.family
    assert back.generation == chain.generation
    assert back.base_length == chain.base_length


def test_chain_sample_points_lie_on_chain():
    chain = minkowski_prefractal(2)
    pts = chain_sample_points(chain, 97)
    from fractalflux.geometry import distance_to_segments

    dist = distance_to_segments(pts, chain.segment_starts, chain.segment_ends)
    assert dist.max() < 1e-12


def test_perimeter_density_flat_is_two():
    chain = flat_interface()
    centers = np.array([[0.5, 0.5]])
    value = perimeter_density_scan(chain, centers, [0.1, 0.25, 0.5])
    assert value == pytest.approx(2.0, rel=1e-12)


def test_cone_check_flat_passes():
    dom = build_two_sided_domain(UNIT_BOX, flat_interface())
    assert check_epsilon_cone(dom, 0.1).ok


def test_cone_check_koch_spike_fails_wide_opening():
    dom = build_two_sided_domain(UNIT_BOX, koch_prefractal(1))
    res = check_epsilon_cone(dom, 1.0)
    assert not res.ok
    assert "x" in res.witness


def test_cone_check_minkowski_fine_scale_passes():
    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(2))
    assert check_epsilon_cone(dom, 4.0**-2 / 10.0).ok


def test_uniform_check_flat_passes():
    dom = build_two_sided_domain(UNIT_BOX, flat_interface())
    res = check_uniform_domain(dom, 0.2, n_pairs=40)
    assert res.ok
    assert res.worst_length_ratio == pytest.approx(1.0, abs=1e-9)


def test_uniform_check_minkowski_passes_modest_eps():
    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(2))
    res = check_uniform_domain(dom, 0.05, n_pairs=60)
    assert res.ok, res.witness


def test_uniform_check_neck_fails():
    # Hot side is two tall chambers joined by a corridor of height 0.05.
    chain = PolylineInterface(
        np.array(
            [
                [0.0, 0.9],
                [0.4, 0.9],
                [0.4, 0.05],
                [0.6, 0.05],
                [0.6, 0.9],
                [1.0, 0.9],
            ]
        )
    )
    dom = build_two_sided_domain(UNIT_BOX, chain)
    res = check_uniform_domain(dom, 0.5, n_pairs=60)
    assert not res.ok
    assert res.witness["reason"] in ("cigar clearance violated", "length bound violated")


def test_admissibility_flat_lipschitz_all_flags():
    dom = build_two_sided_domain(UNIT_BOX, flat_interface())
    constraints = AdmissibilityConstraints(
        volume=0.5,
        confinement=Box(0.0, 0.3, 1.0, 0.7),
        eps=0.1,
        c_hat=4.0,
    )
    report = check_admissible(dom, constraints)
    assert report.volume_ok
    assert report.confinement_ok
    assert report.cone_ok
    assert report.perimeter_density_ok
    assert report.passed


def test_admissibility_volume_and_confinement_witnesses():
    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(1))
    constraints = AdmissibilityConstraints(
        volume=0.4,
        confinement=Box(0.0, 0.45, 1.0, 0.55),
        eps=4.0**-1 / 10.0,
        c_hat=10.0,
    )
    report = check_admissible(dom, constraints)
    assert not report.volume_ok
    assert not report.confinement_ok
    assert "volume" in report.witness
    assert "confinement" in report.witness
    assert not report.passed


def test_density_cutoff_separates_flat_from_refined():
    budget = SamplingBudget(n_boundary_samples=64, n_radii=10, r_min=0.05, r_max=0.5)
    flat_dom = build_two_sided_domain(UNIT_BOX, flat_interface())
    rough_dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(3))
    c_flat = check_admissible(
        flat_dom, AdmissibilityConstraints(volume=0.5, eps=0.1, c_hat=3.0), budget
    )
    c_rough = check_admissible(
        rough_dom,
        AdmissibilityConstraints(volume=0.5, eps=4.0**-3 / 10.0, c_hat=3.0),
        budget,
    )
    assert c_flat.perimeter_density_ok
    assert c_flat.density_estimate == pytest.approx(2.0, rel=1e-9)
    assert not c_rough.perimeter_density_ok
    assert c_rough.density_estimate > 4.0


def test_admissibility_uniform_mode_runs_measure_checks():
    dom = build_two_sided_domain(UNIT_BOX, minkowski_prefractal(2))
    constraints = AdmissibilityConstraints(
        volume=0.5,
        eps=0.04,
        c_hat=8.0,
        mode=AdmissibilityMode.UNIFORM,
        d=1.5,
        s=1.5,
        c_d=8.0,
        c_s=1e-3,
    )
    report = check_admissible(dom, constraints, SamplingBudget(n_pairs=30))
    assert report.uniform_ok is not None
    assert report.measure_upper_ok is not None
    assert np.isfinite(report.c_d_estimate)
    assert np.isfinite(report.c_s_estimate)


def test_chain_length_helper():
    assert chain_length(minkowski_prefractal(3)) == 8.0
