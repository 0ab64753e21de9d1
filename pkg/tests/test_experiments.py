import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalflux.experiments import (
    ExperimentError,
    SweepRow,
    chain_hausdorff_estimate,
    degennes_fit,
    energy_convergence,
    expected_uptake_exponent,
    measure_coupling,
    mesh_for_generation,
    mosco_sweep,
    recovery_check,
    reference_witness,
    similarity_dimension,
    static_functional,
    symmetric_difference_area,
    uptake_curve,
    write_fit_csv,
    write_sweep_csv,
)
from fractalflux.geometry import UNIT_BOX, build_two_sided_domain, minkowski_prefractal
from fractalflux.io import read_csv
from fractalflux.measure import hausdorff_like_measure
from fractalflux.mesh import MeshMode
from fractalflux.solver import TransmissionProblem

TSTAR = 1.0 / 64.0


def candidate(g, d=1.5):
    chain = minkowski_prefractal(g)
    return build_two_sided_domain(UNIT_BOX, chain), hausdorff_like_measure(chain, d)


def static_problem(lam=1.0, t_final=0.1):
    return TransmissionProblem(coupling=lam, t_final=t_final, dt=t_final)


def test_similarity_dimensions():
    assert similarity_dimension("flat") == 1.0
    assert similarity_dimension("minkowski") == pytest.approx(1.5, rel=1e-15)
    assert similarity_dimension("koch") == pytest.approx(math.log(4) / math.log(3), rel=1e-15)
    assert expected_uptake_exponent("flat") == pytest.approx(0.5, rel=1e-15)
    assert expected_uptake_exponent("minkowski") == pytest.approx(0.25, rel=1e-15)
    with pytest.raises(ExperimentError):
        similarity_dimension("custom")


def test_symmetric_difference_halves_each_generation():
    # flipped motif cells at generation g cover 2 * 8^g squares of side 4^-(g+1)
    doms = [candidate(g)[0] for g in range(4)]
    areas = [symmetric_difference_area(doms[g], doms[g + 1]) for g in range(3)]
    assert areas == pytest.approx([0.125, 0.0625, 0.03125], rel=1e-12)
    ratios = np.array(areas[1:]) / np.array(areas[:-1])
    assert ratios == pytest.approx([0.5, 0.5], rel=1e-12)


def test_hausdorff_distance_audit():
    for g in range(3):
        a = minkowski_prefractal(g)
        b = minkowski_prefractal(g + 1)
        d = chain_hausdorff_estimate(a, b)
        # the motif excursion is a quarter of the parent segment
        assert d == pytest.approx(4.0 ** -(g + 1), rel=1e-9)
        assert d <= 4.0**-g


def test_measure_coupling_is_density():
    for g in (1, 2, 3):
        mu = hausdorff_like_measure(minkowski_prefractal(g), 1.5)
        dens = measure_coupling(mu)
        assert dens == pytest.approx(np.full(8**g, 2.0**-g), rel=1e-12)


def test_recovery_gap_zero_for_constant_field():
    gap = recovery_check(candidate(0), candidate(1), lambda x, y: np.full_like(x, 2.0),
                         static_problem())
    assert gap < 1e-12


def test_recovery_gap_zero_for_unit_jump():
    # normalized measures make the jump term generation-independent
    jump = (lambda x, y: np.ones_like(x), lambda x, y: np.zeros_like(x))
    gap = recovery_check(candidate(1), candidate(2), jump, static_problem())
    assert gap < 1e-12


def test_unit_jump_boundary_term_is_measure_mass():
    domain, mu = candidate(2)
    mesh = mesh_for_generation("minkowski", 2)
    prob = static_problem(lam=3.0, t_final=0.25)
    jump = (lambda x, y: np.ones_like(x), lambda x, y: np.zeros_like(x))
    rep = static_functional(mesh, mu, prob, jump)
    assert rep.boundary_term == pytest.approx(0.25 * 3.0 * mu.total_mass, rel=1e-12)
    assert rep.grad_term < 1e-12
    assert rep.l2_term == pytest.approx(0.25 * 0.5, rel=1e-12)


def test_recovery_witness_gaps_decay():
    cands = [candidate(g) for g in range(4)]
    prob = static_problem()
    gaps = [recovery_check(cands[g], cands[g + 1], reference_witness, prob)
            for g in range(3)]
    assert gaps[1] < 0.5 * gaps[0]
    assert gaps[2] < 0.5 * gaps[1]


def test_recovery_transfer_route_exact_for_linear_field():
    # P1 transfer reproduces a linear extension pair, so both routes agree
    ref = mesh_for_generation("minkowski", 2)
    f_plus = lambda x, y: 1.0 + 2.0 * x - y
    f_minus = lambda x, y: 0.5 * x + y
    vals_plus = f_plus(ref.vertices[:, 0], ref.vertices[:, 1])
    vals_minus = f_minus(ref.vertices[:, 0], ref.vertices[:, 1])
    prob = static_problem()
    a = recovery_check(candidate(0), candidate(1), (f_plus, f_minus), prob)
    b = recovery_check(candidate(0), candidate(1), (ref, vals_plus, vals_minus), prob)
    assert b == pytest.approx(a, abs=1e-10)


def test_transfer_rejects_mismatched_reference():
    ref = mesh_for_generation("minkowski", 1)
    short = np.zeros(ref.n_vertices - 1)
    with pytest.raises(ExperimentError, match="incompatible reference"):
        recovery_check(candidate(0), candidate(1), (ref, short, short), static_problem())


@pytest.mark.parametrize("bad", [42, (1, 2), (lambda x, y: x,)])
def test_field_pair_validation(bad):
    with pytest.raises(ExperimentError):
        recovery_check(candidate(0), candidate(1), bad, static_problem())


def test_static_functional_requires_scalar_coupling():
    domain, mu = candidate(1)
    mesh = mesh_for_generation("minkowski", 1)
    prob = TransmissionProblem(coupling=np.full(8, 1.0), t_final=0.1, dt=0.1)
    with pytest.raises(ExperimentError, match="scalar"):
        static_functional(mesh, mu, prob, lambda x, y: x)


def test_static_functional_merged_mesh_has_no_jump_term():
    domain, mu = candidate(1)
    mesh = mesh_for_generation("minkowski", 1, merged=True)
    prob = TransmissionProblem(coupling=math.inf, t_final=0.1, dt=0.1)
    rep = static_functional(mesh, mu, prob, reference_witness)
    assert rep.boundary_term == 0.0
    assert rep.grad_term > 0.0


def test_mesh_for_generation_modes():
    assert mesh_for_generation("minkowski", 1).mode == MeshMode.STRUCTURED
    assert mesh_for_generation("koch", 1).mode == MeshMode.UNSTRUCTURED
    assert mesh_for_generation("flat", 0, merged=True).is_merged


@pytest.fixture(scope="module")
def sweep():
    prob = TransmissionProblem(coupling=math.inf, t_final=TSTAR, dt=1e-3)
    return mosco_sweep("minkowski", [0, 1, 2], prob, TSTAR)


class TestSweep:
    def test_default_rules(self, sweep):
        assert [r.h for r in sweep] == pytest.approx([0.25, 0.0625, 0.015625], rel=1e-15)
        assert [r.dt for r in sweep] == pytest.approx(
            [r.h * r.h / 4.0 for r in sweep], rel=1e-15)
        assert [r.n_dofs for r in sweep] == [41, 545, 8321]

    def test_preserved_columns(self, sweep):
        assert [r.volume_plus for r in sweep] == pytest.approx([0.5] * 3, abs=1e-13)
        assert [r.chain_length for r in sweep] == pytest.approx([1.0, 2.0, 4.0], rel=1e-12)
        assert [r.measure_mass for r in sweep] == pytest.approx([1.0] * 3, rel=1e-12)

    def test_frozen_solution_columns(self, sweep):
        js = [r.script_j for r in sweep]
        qs = [r.q_minus_at_tstar for r in sweep]
        assert js == pytest.approx(
            [0.0794825222046317, 0.0728732132026340, 0.0583546973623480], rel=1e-7)
        assert qs == pytest.approx(
            [0.0380014987318423, 0.0886356816038435, 0.1024453718876901], rel=1e-7)

    def test_q_minus_strictly_increases(self, sweep):
        qs = [r.q_minus_at_tstar for r in sweep]
        assert all(b > a for a, b in zip(qs, qs[1:]))

    def test_lookback_columns(self, sweep):
        assert math.isnan(sweep[0].recovery_gap) and math.isnan(sweep[0].symdiff_prev)
        assert [r.symdiff_prev for r in sweep[1:]] == pytest.approx([0.125, 0.0625], rel=1e-12)
        assert sweep[2].recovery_gap < 0.5 * sweep[1].recovery_gap

    def test_regularity_column_stabilizes(self, sweep):
        # scanned on radii at or above the coarsest feature scale
        assert sweep[0].c_d_estimate == pytest.approx(8.0, rel=1e-9)
        assert sweep[2].c_d_estimate == pytest.approx(4.4545242867714, rel=1e-6)

    def test_csv_bytes_deterministic(self, sweep, tmp_path):
        prob = TransmissionProblem(coupling=math.inf, t_final=TSTAR, dt=1e-3)
        again = mosco_sweep("minkowski", [0, 1, 2], prob, TSTAR)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_sweep_csv(sweep, a, scenario="abc123")
        write_sweep_csv(again, b, scenario="abc123")
        assert a.read_bytes() == b.read_bytes()
        header, rows, comments = read_csv(a)
        assert header == SweepRow.csv_header()
        assert len(rows) == 3
        assert comments == ["scenario abc123"]


def test_sweep_validation():
    prob = TransmissionProblem(coupling=math.inf, t_final=TSTAR, dt=1e-3)
    with pytest.raises(ExperimentError, match="increasing"):
        mosco_sweep("minkowski", [1, 1], prob, TSTAR)
    with pytest.raises(ExperimentError, match="probe time"):
        mosco_sweep("minkowski", [0], prob, 2.0 * TSTAR)
    with pytest.raises(ExperimentError, match="does not hit"):
        mosco_sweep("minkowski", [0], prob, TSTAR, dt_rule=lambda g, h: TSTAR / 2.5)
    with pytest.raises(ExperimentError, match="coupling rule"):
        mosco_sweep("minkowski", [0], prob, TSTAR, coupling_rule="nope")
    with pytest.raises(ExperimentError, match="finite scalar"):
        mosco_sweep("minkowski", [0], prob, TSTAR, coupling_rule="measure")


def test_sweep_measure_rule_converges():
    # jump term weighted by the measure density has a generation limit
    prob = TransmissionProblem(coupling=1.0, t_final=TSTAR, dt=1e-3)
    rows = mosco_sweep("minkowski", [0, 1, 2], prob, TSTAR,
                       dt_rule=lambda g, h: TSTAR / 64.0, coupling_rule="measure")
    js = [r.script_j for r in rows]
    assert js == pytest.approx(
        [0.0196232377930388, 0.0205310052080425, 0.0206698042481320], rel=1e-7)
    diffs = np.abs(np.diff(js))
    assert diffs[1] < diffs[0]
    assert energy_convergence(rows).verdict == "convergent"


def test_energy_convergence_mechanics():
    rows = [1.0, 1.5, 1.75, 1.875]
    diag = energy_convergence(rows)
    assert diag.differences == pytest.approx([0.5, 0.25, 0.125])
    assert diag.ratios == pytest.approx([0.5, 0.5])
    assert diag.cauchy_like and diag.verdict == "convergent"

    same = energy_convergence([2.0, 2.0, 2.0])
    assert same.differences == pytest.approx([0.0, 0.0])
    assert same.verdict == "convergent"

    wobble = energy_convergence([1.0, 2.0, 1.2, 2.1])
    assert wobble.verdict == "not convergent"

    with pytest.raises(ExperimentError, match="three rows"):
        energy_convergence([1.0, 2.0])


def test_degennes_fit_exact_power_law():
    t = np.geomspace(1e-4, 1e-1, 40)
    fit = degennes_fit((t, 3.7 * t**0.5), (1e-4, 1e-1))
    assert fit.alpha == pytest.approx(0.5, abs=1e-12)
    assert fit.prefactor == pytest.approx(3.7, rel=1e-10)
    assert fit.residual < 1e-13
    assert fit.n_points == 40


def test_degennes_fit_validation():
    t = np.linspace(0.0, 1.0, 11)
    q = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ExperimentError, match="at least 4"):
        degennes_fit((t, q), (0.85, 1.0))
    with pytest.raises(ExperimentError, match="strictly positive"):
        degennes_fit((t, q - 0.5), (0.1, 1.0))
    with pytest.raises(ExperimentError, match="window"):
        degennes_fit((t, q), (0.5, 0.5))
    with pytest.raises(ExperimentError, match="length"):
        degennes_fit((t[:-1], q), (0.1, 1.0))


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.1, 0.9), scale=st.floats(0.05, 20.0))
def test_degennes_fit_recovers_any_exponent(alpha, scale):
    t = np.geomspace(1e-3, 1e-1, 24)
    fit = degennes_fit((t, scale * t**alpha), (1e-3, 1e-1))
    assert fit.alpha == pytest.approx(alpha, abs=1e-9)


def test_flat_uptake_exponent_near_half():
    times, q = uptake_curve("flat", 0, h=1.0 / 32.0, t_final=1.0 / 16.0, dt=1.0 / 4096.0)
    assert q[0] == 0.0
    assert np.all(np.diff(q) > 0.0)
    fit = degennes_fit((times, q), (1.0 / 256.0, 1.0 / 16.0))
    assert 0.35 <= fit.alpha <= 0.65  # theory: 0.5


def test_fractal_uptake_exponent_is_smaller():
    flat_t, flat_q = uptake_curve("flat", 0, h=1.0 / 32.0, t_final=1.0 / 16.0,
                                  dt=1.0 / 4096.0)
    flat_fit = degennes_fit((flat_t, flat_q), (1.0 / 256.0, 1.0 / 16.0))
    mink_t, mink_q = uptake_curve("minkowski", 2, h=1.0 / 64.0, t_final=TSTAR,
                                  dt=1.0 / 16384.0)
    mink_fit = degennes_fit((mink_t, mink_q), (1.0 / 1024.0, 1.0 / 64.0))
    assert 0.15 <= mink_fit.alpha <= 0.45  # theory: 0.25, crossover biases upward
    assert mink_fit.alpha < flat_fit.alpha - 0.1


def test_fit_csv(tmp_path):
    t = np.geomspace(1e-3, 1e-1, 12)
    fit = degennes_fit((t, 2.0 * t**0.25), (1e-3, 1e-1))
    path = tmp_path / "fit.csv"
    write_fit_csv([fit], path, scenario="deadbeef0000")
    header, rows, comments = read_csv(path)
    assert header == ["alpha", "residual", "t_min", "t_max", "n_points"]
    assert float(rows[0][0]) == pytest.approx(0.25, abs=1e-12)
    assert rows[0][4] == "12"
