"""Generation studies: sweeps, recovery gaps, and short-time uptake fits.

A sweep walks one interface family through increasing generations at a
fixed mesh-to-feature ratio, solves the transmission problem on each,
and records the energy functional, the cold-side heat content at a probe
time, measure-regularity scans, and geometric convergence diagnostics
(symmetric-difference area of the hot regions, recovery-energy gaps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Callable, Sequence

import numpy as np
from shapely.geometry import Polygon

from .energy import EnergyReport, energy_forms, static_energy, trajectory_energy
from .fem import TriangleLocator, interpolate_p1
from .geometry import (
    UNIT_BOX,
    Box,
    InterfaceFamily,
    PolylineInterface,
    TwoSidedDomain,
    build_two_sided_domain,
    chain_sample_points,
    distance_to_segments,
    make_interface,
)
from .io import write_csv
from .measure import (
    BoundaryMeasure,
    geometric_radii,
    hausdorff_like_measure,
    upper_regularity_scan,
)
from .mesh import MeshMode, TwoSidedMesh, merge_interface, triangulate
from .solver import TransmissionProblem, assemble, solve_trajectory


class ExperimentError(ValueError):
    """Bad study parameters or an unusable reference field."""


# --- family scaling facts -----------------------------------------------------

_SIMILARITY_DIMENSION = {
    InterfaceFamily.FLAT: 1.0,
    InterfaceFamily.MINKOWSKI: math.log(8.0) / math.log(4.0),
    InterfaceFamily.KOCH: math.log(4.0) / math.log(3.0),
}


def similarity_dimension(family: InterfaceFamily | str) -> float:
    """Self-similarity exponent of the family's limit curve (flat: 1)."""
    fam = InterfaceFamily(family)
    try:
        return _SIMILARITY_DIMENSION[fam]
    except KeyError:
        raise ExperimentError(f"no scaling exponent on record for family {fam.value!r}")


def expected_uptake_exponent(family: InterfaceFamily | str) -> float:
    """Short-time growth exponent (2 - d)/2 of the cold-side heat content."""
    return 0.5 * (2.0 - similarity_dimension(family))


def feature_size(interface: PolylineInterface) -> float:
    """Shortest segment of the chain; the scale a mesh must resolve."""
    return float(interface.segment_lengths.min())


def _mesh_mode(interface: PolylineInterface) -> str:
    return MeshMode.STRUCTURED if interface.is_axis_aligned() else MeshMode.UNSTRUCTURED


def mesh_for_generation(
    family: InterfaceFamily | str,
    generation: int,
    h: float | None = None,
    box: Box = UNIT_BOX,
    merged: bool = False,
    max_dof: int | None = None,
) -> TwoSidedMesh:
    """Mesh one family member at h = feature/4 unless told otherwise."""
    chain = make_interface(family, generation)
    domain = build_two_sided_domain(box, chain)
    size = h if h is not None else feature_size(chain) / 4.0
    mesh = triangulate(domain, size, mode=_mesh_mode(chain), max_dof=max_dof)
    return merge_interface(mesh) if merged else mesh


# --- geometric convergence diagnostics ---------------------------------------


def symmetric_difference_area(a: TwoSidedDomain, b: TwoSidedDomain) -> float:
    """Area of the region where the two hot sides disagree."""
    pa = Polygon(a.plus_ring)
    pb = Polygon(b.plus_ring)
    return float(pa.symmetric_difference(pb).area)


def chain_hausdorff_estimate(
    a: PolylineInterface, b: PolylineInterface, n_samples: int = 512
) -> float:
    """Sampled two-sided Hausdorff distance between chains.

    Point-to-segment distances are exact; the sup over each chain is
    approximated on an arc-length sample joined with the vertices.
    """
    pts_a = np.vstack([chain_sample_points(a, n_samples), a.vertices])
    pts_b = np.vstack([chain_sample_points(b, n_samples), b.vertices])
    d_ab = distance_to_segments(pts_a, b.segment_starts, b.segment_ends).max()
    d_ba = distance_to_segments(pts_b, a.segment_starts, a.segment_ends).max()
    return float(max(d_ab, d_ba))


# --- measure-weighted static functional ---------------------------------------


def measure_coupling(measure: BoundaryMeasure) -> np.ndarray:
    """Per-segment coefficients that turn the jump form into the measure integral.

    With coefficient weight/length on each segment, summing jump^2 times
    edge length over the tiling edges reproduces the integral of jump^2
    against the boundary measure.
    """
    return measure.weights / measure.interface.segment_lengths


def reference_witness(x, y):
    """Smooth jump-free field used for default recovery diagnostics.

    Strictly increasing in y, so flipped motif cells above and below the
    interface never cancel each other in the energy difference.
    """
    return np.sin(np.pi * x) * np.exp(y)


def _as_field_pair(u):
    if callable(u):
        return ("call", u, u, None)
    if isinstance(u, (tuple, list)):
        if len(u) == 2 and callable(u[0]) and callable(u[1]):
            return ("call", u[0], u[1], None)
        if len(u) == 3 and isinstance(u[0], TwoSidedMesh):
            return ("transfer", u[1], u[2], u[0])
    raise ExperimentError(
        "field must be a callable, a (plus, minus) callable pair, or a "
        "(reference mesh, plus values, minus values) triple"
    )


def _sample_callables(mesh: TwoSidedMesh, f_plus: Callable, f_minus: Callable) -> np.ndarray:
    u = np.zeros(mesh.n_vertices)
    for side, f in ((-1, f_minus), (+1, f_plus)):
        ids = mesh.side_dofs(side)
        xy = mesh.vertices[ids]
        u[ids] = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)
    return u


def _transfer_nodal(
    mesh: TwoSidedMesh, ref: TwoSidedMesh, vals_plus: np.ndarray, vals_minus: np.ndarray
) -> np.ndarray:
    """Side-tagged nodal transfer of an extension pair from a reference mesh."""
    locator = TriangleLocator(ref.vertices, ref.triangles)
    u = np.zeros(mesh.n_vertices)
    for side, vals in ((-1, vals_minus), (+1, vals_plus)):
        v = np.asarray(vals, dtype=float)
        if v.shape != (ref.n_vertices,):
            raise ExperimentError(
                f"incompatible reference mesh: field has shape {v.shape}, "
                f"reference holds {ref.n_vertices} dofs"
            )
        ids = mesh.side_dofs(side)
        out = interpolate_p1(ref.vertices, ref.triangles, v, mesh.vertices[ids], locator)
        if np.isnan(out).any():
            raise ExperimentError(
                "incompatible reference mesh: target vertices fall outside it"
            )
        u[ids] = out
    return u


def _nodal_field(mesh: TwoSidedMesh, u) -> np.ndarray:
    if isinstance(u, np.ndarray):
        return u
    kind, fp, fm, ref = _as_field_pair(u)
    if kind == "call":
        return _sample_callables(mesh, fp, fm)
    return _transfer_nodal(mesh, ref, fp, fm)


def static_functional(
    mesh: TwoSidedMesh,
    measure: BoundaryMeasure,
    problem: TransmissionProblem,
    u,
) -> EnergyReport:
    """Energy functional of a time-constant field; jump term against the measure.

    The problem's scalar coupling multiplies the measure density. At
    infinite coupling the jump form vanishes (such meshes are merged and
    carry no live interface edges).
    """
    lam = np.asarray(problem.coupling, dtype=float)
    if lam.ndim != 0:
        raise ExperimentError("measure-weighted functional needs a scalar coupling")
    if np.isinf(lam):
        eff = np.zeros(measure.interface.n_segments)
    else:
        eff = float(lam) * measure_coupling(measure)
    prob = replace(problem, coupling=eff)
    return static_energy(mesh, prob, _nodal_field(mesh, u))


def recovery_check(
    coarse: tuple[TwoSidedDomain, BoundaryMeasure],
    fine: tuple[TwoSidedDomain, BoundaryMeasure],
    u,
    problem: TransmissionProblem,
    h_coarse: float | None = None,
    h_fine: float | None = None,
    max_dof: int | None = None,
) -> float:
    """Energy gap of one field restricted to two generations of a family.

    The field is transferred to each candidate by side tags (plus sheet
    gets the hot-side extension, minus sheet the cold-side one) and the
    static functionals are compared.
    """
    j_c = _candidate_energy(coarse, u, problem, h_coarse, max_dof)
    j_f = _candidate_energy(fine, u, problem, h_fine, max_dof)
    return abs(j_f.total - j_c.total)


def _candidate_energy(candidate, u, problem, h, max_dof) -> EnergyReport:
    domain, measure = candidate
    chain = domain.interface
    if measure.interface is not chain and measure.interface.n_segments != chain.n_segments:
        raise ExperimentError("measure and domain describe different chains")
    size = h if h is not None else feature_size(chain) / 4.0
    mesh = triangulate(domain, size, mode=_mesh_mode(chain), max_dof=max_dof)
    return static_functional(mesh, measure, problem, u)


# --- generation sweep ---------------------------------------------------------


@dataclass
class SweepRow:
    """One generation's diagnostics; recovery_gap and symdiff_prev look back one row."""

    generation: int
    h: float
    dt: float
    volume_plus: float
    chain_length: float
    measure_mass: float
    c_d_estimate: float
    script_j: float
    q_minus_at_tstar: float
    recovery_gap: float
    symdiff_prev: float
    n_dofs: int

    @staticmethod
    def csv_header() -> list[str]:
        return [f.name for f in fields(SweepRow)]

    def csv_row(self) -> list:
        return [getattr(self, f.name) for f in fields(SweepRow)]


def mosco_sweep(
    family: InterfaceFamily | str,
    generations: Sequence[int],
    problem: TransmissionProblem,
    tstar: float,
    box: Box = UNIT_BOX,
    h_rule: Callable[[int, float], float] | None = None,
    dt_rule: Callable[[int, float], float] | None = None,
    exponent: float | None = None,
    witness: Callable = reference_witness,
    coupling_rule: str = "fixed",
    regularity_centers=None,
    regularity_radii=None,
    max_dof: int | None = None,
    return_curves: bool = False,
):
    """Solve one family across generations and tabulate convergence diagnostics.

    Defaults keep discretization error comparable between rows: mesh size
    feature/4 and time step h^2/4, both overridable through the rules
    (called with (generation, feature size) and (generation, h)). A scalar
    infinite coupling merges each mesh. With return_curves the full
    (times, cold-side content) series accompany the table, keyed by
    generation.

    coupling_rule "fixed" runs every generation at the problem's own
    coupling; "measure" multiplies the problem's scalar coupling by each
    generation's measure density (weight over length per segment), the
    scaling under which the jump term integrates against the measure and
    the functional has a generation limit.
    """
    gens = list(generations)
    if not gens or any(b <= a for a, b in zip(gens, gens[1:])):
        raise ExperimentError("generations must be strictly increasing and nonempty")
    lam = np.asarray(problem.coupling, dtype=float)
    merged = lam.ndim == 0 and np.isinf(lam)
    if coupling_rule not in ("fixed", "measure"):
        raise ExperimentError(f"unknown coupling rule {coupling_rule!r}")
    if coupling_rule == "measure" and (lam.ndim != 0 or merged):
        raise ExperimentError("the measure coupling rule needs a finite scalar coupling")
    if not (0.0 < tstar <= problem.t_final * (1.0 + 1e-12)):
        raise ExperimentError(
            f"probe time {tstar!r} must lie in (0, t_final={problem.t_final!r}]"
        )
    fam = InterfaceFamily(family)
    d = exponent if exponent is not None else similarity_dimension(fam)
    if regularity_radii is None:
        # Stay at or above the coarsest feature scale so the scanned constant
        # is comparable between rows; below its own feature size a prefractal
        # measure scales like arc length and the ratio diverges as r shrinks.
        regularity_radii = geometric_radii(1.0 / 16.0, 0.5, 12)

    rows: list[SweepRow] = []
    curves: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    prev_domain: TwoSidedDomain | None = None
    prev_witness_j: float | None = None
    for g in gens:
        chain = make_interface(fam, g)
        domain = build_two_sided_domain(box, chain)
        seg = feature_size(chain)
        h = h_rule(g, seg) if h_rule else seg / 4.0
        dt = dt_rule(g, h) if dt_rule else h * h / 4.0
        k_star = int(round(tstar / dt))
        if k_star < 1 or abs(k_star * dt - tstar) > 1e-9 * max(1.0, tstar):
            raise ExperimentError(
                f"dt={dt!r} at generation {g} does not hit the probe time {tstar!r}"
            )
        mesh = triangulate(domain, h, mode=_mesh_mode(chain), max_dof=max_dof)
        if merged:
            mesh = merge_interface(mesh)
        measure = hausdorff_like_measure(chain, d)
        scan = upper_regularity_scan(
            measure, d, centers=regularity_centers, radii=regularity_radii
        )

        if coupling_rule == "measure":
            prob_g = replace(problem, dt=dt, coupling=float(lam) * measure_coupling(measure))
        else:
            prob_g = replace(problem, dt=dt)
        mats = assemble(mesh, prob_g)
        traj = solve_trajectory(mesh, prob_g, mats, quad_forms=energy_forms(mats))
        report = trajectory_energy(mesh, prob_g, mats, traj)

        witness_j = static_functional(mesh, measure, problem, witness).total
        rows.append(
            SweepRow(
                generation=g,
                h=h,
                dt=dt,
                volume_plus=domain.volume_plus,
                chain_length=chain.total_length,
                measure_mass=measure.total_mass,
                c_d_estimate=scan.constant,
                script_j=report.total,
                q_minus_at_tstar=float(traj.mass_minus[k_star]),
                recovery_gap=(
                    float("nan") if prev_witness_j is None else abs(witness_j - prev_witness_j)
                ),
                symdiff_prev=(
                    float("nan")
                    if prev_domain is None
                    else symmetric_difference_area(prev_domain, domain)
                ),
                n_dofs=mesh.n_vertices,
            )
        )
        if return_curves:
            curves[g] = (traj.times.copy(), traj.mass_minus.copy())
        prev_domain = domain
        prev_witness_j = witness_j
    return (rows, curves) if return_curves else rows


def write_sweep_csv(rows: Sequence[SweepRow], path, scenario: str | None = None) -> None:
    write_csv(path, SweepRow.csv_header(), (r.csv_row() for r in rows), scenario=scenario)


# --- convergence diagnosis ----------------------------------------------------


@dataclass
class ConvergenceDiagnosis:
    differences: np.ndarray
    ratios: np.ndarray
    cauchy_like: bool
    verdict: str


def energy_convergence(table) -> ConvergenceDiagnosis:
    """Successive energy differences and their ratios over a sweep table.

    Cauchy-like means every ratio over the last two increments is at most
    0.8; a reported heuristic, not an assertion.
    """
    values = np.array(
        [row.script_j if isinstance(row, SweepRow) else float(row) for row in table]
    )
    if len(values) < 3:
        raise ExperimentError("need at least three rows to diagnose convergence")
    diffs = np.abs(np.diff(values))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = diffs[1:] / diffs[:-1]
    ratios = np.where(np.isnan(ratios), 0.0, ratios)
    cauchy = bool(np.all(ratios[-2:] <= 0.8))
    return ConvergenceDiagnosis(
        differences=diffs,
        ratios=ratios,
        cauchy_like=cauchy,
        verdict="convergent" if cauchy else "not convergent",
    )


# --- short-time uptake exponent -----------------------------------------------


@dataclass
class UptakeFit:
    """Log-log slope of the cold-side heat content over a time window."""

    alpha: float
    prefactor: float
    residual: float
    window: tuple[float, float]
    n_points: int

    @staticmethod
    def csv_header() -> list[str]:
        return ["alpha", "residual", "t_min", "t_max", "n_points"]

    def csv_row(self) -> list:
        return [self.alpha, self.residual, self.window[0], self.window[1], self.n_points]


def degennes_fit(curve: tuple[np.ndarray, np.ndarray], window: tuple[float, float]) -> UptakeFit:
    """Least-squares exponent of Q(t) ~ c t^alpha on the stored times in a window.

    The window is caller-chosen; there is no automatic regime detection.
    """
    times, values = (np.asarray(a, dtype=float) for a in curve)
    if times.shape != values.shape:
        raise ExperimentError("curve times and values differ in length")
    t_min, t_max = float(window[0]), float(window[1])
    if not (0.0 < t_min < t_max):
        raise ExperimentError(f"window must satisfy 0 < t_min < t_max, got {window!r}")
    inside = (times >= t_min) & (times <= t_max)
    if (values[inside] <= 0.0).any():
        raise ExperimentError("curve must be strictly positive on the fit window")
    n = int(inside.sum())
    if n < 4:
        raise ExperimentError(f"need at least 4 points in the window, found {n}")
    lt = np.log(times[inside])
    lq = np.log(values[inside])
    slope, intercept = np.polyfit(lt, lq, 1)
    resid = lq - (slope * lt + intercept)
    return UptakeFit(
        alpha=float(slope),
        prefactor=float(np.exp(intercept)),
        residual=float(np.sqrt(np.mean(resid**2))),
        window=(t_min, t_max),
        n_points=n,
    )


def uptake_curve(
    family: InterfaceFamily | str,
    generation: int,
    h: float,
    t_final: float,
    dt: float,
    diffusivity: float = 1.0,
    box: Box = UNIT_BOX,
    max_dof: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Cold-side heat content under perfect contact (merged interface)."""
    mesh = mesh_for_generation(family, generation, h=h, box=box, merged=True, max_dof=max_dof)
    problem = TransmissionProblem(
        diffusivity_plus=diffusivity,
        diffusivity_minus=diffusivity,
        coupling=math.inf,
        t_final=t_final,
        dt=dt,
    )
    traj = solve_trajectory(mesh, problem)
    return traj.times, traj.mass_minus


def write_fit_csv(fits: Sequence[UptakeFit], path, scenario: str | None = None) -> None:
    write_csv(path, UptakeFit.csv_header(), (f.csv_row() for f in fits), scenario=scenario)
