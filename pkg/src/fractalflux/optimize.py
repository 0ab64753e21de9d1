"""Finite-family shape search: enumerate admissible interfaces, rank by energy.

Families are parameter grids (prefractal generations, or vertex offsets of
a base chain with a volume-restoring shear). Search is exhaustive or a
steepest-descent walk on the grid; there are no shape derivatives here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .energy import trajectory_energy
from .experiments import feature_size, measure_coupling
from .geometry import (
    UNIT_BOX,
    AdmissibilityConstraints,
    AdmissibilityMode,
    AdmissibilityReport,
    Box,
    GeometryError,
    InterfaceFamily,
    PolylineInterface,
    SamplingBudget,
    TwoSidedDomain,
    build_two_sided_domain,
    check_admissible,
    make_interface,
)
from .io import write_csv
from .measure import BoundaryMeasure, MeasureError, hausdorff_like_measure
from .mesh import MeshError, MeshMode, merge_interface, triangulate
from .solver import SolverError, TransmissionProblem


class OptimizeError(ValueError):
    """Family construction or search cannot proceed."""


class FamilyKind(str, Enum):
    PREFRACTAL_GENERATION = "prefractal_generation"
    PERTURBED_POLYLINE = "perturbed_polyline"


class SearchMethod(str, Enum):
    EXHAUSTIVE = "exhaustive"
    GREEDY_LOCAL = "greedy_local"


@dataclass
class MeshParams:
    """Per-candidate meshing knobs; h wins over the feature ratio."""

    h: Optional[float] = None
    h_per_feature: float = 4.0
    max_dof: Optional[int] = None

    def size_for(self, chain: PolylineInterface) -> float:
        if self.h is not None:
            return self.h
        return feature_size(chain) / self.h_per_feature


@dataclass
class ShapeFamily:
    """A finite grid of interface candidates under one constraint set.

    PREFRACTAL_GENERATION enumerates make_interface(family, g) for g in
    generations. PERTURBED_POLYLINE moves the interior vertices of an
    x-monotone base chain vertically by every combination of the per-vertex
    offset axes, then shears along a tent profile (zero at the anchors) so
    the enclosed volume is restored exactly.

    exponent sets each candidate's measure weighting; None means the
    family's self-similarity dimension (custom bases fall back to arc
    length). Lipschitz-mode constraints force arc length regardless.
    """

    kind: FamilyKind | str
    constraints: AdmissibilityConstraints
    family: InterfaceFamily | str | None = None
    generations: Sequence[int] = ()
    base: PolylineInterface | None = None
    offsets: Sequence[Sequence[float]] = ()
    exponent: Optional[float] = None
    box: Box = UNIT_BOX


@dataclass
class Candidate:
    """One admissible family member with its measure and audit report.

    mesh_mode is fixed at enumeration time so every member of a perturbed
    family meshes the same way (degenerate offsets can straighten a chain,
    and flipping it to a structured grid would bias its energy against its
    neighbors).
    """

    cand_id: int
    generation: int
    params: tuple[float, ...]
    grid_index: tuple[int, ...]
    domain: TwoSidedDomain
    measure: BoundaryMeasure
    report: AdmissibilityReport
    mesh_mode: MeshMode | None = None

    @property
    def rank_key(self) -> tuple:
        return (self.generation, self.params)


def tent_profile(x: np.ndarray) -> np.ndarray:
    """Piecewise-linear bump over [x0, x1], zero at both ends, peak 1."""
    lo, hi = x[0], x[-1]
    half = 0.5 * (hi - lo)
    return np.minimum(x - lo, hi - x) / half


def perturbed_chain(base: PolylineInterface, delta: Sequence[float]) -> PolylineInterface:
    """Offset interior vertices vertically, restoring the enclosed area.

    The area under an x-monotone chain is linear in the vertex heights
    (weight (x_{i+1} - x_{i-1})/2 per interior vertex), so adding the
    right multiple of the tent profile cancels the offsets' area change
    exactly.
    """
    v = base.vertices
    x = v[:, 0]
    if not np.all(np.diff(x) > 0.0):
        raise OptimizeError("perturbed families need an x-monotone base chain")
    n_int = len(v) - 2
    d = np.asarray(delta, dtype=float)
    if d.shape != (n_int,):
        raise OptimizeError(
            f"offset vector needs one entry per interior vertex ({n_int}), got {d.shape}"
        )
    if n_int == 0:
        return base
    w = 0.5 * (x[2:] - x[:-2])
    tent = tent_profile(x)[1:-1]
    shear = -float(np.dot(d, w)) / float(np.dot(tent, w))
    out = v.copy()
    out[1:-1, 1] += d + shear * tent
    return PolylineInterface(out, family=InterfaceFamily.CUSTOM, generation=base.generation,
                             base_length=base.base_length)


def _candidate_exponent(family: ShapeFamily, chain: PolylineInterface) -> float:
    if family.constraints.mode is AdmissibilityMode.LIPSCHITZ:
        return 1.0
    if family.exponent is not None:
        return family.exponent
    from .experiments import _SIMILARITY_DIMENSION

    return _SIMILARITY_DIMENSION.get(chain.family, 1.0)


def _raw_candidates(family: ShapeFamily):
    """Yield (generation, params, grid_index, chain, mode) in canonical grid order."""
    kind = FamilyKind(family.kind)
    if kind is FamilyKind.PREFRACTAL_GENERATION:
        if family.family is None or len(family.generations) == 0:
            raise OptimizeError("prefractal families need a family tag and generations")
        gens = sorted(set(int(g) for g in family.generations))
        for k, g in enumerate(gens):
            chain = make_interface(family.family, g)
            mode = MeshMode.STRUCTURED if chain.is_axis_aligned() else MeshMode.UNSTRUCTURED
            yield g, (float(g),), (k,), chain, mode
        return
    if family.base is None or len(family.offsets) == 0:
        raise OptimizeError("perturbed families need a base chain and offset axes")
    n_int = len(family.base.vertices) - 2
    if len(family.offsets) != n_int:
        raise OptimizeError(
            f"need one offset axis per interior vertex ({n_int}), got {len(family.offsets)}"
        )
    axes = [sorted(float(o) for o in axis) for axis in family.offsets]
    for idx in product(*(range(len(a)) for a in axes)):
        delta = tuple(axes[j][i] for j, i in enumerate(idx))
        yield (family.base.generation, delta, idx,
               perturbed_chain(family.base, delta), MeshMode.UNSTRUCTURED)


def enumerate_admissible(
    family: ShapeFamily,
    budget: SamplingBudget | None = None,
    keep_all: bool = False,
):
    """Build, audit, and filter every candidate on the family's grid.

    Returns the passing candidates; with keep_all, also the audit outcome
    of every grid point as (generation, params, report-or-failure-string).
    Chains whose domain cannot be built (self-crossing offsets, anchors
    off the box) count as filtered, not as errors.
    """
    passing: list[Candidate] = []
    audit: list[tuple[int, tuple[float, ...], object]] = []
    next_id = 0
    for generation, params, idx, chain, mode in _raw_candidates(family):
        try:
            domain = build_two_sided_domain(family.box, chain)
        except GeometryError as exc:
            audit.append((generation, params, f"build failed: {exc}"))
            continue
        try:
            measure = hausdorff_like_measure(chain, _candidate_exponent(family, chain))
        except MeasureError as exc:
            audit.append((generation, params, f"measure failed: {exc}"))
            continue
        report = check_admissible(domain, family.constraints, budget, measure=measure)
        audit.append((generation, params, report))
        if report.passed:
            passing.append(
                Candidate(next_id, generation, params, idx, domain, measure,
                          report, mesh_mode=mode)
            )
            next_id += 1
    return (passing, audit) if keep_all else passing


# --- candidate evaluation -------------------------------------------------


@dataclass
class RankingEntry:
    cand_id: int
    generation: int
    params: tuple[float, ...]
    volume: float
    measure_mass: float
    admissible: bool
    script_j: float
    status: str

    @staticmethod
    def csv_header() -> list[str]:
        return ["cand_id", "params", "generation", "volume", "measure_mass",
                "admissible", "script_j", "status"]

    def csv_row(self) -> list:
        return [self.cand_id, ";".join(f"{p:.17g}" for p in self.params),
                self.generation, self.volume, self.measure_mass,
                self.admissible, self.script_j, self.status]


@dataclass
class OptimizationResult:
    best: Candidate
    best_energy: float
    method: SearchMethod
    ranking: list[RankingEntry]
    n_evaluated: int
    candidates: list[Candidate] = field(default_factory=list)

    @property
    def best_domain(self) -> TwoSidedDomain:
        return self.best.domain

    @property
    def best_measure(self) -> BoundaryMeasure:
        return self.best.measure

    def candidate(self, cand_id: int) -> Candidate:
        for c in self.candidates:
            if c.cand_id == cand_id:
                return c
        raise OptimizeError(f"no candidate with id {cand_id}")


def evaluate_candidate(
    candidate: Candidate,
    problem: TransmissionProblem,
    mesh_params: MeshParams | None = None,
) -> float:
    """Energy functional of the transmission run on one candidate.

    Finite scalar coupling integrates the jump term against the
    candidate's own measure (the scalar is multiplied by the measure
    density per segment). Infinite coupling merges the interface nodes
    instead, the perfect-contact limit, and the measure drops out.
    """
    lam = np.asarray(problem.coupling, dtype=float)
    if lam.ndim != 0:
        raise OptimizeError("candidate evaluation needs a scalar coupling")
    mp = mesh_params or MeshParams()
    chain = candidate.domain.interface
    mode = candidate.mesh_mode
    if mode is None:
        mode = MeshMode.STRUCTURED if chain.is_axis_aligned() else MeshMode.UNSTRUCTURED
    mesh = triangulate(candidate.domain, mp.size_for(chain), mode=mode, max_dof=mp.max_dof)
    if math.isinf(lam):
        mesh = merge_interface(mesh)
        prob = problem
    else:
        prob = replace(problem, coupling=float(lam) * measure_coupling(candidate.measure))
    return trajectory_energy(mesh, prob).total


def _entry(candidate: Candidate, j: float, status: str) -> RankingEntry:
    return RankingEntry(
        cand_id=candidate.cand_id,
        generation=candidate.generation,
        params=candidate.params,
        volume=candidate.domain.volume_plus,
        measure_mass=candidate.measure.total_mass,
        admissible=candidate.report.passed,
        script_j=j,
        status=status,
    )


class _Memo:
    """Evaluation cache plus failure log, shared by both search methods."""

    def __init__(self, problem, mesh_params):
        self.problem = problem
        self.mesh_params = mesh_params
        self.values: dict[int, float] = {}
        self.status: dict[int, str] = {}

    def __call__(self, candidate: Candidate) -> float:
        if candidate.cand_id not in self.values:
            try:
                j = evaluate_candidate(candidate, self.problem, self.mesh_params)
                self.status[candidate.cand_id] = "ok"
            except (SolverError, MeshError, GeometryError, MeasureError) as exc:
                j = math.nan
                self.status[candidate.cand_id] = f"failed: {exc}"
            self.values[candidate.cand_id] = j
        return self.values[candidate.cand_id]


def _argmin(candidates: Sequence[Candidate], memo: _Memo) -> Candidate | None:
    best = None
    for cand in candidates:
        j = memo(cand)
        if math.isnan(j):
            continue
        if best is None or (j, cand.rank_key) < (memo(best), best.rank_key):
            best = cand
    return best


def _greedy_walk(candidates: Sequence[Candidate], memo: _Memo) -> Candidate | None:
    by_index = {c.grid_index: c for c in candidates}
    current = None
    for cand in sorted(candidates, key=lambda c: c.rank_key):
        if not math.isnan(memo(cand)):
            current = cand
            break
    if current is None:
        return None
    while True:
        neighbors = []
        for axis in range(len(current.grid_index)):
            for step in (-1, +1):
                idx = list(current.grid_index)
                idx[axis] += step
                nb = by_index.get(tuple(idx))
                if nb is not None:
                    neighbors.append(nb)
        moved = None
        for nb in sorted(neighbors, key=lambda c: c.rank_key):
            j = memo(nb)
            if math.isnan(j):
                continue
            if j < memo(current) and (moved is None or j < memo(moved)):
                moved = nb
        if moved is None:
            return current
        current = moved


def optimize_shape(
    family: ShapeFamily | Sequence[Candidate],
    problem: TransmissionProblem,
    mesh_params: MeshParams | None = None,
    method: SearchMethod | str = SearchMethod.EXHAUSTIVE,
    budget: SamplingBudget | None = None,
) -> OptimizationResult:
    """Minimize the energy functional over an admissible family.

    Exhaustive evaluates everything and returns the argmin with the
    deterministic tie-break (lowest generation, then lexicographic
    parameters). GreedyLocal walks the grid by steepest descent from the
    lexicographically first candidate and stops in a grid-local minimum,
    so its value never beats Exhaustive. Solver failures are recorded per
    candidate and skipped.
    """
    method = SearchMethod(method)
    if isinstance(family, ShapeFamily):
        candidates = enumerate_admissible(family, budget)
    else:
        candidates = list(family)
    if not candidates:
        raise OptimizeError("no admissible candidates to optimize over")
    memo = _Memo(problem, mesh_params)
    if method is SearchMethod.EXHAUSTIVE:
        best = _argmin(candidates, memo)
    else:
        best = _greedy_walk(candidates, memo)
    if best is None or math.isnan(memo(best)):
        raise OptimizeError("every candidate evaluation failed")
    evaluated = [c for c in candidates if c.cand_id in memo.values]
    ranking = [_entry(c, memo.values[c.cand_id], memo.status[c.cand_id])
               for c in evaluated]
    ranking.sort(key=lambda e: e.cand_id)
    return OptimizationResult(
        best=best,
        best_energy=memo.values[best.cand_id],
        method=method,
        ranking=ranking,
        n_evaluated=len(evaluated),
        candidates=list(candidates),
    )


def write_ranking_csv(result: OptimizationResult, path, scenario: str | None = None) -> None:
    write_csv(
        path,
        RankingEntry.csv_header(),
        (e.csv_row() for e in result.ranking),
        scenario=scenario,
        comments=[f"method {result.method.value}", f"best {result.best.cand_id}"],
    )


# --- Lipschitz vs uniform gap -----------------------------------------------


@dataclass
class GapStudyReport:
    """Best energies of the two shape classes and the Lipschitz trend.

    perimeter_trend pairs each Lipschitz candidate's chain length with its
    energy, ordered by length; trend_nonincreasing records (not asserts)
    whether longer admissible chains kept lowering the functional, the
    sign that the class infimum sits at its irregularity cutoff.
    """

    lipschitz_best: float
    uniform_best: float
    gap: float
    perimeter_trend: list[tuple[float, float]]
    trend_nonincreasing: bool
    lipschitz_result: OptimizationResult
    uniform_result: OptimizationResult


def lipschitz_gap_study(
    lipschitz_family: ShapeFamily,
    uniform_family: ShapeFamily,
    problem: TransmissionProblem,
    mesh_params: MeshParams | None = None,
    budget: SamplingBudget | None = None,
) -> GapStudyReport:
    """Compare the optimal energies reachable in the two admissible classes."""
    if AdmissibilityMode(lipschitz_family.constraints.mode) is not AdmissibilityMode.LIPSCHITZ:
        raise OptimizeError("first family must carry Lipschitz constraints")
    if AdmissibilityMode(uniform_family.constraints.mode) is not AdmissibilityMode.UNIFORM:
        raise OptimizeError("second family must carry uniform constraints")
    lip = optimize_shape(lipschitz_family, problem, mesh_params, budget=budget)
    uni = optimize_shape(uniform_family, problem, mesh_params, budget=budget)

    trend = sorted(
        ((lip.candidate(e.cand_id).domain.interface.total_length, e.script_j)
         for e in lip.ranking if e.status == "ok"),
        key=lambda t: t[0],
    )
    nonincreasing = all(b[1] <= a[1] * (1 + 1e-12) for a, b in zip(trend, trend[1:]))
    return GapStudyReport(
        lipschitz_best=lip.best_energy,
        uniform_best=uni.best_energy,
        gap=lip.best_energy - uni.best_energy,
        perimeter_trend=trend,
        trend_nonincreasing=nonincreasing,
        lipschitz_result=lip,
        uniform_result=uni,
    )
