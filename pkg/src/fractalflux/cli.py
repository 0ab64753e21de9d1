"""JSON-scenario command line: generate, solve, mosco, optimize, trace-check.

A scenario file describes one geometry/measure/problem/mesh/outputs setup.
Validation is strict: unknown keys and malformed values are rejected up
front with the offending key path, before any computation starts. Every
output file carries the scenario hash in a header comment.

Exit codes: 0 all requested outputs written and hard checks passed;
1 trace-check found a failing property; 2 scenario, family, or geometry
rejected; 3 the run itself failed (solver breakdown, empty family).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .experiments import ExperimentError, mosco_sweep, write_sweep_csv
from .geometry import (
    AdmissibilityConstraints,
    AdmissibilityMode,
    Box,
    GeometryError,
    InterfaceFamily,
    PolylineInterface,
    SamplingBudget,
    build_two_sided_domain,
    check_admissible,
    make_interface,
    write_polyline,
)
from .io import scenario_hash, write_csv
from .measure import BoundaryMeasure, MeasureError, hausdorff_like_measure, write_measure
from .mesh import MeshError, MeshMode, merge_interface, triangulate, write_mesh, write_vtk
from .optimize import (
    FamilyKind,
    MeshParams,
    OptimizeError,
    SearchMethod,
    ShapeFamily,
    optimize_shape,
    write_ranking_csv,
)
from .solver import (
    SolverError,
    TransmissionProblem,
    energy_identity_residual,
    solve_trajectory,
)
from .trace import (
    TraceError,
    extension_energy,
    nodal_trace,
    one_harmonic_extension,
    trace_norm,
    trace_pairing,
    weak_normal_derivative,
)


class ScenarioError(ValueError):
    """A scenario or family file violates the schema."""


def _bad(path: str, msg: str) -> None:
    raise ScenarioError(f"{path}: {msg}")


def _require_block(data: dict, key: str, origin: str, required: bool) -> Optional[dict]:
    if key not in data:
        if required:
            _bad(f"{origin}.{key}", "required block is missing")
        return None
    block = data[key]
    if not isinstance(block, dict):
        _bad(f"{origin}.{key}", "must be an object")
    return block


def _reject_unknown(block: dict, allowed: Sequence[str], path: str) -> None:
    for key in block:
        if key not in allowed:
            _bad(f"{path}.{key}", "unknown key")


def _number(block: dict, key: str, path: str, default=None, required=False,
            minimum=None, maximum=None, exclusive_min=False):
    if key not in block:
        if required:
            _bad(f"{path}.{key}", "required value is missing")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _bad(f"{path}.{key}", f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        _bad(f"{path}.{key}", "must be finite")
    if minimum is not None and (value <= minimum if exclusive_min else value < minimum):
        word = "above" if exclusive_min else "at least"
        _bad(f"{path}.{key}", f"must be {word} {minimum}, got {value}")
    if maximum is not None and value > maximum:
        _bad(f"{path}.{key}", f"must be at most {maximum}, got {value}")
    return value


def _integer(block: dict, key: str, path: str, default=None, required=False, minimum=None):
    if key not in block:
        if required:
            _bad(f"{path}.{key}", "required value is missing")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, int):
        _bad(f"{path}.{key}", f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _bad(f"{path}.{key}", f"must be at least {minimum}, got {value}")
    return value


def _choice(block: dict, key: str, path: str, choices: Sequence[str], default=None,
            required=False):
    if key not in block:
        if required:
            _bad(f"{path}.{key}", "required value is missing")
        return default
    value = block[key]
    if value not in choices:
        _bad(f"{path}.{key}", f"expected one of {sorted(choices)}, got {value!r}")
    return value


def _corners(value, path: str) -> Box:
    if (not isinstance(value, list) or len(value) != 4
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
        _bad(path, "expected [xmin, ymin, xmax, ymax]")
    try:
        return Box(*map(float, value))
    except GeometryError as exc:
        _bad(path, str(exc))


def _point_rows(value, path: str, min_rows: int) -> np.ndarray:
    ok = isinstance(value, list) and len(value) >= min_rows and all(
        isinstance(row, list) and len(row) == 2
        and all(not isinstance(v, bool) and isinstance(v, (int, float)) for v in row)
        for row in value
    )
    if not ok:
        _bad(path, f"expected at least {min_rows} [x, y] rows")
    return np.asarray(value, dtype=float)


@dataclass
class Scenario:
    """Validated scenario file, still in declarative form."""

    family: str
    generation: int
    vertices: Optional[np.ndarray]
    box: Box
    anchors: tuple[tuple[float, float], tuple[float, float]]
    confinement: Optional[Box]
    d: Optional[float]
    weights: Optional[list]
    diffusivity_plus: float
    diffusivity_minus: float
    coupling: object          # float, math.inf, or list of floats
    source_constant: Optional[float]
    t_final: float
    dt: float
    theta: float
    mesh_h: Optional[float]
    mesh_ratio: float
    mesh_mode: str
    out_dir: str
    stride: int
    formats: tuple[str, ...]
    hash: str


_GEOMETRY_KEYS = ("family", "generation", "base_length", "box", "anchors",
                  "confinement", "vertices")
_MEASURE_KEYS = ("d", "weights")
_PROBLEM_KEYS = ("D_plus", "D_minus", "lambda", "u0", "f", "T", "dt", "theta")
_MESH_KEYS = ("h", "h_ratio", "mode")
_OUTPUT_KEYS = ("directory", "snapshot_stride", "formats")


def parse_scenario(data: dict, origin: str = "scenario") -> Scenario:
    if not isinstance(data, dict):
        _bad(origin, "top level must be an object")
    _reject_unknown(data, ("geometry", "measure", "problem", "mesh", "outputs"), origin)

    geo = _require_block(data, "geometry", origin, required=True)
    gpath = f"{origin}.geometry"
    _reject_unknown(geo, _GEOMETRY_KEYS, gpath)
    family = _choice(geo, "family", gpath, ("flat", "minkowski", "koch", "custom"),
                     required=True)
    box = _corners(geo["box"], f"{gpath}.box") if "box" in geo else Box(0.0, 0.0, 1.0, 1.0)
    confinement = (_corners(geo["confinement"], f"{gpath}.confinement")
                   if "confinement" in geo else None)

    vertices = None
    generation = 0
    mid = 0.5 * (box.ymin + box.ymax)
    anchors = ((box.xmin, mid), (box.xmax, mid))
    if family == "custom":
        for key in ("generation", "base_length", "anchors"):
            if key in geo:
                _bad(f"{gpath}.{key}", "not allowed for a custom chain")
        if "vertices" not in geo:
            _bad(f"{gpath}.vertices", "required for a custom chain")
        vertices = _point_rows(geo["vertices"], f"{gpath}.vertices", min_rows=2)
    else:
        if "vertices" in geo:
            _bad(f"{gpath}.vertices", "only allowed for a custom chain")
        generation = _integer(geo, "generation", gpath, default=0, minimum=0)
        if "anchors" in geo and "base_length" in geo:
            _bad(f"{gpath}.base_length", "give either anchors or base_length, not both")
        if "anchors" in geo:
            pts = _point_rows(geo["anchors"], f"{gpath}.anchors", min_rows=2)
            if len(pts) != 2:
                _bad(f"{gpath}.anchors", "expected exactly two points")
            anchors = (tuple(pts[0]), tuple(pts[1]))
        elif "base_length" in geo:
            length = _number(geo, "base_length", gpath, minimum=0.0, exclusive_min=True)
            if length > box.width:
                _bad(f"{gpath}.base_length", f"exceeds the box width {box.width}")
            x0 = box.xmin + 0.5 * (box.width - length)
            anchors = ((x0, mid), (x0 + length, mid))

    mea = _require_block(data, "measure", origin, required=False) or {}
    mpath = f"{origin}.measure"
    _reject_unknown(mea, _MEASURE_KEYS, mpath)
    d = _number(mea, "d", mpath, default=None, minimum=0.0)
    weights = None
    if "weights" in mea:
        raw = mea["weights"]
        if (not isinstance(raw, list) or not raw
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw)):
            _bad(f"{mpath}.weights", "expected a nonempty list of numbers")
        if any(v < 0 for v in raw):
            _bad(f"{mpath}.weights", "weights must be nonnegative")
        weights = [float(v) for v in raw]

    prob = _require_block(data, "problem", origin, required=False)
    ppath = f"{origin}.problem"
    if prob is None:
        # generate-only scenarios may omit the problem; solving requires it
        d_plus = d_minus = 1.0
        coupling: object = 1.0
        source_constant = None
        t_final, dt, theta = 1.0, 1.0, 1.0
    else:
        _reject_unknown(prob, _PROBLEM_KEYS, ppath)
        d_plus = _number(prob, "D_plus", ppath, default=1.0, minimum=0.0, exclusive_min=True)
        d_minus = _number(prob, "D_minus", ppath, default=1.0, minimum=0.0, exclusive_min=True)
        coupling = _parse_coupling(prob.get("lambda", 1.0), f"{ppath}.lambda")
        _choice(prob, "u0", ppath, ("indicator_plus",), default="indicator_plus")
        source_constant = None
        if prob.get("f") is not None:
            source_constant = _number(prob, "f", ppath)
        t_final = _number(prob, "T", ppath, required=True, minimum=0.0, exclusive_min=True)
        dt = _number(prob, "dt", ppath, required=True, minimum=0.0, exclusive_min=True)
        if dt > t_final:
            _bad(f"{ppath}.dt", f"exceeds the horizon T = {t_final}")
        steps = t_final / dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            _bad(f"{ppath}.dt", f"does not divide T = {t_final} into whole steps")
        theta = _number(prob, "theta", ppath, default=1.0, minimum=0.0, maximum=1.0)

    mesh = _require_block(data, "mesh", origin, required=False) or {}
    mshpath = f"{origin}.mesh"
    _reject_unknown(mesh, _MESH_KEYS, mshpath)
    if "h" in mesh and "h_ratio" in mesh:
        _bad(f"{mshpath}.h_ratio", "give either h or h_ratio, not both")
    mesh_h = _number(mesh, "h", mshpath, default=None, minimum=0.0, exclusive_min=True)
    mesh_ratio = _number(mesh, "h_ratio", mshpath, default=4.0, minimum=0.0,
                         exclusive_min=True)
    mesh_mode = _choice(mesh, "mode", mshpath,
                        ("auto", "structured", "unstructured"), default="auto")

    outs = _require_block(data, "outputs", origin, required=False) or {}
    opath = f"{origin}.outputs"
    _reject_unknown(outs, _OUTPUT_KEYS, opath)
    out_dir = outs.get("directory", "out")
    if not isinstance(out_dir, str) or not out_dir:
        _bad(f"{opath}.directory", "expected a nonempty string")
    stride = _integer(outs, "snapshot_stride", opath, default=0, minimum=0)
    formats = outs.get("formats", ["csv"])
    if (not isinstance(formats, list) or not formats
            or any(f not in ("csv", "vtk") for f in formats)):
        _bad(f"{opath}.formats", "expected a nonempty list drawn from ['csv', 'vtk']")

    return Scenario(
        family=family, generation=generation, vertices=vertices, box=box,
        anchors=anchors, confinement=confinement, d=d, weights=weights,
        diffusivity_plus=d_plus, diffusivity_minus=d_minus, coupling=coupling,
        source_constant=source_constant, t_final=t_final, dt=dt, theta=theta,
        mesh_h=mesh_h, mesh_ratio=mesh_ratio, mesh_mode=mesh_mode,
        out_dir=out_dir, stride=stride, formats=tuple(formats),
        hash=scenario_hash(data),
    )


def _parse_coupling(value, path: str):
    if value == "inf":
        return math.inf
    if isinstance(value, list):
        if not value or any(isinstance(v, bool) or not isinstance(v, (int, float))
                            for v in value):
            _bad(path, "expected a nonempty list of numbers")
        if any(v < 0 or not math.isfinite(v) for v in value):
            _bad(path, "per-segment values must be finite and nonnegative")
        return [float(v) for v in value]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _bad(path, f"expected a number, a list, or \"inf\", got {value!r}")
    if value < 0:
        _bad(path, "must be nonnegative")
    return float(value)


# --- builders ----------------------------------------------------------------


def scenario_chain(sc: Scenario) -> PolylineInterface:
    if sc.family == "custom":
        return PolylineInterface(sc.vertices, family=InterfaceFamily.CUSTOM)
    return make_interface(sc.family, sc.generation, start=sc.anchors[0],
                          end=sc.anchors[1])


def scenario_measure(sc: Scenario, chain: PolylineInterface) -> BoundaryMeasure:
    if sc.weights is not None:
        if len(sc.weights) != chain.n_segments:
            _bad("scenario.measure.weights",
                 f"needs one value per chain segment ({chain.n_segments}), "
                 f"got {len(sc.weights)}")
        return BoundaryMeasure(chain, np.asarray(sc.weights), sc.d if sc.d is not None else 1.0)
    return hausdorff_like_measure(chain, sc.d if sc.d is not None else 1.0)


def scenario_problem(sc: Scenario, chain: PolylineInterface) -> TransmissionProblem:
    coupling = sc.coupling
    if isinstance(coupling, list):
        if len(coupling) != chain.n_segments:
            _bad("scenario.problem.lambda",
                 f"needs one value per chain segment ({chain.n_segments}), "
                 f"got {len(coupling)}")
        coupling = np.asarray(coupling)
    source = None
    if sc.source_constant is not None:
        const = sc.source_constant
        source = lambda x, y, t: np.full_like(np.asarray(x, dtype=float), const)
    return TransmissionProblem(
        diffusivity_plus=sc.diffusivity_plus,
        diffusivity_minus=sc.diffusivity_minus,
        coupling=coupling,
        source=source,
        t_final=sc.t_final,
        dt=sc.dt,
        theta=sc.theta,
    )


def scenario_mesh(sc: Scenario, chain: PolylineInterface):
    domain = build_two_sided_domain(sc.box, chain)
    h = sc.mesh_h
    if h is None:
        h = float(chain.segment_lengths.min()) / sc.mesh_ratio
    if sc.mesh_mode == "auto":
        mode = MeshMode.STRUCTURED if chain.is_axis_aligned() else MeshMode.UNSTRUCTURED
    else:
        mode = MeshMode(sc.mesh_mode)
    return triangulate(domain, h, mode=mode)


def _budget(seed: Optional[int]) -> Optional[SamplingBudget]:
    return None if seed is None else SamplingBudget(seed=seed)


# --- commands ----------------------------------------------------------------


def cmd_generate(sc: Scenario, out: Path, seed: Optional[int]) -> int:
    chain = scenario_chain(sc)
    domain = build_two_sided_domain(sc.box, chain)
    mu = scenario_measure(sc, chain)
    mesh = scenario_mesh(sc, chain)

    write_polyline(out / "polyline.txt", chain, scenario_hash=sc.hash)
    write_measure(out / "measure.csv", mu, scenario_hash=sc.hash)
    write_mesh(mesh, out / "mesh.txt", scenario=sc.hash)

    constraints = AdmissibilityConstraints(
        volume=domain.volume_plus, confinement=sc.confinement,
        mode=AdmissibilityMode.LIPSCHITZ,
    )
    report = check_admissible(domain, constraints, _budget(seed), measure=mu)
    print(f"chain: {sc.family} generation {chain.generation}, "
          f"{chain.n_segments} segments, length {chain.total_length:.17g}")
    print(f"measure: mass {mu.total_mass:.17g} (d = {mu.d:g})")
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
          f"h = {mesh.h:.17g}")
    print(f"admissibility ({report.mode.value}): "
          f"volume_ok={report.volume_ok} confinement_ok={report.confinement_ok} "
          f"cone_ok={report.cone_ok} density_ok={report.perimeter_density_ok}")
    print(f"  volume={report.volume_measured:.17g} "
          f"cone_eps={report.cone_worst_eps:.6g} "
          f"density={report.density_estimate:.6g}")
    print(f"wrote polyline.txt, measure.csv, mesh.txt to {out}")
    return 0


def cmd_solve(sc: Scenario, out: Path) -> int:
    chain = scenario_chain(sc)
    mesh = scenario_mesh(sc, chain)
    problem = scenario_problem(sc, chain)
    if not isinstance(sc.coupling, list) and math.isinf(sc.coupling):
        mesh = merge_interface(mesh)
    n_steps = problem.n_steps()
    stride = sc.stride if sc.stride > 0 else n_steps
    traj = solve_trajectory(mesh, problem, snapshot_every=stride)

    write_csv(
        out / "diagnostics.csv",
        ["time", "mass", "mass_plus", "mass_minus", "half_l2"],
        zip(traj.times, traj.mass, traj.mass_plus, traj.mass_minus, traj.half_l2),
        scenario=sc.hash,
    )
    side = np.zeros(mesh.n_vertices, dtype=int)
    side[mesh.side_dofs(+1)] += 1
    side[mesh.side_dofs(-1)] -= 1
    for k, (t, u) in enumerate(traj.snapshots):
        if "csv" in sc.formats:
            write_csv(
                out / f"snapshot_{k:04d}.csv",
                ["x", "y", "side", "u"],
                zip(mesh.vertices[:, 0], mesh.vertices[:, 1], side, u),
                scenario=sc.hash,
                comments=[f"t {t:.17g}"],
            )
        if "vtk" in sc.formats:
            write_vtk(mesh, out / f"snapshot_{k:04d}.vtk", point_data={"u": u},
                      title=f"scenario {sc.hash} t={t:.17g}")

    drift = float(np.max(np.abs(traj.mass - traj.mass[0])))
    rel_drift = drift / abs(traj.mass[0]) if traj.mass[0] != 0.0 else drift
    if problem.theta == 1.0:
        residual = energy_identity_residual(traj, paired_source=traj.had_source)
        res_text = f"{residual:.6e}"
    else:
        res_text = "n/a (theta < 1)"
    print(f"{n_steps} steps, {len(traj.snapshots)} snapshots, "
          f"{mesh.n_vertices} dofs")
    print(f"mass drift {rel_drift:.6e} energy-identity residual {res_text}")
    return 0


def cmd_mosco(sc: Scenario, out: Path, generations: Sequence[int],
              tstar: Optional[float], coupling_rule: str) -> int:
    if sc.family == "custom":
        _bad("scenario.geometry.family", "generation sweeps need a named family")
    chain0 = scenario_chain(sc)
    problem = scenario_problem(sc, chain0)
    h_rule = None
    if sc.mesh_h is not None:
        h_rule = lambda g, seg: sc.mesh_h
    elif sc.mesh_ratio != 4.0:
        h_rule = lambda g, seg: seg / sc.mesh_ratio
    rows = mosco_sweep(
        sc.family,
        tuple(generations),
        problem,
        tstar if tstar is not None else sc.t_final,
        box=sc.box,
        h_rule=h_rule,
        dt_rule=lambda g, h: sc.dt,
        exponent=sc.d,
        coupling_rule=coupling_rule,
    )
    write_sweep_csv(rows, out / "mosco.csv", scenario=sc.hash)
    for row in rows:
        print(f"g={row.generation} h={row.h:.6g} J={row.script_j:.12g} "
              f"Q_minus={row.q_minus_at_tstar:.12g}")
    print(f"wrote {len(rows)} rows to {out / 'mosco.csv'}")
    return 0


_FAMILY_KEYS = ("kind", "family", "generations", "base_vertices", "offsets",
                "exponent", "constraints")
_CONSTRAINT_KEYS = ("mode", "volume", "eps", "c_hat", "d", "s", "c_d", "c_s",
                    "confinement")


def parse_family(data: dict, sc: Scenario, origin: str = "family") -> ShapeFamily:
    if not isinstance(data, dict):
        _bad(origin, "top level must be an object")
    _reject_unknown(data, _FAMILY_KEYS, origin)
    kind = _choice(data, "kind", origin,
                   ("prefractal_generation", "perturbed_polyline"), required=True)

    cons_block = _require_block(data, "constraints", origin, required=True)
    cpath = f"{origin}.constraints"
    _reject_unknown(cons_block, _CONSTRAINT_KEYS, cpath)
    mode = _choice(cons_block, "mode", cpath, ("lipschitz", "uniform"), required=True)
    constraints = AdmissibilityConstraints(
        volume=_number(cons_block, "volume", cpath, required=True, minimum=0.0,
                       exclusive_min=True),
        confinement=(_corners(cons_block["confinement"], f"{cpath}.confinement")
                     if "confinement" in cons_block else None),
        eps=_number(cons_block, "eps", cpath, default=0.05, minimum=0.0,
                    exclusive_min=True),
        c_hat=_number(cons_block, "c_hat", cpath, default=3.0, minimum=0.0,
                      exclusive_min=True),
        mode=AdmissibilityMode(mode),
        d=_number(cons_block, "d", cpath, default=1.0, minimum=0.0),
        s=_number(cons_block, "s", cpath, default=1.0, minimum=0.0),
        c_d=_number(cons_block, "c_d", cpath, default=4.0, minimum=0.0,
                    exclusive_min=True),
        c_s=_number(cons_block, "c_s", cpath, default=0.25, minimum=0.0,
                    exclusive_min=True),
    )
    exponent = _number(data, "exponent", origin, default=None, minimum=0.0)

    if kind == "prefractal_generation":
        for key in ("base_vertices", "offsets"):
            if key in data:
                _bad(f"{origin}.{key}", "only allowed for a perturbed family")
        generations = data.get("generations")
        if (not isinstance(generations, list) or not generations
                or any(isinstance(g, bool) or not isinstance(g, int) or g < 0
                       for g in generations)):
            _bad(f"{origin}.generations", "expected a nonempty list of generations >= 0")
        fam_tag = _choice(data, "family", origin, ("flat", "minkowski", "koch"),
                          default=None if sc.family == "custom" else sc.family)
        if fam_tag is None:
            _bad(f"{origin}.family", "required when the scenario chain is custom")
        return ShapeFamily(
            kind=FamilyKind.PREFRACTAL_GENERATION, constraints=constraints,
            family=fam_tag, generations=tuple(generations), exponent=exponent,
            box=sc.box,
        )

    for key in ("family", "generations"):
        if key in data:
            _bad(f"{origin}.{key}", "only allowed for a prefractal family")
    if "base_vertices" not in data:
        _bad(f"{origin}.base_vertices", "required for a perturbed family")
    base = PolylineInterface(
        _point_rows(data["base_vertices"], f"{origin}.base_vertices", min_rows=3),
        family=InterfaceFamily.CUSTOM,
    )
    offsets = data.get("offsets")
    ok = isinstance(offsets, list) and offsets and all(
        isinstance(axis, list) and axis
        and all(not isinstance(v, bool) and isinstance(v, (int, float)) for v in axis)
        for axis in offsets
    )
    if not ok:
        _bad(f"{origin}.offsets", "expected a nonempty list of per-vertex offset lists")
    return ShapeFamily(
        kind=FamilyKind.PERTURBED_POLYLINE, constraints=constraints,
        base=base, offsets=[tuple(map(float, axis)) for axis in offsets],
        exponent=exponent, box=sc.box,
    )


def cmd_optimize(sc: Scenario, out: Path, family_path: str, method: str,
                 seed: Optional[int]) -> int:
    try:
        text = Path(family_path).read_text()
    except OSError as exc:
        _bad("family", f"cannot read {family_path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        _bad("family", f"invalid JSON at line {exc.lineno} column {exc.colno}")
    family = parse_family(data, sc, origin=Path(family_path).name)

    if isinstance(sc.coupling, list):
        _bad("scenario.problem.lambda", "shape search needs a scalar coupling")
    problem = TransmissionProblem(
        diffusivity_plus=sc.diffusivity_plus,
        diffusivity_minus=sc.diffusivity_minus,
        coupling=sc.coupling,
        t_final=sc.t_final,
        dt=sc.dt,
        theta=sc.theta,
    )
    mesh_params = MeshParams(h=sc.mesh_h, h_per_feature=sc.mesh_ratio)
    result = optimize_shape(family, problem, mesh_params,
                            method=SearchMethod(method), budget=_budget(seed))
    write_ranking_csv(result, out / "ranking.csv", scenario=sc.hash)
    best = result.best
    print(f"evaluated {result.n_evaluated} candidates ({result.method.value})")
    print(f"best: candidate {best.cand_id} generation {best.generation} "
          f"params {list(best.params)} J={result.best_energy:.12g}")
    print(f"wrote ranking to {out / 'ranking.csv'}")
    return 0


def cmd_trace_check(sc: Scenario, seed: Optional[int]) -> int:
    chain = scenario_chain(sc)
    mesh = scenario_mesh(sc, chain)
    if mesh.n_pairs == 0:
        _bad("scenario.mesh", "trace checks need an unmerged interface")
    rng = np.random.default_rng(0 if seed is None else seed)
    checks: list[tuple[str, bool]] = []
    for side, tag in ((+1, "plus"), (-1, "minus")):
        f = rng.standard_normal(mesh.n_pairs)
        w = one_harmonic_extension(mesh, f, side)
        energy = extension_energy(mesh, w, side)
        pairing = trace_pairing(weak_normal_derivative(mesh, w, side), f)
        checks.append((
            f"isometry_{tag}: <dw/dn, f> equals the extension energy",
            abs(energy - pairing) <= 1e-11 * max(1.0, abs(energy)),
        ))
        checks.append((
            f"isometry_{tag}: trace norm squared equals the pairing",
            abs(trace_norm(mesh, f, side) ** 2 - pairing) <= 1e-9 * abs(pairing),
        ))
        col = 0 if side > 0 else 1
        pinned = mesh.interface_pairs[:, col]
        off = np.setdiff1d(np.arange(mesh.n_vertices), mesh.side_dofs(side))
        checks.append((
            f"extension_{tag}: pins the trace and stays on its sheet",
            bool(np.array_equal(w[pinned], f) and np.all(w[off] == 0.0)),
        ))
        free = np.setdiff1d(mesh.side_dofs(side), pinned)
        stationary = True
        for _ in range(10):
            v = np.zeros(mesh.n_vertices)
            v[free] = rng.standard_normal(free.size)
            cross = 0.25 * (extension_energy(mesh, w + v, side)
                            - extension_energy(mesh, w - v, side))
            scale = math.sqrt(max(extension_energy(mesh, w, side), 1.0)
                              * extension_energy(mesh, v, side))
            if abs(cross) > 1e-9 * scale:
                stationary = False
        checks.append((
            f"extension_{tag}: energy is stationary on the free sheet dofs",
            stationary,
        ))
        minimal = True
        for _ in range(20):
            field = rng.standard_normal(mesh.n_vertices)
            sheet = np.zeros(mesh.n_vertices)
            dofs = mesh.side_dofs(side)
            sheet[dofs] = field[dofs]
            tn = trace_norm(mesh, nodal_trace(mesh, field, side), side)
            if tn > math.sqrt(extension_energy(mesh, sheet, side)) * (1.0 + 1e-10):
                minimal = False
        checks.append((
            f"minimality_{tag}: trace norm never beats the field's own energy",
            minimal,
        ))
    failures = 0
    for name, ok in checks:
        print(("pass " if ok else "FAIL ") + name)
        failures += 0 if ok else 1
    print(f"{len(checks) - failures} of {len(checks)} properties passed")
    return 0 if failures == 0 else 1


# --- entry point ---------------------------------------------------------------


def _load_scenario(path_text: str) -> Scenario:
    path = Path(path_text)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"scenario: cannot read {path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path.name}: invalid JSON at line {exc.lineno} column {exc.colno}"
        )
    return parse_scenario(data, origin=path.name)


def _apply_threads(n: Optional[int]) -> None:
    if n is None:
        return
    if n < 1:
        raise ScenarioError(f"--threads: must be at least 1, got {n}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--out", default=None, help="output directory "
                        "(default: the scenario's outputs.directory)")
    common.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP threads")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for admissibility sampling")

    parser = argparse.ArgumentParser(
        prog="fractalflux",
        description="transmission problems across irregular interfaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common],
                   help="build the chain, measure, and mesh files")
    sub.add_parser("solve", parents=[common],
                   help="run the transmission problem and store diagnostics")
    mosco = sub.add_parser("mosco", parents=[common],
                           help="generation sweep with energy and uptake columns")
    mosco.add_argument("--generations", required=True,
                       help="comma-separated generation list, e.g. 0,1,2")
    mosco.add_argument("--tstar", type=float, default=None,
                       help="probe time for the uptake column (default: T)")
    mosco.add_argument("--coupling-rule", choices=("fixed", "measure"),
                       default="fixed", help="how lambda scales across generations")
    opt = sub.add_parser("optimize", parents=[common],
                         help="enumerate an admissible family and rank by energy")
    opt.add_argument("--family", required=True, help="family spec JSON file")
    opt.add_argument("--method", choices=("exhaustive", "greedy_local"),
                     default="exhaustive")
    sub.add_parser("trace-check", parents=[common],
                   help="run the interface trace invariants on the scenario mesh")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads(args.threads)
        sc = _load_scenario(args.scenario)
        out = Path(args.out) if args.out is not None else Path(sc.out_dir)
        if args.command != "trace-check":
            out.mkdir(parents=True, exist_ok=True)
        if args.command == "generate":
            return cmd_generate(sc, out, args.seed)
        if args.command == "solve":
            return cmd_solve(sc, out)
        if args.command == "mosco":
            try:
                generations = [int(g) for g in args.generations.split(",")]
            except ValueError:
                raise ScenarioError(
                    f"--generations: expected comma-separated integers, "
                    f"got {args.generations!r}")
            return cmd_mosco(sc, out, generations, args.tstar, args.coupling_rule)
        if args.command == "optimize":
            return cmd_optimize(sc, out, args.family, args.method, args.seed)
        return cmd_trace_check(sc, args.seed)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GeometryError, MeasureError, MeshError, TraceError,
            ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, OptimizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
