"""End-to-end checks of the scenario-driven command line."""

import json
import os

import numpy as np
import pytest

from fractalflux.cli import main

FLAT = {
    "geometry": {"family": "flat"},
    "problem": {"T": 0.25, "dt": 0.03125, "lambda": 1.0},
    "mesh": {"h": 0.25},
}


def write_scenario(tmp_path, payload, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def run(capsys, *args):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def flat_scenario(tmp_path, **overrides):
    payload = json.loads(json.dumps(FLAT))
    for block, entries in overrides.items():
        payload.setdefault(block, {}).update(entries)
    payload.setdefault("outputs", {})["directory"] = str(tmp_path / "out")
    return write_scenario(tmp_path, payload)


# --- generate -------------------------------------------------------------


def test_generate_writes_the_three_artifacts(tmp_path, capsys):
    scenario = flat_scenario(tmp_path)
    code, out, err = run(capsys, "generate", "--scenario", scenario)
    assert code == 0, err
    for name in ("polyline.txt", "measure.csv", "mesh.txt"):
        head = (tmp_path / "out" / name).read_text().splitlines()[:2]
        assert any(line.startswith("# scenario ") for line in head), name
    assert "admissibility" in out


def test_generate_rerun_is_byte_identical(tmp_path, capsys):
    scenario = flat_scenario(tmp_path)
    assert run(capsys, "generate", "--scenario", scenario)[0] == 0
    first = {
        name: (tmp_path / "out" / name).read_bytes()
        for name in ("polyline.txt", "measure.csv", "mesh.txt")
    }
    assert run(capsys, "generate", "--scenario", scenario)[0] == 0
    for name, blob in first.items():
        assert (tmp_path / "out" / name).read_bytes() == blob


def test_out_flag_overrides_the_scenario_directory(tmp_path, capsys):
    scenario = flat_scenario(tmp_path)
    other = tmp_path / "elsewhere"
    code, _, _ = run(capsys, "generate", "--scenario", scenario, "--out", str(other))
    assert code == 0
    assert (other / "polyline.txt").exists()
    assert not (tmp_path / "out").exists()


def test_generation_cap_is_named_in_the_error(tmp_path, capsys):
    scenario = flat_scenario(tmp_path, geometry={"family": "minkowski", "generation": 9})
    code, _, err = run(capsys, "generate", "--scenario", scenario)
    assert code != 0
    assert "exceeds cap 6" in err


def test_custom_chain_from_vertices(tmp_path, capsys):
    scenario = flat_scenario(
        tmp_path,
        geometry={
            "family": "custom",
            "vertices": [[0.0, 0.5], [0.5, 0.375], [1.0, 0.5]],
        },
        mesh={"h": 0.25, "mode": "unstructured"},
    )
    code, out, _ = run(capsys, "generate", "--scenario", scenario)
    assert code == 0
    assert "2 segments" in out


# --- schema rejection -------------------------------------------------------


def reject(tmp_path, capsys, needle, **overrides):
    scenario = flat_scenario(tmp_path, **overrides)
    code, _, err = run(capsys, "generate", "--scenario", scenario)
    assert code == 2
    assert needle in err, err
    return err


def test_unknown_keys_are_rejected_with_their_path(tmp_path, capsys):
    reject(tmp_path, capsys, "geometry.familly: unknown key", geometry={"familly": "flat"})
    reject(tmp_path, capsys, "mesh.spacing: unknown key", mesh={"spacing": 0.1})
    payload = json.loads(json.dumps(FLAT))
    payload["plotting"] = {}
    scenario = write_scenario(tmp_path, payload)
    code, _, err = run(capsys, "generate", "--scenario", scenario)
    assert code == 2 and "plotting: unknown key" in err


def test_dt_beyond_the_horizon_is_a_schema_error(tmp_path, capsys):
    reject(tmp_path, capsys, "problem.dt: exceeds the horizon",
           problem={"T": 0.5, "dt": 1.0})


def test_dt_must_divide_the_horizon(tmp_path, capsys):
    reject(tmp_path, capsys, "problem.dt: does not divide",
           problem={"T": 1.0, "dt": 0.3})


def test_h_and_h_ratio_are_mutually_exclusive(tmp_path, capsys):
    reject(tmp_path, capsys, "mesh.h_ratio: give either h or h_ratio",
           mesh={"h": 0.25, "h_ratio": 4.0})


def test_generation_is_meaningless_for_a_custom_chain(tmp_path, capsys):
    reject(tmp_path, capsys, "geometry.generation: not allowed",
           geometry={"family": "custom", "generation": 2,
                     "vertices": [[0.0, 0.5], [1.0, 0.5]]})


def test_negative_coupling_is_rejected(tmp_path, capsys):
    reject(tmp_path, capsys, "problem.lambda: must be nonnegative",
           problem={"lambda": -1.0})


def test_weights_must_match_the_segment_count(tmp_path, capsys):
    reject(tmp_path, capsys, "measure.weights: needs one value per chain segment",
           measure={"weights": [1.0, 2.0, 3.0]})


def test_invalid_json_reports_the_position(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"geometry": {"family": "flat",}}')
    code, _, err = run(capsys, "generate", "--scenario", str(path))
    assert code == 2
    assert "invalid JSON at line" in err


def test_missing_scenario_file(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--scenario", str(tmp_path / "nope.json"))
    assert code == 2
    assert "cannot read" in err


# --- solve ------------------------------------------------------------------


def test_solve_writes_diagnostics_and_boundary_snapshots(tmp_path, capsys):
    scenario = flat_scenario(tmp_path)
    code, out, err = run(capsys, "solve", "--scenario", scenario)
    assert code == 0, err
    assert "mass drift" in out and "energy-identity residual" in out
    outdir = tmp_path / "out"
    lines = (outdir / "diagnostics.csv").read_text().splitlines()
    assert lines[0].startswith("# scenario ")
    assert lines[1] == "time,mass,mass_plus,mass_minus,half_l2"
    assert len(lines) == 2 + 9          # initial state plus eight steps
    # stride zero keeps only the initial and final snapshots
    snaps = sorted(p.name for p in outdir.glob("snapshot_*.csv"))
    assert snaps == ["snapshot_0000.csv", "snapshot_0001.csv"]
    rows = (outdir / "snapshot_0001.csv").read_text().splitlines()
    assert rows[1] == "# t 0.25"
    assert rows[2] == "x,y,side,u"


def test_solve_snapshot_stride(tmp_path, capsys):
    scenario = flat_scenario(tmp_path, outputs={"snapshot_stride": 2})
    assert run(capsys, "solve", "--scenario", scenario)[0] == 0
    snaps = list((tmp_path / "out").glob("snapshot_*.csv"))
    assert len(snaps) == 5              # t = 0 and every second of eight steps


def test_solve_vtk_format(tmp_path, capsys):
    scenario = flat_scenario(tmp_path, outputs={"formats": ["csv", "vtk"]})
    assert run(capsys, "solve", "--scenario", scenario)[0] == 0
    vtk = (tmp_path / "out" / "snapshot_0001.vtk").read_text().splitlines()
    assert vtk[1].startswith("scenario ")
    assert any(line.startswith("POINT_DATA") for line in vtk)


def test_solve_merged_interface(tmp_path, capsys):
    """lambda = "inf" glues the sheets; mass still cannot leak."""
    scenario = flat_scenario(tmp_path, problem={"lambda": "inf"})
    code, out, _ = run(capsys, "solve", "--scenario", scenario)
    assert code == 0
    drift = float(out.split("mass drift")[1].split()[0])
    assert drift < 1e-12


def test_solve_per_segment_coupling(tmp_path, capsys):
    scenario = flat_scenario(tmp_path, problem={"lambda": [2.0]})
    assert run(capsys, "solve", "--scenario", scenario)[0] == 0


def test_solve_insulated_run_prints_a_clean_energy_identity(tmp_path, capsys):
    scenario = flat_scenario(tmp_path, problem={"lambda": 0.0})
    code, out, _ = run(capsys, "solve", "--scenario", scenario)
    assert code == 0
    residual = float(out.split("energy-identity residual")[1].split()[0])
    assert residual <= 1e-10


def test_solve_theta_half_skips_the_energy_identity(tmp_path, capsys):
    scenario = flat_scenario(tmp_path, problem={"theta": 0.5})
    code, out, _ = run(capsys, "solve", "--scenario", scenario)
    assert code == 0
    assert "n/a (theta < 1)" in out


# --- mosco --------------------------------------------------------------------


@pytest.fixture
def mink_scenario(tmp_path):
    return write_scenario(tmp_path, {
        "geometry": {"family": "minkowski", "generation": 0},
        "problem": {"T": 0.0625, "dt": 0.00390625, "lambda": 1.0},
        "outputs": {"directory": str(tmp_path / "out")},
    })


def test_mosco_sweep_rows(tmp_path, capsys, mink_scenario):
    code, out, err = run(capsys, "mosco", "--scenario", mink_scenario,
                         "--generations", "0,1,2")
    assert code == 0, err
    lines = (tmp_path / "out" / "mosco.csv").read_text().splitlines()
    assert lines[0].startswith("# scenario ")
    body = [l for l in lines if not l.startswith("#")]
    assert body[0].startswith("generation,")
    assert len(body) == 1 + 3
    assert [row.split(",")[0] for row in body[1:]] == ["0", "1", "2"]


def test_mosco_rejects_garbled_generations(capsys, mink_scenario):
    code, _, err = run(capsys, "mosco", "--scenario", mink_scenario,
                       "--generations", "0,two")
    assert code == 2
    assert "comma-separated integers" in err


# --- optimize -----------------------------------------------------------------


def test_optimize_single_candidate_ranking(tmp_path, capsys, mink_scenario):
    family = tmp_path / "family.json"
    family.write_text(json.dumps({
        "kind": "prefractal_generation",
        "generations": [1],
        "constraints": {"mode": "uniform", "volume": 0.5, "eps": 0.05,
                        "d": 1.0, "s": 1.0, "c_d": 40.0, "c_s": 0.12},
    }))
    code, out, err = run(capsys, "optimize", "--scenario", mink_scenario,
                         "--family", str(family))
    assert code == 0, err
    assert "best: candidate 0" in out
    lines = (tmp_path / "out" / "ranking.csv").read_text().splitlines()
    assert lines[0].startswith("# scenario ")
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == ("cand_id,params,generation,volume,measure_mass,"
                       "admissible,script_j,status")
    assert len(body) == 2


def test_optimize_family_schema_is_strict(tmp_path, capsys, mink_scenario):
    family = tmp_path / "family.json"
    family.write_text(json.dumps({
        "kind": "prefractal_generation",
        "generations": [1],
        "offsets": [[0.0]],
        "constraints": {"mode": "uniform", "volume": 0.5},
    }))
    code, _, err = run(capsys, "optimize", "--scenario", mink_scenario,
                       "--family", str(family))
    assert code == 2
    assert "offsets: only allowed for a perturbed family" in err


def test_optimize_empty_family_is_a_runtime_failure(tmp_path, capsys, mink_scenario):
    family = tmp_path / "family.json"
    family.write_text(json.dumps({
        "kind": "prefractal_generation",
        "generations": [0, 1, 2],
        "constraints": {"mode": "lipschitz", "volume": 0.5, "c_hat": 1.5,
                        "eps": 0.01},
    }))
    code, _, err = run(capsys, "optimize", "--scenario", mink_scenario,
                       "--family", str(family))
    assert code == 3
    assert "no admissible candidates" in err


# --- trace-check ----------------------------------------------------------------


def test_trace_check_passes_on_the_flat_mesh(tmp_path, capsys):
    scenario = flat_scenario(tmp_path)
    code, out, _ = run(capsys, "trace-check", "--scenario", scenario)
    assert code == 0
    assert "FAIL" not in out
    assert out.count("pass ") == 10


def test_threads_flag_caps_the_blas_pools(tmp_path, capsys, monkeypatch):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    scenario = flat_scenario(tmp_path)
    assert run(capsys, "generate", "--scenario", scenario, "--threads", "1")[0] == 0
    assert os.environ["OMP_NUM_THREADS"] == "1"


def test_seed_reaches_the_admissibility_sampler(tmp_path, capsys):
    scenario = flat_scenario(tmp_path)
    code, out_a, _ = run(capsys, "generate", "--scenario", scenario, "--seed", "7")
    assert code == 0
    code, out_b, _ = run(capsys, "generate", "--scenario", scenario, "--seed", "7")
    assert code == 0
    assert out_a == out_b


def test_snapshot_side_tags_match_the_sheets(tmp_path, capsys):
    scenario = flat_scenario(tmp_path)
    assert run(capsys, "solve", "--scenario", scenario)[0] == 0
    lines = (tmp_path / "out" / "snapshot_0000.csv").read_text().splitlines()
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == "x,y,side,u"
    _, y, side, u = np.array([list(map(float, r.split(","))) for r in body[1:]]).T
    below, above = y < 0.5 - 1e-12, y > 0.5 + 1e-12
    assert set(side[below]) == {1.0}
    assert set(side[above]) == {-1.0}
    # doubled interface nodes: one copy per sheet, never an orphan
    assert set(side[~(below | above)]) == {1.0, -1.0}
    # the initial state is the hot-side indicator
    assert np.all(u[side == 1.0] == 1.0)
    assert np.all(u[side == -1.0] == 0.0)
