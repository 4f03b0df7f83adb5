import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from db.artifact_store import checks_frame, csv_bytes, read_path_dump, write_path_dump
from main import main
from services.run_pipeline import emit_report, load_config, run_config, run_config_file
from services.sde.errors import ConfigError, ParameterError, SDEError
from services.sde.experiments import EXPERIMENT_REGISTRY, acceptance
from services.sde.experiments.base import check
from services.sde.schemas import RunConfig


def write_config(directory, payload):
    path = directory / "config.json"
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload, indent=2), encoding="utf-8")
    return path


def manifest(out):
    return json.loads((out / "manifest.json").read_text(encoding="utf-8"))


WDW = {"experiment": "wdw", "alpha": 0.5, "sim": {"n_paths": 2000, "T": 1.0, "dt": 0.01, "steps": 100, "seed": 5}}

SIMULATE = {
    "experiment": "simulate",
    "model": {"preset": "linear-noise", "params": {"sigma": 0.4}},
    "alpha": "anti-ito",
    "sim": {"n_paths": 300, "T": 0.05, "dt": 0.01, "seed": 3, "x0": [1.0]},
}


# ==============================================================================
# Artifact formats
# ==============================================================================

def test_csv_bytes_use_full_precision_and_lf():
    assert csv_bytes(pd.DataFrame({"v": [0.1], "n": [2]})) == b"v,n\n0.10000000000000001,2\n"


def test_path_dump_layout(tmp_path):
    paths = np.arange(12, dtype=float).reshape(2, 3, 2)
    target = write_path_dump(paths, tmp_path / "paths.bin")
    raw = target.read_bytes()
    assert raw[:8] == b"SDEPATH1"
    assert len(raw) == 8 + 24 + 8 * 12
    np.testing.assert_array_equal(read_path_dump(target), paths)
    with pytest.raises(ValueError):
        write_path_dump(np.zeros((2, 3)), tmp_path / "flat.bin")


def test_report_rows_are_sorted_with_true_false(tmp_path):
    results = [check("b", "q", 1.0, 2.0, 0.5, False), check("a", "x", 0.0, 0.5, 1.0, True)]
    text = emit_report(results, tmp_path / "summary.csv").read_text(encoding="utf-8")
    assert text.splitlines() == [
        "test_name,quantity,expected,observed,tolerance,pass",
        "a,x,0,0.5,1,true",
        "b,q,1,2,0.5,false",
    ]
    assert list(checks_frame(results)["test_name"]) == ["a", "b"]


def test_empty_report_is_rejected(tmp_path):
    with pytest.raises(ParameterError):
        emit_report([], tmp_path / "summary.csv")


# ==============================================================================
# Config loading
# ==============================================================================

def test_alpha_outside_the_interval_cites_the_line(tmp_path, capsys):
    path = write_config(tmp_path, '{\n  "experiment": "wdw",\n  "alpha": 1.5\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.messages[0].startswith(f"{path}:3: alpha:")
    assert "0 <= alpha <= 1" in info.value.messages[0]

    assert run_config_file(path) == 1
    out = capsys.readouterr().out
    assert "INVALID CONFIG" in out
    assert "0 <= alpha <= 1" in out


def test_invalid_json_cites_the_line(tmp_path):
    path = write_config(tmp_path, '{\n  "experiment": "wdw",,\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert f"{path}:2: invalid JSON" in info.value.messages[0]


def test_unknown_keys_are_rejected(tmp_path):
    path = write_config(tmp_path, '{\n  "experiment": "wdw",\n  "sim": {\n    "n_paths": 10,\n    "nsteps": 5\n  }\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.messages[0].startswith(f"{path}:5: sim.nsteps:")


def test_missing_sections_and_files(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path, {"experiment": "simulate"}))
    assert "needs a 'model' section" in info.value.messages[0]
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    assert isinstance(info.value, SDEError)


def test_initial_mean_must_fit_the_grid(tmp_path):
    path = write_config(tmp_path, {
        "experiment": "fpe-evolve",
        "model": {"preset": "ou"},
        "grid": {"axes": [{"lower": -1.0, "upper": 1.0, "points": 16}]},
        "fpe": {"initial_mean": [0.0, 0.0]},
    })
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert "fpe.initial_mean has 2 components for a 1-D grid" in info.value.messages[0]


def test_bundled_configs_validate():
    configs = Path(__file__).resolve().parents[2] / "configs"
    for path in sorted(configs.glob("*.json")):
        assert isinstance(load_config(path), RunConfig)


# ==============================================================================
# Runs
# ==============================================================================

def test_wdw_run_writes_samples_and_manifest(tmp_path, run_dir):
    code = run_config_file(write_config(tmp_path, WDW), out=str(run_dir))
    assert code == 0
    samples = pd.read_csv(run_dir / "wdw_samples.csv")
    assert list(samples.columns) == ["sample_id", "value"]
    assert len(samples) == 2000
    m = manifest(run_dir)
    assert m["exit_code"] == 0
    assert m["files"] == ["manifest.json", "wdw_samples.csv"]
    assert m["seed"] == 5
    assert m["summary"]["expected_mean"] == 0.5
    assert "numpy" in m["versions"]


def test_same_seed_gives_identical_bytes(tmp_path):
    config = RunConfig.model_validate(SIMULATE)
    outputs = []
    for name, threads in (("one", 1), ("two", 1), ("pooled", 3)):
        out = tmp_path / name
        assert run_config(config, out=str(out), threads=threads) == 0
        outputs.append((out / "ensemble_endpoints.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_seed_override(tmp_path):
    config = RunConfig.model_validate(SIMULATE)
    run_config(config, out=str(tmp_path / "base"))
    run_config(config, out=str(tmp_path / "other"), seed=99)
    assert manifest(tmp_path / "other")["seed"] == 99
    assert (tmp_path / "base" / "ensemble_endpoints.csv").read_bytes() != \
        (tmp_path / "other" / "ensemble_endpoints.csv").read_bytes()


@pytest.mark.parametrize("kwargs", [{"threads": 0}, {"seed": -1}, {"seed": 2 ** 64}])
def test_invalid_overrides_exit_one(run_dir, kwargs):
    assert run_config(RunConfig.model_validate(SIMULATE), out=str(run_dir), **kwargs) == 1
    m = manifest(run_dir)
    assert m["exit_code"] == 1
    assert m["files"] == ["manifest.json"]
    assert "error" in m


def test_failed_paths_exit_two(run_dir):
    config = RunConfig.model_validate({
        "experiment": "simulate",
        "model": {
            "preset": "custom",
            "tables": {
                "drift": [{"terms": [{"coef": 1.0, "powers": [3]}]}],
                "noise": [[{"terms": [{"coef": 1.0}]}]],
            },
        },
        "alpha": 0.0,
        "sim": {"n_paths": 8, "T": 1.0, "dt": 0.1, "x0": [3.0]},
    })
    assert run_config(config, out=str(run_dir)) == 2
    failures = pd.read_csv(run_dir / "ensemble_failures.csv")
    assert len(failures) == 8
    assert manifest(run_dir)["summary"]["failed_paths"] == 8


def test_numerical_errors_outside_the_engine_exit_two(run_dir, monkeypatch):
    def singular(config, threads):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setitem(EXPERIMENT_REGISTRY, "wdw", singular)
    assert run_config(RunConfig.model_validate(WDW), out=str(run_dir)) == 2
    m = manifest(run_dir)
    assert m["exit_code"] == 2
    assert m["files"] == ["manifest.json"]
    assert "LinAlgError" in m["error"]


def test_keep_paths_writes_the_binary_dump(run_dir):
    config = RunConfig.model_validate({**SIMULATE, "sim": {**SIMULATE["sim"], "n_paths": 10, "keep_paths": True}})
    assert run_config(config, out=str(run_dir)) == 0
    assert read_path_dump(run_dir / "ensemble_paths.bin").shape == (10, 6, 1)


def test_operators_run(run_dir):
    config = RunConfig.model_validate({
        "experiment": "operators",
        "model": {"preset": "sine-diffusion", "pure_noise": True},
        "alpha": 1.0,
        "grid": {"axes": [{"lower": -2.0, "upper": 2.0, "points": 16}]},
    })
    assert run_config(config, out=str(run_dir)) == 0
    norms = pd.read_csv(run_dir / "operator_norms.csv").set_index("quantity")["value"]
    assert norms["forward_minus_backward_max"] == 0.0
    assert norms["gap_max"] == 0.0
    assert (run_dir / "operator_forward.csv").exists()


def test_steady_run(run_dir):
    config = RunConfig.model_validate({
        "experiment": "steady",
        "model": {"preset": "ou"},
        "grid": {"axes": [{"lower": -5.0, "upper": 5.0, "points": 128}]},
    })
    assert run_config(config, out=str(run_dir)) == 0
    frame = pd.read_csv(run_dir / "steady_state.csv")
    assert list(frame.columns) == ["x", "w", "phi"]
    assert (run_dir / "steady_quadrature.csv").exists()


# ==============================================================================
# Acceptance checks
# ==============================================================================

@pytest.mark.parametrize("name", [
    "operator_identity", "gap_proportionality", "constant_diffusion",
    "noise_drift_identity", "symmetrize", "steady_states", "determinism",
])
def test_deterministic_acceptance_checks_pass(name):
    rows = acceptance.ACCEPTANCE_CHECKS[name](12345, 1.0, 2)
    assert rows
    assert [r.quantity for r in rows if not r.passed] == []


@pytest.mark.slow
@pytest.mark.parametrize("name", ["extrema", "monotone_flattening"])
def test_density_evolution_checks_pass(name):
    assert all(r.passed for r in acceptance.ACCEPTANCE_CHECKS[name](12345, 1.0, 2))


def test_report_all_records_raising_and_failing_checks(run_dir, monkeypatch):
    def fine(seed, scale, threads):
        return [check("fine", "value", 0.0, 0.0, 1.0, True)]

    def broken(seed, scale, threads):
        raise ParameterError("no grid")

    monkeypatch.setattr(acceptance, "ACCEPTANCE_CHECKS", {"fine": fine, "broken": broken})
    config = RunConfig.model_validate({"experiment": "report-all"})
    assert run_config(config, out=str(run_dir)) == 2
    report = pd.read_csv(run_dir / "acceptance_summary.csv", keep_default_na=False)
    assert list(report["test_name"]) == ["broken", "fine"]
    assert list(report["pass"]) == ["false", "true"]
    assert manifest(run_dir)["summary"]["failed_tests"] == ["broken"]


@pytest.mark.slow
def test_report_all_passes(run_dir):
    config = RunConfig.model_validate({"experiment": "report-all", "sim": {"seed": 12345}})
    assert run_config(config, out=str(run_dir), threads=4) == 0
    report = pd.read_csv(run_dir / "acceptance_summary.csv", keep_default_na=False)
    assert set(report["pass"]) == {"true"}


# ==============================================================================
# Command line
# ==============================================================================

def test_presets_command(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "double-well" in out
    assert "tanh-diffusion" in out


def test_run_command(tmp_path, run_dir):
    path = write_config(tmp_path, WDW)
    assert main(["run", "--config", str(path), "--out", str(run_dir), "--threads", "2"]) == 0
    assert (run_dir / "wdw_samples.csv").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "alpha-sde" in capsys.readouterr().out
