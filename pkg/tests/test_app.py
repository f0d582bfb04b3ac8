import numpy as np
import pandas as pd
import pytest
import yaml

import steklov_lab.app as app
import steklov_lab.views.settings as settings
from steklov_lab.app import apply_override, load_config, main
from steklov_lab.modules.errors import ConfigError
from steklov_lab.modules.forms import ProblemSpec, assemble_problem
from steklov_lab.modules.geometry import build_annulus
from steklov_lab.preprocessing.mesh_io import load_coo

SMALL = ["--set", "domain.n_radial=2", "--set", "domain.n_angular=32"]


def run(command, out, *extra):
    return main([command, "--out", str(out), *SMALL, *extra])


def manifest(directory):
    with open(directory / settings.MANIFEST_FILE, encoding="utf-8") as f:
        return yaml.safe_load(f)


def write_config(path, doc):
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def test_solve_writes_tables_and_manifest(tmp_path):
    assert run("solve", tmp_path) == 0
    for name in ("spectrum.csv", "groups.csv", "spectrum.svg", settings.MANIFEST_FILE):
        assert (tmp_path / name).is_file()
    assert not (tmp_path / settings.LOCK_FILE).exists()
    doc = manifest(tmp_path)
    assert doc["status"] == "ok"
    assert doc["exit_code"] == 0
    assert doc["metrics"]["multiplicities"][:3] == [1, 2, 2]
    spectrum = pd.read_csv(tmp_path / "spectrum.csv")
    assert list(spectrum.columns) == ["index", "lambda", "mu", "group", "multiplicity"]
    assert len(spectrum) == settings.DEFAULT_EIGEN_COUNT


def test_solve_exports_matrices(tmp_path):
    assert run("solve", tmp_path, "--set", "solver.export_matrices=true") == 0
    pair = assemble_problem(build_annulus(0.5, 1.0, 2, 32), ProblemSpec("P1"))
    n = pair.left.shape[0]
    left = load_coo(tmp_path / "left_matrix.csv", (n, n))
    right = load_coo(tmp_path / "right_matrix.csv", (n, n))
    assert np.array_equal(left.toarray(), pair.left.toarray())
    assert np.array_equal(right.toarray(), pair.right.toarray())


def test_invalid_variant_is_a_config_error(tmp_path):
    assert run("solve", tmp_path, "--set", "problem.variant=P9") == 2


def test_zero_eigenvalues_requested(tmp_path):
    assert run("solve", tmp_path, "--set", "solver.k=0") == 0
    assert len(pd.read_csv(tmp_path / "spectrum.csv")) == 0
    assert not (tmp_path / "spectrum.svg").exists()


def test_negative_potential_is_a_numerical_failure(tmp_path):
    config = write_config(
        tmp_path / "run.yaml",
        {"problem": {"variant": "P3a", "potential": {"family": "constant", "params": {"value": -1.0}}}},
    )
    out = tmp_path / "out"
    assert run("solve", out, "--config", str(config)) == 3
    assert manifest(out)["status"] == "numerical_error"


def test_report_merges_the_tables(tmp_path):
    assert run("solve", tmp_path) == 0
    assert main(["report", str(tmp_path)]) == 0
    text = (tmp_path / settings.SUMMARY_FILE).read_text(encoding="utf-8")
    assert "## Spectrum" in text
    assert "spectrum.csv" in text
    assert "## Simplification" not in text


def test_report_without_manifest(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_deriv_check_with_a_translation(tmp_path):
    config = write_config(
        tmp_path / "run.yaml",
        {
            "experiment": {
                "kind": "deriv-check",
                "fields": [{"family": "constant", "params": {"vector": [0.1, 0.0]}}],
                "steps": [1e-2],
            }
        },
    )
    out = tmp_path / "out"
    assert run("deriv-check", out, "--config", str(config)) == 0
    checks = pd.read_csv(out / "derivative_checks.csv")
    assert (checks["status"] == "exact").all()
    assert "order" not in checks.columns
    assert (out / "ibp_check.csv").is_file()


def test_oracle_comparison(tmp_path):
    out = tmp_path / "out"
    code = main(["oracle", "--out", str(out), "--set", "domain.n_radial=8", "--set", "domain.n_angular=64",
                 "--set", "experiment.count=5"])
    assert code == 0
    comparison = pd.read_csv(out / "oracle_comparison.csv")
    assert len(comparison) == 5
    assert comparison["rel_err"].max() < 0.05


def test_w_scan_needs_a_volume_variant(tmp_path):
    assert run("w-scan", tmp_path) == 2
    assert manifest(tmp_path)["status"] == "config_error"


def test_simplify_on_a_simple_rectangle(tmp_path):
    code = main([
        "simplify", "--out", str(tmp_path),
        "--set", "domain.family=rectangle",
        "--set", "domain.width=1.3",
        "--set", "domain.nx=6",
        "--set", "domain.ny=5",
        "--set", "experiment.N=4",
    ])
    assert code == 0
    with open(tmp_path / "trace.yaml", encoding="utf-8") as f:
        trace = yaml.safe_load(f)
    assert trace["termination"] == "converged"
    assert trace["steps"] == []
    assert len(pd.read_csv(tmp_path / "trajectory.csv")) == 4
    assert (tmp_path / "mesh.yaml").is_file()


def test_config_kind_must_match_the_command(tmp_path):
    config = write_config(tmp_path / "run.yaml", {"experiment": {"kind": "solve"}})
    assert run("simplify", tmp_path / "out", "--config", str(config)) == 2


def test_locked_directory_is_refused(tmp_path):
    (tmp_path / settings.LOCK_FILE).write_text("1", encoding="utf-8")
    assert run("solve", tmp_path) == 2
    assert not (tmp_path / settings.MANIFEST_FILE).exists()


def test_overrides():
    doc = {"domain": {"n_radial": 4}}
    apply_override(doc, "domain.n_radial=6")
    apply_override(doc, "solver.k=3")
    assert doc == {"domain": {"n_radial": 6}, "solver": {"k": 3}}
    with pytest.raises(ConfigError):
        apply_override(doc, "domain=3")
    with pytest.raises(ConfigError):
        apply_override(doc, "solver.k")
    with pytest.raises(ConfigError):
        apply_override(doc, "solver.k=[1, 2]")


def test_config_round_trip(tmp_path):
    config = load_config(None, "split", ["experiment.budget=0.02", "domain.n_angular=48"], seed=3)
    assert config.experiment.kind == "split"
    assert config.seed == 3
    path = write_config(tmp_path / "run.yaml", config.model_dump(mode="json"))
    again = load_config(path, "split")
    assert again.model_dump() == config.model_dump()


def test_outputs_are_byte_stable(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert run("solve", first, "--seed", "5") == 0
    assert run("solve", second, "--seed", "5") == 0
    for name in ("spectrum.csv", "groups.csv", "spectrum.svg"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert manifest(first)["input_hash"] == manifest(second)["input_hash"]


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(settings.OUTPUT_ENV_VAR, str(tmp_path))
    assert main(["solve", *SMALL]) == 0
    runs = list(tmp_path.glob("solve-*"))
    assert len(runs) == 1
    assert (runs[0] / settings.MANIFEST_FILE).is_file()


@pytest.mark.parametrize("error", [np.linalg.LinAlgError("not positive definite"), FloatingPointError("overflow")])
def test_linear_algebra_failure_is_a_numerical_failure(tmp_path, monkeypatch, error):
    def broken(*args, **kwargs):
        raise error

    monkeypatch.setattr(app, "solve_eigen", broken)
    assert run("solve", tmp_path) == 3
    doc = manifest(tmp_path)
    assert doc["status"] == "numerical_error"
    assert doc["exit_code"] == 3
    assert type(error).__name__ in doc["metrics"]["error"]
    assert not (tmp_path / settings.LOCK_FILE).exists()


def test_unexpected_failure_still_writes_the_manifest(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise KeyError("group")

    monkeypatch.setattr(app, "solve_eigen", broken)
    assert run("solve", tmp_path) == 3
    assert manifest(tmp_path)["status"] == "failed"
