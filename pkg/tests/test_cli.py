import json

import pytest

from ucfem.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main, parse_exponent
from ucfem.exceptions import AssemblyError
from ucfem.services.solver_service import solver_service

SMOKE = ["--problem", "smoke-harmonic", "--order", "1", "--n-min", "2", "--levels", "3"]


def test_list_problems(capsys):
    assert main(["list-problems"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("disk-kink", "hadamard-conv", "hadamard-nonconv", "smoke-harmonic"):
        assert name in out


def test_parse_exponent():
    assert parse_exponent("inf") == float("inf")
    assert parse_exponent("0.5") == 0.5


def test_run(tmp_path, capsys):
    assert main(["run", *SMOKE, "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "errors.csv").exists()
    assert "h1_B" in capsys.readouterr().out


def test_run_with_condition(tmp_path):
    assert main(["run", *SMOKE, "--condition", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "conditions.csv").exists()


@pytest.mark.parametrize("flags", [
    ["--alpha", "2.0"],
    ["--tau", "-1"],
    ["--order", "5"],
    ["--levels", "0"],
])
def test_invalid_configuration(tmp_path, flags):
    assert main(["run", *SMOKE, *flags, "--out", str(tmp_path)]) == EXIT_USAGE


def test_unknown_problem(tmp_path):
    assert main(["run", "--problem", "nope", "--out", str(tmp_path)]) == EXIT_USAGE


def test_missing_problem(tmp_path):
    assert main(["run", "--out", str(tmp_path)]) == EXIT_USAGE


def test_bad_eta_is_a_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        main(["run", *SMOKE, "--eta", "large"])
    assert excinfo.value.code == 2


def test_degenerate_dual_fails_every_level(tmp_path):
    code = main(["run", *SMOKE, "--eta", "inf", "--tikhonov-off", "--out", str(tmp_path)])
    assert code == EXIT_FAILURE
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert {level["error_type"] for level in manifest["levels"]} == {"ParameterError"}


def test_failed_level_exit_code(tmp_path, monkeypatch):
    def failing_build(*args, **kwargs):
        raise AssemblyError("synthetic failure")

    monkeypatch.setattr(solver_service, "build", failing_build)
    assert main(["run", *SMOKE, "--out", str(tmp_path)]) == EXIT_FAILURE


def test_config_file_with_flag_override(tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text(
        "problem: smoke-harmonic\n"
        "order: 1\n"
        "n-min: 2\n"
        "levels: 3\n"
        "preset: L2-optimal\n"
        "tau: 1.0\n"
        f"out: {tmp_path / 'from_file'}\n"
    )
    out = tmp_path / "from_flag"
    assert main(["run", "--config", str(config), "--tau", "0.5", "--out", str(out)]) == EXIT_OK

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["params"]["tau"] == 0.5
    assert manifest["config"]["params"]["alpha"] == 1.0
    assert not (tmp_path / "from_file").exists()


def test_nested_config_file(tmp_path):
    config = tmp_path / "bad.yaml"
    config.write_text("problem: smoke-harmonic\nparams:\n  alpha: 1.0\n")
    assert main(["run", "--config", str(config)]) == EXIT_USAGE


def test_sweep(tmp_path):
    code = main(["sweep", *SMOKE, "--levels", "2", "--alphas", "0,1", "--etas", "0,inf", "--taus", "2",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir() if p.is_dir()) == [
        "a0_e0_t2", "a0_einf_t2", "a1_e0_t2", "a1_einf_t2"]


def test_condition(tmp_path, capsys):
    code = main(["condition", *SMOKE, "--alpha", "1", "--eta", "0", "--tau", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "slope" in capsys.readouterr().out
