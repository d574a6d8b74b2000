"""Command line driver: exit codes, console tables, artifact directories."""

import json

import pytest

from mapinf import canonical_test_models, save_model
from mapinf import cli


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def artifact_names(out_dir):
    return sorted(p.name for p in out_dir.iterdir())


def test_analyze_writes_report_csvs_and_manifest(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, stderr = run_cli(
        capsys, "analyze", "--model", "mg1inf-poisson", "--out", str(out))
    assert code == 0
    assert stderr == ""
    assert "model: mg1inf-poisson" in stdout
    assert "mean_in_service_type1" in stdout

    names = artifact_names(out)
    assert "report.json" in names
    assert "manifest.json" in names
    assert "mean_in_service_type1.csv" in names
    assert "variance_in_service_type1.csv" in names

    report = json.loads((out / "report.json").read_text())
    assert set(report) >= {"grid", "t", "curves", "limits", "bounds"}
    curve = report["curves"]["mean_in_service_type1"]
    assert len(curve) == len(report["t"])

    # curve files are plot-ready: one header line, then t,value pairs
    lines = (out / "mean_in_service_type1.csv").read_text().splitlines()
    assert lines[0] == "t,value"
    first = lines[1].split(",")
    assert float(first[0]) == report["t"][0]
    assert float(first[1]) == curve[0]

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"][:2] == ["mapinf", "analyze"]
    assert manifest["model"] == "mg1inf-poisson"
    assert manifest["parameters"]["grid_step"] == report["grid"]["step"]
    # the manifest lists every artifact except itself
    assert manifest["outputs"] == [n for n in names if n != "manifest.json"]


def test_analyze_reports_are_byte_identical_across_runs(tmp_path, capsys):
    payloads = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        code, _, _ = run_cli(
            capsys, "analyze", "--model", "mg1inf-poisson", "--out", str(out))
        assert code == 0
        payloads.append({n: (out / n).read_bytes()
                         for n in artifact_names(out) if n != "manifest.json"})
    assert payloads[0].keys() == payloads[1].keys()
    for name in payloads[0]:
        assert payloads[0][name] == payloads[1][name], name


def test_analyze_optional_report_blocks(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run_cli(
        capsys, "analyze", "--model", "mg1inf-poisson", "--out", str(out),
        "--t-points", "1,2", "--z-points", "0,0.5,1")
    assert code == 0
    assert "stationary transform:" in stdout

    report = json.loads((out / "report.json").read_text())
    block = report["t_points"]
    assert block["t"] == [1.0, 2.0]
    assert len(block["curves"]["mean_in_service_type1"]) == 2
    pgf = report["stationary_pgf"]
    assert [row["z"] for row in pgf] == [0.0, 0.5, 1.0]
    assert pgf[-1]["value"] == pytest.approx(1.0, abs=1e-6)
    counts = report["stationary_counts"]
    assert counts["cutoff"] == 30
    assert sum(counts["table"]) == pytest.approx(1.0, abs=1e-6)


def test_analyze_rejects_nonpositive_grid_step(tmp_path, capsys):
    code, _, stderr = run_cli(
        capsys, "analyze", "--model", "mg1inf-poisson",
        "--out", str(tmp_path / "x"), "--grid-step", "0")
    assert code == 1
    assert "grid step must be positive" in stderr


def test_missing_model_path_maps_to_io_exit_code(tmp_path, capsys):
    code, _, stderr = run_cli(
        capsys, "analyze", "--model", str(tmp_path / "no-such-model.json"),
        "--out", str(tmp_path / "x"))
    assert code == 3
    assert stderr.startswith("i/o error:")


def test_coarse_grid_is_a_numerical_failure(tmp_path, capsys):
    # 100x the default step: the step-doubling error estimate must refuse
    code, _, stderr = run_cli(
        capsys, "analyze", "--model", "mg1inf-poisson",
        "--out", str(tmp_path / "x"), "--grid-step", "1.0")
    assert code == 2
    assert stderr.startswith("numerical failure:")
    assert "state 1" in stderr


def test_invalid_document_reports_json_path(tmp_path, capsys):
    from test_modelio import invalid_documents

    label, doc, fragment = invalid_documents()[0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, _, stderr = run_cli(
        capsys, "analyze", "--model", str(path), "--out", str(tmp_path / "x"))
    assert code == 1, label
    assert fragment in stderr


def test_unknown_flag_is_an_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "--model", "mg1inf-poisson", "--bogus"])
    assert exc.value.code == 2
    assert "--bogus" in capsys.readouterr().err


def test_help_lists_every_documented_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--model", "--out", "--grid-step", "--horizon", "--t-points",
                 "--z-points", "--cutoff", "--strict", "--lenient"):
        assert flag in text

    with pytest.raises(SystemExit):
        cli.main(["simulate", "--help"])
    text = capsys.readouterr().out
    for flag in ("--replications", "--seed", "--horizon", "--t-points",
                 "--trace"):
        assert flag in text


def test_simulate_artifacts_and_seed_reproducibility(tmp_path, capsys):
    blobs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        code, stdout, _ = run_cli(
            capsys, "simulate", "--model", "mg1inf-poisson", "--out", str(out),
            "--replications", "30", "--seed", "7", "--trace")
        assert code == 0
        assert "conservation: arrivals == served + in service + destroyed" in stdout
        blobs.append((out / "simulation.json").read_bytes())
    assert blobs[0] == blobs[1]

    out = tmp_path / "c"
    code, _, _ = run_cli(
        capsys, "simulate", "--model", "mg1inf-poisson", "--out", str(out),
        "--replications", "30", "--seed", "8", "--trace")
    assert code == 0
    assert (out / "simulation.json").read_bytes() != blobs[0]

    doc = json.loads(blobs[0])
    assert doc["kind"] == "transient"
    assert doc["replications"] == 30
    assert doc["seed"] == 7
    assert doc["trace_digest"]
    lines = (tmp_path / "a" / "sim_mean_in_service_type1.csv").read_text().splitlines()
    assert lines[0] == "t,value,stderr"


def test_simulate_accepts_model_document_path(tmp_path, capsys):
    path = tmp_path / "model.json"
    save_model(canonical_test_models()["mg1inf-poisson"], path)
    code, stdout, _ = run_cli(
        capsys, "simulate", "--model", str(path), "--out", str(tmp_path / "s"),
        "--replications", "5", "--seed", "3")
    assert code == 0
    assert "replications: 5" in stdout


def test_compare_passes_on_canonical_model(tmp_path, capsys):
    out = tmp_path / "cmp"
    code, stdout, stderr = run_cli(
        capsys, "compare", "--model", "mg1inf-poisson", "--out", str(out))
    assert code == 0
    assert stderr == ""
    assert "comparison: pass" in stdout

    doc = json.loads((out / "compare.json").read_text())
    assert doc["verdict"] == "pass"
    assert doc["threshold_se"] == 3.0
    # 1 type x (mean + variance + 1 resource component) x 4 snapshot times
    assert len(doc["rows"]) == 12
    assert all(abs(row["z"]) <= 3.0 for row in doc["rows"])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"][:2] == ["mapinf", "compare"]


def test_compare_includes_loss_rate_after_warmup(tmp_path, capsys):
    out = tmp_path / "cmp"
    code, stdout, _ = run_cli(
        capsys, "compare", "--model", "mg1inf-poisson", "--out", str(out),
        "--t-points", "6,25")
    assert code == 0
    doc = json.loads((out / "compare.json").read_text())
    metrics = [row["metric"] for row in doc["rows"]]
    assert "loss_rate_type1" in metrics
    assert len(doc["rows"]) == 7


def test_compare_failure_names_the_offending_metric(tmp_path, monkeypatch, capsys):
    real = cli.compute_report

    def skewed(model, grid=None, **kwargs):
        report = real(model, grid=grid, **kwargs)
        report.curves["mean_in_service_type1"] = (
            report.curves["mean_in_service_type1"] + 1.0)
        return report

    monkeypatch.setattr(cli, "compute_report", skewed)
    out = tmp_path / "cmp"
    code, stdout, stderr = run_cli(
        capsys, "compare", "--model", "mg1inf-poisson", "--out", str(out),
        "--replications", "50")
    assert code == 2
    assert "compare failed: metric 'mean_in_service_type1' at t=" in stderr
    assert "standard errors" in stderr
    assert "FAIL" in stdout
    # artifacts still land so the failure can be inspected afterwards
    doc = json.loads((out / "compare.json").read_text())
    assert doc["verdict"] == "fail"
    assert (out / "manifest.json").exists()


def test_compare_with_inflated_grid_step_fails(tmp_path, capsys):
    code, _, stderr = run_cli(
        capsys, "compare", "--model", "mg1inf-poisson",
        "--out", str(tmp_path / "x"), "--grid-step", "1.0",
        "--replications", "20")
    assert code == 2
    assert stderr.startswith("numerical failure:")


def test_snapshot_time_helpers():
    from mapinf.gridding import TimeGrid

    grid = TimeGrid(0.01, 32.0)
    assert cli._snap_times(grid, [0.503, 1.0]) == [0.5, 1.0]
    assert cli._default_t_points(40.0) == (10.0, 20.0, 40.0)
