import json
import re
import subprocess
import sys

import pytest
from click.testing import CliRunner

from mileaks import learners
from mileaks.cli import cli
from mileaks.experiment import AttackReport, ExperimentSpec, load_reports
from mileaks.scenarios import blobs, overfit_target

ERROR_LINE = re.compile(r"^mileaks: error: (validation|runtime|transport): \S.*$")


def run(*args, env=None):
    return CliRunner().invoke(cli, [str(a) for a in args], env=env, catch_exceptions=False)


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def assert_error(result, code, category):
    assert result.exit_code == code
    lines = result.stderr.strip().splitlines()
    assert len(lines) == 1 and ERROR_LINE.match(lines[0]), result.stderr
    assert lines[0].split(": ")[2] == category


def overfit_attack_spec(csv_path, **extra):
    return {
        "dataset": {"csv": str(csv_path)},
        "target": overfit_target().to_dict(),
        "adversary": {"kind": "1"},
        "seed": 0,
        **extra,
    }


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    spec = write_json(d / "data.json", blobs(400).to_dict())
    out = d / "data.csv"
    result = run("gen", "--spec", spec, "--out", out)
    assert result.exit_code == 0, result.output
    return out


def test_gen_train_attack_pipeline(data_csv, tmp_path):
    cfg = write_json(tmp_path / "target.json", overfit_target().to_dict())
    model = tmp_path / "model.json"
    assert run("train", "--data", data_csv, "--config", cfg, "--out", model).exit_code == 0
    assert learners.load_model(model).kind == "mlp"

    spec = write_json(tmp_path / "attack.json", overfit_attack_spec(data_csv, output=str(tmp_path / "report.json")))
    result = run("attack", "--spec", spec)
    assert result.exit_code == 0, result.output
    doc = json.loads((tmp_path / "report.json").read_text())
    report = AttackReport.from_dict(doc)
    assert report.query_cost == 200
    # the manifest alone reproduces the run
    assert ExperimentSpec.from_dict(doc["manifest"]["spec"]).to_dict() == ExperimentSpec.load(spec).to_dict()


def test_unknown_adversary_names_the_field(data_csv, tmp_path):
    bad = overfit_attack_spec(data_csv)
    bad["adversary"]["kind"] = "4"
    result = run("attack", "--spec", write_json(tmp_path / "bad.json", bad))
    assert_error(result, 2, "validation")
    assert "adversary.kind" in result.stderr


@pytest.mark.parametrize(
    "args",
    [
        ("attack", "--spec", "does-not-exist.json"),
        ("gen", "--spec", "does-not-exist.json", "--out", "x.csv"),
        ("report", "--in", "does-not-exist.json"),
    ],
)
def test_missing_files_are_validation_errors(args, tmp_path):
    result = CliRunner().invoke(cli, list(args))
    assert_error(result, 2, "validation")


def test_unknown_config_key_is_rejected(data_csv, tmp_path):
    cfg = write_json(tmp_path / "c.json", {"learner_kind": "mlp", "epochs": 1, "momentum": 0.9})
    result = run("train", "--data", data_csv, "--config", cfg, "--out", tmp_path / "m.json")
    assert_error(result, 2, "validation")
    assert "momentum" in result.stderr


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_a_runtime_error(tmp_path):
    data = tmp_path / "big.csv"
    data.write_text("1000,-1000,0\n-1000,1000,1\n")
    cfg = write_json(tmp_path / "c.json", {"learner_kind": "mlp", "epochs": 50, "learning_rate": 1e12, "hidden_units": 4})
    result = run("train", "--data", data, "--config", cfg, "--out", tmp_path / "m.json")
    assert_error(result, 3, "runtime")


def test_unreachable_target_is_a_transport_error(data_csv, tmp_path):
    spec = write_json(tmp_path / "a.json", overfit_attack_spec(data_csv, target_address="127.0.0.1:1"))
    assert_error(run("attack", "--spec", spec), 4, "transport")


def test_train_stacked_model(data_csv, tmp_path):
    cfg = write_json(tmp_path / "s.json", {"stacking": {"base1": {"learner_kind": "mlp", "epochs": 3, "hidden_units": 8}, "base2": {"learner_kind": "forest", "trees": 2}}})
    result = run("train", "--data", data_csv, "--config", cfg, "--out", tmp_path / "m.json")
    assert result.exit_code == 0, result.output
    assert learners.load_model(tmp_path / "m.json").kind == "stacked"


def test_seed_env_overrides_spec(data_csv, tmp_path):
    cfg = write_json(tmp_path / "c.json", {"learner_kind": "logistic", "epochs": 2, "seed": 1})
    outs = []
    for seed in ("5", "5", "6"):
        out = tmp_path / f"m{len(outs)}.json"
        assert run("train", "--data", data_csv, "--config", cfg, "--out", out, env={"MILEAKS_SEED": seed}).exit_code == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1] != outs[2]
    assert_error(run("train", "--data", data_csv, "--config", cfg, "--out", tmp_path / "x.json", env={"MILEAKS_SEED": "abc"}), 2, "validation")


def test_kmeans_command(tmp_path):
    src = tmp_path / "u.csv"
    src.write_text("0,0\n0,1\n10,10\n10,11\n")
    out = tmp_path / "k.csv"
    assert run("kmeans", "--in", src, "--k", 2, "--seed", 0, "--out", out).exit_code == 0
    labels = [row.split(",")[-1] for row in out.read_text().split()]
    assert labels[0] == labels[1] != labels[2] == labels[3]
    assert_error(run("kmeans", "--in", src, "--k", 9, "--out", out), 2, "validation")


def test_sweep_and_report(data_csv, tmp_path):
    spec = overfit_attack_spec(data_csv)
    spec["adversary"] = {"kind": "3", "n_probes": 100}
    path = write_json(tmp_path / "s.json", spec)
    series = tmp_path / "series.json"
    result = run("sweep", "--spec", path, "--axis", "t_percentile", "--values", "5,10,25", "--out", series, "--csv", tmp_path / "t.csv")
    assert result.exit_code == 0, result.output
    reports = load_reports(series)
    assert [r.axis_value for r in reports] == [5.0, 10.0, 25.0]
    assert all(r.threshold is not None for r in reports)
    csv_out = run("report", "--in", series, "--format", "csv")
    assert csv_out.output == (tmp_path / "t.csv").read_text()
    table = run("report", "--in", series, "--format", "table").output.splitlines()
    assert len(table) == 4 and table[0].split()[0] == "axis_value"
    assert_error(run("sweep", "--spec", path, "--axis", "t_percentile", "--values", "ten"), 2, "validation")
    assert_error(run("sweep", "--spec", path, "--axis", "num_shadow_models", "--values", "2"), 2, "validation")


def test_serve_then_attack_equals_in_process(data_csv, tmp_path):
    spec = overfit_attack_spec(data_csv)
    local_out = tmp_path / "local.json"
    spec_path = write_json(tmp_path / "a.json", spec)
    model = tmp_path / "model.json"
    assert run("attack", "--spec", spec_path, "--out", local_out, "--model-out", model).exit_code == 0

    proc = subprocess.Popen(
        [sys.executable, "-m", "mileaks", "serve", "--model", str(model), "--addr", "127.0.0.1:0"],
        stderr=subprocess.PIPE, text=True,
    )
    try:
        line = proc.stderr.readline()
        address = re.search(r"serving on (\S+)", line).group(1)
        remote_out = tmp_path / "remote.json"
        result = run("attack", "--spec", spec_path, "--out", remote_out, "--target", address)
        assert result.exit_code == 0, result.output
    finally:
        proc.terminate()
        proc.wait(timeout=10)
    local, remote = json.loads(local_out.read_text()), json.loads(remote_out.read_text())
    assert remote["manifest"]["outcome"]["decisions"] == local["manifest"]["outcome"]["decisions"]
    for key in ("precision", "recall", "auc", "query_cost"):
        assert remote[key] == local[key]
