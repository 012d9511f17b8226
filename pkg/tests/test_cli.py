import json

import pytest

from qhb.cli import main

TRAIN = ["train", "--template", "be", "--layers", "2", "--qubits", "4", "--observable", "x",
         "--analytic", "--synthetic", "--epochs", "1", "--n-train", "8", "--n-test", "8"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_train_prints_report(capsys, tmp_path):
    ckpt, circ = tmp_path / "m.json", tmp_path / "c.json"
    code, out, _ = run(capsys, *TRAIN, "--checkpoint", str(ckpt), "--dump-circuit", str(circ))
    assert code == 0
    doc = json.loads(out)
    assert doc["report"]["optimizer_steps"] == 2
    assert doc["config"]["shots"] is None and doc["config"]["observable"] == "X"
    assert set(json.loads(ckpt.read_text())) == {"config", "quantum_params", "weights", "bias",
                                                  "seed"}
    assert json.loads(circ.read_text())["param_count"] == 8


def test_train_defaults_to_1024_shots(capsys):
    code, out, _ = run(capsys, *[a for a in TRAIN if a != "--analytic"])
    assert code == 0 and json.loads(out)["config"]["shots"] == 1024


def test_bad_qubit_count(capsys):
    code, out, err = run(capsys, "train", "--qubits", "5", "--synthetic")
    assert code == 2 and out == ""
    assert "qubit count must be a perfect square in {4,9,16} for pooled encoding" in err


def test_shots_and_analytic_exclusive(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--shots", "1024", "--analytic", "--synthetic"])
    assert exc.value.code == 2


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--synthetic", "--colour", "red"])
    assert exc.value.code == 2


def test_missing_data_dir_is_runtime_error(capsys, monkeypatch):
    monkeypatch.delenv("QHB_DATA_DIR", raising=False)
    code, _, err = run(capsys, "train", "--analytic")
    assert code == 1 and "QHB_DATA_DIR" in err


def test_train_from_mnist(capsys, mnist_dir):
    code, out, _ = run(capsys, "train", "--analytic", "--epochs", "1", "--n-train", "10",
                       "--n-test", "10", "--data-dir", str(mnist_dir))
    assert code == 0 and json.loads(out)["report"]["optimizer_steps"] == 2


def test_sweep_dry_run(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--paper-grid", "--store", str(tmp_path / "s.jsonl"),
                       "--dry-run")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 270
    assert not (tmp_path / "s.jsonl").exists()


def grid_file(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"templates": ["be", "rc"], "layer_counts": [2, 3],
                                "qubit_counts": [4], "observables": ["Z"],
                                "shot_settings": [None], "epochs": 2, "batch_size": 4}))
    return path


def test_sweep_resume_aggregate_report(capsys, tmp_path):
    store = tmp_path / "s.jsonl"
    args = ["sweep", "--grid", str(grid_file(tmp_path)), "--store", str(store), "--synthetic",
            "--n-train", "8", "--n-test", "8"]
    code, out, _ = run(capsys, *args)
    assert code == 0 and json.loads(out)["completed"] == 4
    code, out, _ = run(capsys, *args)
    assert code == 0 and json.loads(out)["completed"] == 0 and json.loads(out)["skipped"] == 4

    code, out, _ = run(capsys, "aggregate", "--store", str(store), "--group", "template",
                       "--filter", "shots=analytic")
    assert code == 0 and len(out.splitlines()) == 1 + 2 * 2

    reports = tmp_path / "rep"
    expected = {"qubits": 2, "observables": 2, "shots": 2, "epochs": 1, "best": 1}
    for family, n_files in expected.items():
        code, out, _ = run(capsys, "report", "--store", str(store), "--family", family,
                           "--out-dir", str(reports))
        written = json.loads(out)["written"]
        assert code == 0 and len(written) == n_files
    assert (reports / "epochs.csv").read_text().startswith("template,epoch_1,epoch_2,n_records")
    assert len((reports / "best.csv").read_text().splitlines()) == 2


def test_report_on_empty_store(capsys, tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    code, _, err = run(capsys, "report", "--store", str(empty), "--family", "best")
    assert code == 1 and "no completed" in err
    code, _, _ = run(capsys, "report", "--store", str(tmp_path / "nope"), "--family", "best")
    assert code == 1


def test_unwritable_store(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, _ = run(capsys, "sweep", "--grid", str(grid_file(tmp_path)), "--synthetic",
                     "--store", str(blocker / "s.jsonl"))
    assert code == 1


def test_bad_filter_is_usage_error(capsys, tmp_path):
    code, _, _ = run(capsys, "aggregate", "--store", str(tmp_path / "s"), "--filter", "colour")
    assert code == 2


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest", "--list")
    names = [json.loads(l)["check"] for l in out.splitlines()]
    assert code == 0 and "sampling-convergence" in names
    code, out, _ = run(capsys, "selftest", "--quick")
    results = [json.loads(l) for l in out.splitlines()]
    assert code == 0 and all(r["ok"] for r in results)
    assert "sampling-convergence" not in {r["check"] for r in results}
    assert all("seconds" in r for r in results)
