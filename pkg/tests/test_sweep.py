import json
import math
import warnings

import pytest
from hypothesis import given, strategies as st

from qhb.model import HqnnConfig
from qhb.sweep import (
    DataSource, SweepGrid, aggregate, append_record, best_record, config_key, epoch_convergence,
    expand_grid, load_store, run_sweep, series_to_csv,
)

SYN = DataSource(synthetic=True, n_train=8, n_test=8)


def tiny_grid(**kw):
    base = dict(templates=["be", "rc"], layer_counts=[2], qubit_counts=[4], observables=["Z"],
                shot_settings=[None], epochs=1, batch_size=4)
    base.update(kw)
    return SweepGrid(**base)


def test_paper_grid_expansion():
    configs = expand_grid(SweepGrid.paper())
    assert len(configs) == 270 == SweepGrid.paper().size
    assert len({config_key(c) for c in configs}) == 270
    assert len({c.seed for c in configs}) == 270
    for c in configs:
        c.validate_paper_grid()
    first = configs[0]
    assert (first.template, first.n_layers, first.n_qubits, first.observable, first.shots) == (
        "random", 2, 4, "X", 100)
    assert configs[1].shots == 1024 and configs[2].observable == "Y"


def test_single_and_repeated_grids():
    one = SweepGrid(["be"], [2], [4], ["Z"], [100])
    assert len(expand_grid(one)) == 1
    rep = expand_grid(SweepGrid.paper().__class__(repeats=3))
    assert len(rep) == 810 and len({c.seed for c in rep}) == 810
    assert len({config_key(c) for c in rep}) == 810


@given(st.integers(0, 2**64 - 1))
def test_expansion_is_deterministic(seed):
    g = tiny_grid(base_seed=seed, repeats=2)
    assert [config_key(c) for c in expand_grid(g)] == [config_key(c) for c in expand_grid(g)]


def test_grid_file_round_trip(tmp_path):
    g = tiny_grid(shot_settings=[None, 100])
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(g.to_dict()))
    assert SweepGrid.load(path) == g
    with pytest.raises(ValueError):
        SweepGrid.from_dict({"templates": ["be"], "colour": 1})
    with pytest.raises(ValueError):
        SweepGrid(templates=[])


def test_serial_sweep_order_and_resume(tmp_path):
    store = tmp_path / "s.jsonl"
    configs = expand_grid(tiny_grid(layer_counts=[2, 3]))
    summary = run_sweep(configs, 1, store, SYN)
    assert (summary.completed, summary.skipped, summary.failed) == (4, 0, 0)
    records = load_store(store)
    assert [r["key"] for r in records] == [config_key(c) for c in configs]
    assert all(len(r["report"]["per_epoch_train_accuracy"]) == 1 for r in records)
    again = run_sweep(configs, 1, store, SYN)
    assert (again.completed, again.skipped) == (0, 4)
    assert len(load_store(store)) == 4


def test_interrupted_sweep_runs_only_missing(tmp_path):
    store = tmp_path / "s.jsonl"
    configs = expand_grid(tiny_grid(layer_counts=[2, 3]))
    run_sweep(configs[:2], 1, store, SYN)
    summary = run_sweep(configs, 1, store, SYN)
    assert (summary.completed, summary.skipped) == (2, 2)


def test_failed_record_and_retry(tmp_path, monkeypatch):
    import qhb.sweep as sw
    from qhb.model import TrainingFailed

    def boom(*a, **k):
        raise TrainingFailed("non-finite loss nan")

    store = tmp_path / "s.jsonl"
    configs = expand_grid(tiny_grid())
    monkeypatch.setattr(sw, "train", boom)
    summary = run_sweep(configs, 1, store, SYN)
    assert summary.failed == 2 and "non-finite" in summary.failures[0]["reason"]
    assert all(r["status"] == "failed" for r in load_store(store))
    monkeypatch.undo()
    assert run_sweep(configs, 1, store, SYN).completed == 2  # failed keys are retried


def test_parallel_sweep(tmp_path):
    store = tmp_path / "p.jsonl"
    configs = expand_grid(tiny_grid(layer_counts=[2, 3]))
    summary = run_sweep(configs, 2, store, SYN)
    assert summary.completed == 4
    serial = tmp_path / "s.jsonl"
    run_sweep(configs, 1, serial, SYN)
    by_key = {r["key"]: r["report"]["per_epoch_train_accuracy"] for r in load_store(serial)}
    for r in load_store(store):
        assert r["report"]["per_epoch_train_accuracy"] == by_key[r["key"]]


def test_torn_line_is_skipped(tmp_path):
    store = tmp_path / "s.jsonl"
    append_record(store, {"key": "a", "status": "completed"})
    with open(store, "a") as f:
        f.write('{"key": "b", "sta')
    with pytest.warns(UserWarning):
        assert [r["key"] for r in load_store(store)] == ["a"]


def fake(template="basic_entangling", qubits=4, layers=2, obs="X", shots=100, acc=0.5, test=0.4,
         t=1.0, host="h1", seed=0, curve=None):
    cfg = HqnnConfig(template, layers, qubits, obs, shots, seed=seed).to_dict()
    curve = curve or [acc / 2, acc]
    return {"key": f"{template}{qubits}{layers}{obs}{shots}{seed}", "config": cfg,
            "status": "completed", "host_label": host,
            "report": {"per_epoch_train_accuracy": curve, "test_accuracy": test,
                       "wall_clock_training_seconds": t}}


def records_grid():
    out = []
    i = 0
    for tmpl in ("basic_entangling", "random"):
        for q in (4, 9):
            for layers in (2, 3):
                for obs in "XYZ":
                    for shots in (100, 1024):
                        i += 1
                        out.append(fake(tmpl, q, layers, obs, shots, acc=(i % 7) / 7,
                                        test=(i % 5) / 5, t=float(i), seed=i))
    return out


def brute_force(records, keys):
    groups = {}
    for r in records:
        k = tuple(r["config"][g] for g in keys) + (r["config"]["n_layers"],)
        groups.setdefault(k, []).append(r)
    return {k: (math.fsum(r["report"]["per_epoch_train_accuracy"][-1] for r in v) / len(v),
                math.fsum(r["report"]["test_accuracy"] for r in v) / len(v),
                math.fsum(r["report"]["wall_clock_training_seconds"] for r in v) / len(v),
                len(v)) for k, v in groups.items()}


@pytest.mark.parametrize("keys", [("template", "n_qubits"), ("template", "observable"),
                                  ("template", "shots"), ("template",)])
def test_aggregate_equals_brute_force(keys):
    records = records_grid()
    want = brute_force(records, keys)
    got = {}
    for s in aggregate(records, keys):
        for p in s.points:
            got[tuple(s.group[k] for k in keys) + (p.layers,)] = (
                p.mean_train_acc, p.mean_test_acc, p.mean_time_s, p.n_records)
    assert got == want


def test_aggregate_filter_single_record_and_failed_ignored():
    records = records_grid() + [dict(fake(), status="failed", report=None, key="x")]
    series = aggregate(records, ("template", "n_qubits"),
                       {"template": "random", "n_qubits": 9})
    assert len(series) == 1 and series[0].averaged_over == ("observable", "shots")
    one = aggregate([fake(acc=0.7, test=0.3, t=5.0)], ("template",))
    p = one[0].points[0]
    assert (p.mean_train_acc, p.mean_test_acc, p.mean_time_s, p.n_records) == (0.7, 0.3, 5.0, 1)
    with pytest.warns(UserWarning):
        assert aggregate(records, ("template",), {"n_qubits": 16}) == []
    with pytest.raises(ValueError):
        aggregate(records, ("n_layers",))


def test_mixed_hosts_drop_time_only():
    recs = [fake(host="a", t=1.0, acc=0.5), fake(host="b", t=9.0, acc=0.7, seed=1)]
    with pytest.warns(UserWarning, match="mixes hosts"):
        p = aggregate(recs, ("template",))[0].points[0]
    assert math.isnan(p.mean_time_s) and p.mean_train_acc == pytest.approx(0.6)


def test_reaggregation_is_byte_identical():
    records = records_grid()
    a = series_to_csv(aggregate(records, ("template", "n_qubits")))
    b = series_to_csv(aggregate(json.loads(json.dumps(records)), ("template", "n_qubits")))
    assert a == b
    header, first = a.splitlines()[:2]
    assert header == ("template,qubits,layers,observable,shots,mean_train_acc,mean_test_acc,"
                      "mean_time_s,n_records")
    assert first.startswith("basic_entangling,4,2,all,all,")


def test_best_record_rules():
    only = fake()
    assert best_record([only]) is only
    slow, fast = fake(acc=0.9, t=10.0), fake(acc=0.9, t=3.0, seed=1)
    assert best_record([slow, fast, fake(acc=0.5, t=0.1, seed=2)]) is fast
    a, b = fake(acc=0.9, t=3.0, layers=3), fake(acc=0.9, t=3.0, layers=2)
    assert best_record([a, b]) is b
    with pytest.raises(ValueError):
        best_record([])


def test_epoch_convergence_means():
    recs = [fake(curve=[0.2, 0.4, 0.6]), fake(curve=[0.4, 0.4, 0.8], seed=1),
            fake(template="random", curve=[0.1, 0.2, 0.3])]
    out = epoch_convergence(recs)
    assert out["basic_entangling"]["per_epoch_mean"] == pytest.approx([0.3, 0.4, 0.7])
    assert out["random"]["n_records"] == 1
