"""Grid expansion, resumable experiment execution and aggregation.

The store is a JSON-lines file: one record per finished (or failed)
experiment, appended under an exclusive lock. Records are keyed by the
sha256 of the canonical config JSON, which makes reruns skip finished work.
"""

from __future__ import annotations

import csv
import fcntl
import hashlib
import io
import itertools
import json
import math
import os
import socket
import sys
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from concurrent.futures.process import BrokenProcessPool
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path

from .data import load_mnist, synthetic_dataset
from .rng import derive_seed
from .model import (
    DEFAULT_CIRCUIT_SEED, GRID_LAYERS, GRID_OBSERVABLES, GRID_QUBITS, GRID_SHOTS,
    GRID_TEMPLATES, HqnnConfig, train,
)

GROUPABLE = ("template", "n_qubits", "n_layers", "observable", "shots")
CSV_COLUMNS = ("template", "qubits", "layers", "observable", "shots",
               "mean_train_acc", "mean_test_acc", "mean_time_s", "n_records")
_CSV_NAMES = {"template": "template", "n_qubits": "qubits", "n_layers": "layers",
              "observable": "observable", "shots": "shots"}


@dataclass
class SweepGrid:
    templates: list = field(default_factory=lambda: list(GRID_TEMPLATES))
    layer_counts: list = field(default_factory=lambda: list(GRID_LAYERS))
    qubit_counts: list = field(default_factory=lambda: list(GRID_QUBITS))
    observables: list = field(default_factory=lambda: list(GRID_OBSERVABLES))
    shot_settings: list = field(default_factory=lambda: list(GRID_SHOTS))  # None = analytic
    base_seed: int = 0
    repeats: int = 1
    epochs: int = 5
    batch_size: int = 5
    learning_rate: float = 0.01
    optimizer: str = "adam"
    circuit_seed: int = DEFAULT_CIRCUIT_SEED

    def __post_init__(self):
        for name in ("templates", "layer_counts", "qubit_counts", "observables", "shot_settings"):
            if not getattr(self, name):
                raise ValueError(f"grid list {name!r} is empty")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    @classmethod
    def paper(cls, base_seed: int = 0) -> "SweepGrid":
        return cls(base_seed=base_seed)

    @property
    def size(self) -> int:
        return math.prod(len(getattr(self, n)) for n in (
            "templates", "layer_counts", "qubit_counts", "observables", "shot_settings")
        ) * self.repeats

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepGrid":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grid fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SweepGrid":
        return cls.from_dict(json.loads(Path(path).read_text()))


def expand_grid(grid: SweepGrid) -> list[HqnnConfig]:
    """Cartesian product in list order, repeats innermost."""
    combos = itertools.product(grid.templates, grid.layer_counts, grid.qubit_counts,
                               grid.observables, grid.shot_settings)
    out = []
    for idx, (tmpl, layers, qubits, obs, shots) in enumerate(combos):
        for rep in range(grid.repeats):
            out.append(HqnnConfig(
                template=tmpl, n_layers=layers, n_qubits=qubits, observable=obs, shots=shots,
                epochs=grid.epochs, batch_size=grid.batch_size,
                learning_rate=grid.learning_rate, optimizer=grid.optimizer,
                seed=derive_seed(grid.base_seed, idx, rep), circuit_seed=grid.circuit_seed))
    return out


def config_key(config: HqnnConfig) -> str:
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True)
class DataSource:
    """Where each experiment gets its train/test features from."""

    data_dir: str | None = None
    synthetic: bool = False
    n_train: int = 100
    n_test: int = 100
    stratified: bool = False
    synthetic_seed: int = 0

    def load(self, n_qubits: int):
        return _load_cached(self, n_qubits)


@lru_cache(maxsize=8)
def _load_cached(source: DataSource, n_qubits: int):
    if source.synthetic:
        train = synthetic_dataset(source.synthetic_seed, max(1, source.n_train // 4), n_qubits)
        test = synthetic_dataset(source.synthetic_seed + 1, max(1, source.n_test // 4), n_qubits)
        return train, test
    if source.data_dir is None:
        raise FileNotFoundError("no MNIST directory configured")
    return load_mnist(source.data_dir, n_qubits, source.n_train, source.n_test, source.stratified)


def host_label() -> str:
    return os.environ.get("QHB_HOST_LABEL") or socket.gethostname()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_experiment(config: HqnnConfig, source: DataSource) -> dict:
    """Train one config; never raises, failures become a failed record."""
    record = {"key": config_key(config), "config": config.to_dict(),
              "started_at": _now(), "host_label": host_label()}
    try:
        train_set, test_set = source.load(config.n_qubits)
        _, report = train(config, train_set, test_set)
        record.update(status="completed", reason=None, report=report.to_dict())
    except Exception as exc:  # noqa: BLE001 - a sweep must outlive any single run
        record.update(status="failed", reason=f"{type(exc).__name__}: {exc}", report=None)
        if os.environ.get("QHB_DEBUG"):
            traceback.print_exc(file=sys.stderr)
    record["finished_at"] = _now()
    return record


def append_record(store_path, record: dict) -> None:
    line = json.dumps(record, sort_keys=True, allow_nan=True) + "\n"
    with open(store_path, "a", encoding="utf-8") as f:
        fcntl.flock(f, fcntl.LOCK_EX)
        try:
            f.write(line)
            f.flush()
            os.fsync(f.fileno())
        finally:
            fcntl.flock(f, fcntl.LOCK_UN)


def load_store(store_path) -> list[dict]:
    """All parseable records; a torn final line (crash mid-write) is skipped."""
    path = Path(store_path)
    if not path.exists():
        return []
    records = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            warnings.warn(f"{path}:{n}: skipping unparseable record")
    return records


def completed_keys(records) -> set[str]:
    return {r["key"] for r in records if r.get("status") == "completed"}


@dataclass
class SweepSummary:
    total: int = 0
    skipped: int = 0
    completed: int = 0
    failed: int = 0
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def run_sweep(configs, worker_count: int, store_path, source: DataSource,
              resume: bool = True, log=None) -> SweepSummary:
    """Run every config not already completed in the store."""
    store_path = Path(store_path)
    store_path.parent.mkdir(parents=True, exist_ok=True)
    with open(store_path, "a", encoding="utf-8"):
        pass  # fail early if the store is not writable
    done = completed_keys(load_store(store_path)) if resume else set()
    summary = SweepSummary(total=len(configs))
    todo = []
    for cfg in configs:
        if config_key(cfg) in done:
            summary.skipped += 1
        else:
            todo.append(cfg)

    def record(rec):
        append_record(store_path, rec)
        if rec["status"] == "completed":
            summary.completed += 1
        else:
            summary.failed += 1
            summary.failures.append({"key": rec["key"], "reason": rec["reason"]})
        if log is not None:
            n = summary.completed + summary.failed
            cfg = HqnnConfig.from_dict(rec["config"])
            extra = rec["reason"] if rec["status"] != "completed" else (
                f"acc={rec['report']['per_epoch_train_accuracy'][-1]:.3f} "
                f"t={rec['report']['wall_clock_training_seconds']:.1f}s")
            log(f"[{n}/{len(todo)}] {cfg.label()} {rec['status']} {extra}")

    if worker_count <= 1:
        for cfg in todo:
            record(run_experiment(cfg, source))
        return summary

    with ProcessPoolExecutor(max_workers=worker_count) as pool:
        futures = {pool.submit(run_experiment, cfg, source): cfg for cfg in todo}
        for fut in as_completed(futures):
            cfg = futures[fut]
            try:
                rec = fut.result()
            except (BrokenProcessPool, Exception) as exc:  # noqa: BLE001
                rec = {"key": config_key(cfg), "config": cfg.to_dict(), "status": "failed",
                       "reason": f"worker crashed: {type(exc).__name__}: {exc}",
                       "report": None, "started_at": None, "finished_at": _now(),
                       "host_label": host_label()}
            record(rec)
    return summary


# -- aggregation -------------------------------------------------------------


@dataclass
class AggregatePoint:
    layers: int
    mean_train_acc: float
    mean_test_acc: float
    mean_time_s: float
    n_records: int


@dataclass
class AggregateSeries:
    group: dict
    averaged_over: tuple
    points: list

    def to_dict(self) -> dict:
        return asdict(self)


def final_train_accuracy(record: dict) -> float:
    return record["report"]["per_epoch_train_accuracy"][-1]


def _matches(record: dict, filt: dict | None) -> bool:
    if not filt:
        return True
    return all(record["config"].get(k) == v for k, v in filt.items())


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def aggregate(records, group_keys, filt: dict | None = None) -> list[AggregateSeries]:
    """Mean final train accuracy, test accuracy and time per (group, layer count).

    Times are NaN for points whose members come from different hosts.
    """
    group_keys = tuple(group_keys)
    bad = [k for k in group_keys if k not in GROUPABLE or k == "n_layers"]
    if bad:
        raise ValueError(f"cannot group by {bad}; layers is always the x axis and the "
                         f"other keys are {GROUPABLE}")
    members: dict = {}
    for r in records:
        if r.get("status") != "completed" or not _matches(r, filt):
            continue
        gkey = tuple(r["config"][k] for k in group_keys)
        members.setdefault(gkey, {}).setdefault(r["config"]["n_layers"], []).append(r)
    if not members:
        warnings.warn(f"no completed records match filter {filt}")
    averaged = tuple(k for k in GROUPABLE if k not in group_keys and k != "n_layers")
    out = []
    for gkey in sorted(members, key=_sort_key):
        points = []
        for layers in sorted(members[gkey]):
            rs = members[gkey][layers]
            hosts = {r.get("host_label") for r in rs}
            if len(hosts) > 1:
                warnings.warn(f"group {gkey} layers={layers} mixes hosts {sorted(map(str, hosts))};"
                              " time mean omitted")
                mean_time = float("nan")
            else:
                mean_time = _mean(r["report"]["wall_clock_training_seconds"] for r in rs)
            points.append(AggregatePoint(
                layers, _mean(final_train_accuracy(r) for r in rs),
                _mean(r["report"]["test_accuracy"] for r in rs), mean_time, len(rs)))
        out.append(AggregateSeries(dict(zip(group_keys, gkey)), averaged, points))
    return out


def _sort_key(values):
    # None (analytic) sorts before any shot count
    return tuple((0, 0) if v is None else (1, v) for v in values)


def _fmt(v) -> str:
    if v is None:
        return "analytic"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def series_to_csv(series: list[AggregateSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in series:
        for p in s.points:
            cells = {_CSV_NAMES[k]: _fmt(v) for k, v in s.group.items()}
            row = [cells.get(c, "all") for c in CSV_COLUMNS[:5]]
            row[2] = str(p.layers)
            row += [_fmt(p.mean_train_acc), _fmt(p.mean_test_acc), _fmt(p.mean_time_s),
                    str(p.n_records)]
            w.writerow(row)
    return buf.getvalue()


def epoch_convergence(records, group_key: str = "template") -> dict:
    """Per-epoch mean train accuracy per group value, averaged over everything else."""
    curves: dict = {}
    for r in records:
        if r.get("status") == "completed":
            curves.setdefault(r["config"][group_key], []).append(
                r["report"]["per_epoch_train_accuracy"])
    out = {}
    for g, cs in curves.items():
        length = min(len(c) for c in cs)
        out[g] = {"per_epoch_mean": [_mean(c[e] for c in cs) for e in range(length)],
                  "n_records": len(cs)}
    return out


def best_record(records) -> dict:
    """Highest final train accuracy; ties go to the faster run, then the smaller config."""
    done = [r for r in records if r.get("status") == "completed"]
    if not done:
        raise ValueError("no completed records")
    return min(done, key=lambda r: (-final_train_accuracy(r),
                                    r["report"]["wall_clock_training_seconds"],
                                    json.dumps(r["config"], sort_keys=True)))
