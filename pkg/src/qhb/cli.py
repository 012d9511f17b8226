"""``qhb`` command line: train, sweep, aggregate, report, selftest.

stdout carries JSON or CSV only; progress and diagnostics go to stderr.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .data import POOL_SIZES, resolve_data_dir, synthetic_dataset, load_mnist
from .gradients import ExecutionCounter
from .model import HqnnConfig, TrainingFailed, train
from .selftest import CHECKS, run_checks
from .statevec import ValidationError
from .sweep import (
    GROUPABLE, DataSource, SweepGrid, aggregate, best_record, config_key, epoch_convergence,
    expand_grid, load_store, run_sweep, series_to_csv,
)

QUBIT_ERROR = "qubit count must be a perfect square in {4,9,16} for pooled encoding"


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"qhb: {msg}", file=sys.stderr)


def _json(obj) -> None:
    print(json.dumps(obj, sort_keys=True, allow_nan=True))


def _add_data_flags(p):
    p.add_argument("--data-dir", help="directory with the four MNIST IDX files "
                   "(default: $QHB_DATA_DIR)")
    p.add_argument("--synthetic", action="store_true",
                   help="use seeded Gaussian blobs instead of MNIST")
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--stratified", action="store_true",
                   help="take n/4 samples per class instead of the first n")


def _data_source(args) -> DataSource:
    if args.synthetic:
        return DataSource(synthetic=True, n_train=args.n_train, n_test=args.n_test)
    return DataSource(data_dir=str(resolve_data_dir(args.data_dir)), n_train=args.n_train,
                      n_test=args.n_test, stratified=args.stratified)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qhb", description="HQNN hyperparameter benchmark")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one model and print its report")
    t.add_argument("--template", default="be", help="be | se | rc (or full names)")
    t.add_argument("--layers", type=int, default=4)
    t.add_argument("--qubits", type=int, default=4)
    t.add_argument("--observable", default="z", type=str.upper, choices=["X", "Y", "Z"])
    shots = t.add_mutually_exclusive_group()
    shots.add_argument("--shots", type=int, default=None, help="shots per circuit (default 1024)")
    shots.add_argument("--analytic", action="store_true", help="exact expectations")
    t.add_argument("--epochs", type=int, default=5)
    t.add_argument("--batch-size", type=int, default=5)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--optimizer", default="adam", choices=["adam", "sgd"])
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--circuit-seed", type=int, default=42,
                   help="structure seed for the random template")
    t.add_argument("--shuffle", action="store_true", help="seeded per-epoch shuffling")
    t.add_argument("--checkpoint", type=Path, help="write the trained model as JSON")
    t.add_argument("--dump-circuit", type=Path, help="write the gate list as JSON")
    t.add_argument("-v", "--verbose", action="store_true", help="per-epoch progress on stderr")
    _add_data_flags(t)

    s = sub.add_parser("sweep", help="run a hyperparameter grid into a JSONL store")
    grid = s.add_mutually_exclusive_group(required=True)
    grid.add_argument("--paper-grid", action="store_true", help="the 270-config study grid")
    grid.add_argument("--grid", type=Path, help="JSON grid definition")
    s.add_argument("--store", type=Path, required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--base-seed", type=int, default=None, help="override the grid's base seed")
    resume = s.add_mutually_exclusive_group()
    resume.add_argument("--resume", dest="resume", action="store_true", default=True,
                        help="skip configs already completed in the store (default)")
    resume.add_argument("--no-resume", dest="resume", action="store_false")
    s.add_argument("--dry-run", action="store_true", help="print configs, run nothing")
    _add_data_flags(s)

    a = sub.add_parser("aggregate", help="group means per layer count as CSV")
    a.add_argument("--store", type=Path, required=True)
    a.add_argument("--group", default="template,n_qubits",
                   help=f"comma-separated subset of {', '.join(k for k in GROUPABLE if k != 'n_layers')}")
    a.add_argument("--filter", action="append", default=[], metavar="KEY=VALUE")
    a.add_argument("--out", type=Path, help="write CSV here instead of stdout")

    r = sub.add_parser("report", help="CSV series for one figure family")
    r.add_argument("--store", type=Path, required=True)
    r.add_argument("--family", required=True,
                   choices=["qubits", "observables", "shots", "epochs", "best"])
    r.add_argument("--out-dir", type=Path, default=Path("reports"))

    st = sub.add_parser("selftest", help="run the built-in invariant checks")
    st.add_argument("--quick", action="store_true", help="skip Monte-Carlo sampling checks")
    st.add_argument("--list", action="store_true", help="list check names only")
    return ap


# -- train -------------------------------------------------------------------


def cmd_train(args) -> int:
    if args.qubits not in POOL_SIZES:
        raise UsageError(QUBIT_ERROR)
    if args.shots is not None and args.shots <= 0:
        raise UsageError("--shots must be positive")
    shots = None if args.analytic else (args.shots or 1024)
    try:
        config = HqnnConfig(template=args.template, n_layers=args.layers, n_qubits=args.qubits,
                            observable=args.observable, shots=shots, epochs=args.epochs,
                            batch_size=args.batch_size, learning_rate=args.lr,
                            optimizer=args.optimizer, seed=args.seed, shuffle=args.shuffle,
                            circuit_seed=args.circuit_seed)
    except ValidationError as exc:
        raise UsageError(str(exc)) from exc

    if args.synthetic:
        train_set = synthetic_dataset(args.seed, max(1, args.n_train // 4), args.qubits)
        test_set = synthetic_dataset(args.seed + 1, max(1, args.n_test // 4), args.qubits)
    else:
        train_set, test_set = load_mnist(resolve_data_dir(args.data_dir), args.qubits,
                                         args.n_train, args.n_test, args.stratified)
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    counter = ExecutionCounter()
    try:
        model, report = train(config, train_set, test_set, counter, log)
    except TrainingFailed as exc:
        _err(f"training failed: {exc}")
        return 1
    if args.checkpoint:
        model.save(args.checkpoint)
    if args.dump_circuit:
        args.dump_circuit.write_text(json.dumps(model.spec.to_dict(), indent=1))
    _json({"config": config.to_dict(), "report": report.to_dict()})
    return 0


# -- sweep -------------------------------------------------------------------


def cmd_sweep(args) -> int:
    try:
        grid = SweepGrid.paper() if args.paper_grid else SweepGrid.load(args.grid)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad grid: {exc}") from exc
    if args.base_seed is not None:
        grid.base_seed = args.base_seed
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    try:
        configs = expand_grid(grid)
    except ValidationError as exc:
        raise UsageError(f"bad grid: {exc}") from exc
    if args.dry_run:
        for cfg in configs:
            _json({"key": config_key(cfg), "config": cfg.to_dict()})
        return 0
    source = _data_source(args)
    try:
        summary = run_sweep(configs, args.workers, args.store, source, args.resume,
                            log=lambda m: print(m, file=sys.stderr, flush=True))
    except OSError as exc:
        _err(f"cannot write store {args.store}: {exc}")
        return 1
    _json(summary.to_dict())
    return 1 if summary.failed else 0


# -- aggregate / report --------------------------------------------------------


def _parse_filter(items) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or key not in GROUPABLE:
            raise UsageError(f"bad filter {item!r}; use KEY=VALUE with KEY in {GROUPABLE}")
        if key in ("n_qubits", "n_layers"):
            out[key] = int(value)
        elif key == "shots":
            out[key] = None if value == "analytic" else int(value)
        elif key == "observable":
            out[key] = value.upper()
        else:
            out[key] = HqnnConfig(template=value).template
    return out


def _records(store: Path):
    if not store.exists():
        _err(f"store {store} does not exist")
        return None
    records = [r for r in load_store(store) if r.get("status") == "completed"]
    if not records:
        _err(f"store {store} has no completed records")
        return None
    return records


def cmd_aggregate(args) -> int:
    keys = [k.strip() for k in args.group.split(",") if k.strip()]
    filt = _parse_filter(args.filter)
    records = _records(args.store)
    if records is None:
        return 1
    try:
        series = aggregate(records, keys, filt)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not series:
        return 1
    text = series_to_csv(series)
    if args.out:
        args.out.write_text(text)
        _json({"written": [str(args.out)]})
    else:
        sys.stdout.write(text)
    return 0


FAMILIES = {"qubits": "n_qubits", "observables": "observable", "shots": "shots"}


def cmd_report(args) -> int:
    records = _records(args.store)
    if records is None:
        return 1
    args.out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if args.family in FAMILIES:
        templates = sorted({r["config"]["template"] for r in records})
        for tmpl in templates:
            series = aggregate(records, ("template", FAMILIES[args.family]), {"template": tmpl})
            path = args.out_dir / f"{args.family}_{tmpl}.csv"
            path.write_text(series_to_csv(series))
            written.append(str(path))
    elif args.family == "epochs":
        curves = epoch_convergence(records)
        n_epochs = max(len(c["per_epoch_mean"]) for c in curves.values())
        lines = ["template," + ",".join(f"epoch_{e + 1}" for e in range(n_epochs)) + ",n_records"]
        for tmpl in sorted(curves):
            vals = curves[tmpl]["per_epoch_mean"]
            cells = [repr(v) for v in vals] + [""] * (n_epochs - len(vals))
            lines.append(",".join([tmpl, *cells, str(curves[tmpl]["n_records"])]))
        path = args.out_dir / "epochs.csv"
        path.write_text("\n".join(lines) + "\n")
        written.append(str(path))
    else:
        best = best_record(records)
        c, rep = best["config"], best["report"]
        shots = "analytic" if c["shots"] is None else c["shots"]
        header = ("template,qubits,layers,observable,shots,train_accuracy,test_accuracy,"
                  "training_minutes,key")
        row = [c["template"], c["n_qubits"], c["n_layers"], c["observable"], shots,
               repr(rep["per_epoch_train_accuracy"][-1]), repr(rep["test_accuracy"]),
               repr(rep["wall_clock_training_seconds"] / 60), best["key"]]
        path = args.out_dir / "best.csv"
        path.write_text(header + "\n" + ",".join(map(str, row)) + "\n")
        written.append(str(path))
    _json({"family": args.family, "written": written})
    return 0


# -- selftest ----------------------------------------------------------------


def cmd_selftest(args) -> int:
    if args.list:
        for check in CHECKS:
            _json({"check": check.name, "monte_carlo": check.monte_carlo})
        return 0
    failed = []
    for name, ok, seconds, msg in run_checks(args.quick):
        _json({"check": name, "ok": ok, "seconds": round(seconds, 4), "message": msg})
        if not ok:
            failed.append(name)
    if failed:
        _err(f"failed checks: {', '.join(failed)}")
        return 1
    return 0


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "aggregate": cmd_aggregate,
            "report": cmd_report, "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    warnings.simplefilter("default")
    warnings.showwarning = lambda m, *a, **k: _err(f"warning: {m}")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _err(str(exc))
        return 2
    except (FileNotFoundError, ValueError, OSError) as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
