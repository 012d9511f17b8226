"""Pilot run for the desk-scale smoke configuration.

BE template, 4 qubits, 4 layers, Pauli X, analytic expectations, 100/100
MNIST samples, 5 epochs, batch 5, Adam lr 0.01, seeds 0-4. Writes
results/pilot_smoke.json with every per-epoch curve and the seed-averaged
curve; the acceptance suite re-trains seed 0 and compares against it.

    QHB_DATA_DIR=data/mnist python scripts/pilot_smoke.py
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from qhb.data import load_mnist, resolve_data_dir
from qhb.model import HqnnConfig, train

ROOT = Path(__file__).resolve().parents[1]
SMOKE = dict(template="be", n_layers=4, n_qubits=4, observable="X", shots=None)
THRESHOLD = 0.60


def smoke_config(seed: int) -> HqnnConfig:
    return HqnnConfig(**SMOKE, seed=seed)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--data-dir", default=None)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", type=Path, default=ROOT / "results" / "pilot_smoke.json")
    args = ap.parse_args(argv)

    train_set, test_set = load_mnist(resolve_data_dir(args.data_dir), 4)
    runs = []
    for seed in range(args.seeds):
        cfg = smoke_config(seed)
        _, report = train(cfg, train_set, test_set)
        runs.append({"config": cfg.to_dict(), "report": report.to_dict()})
        print(f"seed {seed}: {report.per_epoch_train_accuracy}", file=sys.stderr)
    curves = np.array([r["report"]["per_epoch_train_accuracy"] for r in runs])
    doc = {
        "threshold": THRESHOLD,
        "seed0_final_train_accuracy": runs[0]["report"]["per_epoch_train_accuracy"][-1],
        "mean_curve": curves.mean(axis=0).tolist(),
        "runs": runs,
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(doc, indent=1) + "\n")
    print(json.dumps({k: doc[k] for k in ("threshold", "seed0_final_train_accuracy",
                                          "mean_curve")}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
