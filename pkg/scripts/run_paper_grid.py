"""Run (or resume) the 270-config grid into results/paper_grid.jsonl.

    QHB_DATA_DIR=data/mnist python scripts/run_paper_grid.py [--workers N]

Heavy configs (16 qubits, strongly entangling, 1024 shots) dominate; on
one core the full grid takes several hours. Safe to interrupt and rerun.
"""

import argparse
import sys
from pathlib import Path

from qhb.data import resolve_data_dir
from qhb.sweep import DataSource, SweepGrid, expand_grid, run_sweep

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--store", type=Path, default=ROOT / "results" / "paper_grid.jsonl")
    ap.add_argument("--data-dir", default=None)
    ap.add_argument("--base-seed", type=int, default=0)
    args = ap.parse_args(argv)

    configs = expand_grid(SweepGrid.paper(args.base_seed))
    # cheap configs first so partial stores cover every family early
    configs.sort(key=lambda c: (c.n_qubits, c.n_layers))
    source = DataSource(data_dir=str(resolve_data_dir(args.data_dir)))
    summary = run_sweep(configs, args.workers, args.store, source,
                        log=lambda m: print(m, file=sys.stderr, flush=True))
    print(summary.to_dict())
    return 1 if summary.failed else 0


if __name__ == "__main__":
    sys.exit(main())
