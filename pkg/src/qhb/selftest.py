"""Fast invariant checks runnable from an installed package (``qhb selftest``)."""

from __future__ import annotations

import gzip
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .data import load_idx, synthetic_dataset, write_idx
from .gradients import ExecutionCounter, finite_difference_grad, parameter_shift_grad
from .model import HqnnConfig, expected_executions, train
from .rng import SplitMix64, derive_seed
from .statevec import (
    H, ShotMode, StateVector, apply_single_qubit_gate, apply_two_qubit_gate, expectation_all,
    init_zero_state, rot, rx, ry, rz,
)
from .templates import TemplateKind, build_circuit


class CheckFailed(AssertionError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise CheckFailed(msg)


def random_sequence_norms(n_sequences: int, seed: int = 7) -> float:
    """Worst |norm - 1| over random gate sequences on 1..6 qubits."""
    rng = SplitMix64(seed)
    worst = 0.0
    for _ in range(n_sequences):
        n = 1 + rng.randbelow(6)
        state = init_zero_state(n)
        for _ in range(20):
            q = rng.randbelow(n)
            pick = rng.randbelow(6)
            angles = [rng.random() * 4 * np.pi - 2 * np.pi for _ in range(3)]
            if pick < 4 or n == 1:
                u = (rx(angles[0]), ry(angles[0]), rz(angles[0]), rot(*angles), H)[min(pick, 4)]
                state = apply_single_qubit_gate(state, u, q)
            else:
                t = (q + 1 + rng.randbelow(n - 1)) % n
                state = apply_two_qubit_gate(state, "CNOT" if pick == 4 else "CZ", q, t)
        worst = max(worst, abs(state.norm() - 1.0))
    return worst


def check_norms():
    worst = random_sequence_norms(200)
    _require(worst < 1e-10, f"norm drift {worst:.2e}")


def check_gate_identities():
    psi = init_zero_state(1)
    twice = apply_single_qubit_gate(apply_single_qubit_gate(psi, H, 0), H, 0)
    _require(np.allclose(twice.amplitudes, psi.amplitudes, atol=1e-12), "H^2 != I")
    flipped = apply_single_qubit_gate(psi, ry(np.pi), 0)
    _require(np.allclose(flipped.amplitudes, [0, 1], atol=1e-12), "RY(pi)|0> != |1>")
    eleven = StateVector(2, np.array([0, 0, 0, 1], dtype=complex))
    cz = apply_two_qubit_gate(eleven, "CZ", 0, 1)
    _require(np.allclose(cz.amplitudes, [0, 0, 0, -1], atol=1e-12), "CZ|11> != -|11>")


def check_gradients():
    rng = SplitMix64(11)
    worst = 0.0
    for name in ("basic_entangling", "strongly_entangling", "random"):
        spec = build_circuit(TemplateKind(name, seed=5), 4, 2)
        for obs in "XYZ":
            params = np.array([rng.random() * 2 * np.pi for _ in range(spec.param_count)])
            x = np.array([rng.random() * np.pi for _ in range(4)])
            ps = parameter_shift_grad(spec, params, x, obs)
            fd = finite_difference_grad(spec, params, x, obs)
            worst = max(worst, float(np.max(np.abs(ps - fd))))
    _require(worst < 1e-5, f"parameter shift vs finite differences: {worst:.2e}")


def check_sampling():
    plus = apply_single_qubit_gate(init_zero_state(1), H, 0)
    est = [expectation_all(plus, "Z", ShotMode(100, derive_seed(3, i)))[0] for i in range(200)]
    _require(all(abs(e * 50 - round(e * 50)) < 1e-12 for e in est), "estimates not on 2/shots grid")
    mean = float(np.mean(est))
    _require(abs(mean) <= 4 / np.sqrt(200 * 100), f"sample mean {mean:.4f} outside 4 sigma")


def check_random_circuits():
    for seed in range(20):
        a = build_circuit(TemplateKind("random", seed=seed), 9, 3)
        b = build_circuit(TemplateKind("random", seed=seed), 9, 3)
        _require(a.dumps() == b.dumps(), f"random circuit seed {seed} not reproducible")
        shapes = [[(g.kind, g.wires) for g in layer] for layer in a.layer_gates]
        _require(all(s == shapes[0] for s in shapes), "layer structure differs across layers")


def check_step_count():
    data = synthetic_dataset(1, 5)
    cfg = HqnnConfig("be", 2, 4, "Z", epochs=2, batch_size=3)
    counter = ExecutionCounter()
    model, report = train(cfg, data, data, counter)
    _require(report.optimizer_steps == 2 * 7, f"{report.optimizer_steps} optimizer steps")
    want = expected_executions(cfg, model.spec.param_count, len(data), len(data))
    _require(counter.count == want, f"{counter.count} executions, expected {want}")


def check_idx_roundtrip():
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (6, 28, 28), dtype=np.uint8)
    labels = np.arange(6, dtype=np.uint8)
    with tempfile.TemporaryDirectory() as tmp:
        img, lbl = Path(tmp) / "i.gz", Path(tmp) / "l.gz"
        write_idx(img, lbl, images, labels)
        raw = load_idx(img, lbl)
        _require(gzip.decompress(img.read_bytes())[:4] == b"\x00\x00\x08\x03", "image magic")
    _require(np.array_equal(raw.images, images) and np.array_equal(raw.labels, labels),
             "IDX round trip changed the data")


@dataclass(frozen=True)
class Check:
    name: str
    fn: Callable[[], None]
    monte_carlo: bool = False


CHECKS = (
    Check("norm-preservation", check_norms),
    Check("gate-identities", check_gate_identities),
    Check("gradient-parameter-shift", check_gradients),
    Check("sampling-convergence", check_sampling, monte_carlo=True),
    Check("random-circuit-determinism", check_random_circuits),
    Check("step-count", check_step_count),
    Check("idx-roundtrip", check_idx_roundtrip),
)


def run_checks(quick: bool = False):
    """Yield ``(name, ok, seconds, message)`` per check."""
    for check in CHECKS:
        if quick and check.monte_carlo:
            continue
        t0 = time.perf_counter()
        try:
            check.fn()
            ok, msg = True, ""
        except Exception as exc:  # noqa: BLE001 - report every check
            ok, msg = False, f"{type(exc).__name__}: {exc}"
        yield check.name, ok, time.perf_counter() - t0, msg
