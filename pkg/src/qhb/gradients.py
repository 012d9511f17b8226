"""Circuit execution and parameter-shift differentiation.

Shifting a rotation exp(-i t P / 2) by +/- pi/2 multiplies it by
(I -/+ i P)/sqrt(2). With chi_k = U_after A_k |state before gate k>, where
A_k is the gate with P_k inserted at the rotation, the two shifted final
states are (psi -/+ i chi_k)/sqrt(2). One suffix run per trainable slot
therefore yields both shifted circuits exactly; each shifted state is then
measured like an independent circuit run (analytic, or with its own shot
stream) and counts as one circuit execution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .rng import derive_seed
from .statevec import (
    ANALYTIC, PAULI_MATRICES, Pauli, ShotMode, ValidationError, measure_probs,
    rotate_to_basis, rot, rx, ry, rz, zero_row,
)
from .templates import CircuitSpec

_ROT_FN = {"RX": rx, "RY": ry, "RZ": rz}
_GENERATOR = {"RX": Pauli.X, "RY": Pauli.Y, "RZ": Pauli.Z}
_X, _Y, _Z = (PAULI_MATRICES[p] for p in (Pauli.X, Pauli.Y, Pauli.Z))


class ExecutionCounter:
    """Counts circuit executions (forward runs and shifted evaluations)."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += n


@dataclass
class QuantumForwardResult:
    expectations: np.ndarray
    cached_features: np.ndarray
    shot_mode: ShotMode


@dataclass
class Program:
    """A circuit flattened into kernel arrays, plus per-slot shift data.

    ``shifts[i]`` lists ``(slot, A, wire)`` for the trainable slots of op i.
    """

    n_qubits: int
    codes: np.ndarray
    qa: np.ndarray
    qb: np.ndarray
    mats: np.ndarray
    shifts: dict

    def __len__(self):
        return len(self.codes)

    def run(self, psi: np.ndarray, start: int = 0, stop: int | None = None) -> None:
        stop = len(self) if stop is None else stop
        K.run_program(psi, self.codes, self.qa, self.qb, self.mats, start, stop)


def _check_inputs(spec: CircuitSpec, params, features):
    params = np.asarray(params, dtype=float)
    features = np.asarray(features, dtype=float)
    if params.shape != (spec.param_count,):
        raise ValidationError(f"expected {spec.param_count} params, got {params.shape}")
    if features.shape != (spec.n_qubits,):
        raise ValidationError(f"expected {spec.n_qubits} features, got {features.shape}")
    return params, features


def compile_program(spec: CircuitSpec, params, features) -> Program:
    params, features = _check_inputs(spec, params, features)
    codes, qa, qb, mats, shifts = [], [], [], [], {}

    def one(u, q):
        diag = u[0, 1] == 0 and u[1, 0] == 0
        codes.append(K.OP_DIAG if diag else K.OP_U)
        qa.append(q)
        qb.append(0)
        mats.append(u)

    for g in spec.encoder_gates:
        one(ry(features[g.feature]), g.wires[0])
    for g in spec.trainable_gates():
        i = len(codes)
        if g.kind in ("CNOT", "CZ"):
            codes.append(K.OP_CNOT if g.kind == "CNOT" else K.OP_CZ)
            qa.append(g.wires[0])
            qb.append(g.wires[1])
            mats.append(np.zeros((2, 2), dtype=complex))
            continue
        q = g.wires[0]
        if g.kind == "Rot":
            phi, theta, omega = (params[s] for s in g.slots)
            u = rot(phi, theta, omega)
            inner = rz(omega) @ _Y @ ry(theta) @ rz(phi)
            shifts[i] = [(g.slots[0], u @ _Z, q), (g.slots[1], inner, q),
                         (g.slots[2], _Z @ u, q)]
        else:
            s = g.slots[0]
            u = _ROT_FN[g.kind](params[s])
            shifts[i] = [(s, PAULI_MATRICES[_GENERATOR[g.kind]] @ u, q)]
        one(u, q)
    return Program(spec.n_qubits, np.array(codes, dtype=np.int64),
                   np.array(qa, dtype=np.int64), np.array(qb, dtype=np.int64),
                   np.array(mats, dtype=complex).reshape(-1, 2, 2), shifts)


def final_row(spec: CircuitSpec, params, features) -> np.ndarray:
    """Final state in the kernels' split (re, im) layout."""
    prog = compile_program(spec, params, features)
    row = zero_row(spec.n_qubits)
    prog.run(row)
    return row


def final_state(spec: CircuitSpec, params, features) -> np.ndarray:
    row = final_row(spec, params, features)
    return row[0] + 1j * row[1]


def quantum_forward(spec: CircuitSpec, params, features, obs="Z",
                    mode: ShotMode = ANALYTIC, counter: ExecutionCounter | None = None
                    ) -> QuantumForwardResult:
    """Encode ``features``, run every layer, and measure ``obs`` on each qubit."""
    obs = Pauli.parse(obs)
    row = final_row(spec, params, features)
    rotate_to_basis(row, obs, spec.n_qubits)
    if counter is not None:
        counter.add(1)
    exps = measure_probs(K.probabilities(row), spec.n_qubits, mode)
    return QuantumForwardResult(exps, np.asarray(features, dtype=float), mode)


def shift_seed(mode: ShotMode, slot: int, sign: int) -> int:
    """Shot stream for the evaluation of ``slot`` shifted by ``sign`` * pi/2."""
    return derive_seed(mode.seed, slot, 1 if sign > 0 else 0)


def shifted_expectations(spec: CircuitSpec, params, features, obs="Z",
                         mode: ShotMode = ANALYTIC):
    """Per-qubit expectations at theta_k +/- pi/2 for every trainable slot.

    Returns ``(plus, minus)``, each of shape ``(param_count, n_qubits)``.
    """
    obs = Pauli.parse(obs)
    n = spec.n_qubits
    prog = compile_program(spec, params, features)
    final = zero_row(n)
    prog.run(final)
    rotate_to_basis(final, obs, n)

    plus = np.empty((spec.param_count, n))
    minus = np.empty((spec.param_count, n))
    main = zero_row(n)
    for i in range(len(prog)):
        for slot, a, q in prog.shifts.get(i, ()):
            chi = main.copy()
            K.apply_1q(chi, a, q)
            prog.run(chi, i + 1)
            rotate_to_basis(chi, obs, n)
            probs = K.shifted_probabilities(final, chi)
            for sign, out, p in ((1, plus, probs[0]), (-1, minus, probs[1])):
                seed = None if mode.analytic else shift_seed(mode, slot, sign)
                out[slot] = measure_probs(p, n, mode, seed)
        prog.run(main, i, i + 1)
    return plus, minus


def parameter_shift_grad(spec: CircuitSpec, params, features, obs="Z",
                         mode: ShotMode = ANALYTIC, cotangent=None,
                         counter: ExecutionCounter | None = None) -> np.ndarray:
    """Gradient of ``cotangent . E(params)`` with respect to the trainable slots.

    Without a cotangent the gradient of the summed expectations is returned.
    """
    n = spec.n_qubits
    cotangent = np.ones(n) if cotangent is None else np.asarray(cotangent, dtype=float)
    if cotangent.shape != (n,):
        raise ValidationError(f"cotangent must have length {n}")
    plus, minus = shifted_expectations(spec, params, features, obs, mode)
    if counter is not None:
        counter.add(2 * spec.param_count)
    return (plus - minus) @ cotangent / 2


def parameter_shift_jacobian(spec: CircuitSpec, params, features, obs="Z",
                             mode: ShotMode = ANALYTIC) -> np.ndarray:
    """d E_j / d theta_k as an array of shape (n_qubits, param_count)."""
    plus, minus = shifted_expectations(spec, params, features, obs, mode)
    return ((plus - minus) / 2).T


def finite_difference_grad(spec: CircuitSpec, params, features, obs="Z",
                           h: float = 1e-4, cotangent=None,
                           mode: ShotMode = ANALYTIC) -> np.ndarray:
    """Central differences of ``cotangent . E`` by plain re-execution."""
    if not mode.analytic:
        raise ValidationError("finite differences need analytic expectations")
    if h <= 0:
        raise ValidationError("h must be positive")
    params, features = _check_inputs(spec, params, features)
    cotangent = np.ones(spec.n_qubits) if cotangent is None else np.asarray(cotangent, float)
    grad = np.empty(spec.param_count)
    for k in range(spec.param_count):
        up, down = params.copy(), params.copy()
        up[k] += h
        down[k] -= h
        e_up = quantum_forward(spec, up, features, obs).expectations
        e_down = quantum_forward(spec, down, features, obs).expectations
        grad[k] = cotangent @ (e_up - e_down) / (2 * h)
    return grad
