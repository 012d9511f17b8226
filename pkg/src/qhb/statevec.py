"""Dense statevector simulation.

Amplitudes are complex128, qubit 0 is the least-significant bit of the
basis index. Public functions are pure (they return new states); the row
helpers below work in place on raw amplitude arrays and are what the
gradient engine drives.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rng import uniforms

MAX_QUBITS = 16

DEBUG = os.environ.get("QHB_DEBUG", "") not in ("", "0")


class CapacityError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class Pauli(str, enum.Enum):
    X = "X"
    Y = "Y"
    Z = "Z"

    @classmethod
    def parse(cls, value: "str | Pauli") -> "Pauli":
        if isinstance(value, Pauli):
            return value
        return cls(value.upper())


@dataclass(frozen=True)
class ShotMode:
    """Analytic expectations (``shots is None``) or ``shots`` joint samples.

    ``seed`` is the splitmix64 stream state the samples are drawn from.
    """

    shots: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.shots is not None and self.shots <= 0:
            raise ValidationError(f"shots must be positive, got {self.shots}")

    @property
    def analytic(self) -> bool:
        return self.shots is None

    @property
    def kind(self) -> str:
        return "analytic" if self.shots is None else "sampled"

    def with_seed(self, seed: int) -> "ShotMode":
        return ShotMode(self.shots, seed)


ANALYTIC = ShotMode()


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if len(self.amplitudes) != 1 << self.n_qubits:
            raise ValidationError("amplitude count must be 2**n_qubits")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


# -- gate matrices (half-angle convention) ----------------------------------

SQRT1_2 = 1 / np.sqrt(2)
H = np.array([[SQRT1_2, SQRT1_2], [SQRT1_2, -SQRT1_2]], dtype=complex)
SDAG = np.array([[1, 0], [0, -1j]], dtype=complex)
BASIS_CHANGE = {Pauli.X: H, Pauli.Y: H @ SDAG}
PAULI_MATRICES = {
    Pauli.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Pauli.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Pauli.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rot(phi: float, theta: float, omega: float) -> np.ndarray:
    """RZ(omega) @ RY(theta) @ RZ(phi)."""
    return rz(omega) @ ry(theta) @ rz(phi)


def is_unitary(u: np.ndarray, atol: float = 1e-10) -> bool:
    return np.allclose(u.conj().T @ u, np.eye(len(u)), rtol=0, atol=atol)


# -- row helpers ---------------------------------------------------------------
# A "row" is the kernels' split layout: float64 array (2, 2**n) of re, im.


def to_row(amplitudes: np.ndarray) -> np.ndarray:
    return np.stack([amplitudes.real, amplitudes.imag]).astype(float)


def from_row(row: np.ndarray) -> np.ndarray:
    return row[0] + 1j * row[1]


def zero_row(n_qubits: int) -> np.ndarray:
    row = np.zeros((2, 1 << n_qubits))
    row[0, 0] = 1.0
    return row


def _pair(psi: np.ndarray, q: int):
    v = psi.reshape(-1, 2, 1 << q)
    return v[:, 0, :], v[:, 1, :]


def rotate_to_basis(row: np.ndarray, obs: Pauli, n: int) -> None:
    """In place: map the eigenbasis of ``obs`` on every qubit onto Z."""
    if obs is Pauli.Z:
        return
    for q in range(n):
        _kernels.apply_1q(row, BASIS_CHANGE[obs], q)


def sample_z(probs: np.ndarray, n: int, shots: int, seed: int) -> np.ndarray:
    """Draw ``shots`` joint basis states; per-qubit (n_plus - n_minus) / shots."""
    cdf = np.cumsum(probs)
    u = uniforms(seed, shots) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    np.minimum(idx, len(cdf) - 1, out=idx)
    ones = _kernels.count_ones(idx, n)
    return (shots - 2 * ones) / shots


def measure_probs(probs: np.ndarray, n: int, mode: ShotMode, seed: int | None = None):
    """Per-qubit estimates from Z-basis probabilities (after basis rotation)."""
    if mode.analytic:
        return np.clip(_kernels.z_expectations(probs, n), -1.0, 1.0)
    return sample_z(probs, n, mode.shots, mode.seed if seed is None else seed)


def measure(row: np.ndarray, obs: Pauli, n: int, mode: ShotMode, seed: int | None = None):
    """Per-qubit expectation estimates of a row (the row is not modified)."""
    rotated = row.copy()
    rotate_to_basis(rotated, obs, n)
    return measure_probs(_kernels.probabilities(rotated), n, mode, seed)


# -- public pure API ---------------------------------------------------------


def check_qubits(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")


def init_zero_state(n_qubits: int) -> StateVector:
    check_qubits(n_qubits)
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def _check_index(state: StateVector, q: int) -> None:
    if not 0 <= q < state.n_qubits:
        raise IndexError(f"qubit {q} out of range for {state.n_qubits} qubits")


def apply_single_qubit_gate(state: StateVector, u, target: int,
                            check: bool | None = None) -> StateVector:
    _check_index(state, target)
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValidationError("single-qubit gate must be 2x2")
    if (DEBUG if check is None else check) and not is_unitary(u):
        raise ValidationError("gate matrix is not unitary within 1e-10")
    row = to_row(state.amplitudes)
    _kernels.apply_1q(row, u, target)
    return StateVector(state.n_qubits, from_row(row))


def apply_two_qubit_gate(state: StateVector, kind: str, control: int,
                         target: int) -> StateVector:
    _check_index(state, control)
    _check_index(state, target)
    if control == target:
        raise ValidationError("control and target must differ")
    kind = kind.upper()
    if kind not in ("CNOT", "CZ"):
        raise ValidationError(f"unknown two-qubit gate {kind!r}")
    row = to_row(state.amplitudes)
    (_kernels.apply_cnot if kind == "CNOT" else _kernels.apply_cz)(row, control, target)
    return StateVector(state.n_qubits, from_row(row))


def expectation(state: StateVector, obs: "Pauli | str", qubit: int) -> float:
    """Analytic <psi|P_qubit|psi>."""
    _check_index(state, qubit)
    obs = Pauli.parse(obs)
    a, b = _pair(state.amplitudes, qubit)
    if obs is Pauli.Z:
        val = np.sum(np.abs(a) ** 2) - np.sum(np.abs(b) ** 2)
    else:
        cross = np.sum(a.conj() * b)
        val = 2 * (cross.real if obs is Pauli.X else cross.imag)
    return float(np.clip(val, -1.0, 1.0))


def expectation_all(state: StateVector, obs: "Pauli | str",
                    mode: ShotMode = ANALYTIC) -> np.ndarray:
    return measure(to_row(state.amplitudes), Pauli.parse(obs), state.n_qubits, mode)
