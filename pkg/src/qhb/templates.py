"""Encoder and layer templates for the quantum part of the model.

Three layer families are supported: basic entangling (RX + CNOT ring),
strongly entangling (Rot + ranged CNOTs) and a seeded random layer whose
structure is generated once and repeated for every layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .rng import SplitMix64
from .statevec import ValidationError, check_qubits

ROTATIONS = ("RX", "RY", "RZ")
ENTANGLERS = ("CNOT", "CZ")
_N_SLOTS = {"RX": 1, "RY": 1, "RZ": 1, "Rot": 3, "H": 0, "SDag": 0, "CNOT": 0, "CZ": 0}

TEMPLATE_NAMES = {
    "be": "basic_entangling",
    "basic_entangling": "basic_entangling",
    "se": "strongly_entangling",
    "strongly_entangling": "strongly_entangling",
    "rc": "random",
    "random": "random",
}


@dataclass(frozen=True)
class GateInstance:
    kind: str
    wires: tuple[int, ...]
    slots: tuple[int, ...] = ()
    feature: int | None = None  # encoder gates bind an input feature, not a slot

    def __post_init__(self):
        if self.kind not in _N_SLOTS:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        if len(set(self.wires)) != len(self.wires):
            raise ValidationError("gate wires must be distinct")
        expected = _N_SLOTS[self.kind]
        bound = len(self.slots) if self.feature is None else 1
        if bound != expected:
            raise ValidationError(f"{self.kind} takes {expected} parameters, got {bound}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "wires": list(self.wires), "slots": list(self.slots)}
        if self.feature is not None:
            d["feature"] = self.feature
        return d


@dataclass(frozen=True)
class TemplateKind:
    name: str
    seed: int | None = None
    two_qubit_ratio: float = 0.3

    def __post_init__(self):
        try:
            object.__setattr__(self, "name", TEMPLATE_NAMES[self.name.lower()])
        except KeyError:
            raise ValidationError(f"unknown template {self.name!r}") from None
        if self.name == "random":
            if self.seed is None:
                raise ValidationError("random template requires a seed")
            if not 0 <= self.two_qubit_ratio < 1:
                raise ValidationError("two_qubit_ratio must be in [0, 1)")

    @property
    def short(self) -> str:
        return {"basic_entangling": "be", "strongly_entangling": "se", "random": "rc"}[self.name]

    def to_dict(self) -> dict:
        d = {"name": self.name}
        if self.name == "random":
            d.update(seed=self.seed, two_qubit_ratio=self.two_qubit_ratio)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateKind":
        return cls(d["name"], d.get("seed"), d.get("two_qubit_ratio", 0.3))


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int
    encoder_gates: tuple[GateInstance, ...]
    layer_gates: tuple[tuple[GateInstance, ...], ...]
    param_count: int
    template: str = ""

    @property
    def n_layers(self) -> int:
        return len(self.layer_gates)

    def trainable_gates(self):
        for layer in self.layer_gates:
            yield from layer

    def to_dict(self) -> dict:
        return {
            "template": self.template,
            "n_qubits": self.n_qubits,
            "param_count": self.param_count,
            "encoder": [g.to_dict() for g in self.encoder_gates],
            "layers": [[g.to_dict() for g in layer] for layer in self.layer_gates],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def build_encoder(n_qubits: int) -> tuple[GateInstance, ...]:
    """One RY per qubit, angle bound to input feature ``i`` on qubit ``i``."""
    check_qubits(n_qubits)
    return tuple(GateInstance("RY", (q,), feature=q) for q in range(n_qubits))


def _check_layers(n_layers: int) -> None:
    if n_layers < 1:
        raise ValidationError(f"n_layers must be >= 1, got {n_layers}")


def ring_edges(n_qubits: int) -> list[tuple[int, int]]:
    if n_qubits == 1:
        return []
    if n_qubits == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n_qubits) for i in range(n_qubits)]


def build_basic_entangling(n_qubits: int, n_layers: int) -> CircuitSpec:
    check_qubits(n_qubits)
    _check_layers(n_layers)
    layers = []
    for l in range(n_layers):
        gates = [GateInstance("RX", (q,), (l * n_qubits + q,)) for q in range(n_qubits)]
        gates += [GateInstance("CNOT", e) for e in ring_edges(n_qubits)]
        layers.append(tuple(gates))
    return CircuitSpec(n_qubits, build_encoder(n_qubits), tuple(layers),
                       n_layers * n_qubits, "basic_entangling")


def entangler_range(layer: int, n_qubits: int) -> int:
    return layer % (n_qubits - 1) + 1


def build_strongly_entangling(n_qubits: int, n_layers: int) -> CircuitSpec:
    check_qubits(n_qubits)
    _check_layers(n_layers)
    layers = []
    for l in range(n_layers):
        gates = []
        for q in range(n_qubits):
            base = 3 * (l * n_qubits + q)
            gates.append(GateInstance("Rot", (q,), (base, base + 1, base + 2)))
        if n_qubits > 1:
            r = entangler_range(l, n_qubits)
            gates += [GateInstance("CNOT", (i, (i + r) % n_qubits)) for i in range(n_qubits)]
        layers.append(tuple(gates))
    return CircuitSpec(n_qubits, build_encoder(n_qubits), tuple(layers),
                       3 * n_layers * n_qubits, "strongly_entangling")


def random_layer_structure(n_qubits: int, seed: int, ratio: float = 0.3):
    """The seeded layer skeleton: list of (kind, wires, trainable) triples."""
    rng = SplitMix64(seed)
    out = []
    for _ in range(n_qubits):
        if n_qubits > 1 and rng.random() < ratio:
            kind = ENTANGLERS[rng.randbelow(2)]
            a = rng.randbelow(n_qubits)
            b = rng.randbelow(n_qubits - 1)
            if b >= a:
                b += 1
            out.append((kind, (a, b), False))
        kind = ROTATIONS[rng.randbelow(3)]
        out.append((kind, (rng.randbelow(n_qubits),), True))
    return out


def build_random(n_qubits: int, n_layers: int, seed: int, ratio: float = 0.3) -> CircuitSpec:
    check_qubits(n_qubits)
    _check_layers(n_layers)
    if not 0 <= ratio < 1:
        raise ValidationError("ratio must be in [0, 1)")
    skeleton = random_layer_structure(n_qubits, seed, ratio)
    layers = []
    slot = 0
    for _ in range(n_layers):
        gates = []
        for kind, wires, trainable in skeleton:
            if trainable:
                gates.append(GateInstance(kind, wires, (slot,)))
                slot += 1
            else:
                gates.append(GateInstance(kind, wires))
        layers.append(tuple(gates))
    return CircuitSpec(n_qubits, build_encoder(n_qubits), tuple(layers), slot, "random")


def build_circuit(template: TemplateKind, n_qubits: int, n_layers: int) -> CircuitSpec:
    if template.name == "basic_entangling":
        return build_basic_entangling(n_qubits, n_layers)
    if template.name == "strongly_entangling":
        return build_strongly_entangling(n_qubits, n_layers)
    return build_random(n_qubits, n_layers, template.seed, template.two_qubit_ratio)


def param_count(template: TemplateKind, n_qubits: int, n_layers: int) -> int:
    per_layer = 3 * n_qubits if template.name == "strongly_entangling" else n_qubits
    return n_layers * per_layer
