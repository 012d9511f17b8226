"""The hybrid model: RY encoding -> trainable layers -> Pauli readout -> dense head.

Training runs per-sample forward passes, backpropagates the cross-entropy
through the head, and pushes the resulting cotangent through the circuit
with the parameter-shift rule. Batch gradients are summed in sample order
and divided by the batch size, so a fixed seed gives a bit-identical
trajectory in analytic mode.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureSet
from .gradients import ExecutionCounter, parameter_shift_grad, quantum_forward
from .head import DenseLayer, head_forward, loss_and_backward, make_optimizer
from .rng import derive_seed, uniforms
from .statevec import Pauli, ShotMode, ValidationError
from .templates import TEMPLATE_NAMES, CircuitSpec, TemplateKind, build_circuit

GRID_TEMPLATES = ("random", "basic_entangling", "strongly_entangling")
GRID_LAYERS = (2, 3, 4, 5, 6)
GRID_QUBITS = (4, 9, 16)
GRID_OBSERVABLES = ("X", "Y", "Z")
GRID_SHOTS = (100, 1024)
DEFAULT_CIRCUIT_SEED = 42

# substream tags for derive_seed
_INIT_QUANTUM, _INIT_HEAD, _TRAIN, _EVAL, _TEST, _SHUFFLE = range(1, 7)


class TrainingFailed(RuntimeError):
    pass


@dataclass
class HqnnConfig:
    template: str = "basic_entangling"
    n_layers: int = 4
    n_qubits: int = 4
    observable: str = "Z"
    shots: int | None = None  # None = analytic expectations
    epochs: int = 5
    batch_size: int = 5
    learning_rate: float = 0.01
    seed: int = 0
    optimizer: str = "adam"
    shuffle: bool = False
    circuit_seed: int = DEFAULT_CIRCUIT_SEED  # structure of the random template
    two_qubit_ratio: float = 0.3

    def __post_init__(self):
        try:
            self.template = TEMPLATE_NAMES[self.template.lower()]
        except KeyError:
            raise ValidationError(f"unknown template {self.template!r}") from None
        self.template_kind  # validates the random-template options
        self.observable = Pauli.parse(self.observable).value
        ShotMode(self.shots)
        for name in ("n_layers", "n_qubits", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        make_optimizer(self.optimizer, self.learning_rate)

    @property
    def template_kind(self) -> TemplateKind:
        if self.template == "random":
            return TemplateKind("random", self.circuit_seed, self.two_qubit_ratio)
        return TemplateKind(self.template)

    @property
    def shot_mode(self) -> ShotMode:
        return ShotMode(self.shots, self.seed)

    def validate_paper_grid(self) -> None:
        """Reject anything outside the tested hyperparameter values."""
        checks = (("template", self.template, GRID_TEMPLATES),
                  ("n_layers", self.n_layers, GRID_LAYERS),
                  ("n_qubits", self.n_qubits, GRID_QUBITS),
                  ("observable", self.observable, GRID_OBSERVABLES),
                  ("shots", self.shots, GRID_SHOTS))
        for name, value, allowed in checks:
            if value not in allowed:
                raise ValidationError(f"{name}={value!r} is not a grid value {allowed}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HqnnConfig":
        return cls(**d)

    def label(self) -> str:
        shots = "analytic" if self.shots is None else str(self.shots)
        return (f"{self.template_kind.short}/q{self.n_qubits}/l{self.n_layers}/"
                f"{self.observable}/{shots}")


@dataclass
class HqnnModel:
    config: HqnnConfig
    spec: CircuitSpec
    quantum_params: np.ndarray
    head: DenseLayer

    @classmethod
    def init(cls, config: HqnnConfig) -> "HqnnModel":
        spec = build_circuit(config.template_kind, config.n_qubits, config.n_layers)
        theta = 2 * np.pi * uniforms(derive_seed(config.seed, _INIT_QUANTUM), spec.param_count)
        head = DenseLayer.init(config.n_qubits, uniforms(derive_seed(config.seed, _INIT_HEAD),
                                                         4 * config.n_qubits))
        return cls(config, spec, theta, head)

    @property
    def n_params(self) -> int:
        return self.spec.param_count + self.head.weights.size + self.head.bias.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.quantum_params, self.head.weights.ravel(), self.head.bias])

    def set_flat(self, vec: np.ndarray) -> None:
        p, w = self.spec.param_count, self.head.weights.size
        self.quantum_params = vec[:p].copy()
        self.head = DenseLayer(vec[p:p + w].reshape(self.head.weights.shape), vec[p + w:].copy())

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "quantum_params": self.quantum_params.tolist(),
            "weights": self.head.weights.tolist(),
            "bias": self.head.bias.tolist(),
            "seed": self.config.seed,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> "HqnnModel":
        config = HqnnConfig.from_dict(d["config"])
        spec = build_circuit(config.template_kind, config.n_qubits, config.n_layers)
        theta = np.asarray(d["quantum_params"], dtype=float)
        if theta.shape != (spec.param_count,):
            raise ValidationError("checkpoint parameter count does not match its config")
        return cls(config, spec, theta, DenseLayer(d["weights"], d["bias"]))

    @classmethod
    def load(cls, path) -> "HqnnModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TrainReport:
    per_epoch_train_accuracy: list = field(default_factory=list)
    per_epoch_mean_loss: list = field(default_factory=list)
    test_accuracy: float = float("nan")
    wall_clock_training_seconds: float = 0.0
    circuit_executions: int = 0
    optimizer_steps: int = 0
    eval_mode: str = "analytic"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        return cls(**d)


def _mode(model: HqnnModel, *keys: int) -> ShotMode:
    c = model.config
    if c.shots is None:
        return ShotMode()
    return ShotMode(c.shots, derive_seed(c.seed, *keys))


def model_forward(model: HqnnModel, features, mode: ShotMode | None = None,
                  counter: ExecutionCounter | None = None) -> np.ndarray:
    """Class probabilities for one feature vector."""
    features = np.asarray(features, dtype=float)
    if features.min(initial=0.0) < 0 or features.max(initial=0.0) > np.pi:
        raise ValidationError("features must lie in [0, pi]")
    mode = model.config.shot_mode if mode is None else mode
    q = quantum_forward(model.spec, model.quantum_params, features,
                        model.config.observable, mode, counter)
    return head_forward(model.head, q.expectations)


def predict(model: HqnnModel, dataset: FeatureSet, tag: int = _EVAL, epoch: int = 0,
            counter: ExecutionCounter | None = None) -> np.ndarray:
    return np.array([
        int(np.argmax(model_forward(model, x, _mode(model, tag, epoch, i), counter)))
        for i, x in enumerate(dataset.features)
    ], dtype=np.int64)


def evaluate(model: HqnnModel, dataset: FeatureSet, tag: int = _EVAL, epoch: int = 0,
             counter: ExecutionCounter | None = None) -> float:
    """Fraction of samples whose most probable class equals the label."""
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    hits = predict(model, dataset, tag, epoch, counter) == dataset.labels
    return int(hits.sum()) / len(dataset)


def _order(config: HqnnConfig, epoch: int, n: int) -> np.ndarray:
    if not config.shuffle:
        return np.arange(n)
    keys = uniforms(derive_seed(config.seed, _SHUFFLE, epoch), n)
    return np.argsort(keys, kind="stable")


def sample_gradient(model: HqnnModel, x, label: int, mode: ShotMode,
                    counter: ExecutionCounter | None = None):
    """Loss and flat gradient [theta, W, b] for one training sample."""
    cfg = model.config
    q = quantum_forward(model.spec, model.quantum_params, x, cfg.observable, mode, counter)
    loss, d_w, d_b, cot = loss_and_backward(model.head, q.expectations, label)
    if not math.isfinite(loss):
        raise TrainingFailed(f"non-finite loss {loss}")
    d_theta = parameter_shift_grad(model.spec, model.quantum_params, x, cfg.observable,
                                   mode, cot, counter)
    return loss, np.concatenate([d_theta, d_w.ravel(), d_b])


def expected_steps(n_train: int, batch_size: int, epochs: int) -> int:
    return epochs * math.ceil(n_train / batch_size)


def expected_executions(config: HqnnConfig, param_count: int, n_train: int, n_test: int) -> int:
    """Forward runs plus two shifted runs per slot per sample, plus accuracy passes."""
    return config.epochs * n_train * (1 + 2 * param_count) + config.epochs * n_train + n_test


def train(config: HqnnConfig, train_set: FeatureSet, test_set: FeatureSet | None = None,
          counter: ExecutionCounter | None = None, log=None):
    """Train a fresh model; returns ``(model, report)``.

    The timer covers gradient work, optimizer updates and the per-epoch
    train-accuracy passes. Test accuracy is computed once afterwards.
    """
    for name, ds in (("train", train_set), ("test", test_set)):
        if ds is not None and ds.features.shape[1] != config.n_qubits:
            raise ValidationError(
                f"{name} set has {ds.features.shape[1]} features, model has {config.n_qubits} qubits")
    if len(train_set) == 0:
        raise ValidationError("empty training set")
    counter = ExecutionCounter() if counter is None else counter
    model = HqnnModel.init(config)
    opt = make_optimizer(config.optimizer, config.learning_rate)
    report = TrainReport(eval_mode=config.shot_mode.kind)
    start_count = counter.count
    n = len(train_set)

    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = _order(config, epoch, n)
        losses = []
        for b in range(0, n, config.batch_size):
            batch = order[b:b + config.batch_size]
            total = np.zeros(model.n_params)
            for i in batch:
                loss, g = sample_gradient(model, train_set.features[i], int(train_set.labels[i]),
                                          _mode(model, _TRAIN, epoch, int(i)), counter)
                losses.append(loss)
                total += g
            try:
                model.set_flat(opt.step(model.flat(), total / len(batch)))
            except FloatingPointError as exc:
                raise TrainingFailed(str(exc)) from exc
            report.optimizer_steps += 1
        acc = evaluate(model, train_set, _EVAL, epoch, counter)
        report.per_epoch_train_accuracy.append(acc)
        report.per_epoch_mean_loss.append(math.fsum(losses) / len(losses))
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} loss={report.per_epoch_mean_loss[-1]:.4f} "
                f"train_acc={acc:.3f}")
    report.wall_clock_training_seconds = time.perf_counter() - t0

    if test_set is not None and len(test_set):
        report.test_accuracy = evaluate(model, test_set, _TEST, 0, counter)
    report.circuit_executions = counter.count - start_count
    return model, report
