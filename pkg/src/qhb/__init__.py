"""Statevector HQNN benchmark: quantum hyperparameter sweeps on MNIST digits 0-3."""

from .gradients import ExecutionCounter, parameter_shift_grad, quantum_forward
from .model import HqnnConfig, HqnnModel, TrainReport, evaluate, model_forward, train
from .statevec import Pauli, ShotMode
from .templates import TemplateKind, build_circuit

__version__ = "0.1.0"

__all__ = [
    "ExecutionCounter", "HqnnConfig", "HqnnModel", "Pauli", "ShotMode", "TemplateKind",
    "TrainReport", "build_circuit", "evaluate", "model_forward", "parameter_shift_grad",
    "quantum_forward", "train",
]
