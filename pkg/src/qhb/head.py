"""Classical output layer: dense n_qubits -> 4, softmax, cross-entropy.

Also holds the two optimizers, which update the flat vector of every
trainable parameter (quantum angles followed by weights and bias).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_CLASSES = 4


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class DenseLayer:
    weights: np.ndarray  # (4, n_in)
    bias: np.ndarray  # (4,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.shape[0] != N_CLASSES or self.bias.shape != (N_CLASSES,):
            raise ValueError(f"dense layer must have {N_CLASSES} outputs")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def init(cls, n_in: int, uniforms: np.ndarray) -> "DenseLayer":
        """Fan-in uniform init from ``4 * n_in`` draws in [0, 1); zero bias."""
        bound = 1 / np.sqrt(n_in)
        w = (2 * np.asarray(uniforms).reshape(N_CLASSES, n_in) - 1) * bound
        return cls(w, np.zeros(N_CLASSES))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - np.max(logits))
    return z / z.sum()


def head_forward(layer: DenseLayer, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (layer.n_in,):
        raise ValueError(f"expected {layer.n_in} inputs, got {x.shape}")
    return softmax(layer.weights @ x + layer.bias)


def loss_and_backward(layer: DenseLayer, x, label: int):
    """Cross-entropy of one sample and its gradients.

    Returns ``(loss, d_weights, d_bias, cotangent)`` where ``cotangent`` is
    dLoss/dx, the vector handed to the quantum gradient.
    """
    if not 0 <= label < N_CLASSES:
        raise ValueError(f"label must be in 0..{N_CLASSES - 1}")
    x = np.asarray(x, dtype=float)
    probs = head_forward(layer, x)
    loss = -np.log(probs[label])
    delta = probs.copy()
    delta[label] -= 1.0
    return loss, np.outer(delta, x), delta, layer.weights.T @ delta


@dataclass
class SGD:
    learning_rate: float = 0.01

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        _check(params, grads)
        return params - self.learning_rate * grads


@dataclass
class Adam:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        _check(params, grads)
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        elif self.m.shape != params.shape:
            raise ValueError("parameter count changed between steps")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def _check(params, grads):
    if params.shape != grads.shape:
        raise ValueError(f"params {params.shape} and grads {grads.shape} differ")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient")


def make_optimizer(kind: str, learning_rate: float):
    kind = kind.lower()
    if kind == "adam":
        return Adam(learning_rate)
    if kind == "sgd":
        return SGD(learning_rate)
    raise ValueError(f"unknown optimizer {kind!r}")
