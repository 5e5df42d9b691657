"""Small dense networks with manual backpropagation and an Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAK = 0.2
PROB_EPS = 1e-7


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class DenseNet:
    """Fully connected net: leaky-ReLU hidden layers, sigmoid output.

    All parameters live in one flat buffer (``flat``); ``weights`` and
    ``biases`` are views into it, so an optimizer can update everything in
    a single vectorized step.
    """

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        parts = [p for pair in zip(self.weights, self.biases) for p in pair]
        self.flat = np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])
        self.weights, self.biases = self._views(self.flat)

    def _views(self, buf):
        ws, bs = [], []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            ws.append(buf[off : off + a * b].reshape(a, b))
            off += a * b
            bs.append(buf[off : off + b])
            off += b
        return ws, bs

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "DenseNet":
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(list(sizes), ws, bs)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.flat]

    def copy(self) -> "DenseNet":
        return DenseNet(list(self.sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, x: np.ndarray, cache: bool = False):
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = sigmoid(z) if i == last else np.where(z > 0, z, LEAK * z)
            acts.append(h)
        if cache:
            return h, (acts, pre)
        return h

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i == last:
                return z
            h = np.where(z > 0, z, LEAK * z)

    def backward(self, cache, grad_logit: np.ndarray):
        """Gradients given dL/d(output pre-activation).

        Returns ``(param_grads, input_grad)`` with ``param_grads`` matching
        :attr:`params`.
        """
        acts, pre = cache
        flat = np.empty_like(self.flat)
        gw, gb = self._views(flat)
        delta = grad_logit
        for i in range(len(self.weights) - 1, -1, -1):
            np.matmul(acts[i].T, delta, out=gw[i])
            gb[i][...] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * np.where(pre[i - 1] > 0, 1.0, LEAK)
        return [flat], delta

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        return cls(
            list(d["sizes"]),
            [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], d["sizes"][:-1], d["sizes"][1:])],
            [np.array(b, dtype=float) for b in d["biases"]],
        )


def bce(p: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped away from 0 and 1."""
    p = np.clip(p, PROB_EPS, 1 - PROB_EPS)
    return float(-np.mean(target * np.log(p) + (1 - target) * np.log(1 - p)))


def bce_grad_logit(p: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(mean BCE)/d(logit) for a sigmoid output.

    Exact derivative of :func:`bce` wherever the clamp is inactive.
    """
    return (p - target) / p.shape[0]


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
