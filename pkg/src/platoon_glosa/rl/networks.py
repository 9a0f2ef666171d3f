"""Fixed-architecture numpy MLPs with exact reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError

HIDDEN_WIDTHS: Tuple[int, ...] = (64, 32, 16, 8)
STD_FLOOR = 1e-3
HIDDEN_ACTIVATION = "sigmoid"
OUTPUT_ACTIVATION = "linear"
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


@dataclass
class MlpCache:
    inputs: List[np.ndarray]
    activations: List[np.ndarray]


class Mlp:
    """Dense layers with sigmoid hidden units and a linear output layer.

    Parameters are kept as a flat list ``[W0, b0, W1, b1, ...]`` with
    ``W`` shaped (out, in). Inputs are batches shaped (batch, in).
    """

    def __init__(self, widths: Sequence[int], params: Optional[List[np.ndarray]] = None) -> None:
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2 or any(w <= 0 for w in self.widths):
            raise ConfigurationError(f"invalid layer widths {self.widths}")
        if params is None:
            params = [
                array
                for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:])
                for array in (np.zeros((fan_out, fan_in)), np.zeros(fan_out))
            ]
        self.params = [np.array(p, dtype=float) for p in params]
        self._check_shapes()

    def _check_shapes(self) -> None:
        expected = self.param_shapes()
        if len(self.params) != len(expected):
            raise ConfigurationError("parameter list does not match the layer layout")
        for p, shape in zip(self.params, expected):
            if p.shape != shape:
                raise ConfigurationError(f"parameter shape {p.shape} != expected {shape}")

    def param_shapes(self) -> List[Tuple[int, ...]]:
        shapes: List[Tuple[int, ...]] = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            shapes.extend([(fan_out, fan_in), (fan_out,)])
        return shapes

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def init_xavier(self, rng: np.random.Generator, head_scale: float = 0.01) -> "Mlp":
        for layer in range(self.n_layers):
            fan_out, fan_in = self.params[2 * layer].shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            if layer == self.n_layers - 1:
                limit *= head_scale
            self.params[2 * layer] = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            self.params[2 * layer + 1] = np.zeros(fan_out)
        return self

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, MlpCache]:
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[1] != self.widths[0]:
            raise ConfigurationError(f"input width {h.shape[1]} != {self.widths[0]}")
        inputs, activations = [], []
        for layer in range(self.n_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            inputs.append(h)
            z = h @ W.T + b
            h = sigmoid(z) if layer < self.n_layers - 1 else z
            activations.append(h)
        return h, MlpCache(inputs=inputs, activations=activations)

    def backward(self, cache: MlpCache, grad_out: np.ndarray) -> List[np.ndarray]:
        """Gradients of ``sum(grad_out * output)`` with respect to every parameter."""

        delta = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grads: List[np.ndarray] = [np.zeros_like(p) for p in self.params]
        for layer in reversed(range(self.n_layers)):
            if layer < self.n_layers - 1:
                a = cache.activations[layer]
                delta = delta * a * (1.0 - a)
            grads[2 * layer] = delta.T @ cache.inputs[layer]
            grads[2 * layer + 1] = delta.sum(axis=0)
            delta = delta @ self.params[2 * layer]
        return grads

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ConfigurationError("flat parameter vector has the wrong length")
        offset = 0
        for k, p in enumerate(self.params):
            self.params[k] = flat[offset : offset + p.size].reshape(p.shape).copy()
            offset += p.size

    def copy(self) -> "Mlp":
        return Mlp(self.widths, [p.copy() for p in self.params])


@dataclass
class PolicyCache:
    body: MlpCache
    raw: np.ndarray
    floored: np.ndarray


class PolicyNet:
    """Gaussian policy: tanh-scaled mean inside the action box, softplus std."""

    def __init__(self, obs_dim: int, a_low: float, a_high: float, body: Optional[Mlp] = None) -> None:
        if not a_low < a_high:
            raise ConfigurationError("action box must satisfy low < high")
        self.obs_dim = obs_dim
        self.a_low = float(a_low)
        self.a_high = float(a_high)
        self.body = body if body is not None else Mlp((obs_dim, *HIDDEN_WIDTHS, 2))
        if self.body.widths[0] != obs_dim or self.body.widths[-1] != 2:
            raise ConfigurationError("policy body must map the observation to two outputs")

    @property
    def mid(self) -> float:
        return 0.5 * (self.a_low + self.a_high)

    @property
    def half(self) -> float:
        return 0.5 * (self.a_high - self.a_low)

    def forward(self, obs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, PolicyCache]:
        raw, body_cache = self.body.forward(obs)
        mean = self.mid + self.half * np.tanh(raw[:, 0])
        std_raw = softplus(raw[:, 1])
        floored = std_raw < STD_FLOOR
        std = np.where(floored, STD_FLOOR, std_raw)
        return mean, std, PolicyCache(body=body_cache, raw=raw, floored=floored)

    def backward(self, cache: PolicyCache, d_mean: np.ndarray, d_std: np.ndarray) -> List[np.ndarray]:
        raw = cache.raw
        d_raw = np.empty_like(raw)
        d_raw[:, 0] = np.asarray(d_mean) * self.half * (1.0 - np.tanh(raw[:, 0]) ** 2)
        d_raw[:, 1] = np.where(cache.floored, 0.0, np.asarray(d_std) * sigmoid(raw[:, 1]))
        return self.body.backward(cache.body, d_raw)

    def copy(self) -> "PolicyNet":
        return PolicyNet(self.obs_dim, self.a_low, self.a_high, self.body.copy())


class ValueNet:
    def __init__(self, state_dim: int, body: Optional[Mlp] = None) -> None:
        self.state_dim = state_dim
        self.body = body if body is not None else Mlp((state_dim, *HIDDEN_WIDTHS, 1))
        if self.body.widths[0] != state_dim or self.body.widths[-1] != 1:
            raise ConfigurationError("value body must map the state to one output")

    def forward(self, state: np.ndarray) -> Tuple[np.ndarray, MlpCache]:
        out, cache = self.body.forward(state)
        return out[:, 0], cache

    def backward(self, cache: MlpCache, d_value: np.ndarray) -> List[np.ndarray]:
        return self.body.backward(cache, np.asarray(d_value, dtype=float).reshape(-1, 1))

    def copy(self) -> "ValueNet":
        return ValueNet(self.state_dim, self.body.copy())


def gaussian_log_prob(action: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    z = (action - mean) / std
    return -0.5 * z * z - np.log(std) - _LOG_SQRT_2PI


def gaussian_log_prob_grads(action: np.ndarray, mean: np.ndarray, std: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of the log density with respect to mean and std."""

    diff = action - mean
    return diff / std**2, diff * diff / std**3 - 1.0 / std


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: Optional[List[np.ndarray]] = None
        self._v: Optional[List[np.ndarray]] = None
        self._t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        correction1 = 1.0 - self.beta1**self._t
        correction2 = 1.0 - self.beta2**self._t
        for k, g in enumerate(grads):
            self._m[k] = self.beta1 * self._m[k] + (1.0 - self.beta1) * g
            self._v[k] = self.beta2 * self._v[k] + (1.0 - self.beta2) * g * g
            m_hat = self._m[k] / correction1
            v_hat = self._v[k] / correction2
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    def __init__(self, lr: float) -> None:
        self.lr = lr

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        for k, g in enumerate(grads):
            params[k] -= self.lr * g


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return Sgd(lr)
    raise ConfigurationError(f"unknown optimizer {name!r}")
