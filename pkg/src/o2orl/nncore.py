"""Dense MLP numerics: forward/backward, Adam, target syncing, checkpoints.

Parameters of a net live in one flat float64 vector. Flatten order is, for
each layer in turn, the weight matrix of shape ``(fan_in, fan_out)`` in
row-major order followed by the bias vector of length ``fan_out``. The
per-layer ``weights``/``biases`` attributes are views into that vector, so
anything that updates ``params`` in place is seen by forward/backward.

Inputs may be a single vector ``(n_in,)`` or a batch ``(B, n_in)``; batched
calls are plain matrix products over rows, gradients are summed over rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_VERSION = 1

# float64 tanh rounds to exactly +-1 for |z| > ~19; keep the head open.
_TANH_BOUND = np.nextafter(1.0, 0.0)


class ShapeError(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    def __init__(self, layer: int):
        super().__init__(f"non-finite gradient component in layer {layer}")
        self.layer = layer


def param_count(layer_sizes: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


class MlpNet:
    """ReLU hidden layers, identity or tanh output head."""

    def __init__(self, layer_sizes: Sequence[int], output_activation: str = "identity",
                 params: np.ndarray | None = None):
        sizes = [int(n) for n in layer_sizes]
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise ValueError(f"layer_sizes must be >= 2 positive ints, got {layer_sizes}")
        if output_activation not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.layer_sizes = sizes
        self.output_activation = output_activation
        n = param_count(sizes)
        if params is None:
            self.params = np.zeros(n)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (n,):
                raise ShapeError(f"expected {n} parameters, got shape {params.shape}")
            self.params = params.copy()
        self._bind_views()

    def _bind_views(self) -> None:
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        self._offsets: list[int] = []
        off = 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self._offsets.append(off)
            self.weights.append(self.params[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.params[off:off + b])
            off += b
        self._offsets.append(off)

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng: np.random.Generator,
             output_activation: str = "identity") -> "MlpNet":
        """Weights and biases uniform in +-1/sqrt(fan_in)."""
        net = cls(layer_sizes, output_activation)
        for w, b in zip(net.weights, net.biases):
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return net

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpNet":
        return MlpNet(self.layer_sizes, self.output_activation, self.params)

    def layer_of(self, flat_index: int) -> int:
        """Layer that owns a flat parameter index."""
        return int(np.searchsorted(self._offsets, flat_index, side="right") - 1)

    def flatten(self) -> np.ndarray:
        return self.params.copy()

    def unflatten(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != self.params.shape:
            raise ShapeError(f"expected {self.params.shape}, got {vec.shape}")
        self.params[:] = vec

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[-1] != self.n_in:
            raise ShapeError(f"input: expected last dim {self.n_in}, got shape {x.shape}")
        return x

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass returning the output and the per-layer inputs/pre-activations."""
        x = self._check_input(x)
        cache = [x]
        h = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0.0)
                cache.append(z)
                cache.append(h)
            elif self.output_activation == "tanh":
                h = np.clip(np.tanh(z), -_TANH_BOUND, _TANH_BOUND)
            else:
                h = z
        cache.append(h)
        return h, cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    __call__ = forward

    def backward_cached(self, cache: list[np.ndarray], upstream: np.ndarray,
                        param_grads: bool = True) -> tuple[np.ndarray | None, np.ndarray]:
        """Gradients of sum(upstream * output) w.r.t. the flat params and the input.

        ReLU uses subgradient 0 at a pre-activation of exactly 0. With
        ``param_grads=False`` only the input gradient is computed.
        """
        out = cache[-1]
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape != out.shape:
            raise ShapeError(f"upstream grad: expected shape {out.shape}, got {g.shape}")
        if self.output_activation == "tanh":
            g = g * (1.0 - out * out)
        grad = np.empty_like(self.params) if param_grads else None
        for i in range(self.n_layers - 1, -1, -1):
            h_in = cache[2 * i]
            a, b = self.weights[i].shape
            off = self._offsets[i]
            if grad is None:
                pass
            elif g.ndim == 1:
                grad[off:off + a * b] = np.outer(h_in, g).ravel()
                grad[off + a * b:off + a * b + b] = g
            else:
                grad[off:off + a * b] = (h_in.T @ g).ravel()
                grad[off + a * b:off + a * b + b] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (cache[2 * i - 1] > 0.0)
        return grad, g

    def backward(self, x: np.ndarray, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        _, cache = self.forward_cached(x)
        return self.backward_cached(cache, upstream)

    def save(self, path: str | Path) -> None:
        save_net(self, path)


def forward(net: MlpNet, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def backward(net: MlpNet, x: np.ndarray, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return net.backward(x, upstream)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: MlpNet, **hyper) -> "AdamState":
        return cls(np.zeros_like(net.params), np.zeros_like(net.params), **hyper)


def adam_step(net: MlpNet, grads: np.ndarray, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam descent step, in place on ``net`` and ``state``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != net.params.shape:
        raise ShapeError(f"grads: expected {net.params.shape}, got {grads.shape}")
    bad = ~np.isfinite(grads)
    if bad.any():
        raise NonFiniteGradient(net.layer_of(int(np.argmax(bad))))
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    net.params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def soft_update(target: MlpNet, online: MlpNet, tau: float) -> None:
    if target.layer_sizes != online.layer_sizes:
        raise ShapeError(f"architecture mismatch: {target.layer_sizes} vs {online.layer_sizes}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    target.params[:] = tau * online.params + (1.0 - tau) * target.params


def save_net(net: MlpNet, path: str | Path) -> None:
    """Write an .npz checkpoint: format_version, layer_sizes, output_activation, params."""
    with open(path, "wb") as fh:
        np.savez(fh, format_version=np.int64(CHECKPOINT_VERSION),
                 layer_sizes=np.asarray(net.layer_sizes, dtype=np.int64),
                 output_activation=np.str_(net.output_activation),
                 params=net.params)


def load_net(path: str | Path) -> MlpNet:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return MlpNet(data["layer_sizes"].tolist(), str(data["output_activation"]),
                      data["params"])


@dataclass
class FiniteDiffReport:
    max_rel_error: float
    n_checked: int
    worst: tuple[str, int] = field(default=("", -1))


def finite_difference_check(net: MlpNet, x: np.ndarray, upstream: np.ndarray,
                            h: float = 1e-5, floor: float = 1e-5) -> FiniteDiffReport:
    """Compare backward against central differences of upstream . forward.

    Relative error is |a - n| / max(|a|, |n|, floor) per component; the floor
    keeps round-off on near-zero gradients (dead units) from dominating.
    """
    analytic_p, analytic_x = net.backward(x, upstream)
    upstream = np.asarray(upstream, dtype=np.float64)

    def objective() -> float:
        return float(np.sum(upstream * net.forward(x)))

    worst, where = 0.0, ("", -1)
    base = net.params.copy()
    for i in range(base.size):
        net.params[i] = base[i] + h
        fp = objective()
        net.params[i] = base[i] - h
        fm = objective()
        net.params[i] = base[i]
        num = (fp - fm) / (2 * h)
        err = abs(analytic_p[i] - num) / max(abs(analytic_p[i]), abs(num), floor)
        if err > worst:
            worst, where = err, ("param", i)
    x = np.array(x, dtype=np.float64)
    flat_x = x.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = float(np.sum(upstream * net.forward(x)))
        flat_x[i] = orig - h
        fm = float(np.sum(upstream * net.forward(x)))
        flat_x[i] = orig
        num = (fp - fm) / (2 * h)
        a = analytic_x.reshape(-1)[i]
        err = abs(a - num) / max(abs(a), abs(num), floor)
        if err > worst:
            worst, where = err, ("input", i)
    return FiniteDiffReport(worst, base.size + flat_x.size, where)
