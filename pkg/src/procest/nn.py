"""Small hand-differentiated network stack on numpy.

Arrays are plain ``np.ndarray`` in float64. Layers expose ``forward`` that
returns ``(output, cache)`` and ``backward`` that accumulates parameter
gradients into a dict and returns the input gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .errors import NumericError, UsageError


def _check_finite(x, what="input"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite {what}")


# -- activations ---------------------------------------------------------------


def rtanh(x):
    """Rectified hyperbolic tangent, ``max(0, tanh(x))``. Range ``[0, 1)``."""
    _check_finite(x)
    return np.maximum(0.0, np.tanh(x))


def rtanh_grad(x):
    """Derivative of :func:`rtanh`; at ``x == 0`` the right limit (1) is used."""
    _check_finite(x)
    t = np.tanh(x)
    return np.where(np.asarray(x) >= 0, 1.0 - t * t, 0.0)


def sigmoid(x):
    _check_finite(x)
    return expit(x)


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def relu(x):
    return np.maximum(0.0, x)


def relu_grad(x):
    return (np.asarray(x) > 0).astype(np.float64)


def identity(x):
    return np.asarray(x, dtype=np.float64)


def identity_grad(x):
    return np.ones_like(np.asarray(x, dtype=np.float64))


ACTIVATIONS = {
    "relu": (relu, relu_grad),
    "rtanh": (rtanh, rtanh_grad),
    "sigmoid": (sigmoid, sigmoid_grad),
    "identity": (identity, identity_grad),
}


# -- layers --------------------------------------------------------------------


def glorot(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-lim, lim, size=(n_out, n_in))


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"
    name: str = "dense"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise UsageError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise UsageError(f"{self.name}: inconsistent shapes {self.W.shape}, {self.b.shape}")

    @classmethod
    def init(cls, rng, n_in, n_out, activation="identity", name="dense"):
        return cls(glorot(rng, n_out, n_in), np.zeros(n_out), activation, name)

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}

    def forward(self, x: np.ndarray):
        if x.shape != (self.n_in,):
            raise UsageError(f"{self.name}: expected input of shape ({self.n_in},), got {x.shape}")
        z = self.W @ x + self.b
        f, _ = ACTIVATIONS[self.activation]
        return f(z), (x, z)

    def backward(self, cache, dy: np.ndarray, grads: dict) -> np.ndarray:
        x, z = cache
        _, fp = ACTIVATIONS[self.activation]
        dz = dy * fp(z)
        grads[f"{self.name}.W"] += np.outer(dz, x)
        grads[f"{self.name}.b"] += dz
        return self.W.T @ dz


@dataclass
class LSTMCell:
    """Standard LSTM cell. ``W`` stacks the input, forget, output and
    candidate blocks (in that order) over the concatenation ``[x, h]``."""

    W: np.ndarray
    b: np.ndarray
    name: str = "lstm"

    def __post_init__(self):
        rows, cols = self.W.shape
        if rows % 4 or self.b.shape != (rows,) or cols <= rows // 4:
            raise UsageError(f"{self.name}: inconsistent shapes {self.W.shape}, {self.b.shape}")

    @classmethod
    def init(cls, rng, n_in, hidden, forget_bias=1.0, name="lstm"):
        W = glorot(rng, 4 * hidden, n_in + hidden)
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = forget_bias
        return cls(W, b, name)

    @property
    def hidden(self) -> int:
        return self.W.shape[0] // 4

    @property
    def n_in(self) -> int:
        return self.W.shape[1] - self.hidden

    def params(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}

    def zero_state(self):
        return np.zeros(self.hidden), np.zeros(self.hidden)

    def forward(self, x, state):
        h, c = state
        H = self.hidden
        if x.shape != (self.n_in,) or h.shape != (H,) or c.shape != (H,):
            raise UsageError(f"{self.name}: shape mismatch")
        xh = np.concatenate([x, h])
        z = self.W @ xh + self.b
        gates = expit(z[: 3 * H])
        i, f, o = gates[:H], gates[H : 2 * H], gates[2 * H :]
        g = np.tanh(z[3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return h_new, (h_new, c_new), (xh, c, i, f, o, g, tc)

    def backward(self, cache, dh, dc, grads):
        """Return ``(dx, dh_prev, dc_prev)`` given gradients on ``h'`` and ``c'``."""
        xh, c_prev, i, f, o, g, tc = cache
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ])
        grads[f"{self.name}.W"] += np.outer(dz, xh)
        grads[f"{self.name}.b"] += dz
        dxh = self.W.T @ dz
        return dxh[: self.n_in], dxh[self.n_in :], dc * f


def lstm_step(cell: LSTMCell, x, state):
    """One LSTM step: returns ``(h', (h', c'))``."""
    h, new_state, _ = cell.forward(np.asarray(x, dtype=np.float64), state)
    return h, new_state


# -- dropout -------------------------------------------------------------------


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, else ``1/(1-rate)``."""
    if not 0 <= rate < 1:
        raise UsageError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_apply(x, rate: float, mode: str = "train", seed=None) -> np.ndarray:
    if not 0 <= rate < 1:
        raise UsageError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise UsageError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if mode == "eval" or rate == 0:
        return x.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return x * dropout_mask(x.shape, rate, rng)


# -- smoothing -----------------------------------------------------------------


@lru_cache(maxsize=64)
def smoothing_kernels(sigma: float, radius: int) -> tuple[np.ndarray, ...]:
    """Normalized causal kernels; entry ``m-1`` covers the newest ``m`` taps.

    Kernel values are indexed by lag: ``k[0]`` weights the current sample.
    """
    if not sigma > 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    if radius < 0:
        raise UsageError(f"radius must be >= 0, got {radius}")
    lags = np.arange(radius + 1, dtype=np.float64)
    w = np.exp(-(lags**2) / (2.0 * sigma * sigma))
    out = []
    for m in range(1, radius + 2):
        k = w[:m] / w[:m].sum()
        k.setflags(write=False)
        out.append(k)
    return tuple(out)


def smooth_at(history: np.ndarray, kernels) -> float:
    """Smoothed value at the newest sample; ``history`` is newest-first."""
    k = kernels[len(history) - 1]
    # contiguous copy: BLAS may reduce strided views in a different order
    return float(np.dot(k, np.ascontiguousarray(history)))


def gaussian_smooth(seq, sigma: float, radius: int) -> np.ndarray:
    """Causal truncated Gaussian filter.

    ``out[i] = sum_j k_j * seq[i - j]`` for ``j = 0..radius``, the weights
    renormalized over the taps that exist (early samples see fewer).
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 1 or len(seq) == 0:
        raise UsageError("gaussian_smooth needs a non-empty 1-D sequence")
    kernels = smoothing_kernels(float(sigma), int(radius))
    if radius == 0:
        return seq.copy()
    rev = seq[::-1]
    n = len(seq)
    out = np.empty(n)
    for i in range(n):
        m = min(radius, i) + 1
        lo = n - 1 - i
        out[i] = smooth_at(rev[lo : lo + m], kernels)
    return out


def gaussian_smooth_backward(dy, sigma: float, radius: int) -> np.ndarray:
    """Gradient of :func:`gaussian_smooth` w.r.t. its input."""
    dy = np.asarray(dy, dtype=np.float64)
    kernels = smoothing_kernels(float(sigma), int(radius))
    dx = np.zeros_like(dy)
    for i in range(len(dy)):
        m = min(radius, i) + 1
        dx[i - m + 1 : i + 1] += kernels[m - 1][::-1] * dy[i]
    return dx


# -- loss ----------------------------------------------------------------------


def mae_loss(pred, target):
    """Mean absolute error and its (sub)gradient w.r.t. ``pred``.

    The subgradient at an exact tie is 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.size == 0:
        raise UsageError(f"mae_loss: shapes {pred.shape} and {target.shape}")
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


# -- optimizer -----------------------------------------------------------------


@dataclass
class AdamState:
    learning_rate: float = 0.001
    decay: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def current_lr(self) -> float:
        """Learning rate for the next update, ``lr / (1 + decay * step)``."""
        return self.learning_rate / (1.0 + self.decay * self.step)


def adam_update(params: dict, grads: dict, state: AdamState) -> None:
    """Apply one Adam step in place to every array in ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter block {name!r}")
        if g.shape != params[name].shape:
            raise UsageError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name!r}")
    lr = state.current_lr()
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
