"""Completeness regressor: dense encoder -> LSTM -> two dense layers ->
single output neuron -> causal Gaussian smoothing -> optional running max.

The running max keeps the estimate non-decreasing, as completeness of a
linear process is.

Frames are always processed one at a time, in order, by the same code path
for batch and streaming use so both give bit-identical numbers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, UsageError
from .gmm import PhaseGMM
from .nn import DenseLayer, LSTMCell, gaussian_smooth, gaussian_smooth_backward
from .trace import ProcessTrace

MODEL_VERSION = 1


@dataclass
class ModelConfig:
    feature_dim: int
    encoder_dims: tuple[int, ...] = (32,)
    hidden: int = 32
    fc_dims: tuple[int, int] = (32, 32)
    activation: str = "rtanh"
    smooth_sigma: float = 2.0
    smooth_radius: int = 4
    monotone: bool = True
    out_bias: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.encoder_dims = tuple(int(d) for d in self.encoder_dims)
        self.fc_dims = tuple(int(d) for d in self.fc_dims)
        if self.feature_dim < 1:
            raise UsageError("feature_dim must be >= 1")
        if not 1 <= len(self.encoder_dims) <= 2:
            raise UsageError("encoder has 1 or 2 layers")
        if len(self.fc_dims) != 2:
            raise UsageError("fc_dims holds the widths of the two fully connected layers")
        if self.activation not in ("rtanh", "sigmoid"):
            raise UsageError(f"output activation must be rtanh or sigmoid, got {self.activation!r}")
        if not self.smooth_sigma > 0 or self.smooth_radius < 0:
            raise UsageError("smooth_sigma must be positive and smooth_radius >= 0")


class ProgressRegressor:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        dims = (config.feature_dim,) + config.encoder_dims
        self.encoder = [
            DenseLayer.init(rng, a, b, "relu", name=f"enc{i}") for i, (a, b) in enumerate(zip(dims, dims[1:]))
        ]
        self.lstm = LSTMCell.init(rng, dims[-1], config.hidden)
        n1, n2 = config.fc_dims
        self.fc1 = DenseLayer.init(rng, config.hidden, n1, "relu", name="fc1")
        self.fc2 = DenseLayer.init(rng, n1, n2, "relu", name="fc2")
        self.out = DenseLayer.init(rng, n2, 1, config.activation, name="out")
        self.out.b[:] = config.out_bias

    @property
    def layers(self):
        return [*self.encoder, self.lstm, self.fc1, self.fc2, self.out]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params().items()}

    def set_activation(self, activation: str) -> None:
        self.config.activation = activation
        self.out.activation = activation

    def copy(self) -> "ProgressRegressor":
        other = ProgressRegressor.__new__(ProgressRegressor)
        other.config = ModelConfig(**asdict(self.config))
        other.encoder = [DenseLayer(l.W.copy(), l.b.copy(), l.activation, l.name) for l in self.encoder]
        other.lstm = LSTMCell(self.lstm.W.copy(), self.lstm.b.copy(), self.lstm.name)
        other.fc1, other.fc2, other.out = (
            DenseLayer(l.W.copy(), l.b.copy(), l.activation, l.name) for l in (self.fc1, self.fc2, self.out)
        )
        return other

    # -- per-frame core ------------------------------------------------------

    def step_raw(self, x: np.ndarray, state, masks=None):
        """Advance one frame. Returns ``(raw output, new state, cache)``.

        ``masks`` optionally holds dropout masks for the encoder output and
        the first fully connected layer.
        """
        caches = []
        for layer in self.encoder:
            x, c = layer.forward(x)
            caches.append(c)
        if masks is not None:
            x = x * masks[0]
        h, state, lc = self.lstm.forward(x, state)
        a1, c1 = self.fc1.forward(h)
        if masks is not None:
            a1 = a1 * masks[1]
        a2, c2 = self.fc2.forward(a1)
        y, co = self.out.forward(a2)
        return float(y[0]), state, (caches, lc, c1, c2, co, masks)

    def _check_input(self, features: np.ndarray):
        if features.ndim != 2 or features.shape[1] != self.config.feature_dim:
            raise UsageError(
                f"model expects {self.config.feature_dim} features per frame, got shape {features.shape}"
            )

    def raw_outputs(self, features: np.ndarray, masks=None):
        features = np.asarray(features, dtype=np.float64)
        self._check_input(features)
        state = self.lstm.zero_state()
        raw = np.empty(len(features))
        caches = []
        for i, x in enumerate(features):
            raw[i], state, cache = self.step_raw(x, state, None if masks is None else masks[i])
            caches.append(cache)
        return raw, caches

    def forward(self, trace_or_features) -> np.ndarray:
        """Smoothed completeness estimate for every frame."""
        feats = trace_or_features.features if isinstance(trace_or_features, ProcessTrace) else trace_or_features
        return self.forward_train(feats)[0]

    def forward_train(self, features: np.ndarray, masks=None):
        raw, caches = self.raw_outputs(features, masks)
        y = gaussian_smooth(raw, self.config.smooth_sigma, self.config.smooth_radius)
        if self.config.monotone:
            y = np.maximum.accumulate(y)
        return y, (caches, y)

    def backward(self, cache, dy: np.ndarray) -> dict[str, np.ndarray]:
        """Backpropagate ``dL/dy`` (final outputs) through time."""
        caches, y = cache
        grads = self.zero_grads()
        if self.config.monotone:
            dy = ratchet_backward(y, dy)
        draw = gaussian_smooth_backward(dy, self.config.smooth_sigma, self.config.smooth_radius)
        H = self.lstm.hidden
        dh_next, dc_next = np.zeros(H), np.zeros(H)
        for i in range(len(caches) - 1, -1, -1):
            enc_caches, lc, c1, c2, co, masks = caches[i]
            d2 = self.out.backward(co, np.array([draw[i]]), grads)
            d1 = self.fc2.backward(c2, d2, grads)
            if masks is not None:
                d1 = d1 * masks[1]
            dh = self.fc1.backward(c1, d1, grads) + dh_next
            dx, dh_next, dc_next = self.lstm.backward(lc, dh, dc_next, grads)
            if masks is not None:
                dx = dx * masks[0]
            for layer, c in zip(reversed(self.encoder), reversed(enc_caches)):
                dx = layer.backward(c, dx, grads)
        return grads

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params().items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProgressRegressor":
        model = cls(ModelConfig(**d["config"]))
        params = model.params()
        if set(params) != set(d["params"]):
            raise DataError("model file parameter blocks do not match its config")
        for k, p in params.items():
            rec = d["params"][k]
            arr = np.array(rec["data"], dtype=np.float64).reshape(rec["shape"])
            if arr.shape != p.shape:
                raise DataError(f"parameter {k}: shape {arr.shape} != {p.shape}")
            p[...] = arr
        return model


def ratchet_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Route each gradient of a running max to the frame that set the max."""
    out = np.zeros_like(dy)
    src = 0
    for i in range(len(y)):
        if i == 0 or y[i] > y[i - 1]:
            src = i
        out[src] += dy[i]
    return out


def save_model(path, model: ProgressRegressor, gmm: PhaseGMM, extra: Optional[dict] = None) -> None:
    doc = {"version": MODEL_VERSION, **model.to_dict(), "gmm": gmm.to_dict()}
    if extra:
        doc["run"] = extra
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def load_model(path) -> tuple[ProgressRegressor, PhaseGMM]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: cannot read model file ({e})") from None
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {doc.get('version')!r}")
    try:
        return ProgressRegressor.from_dict(doc), PhaseGMM.from_dict(doc["gmm"])
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError(f"{path}: malformed model file ({e})") from None
