"""Online, frame-by-frame progress estimation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import DataError, UsageError
from .gmm import PhaseGMM, predict_phase
from .model import ProgressRegressor
from .nn import smooth_at, smoothing_kernels
from .trace import FeatureFrame, ProcessTrace

RHO_MIN = 0.01


def remaining_time(rho: float, tau: float, rho_min: float = RHO_MIN) -> Optional[float]:
    """Seconds left if progress continues at its average rate so far.

    ``tau / rho`` is the time per unit of completeness, ``1 - rho`` the part
    still to go. Returns ``None`` (unknown) while ``rho < rho_min``.
    """
    if tau < 0:
        raise UsageError(f"elapsed time must be non-negative, got {tau}")
    if not 0 <= rho <= 1:
        raise UsageError(f"completeness must lie in [0, 1], got {rho}")
    if rho < rho_min:
        return None
    return (tau / rho) * (1.0 - rho)


@dataclass(frozen=True)
class ProgressReport:
    timestamp: float
    completeness: float
    phase: str
    phase_index: int
    remaining_s: Optional[float]

    def to_dict(self) -> dict:
        return {
            "t": self.timestamp,
            "completeness": self.completeness,
            "phase": self.phase,
            "remaining_s": self.remaining_s,
        }


class OnlineEstimator:
    """Streams frames through a trained regressor and phase mixture.

    Memory is constant in trace length: the LSTM state plus the last
    ``smooth_radius + 1`` raw outputs.
    """

    def __init__(self, model: ProgressRegressor, gmm: PhaseGMM, rho_min: float = RHO_MIN):
        self.model = model
        self.gmm = gmm
        self.rho_min = rho_min
        self._kernels = smoothing_kernels(float(model.config.smooth_sigma), int(model.config.smooth_radius))
        self.reset()

    def reset(self) -> "OnlineEstimator":
        self._state = self.model.lstm.zero_state()
        self._history: deque = deque(maxlen=self.model.config.smooth_radius + 1)
        self._t0: Optional[float] = None
        self._last_t: Optional[float] = None
        self.tau = 0.0
        self.rho = 0.0
        return self

    def step(self, frame: FeatureFrame) -> ProgressReport:
        t = float(frame.timestamp)
        if self._last_t is not None and not t > self._last_t:
            raise DataError(f"timestamp {t!r} is not after the previous one ({self._last_t!r})")
        x = np.asarray(frame.features, dtype=np.float64)
        if x.shape != (self.model.config.feature_dim,):
            raise DataError(f"expected {self.model.config.feature_dim} features, got shape {x.shape}")
        raw, self._state, _ = self.model.step_raw(x, self._state)
        self._history.appendleft(raw)
        rho = smooth_at(np.fromiter(self._history, dtype=np.float64), self._kernels)
        if self.model.config.monotone and self._t0 is not None:
            rho = max(rho, self.rho)
        self.rho = rho
        if self._t0 is None:
            self._t0 = t
        self._last_t = t
        self.tau = t - self._t0
        phase = predict_phase(self.gmm, self.rho)
        return ProgressReport(
            timestamp=t,
            completeness=self.rho,
            phase=self.gmm.schema.phases[phase],
            phase_index=phase,
            remaining_s=remaining_time(self.rho, self.tau, self.rho_min),
        )

    def run(self, frames: Iterable[FeatureFrame]) -> list[ProgressReport]:
        return [self.step(f) for f in frames]


def estimate_trace(model: ProgressRegressor, gmm: PhaseGMM, trace: ProcessTrace) -> list[ProgressReport]:
    """Reports for a whole trace from a fresh estimator."""
    return OnlineEstimator(model, gmm).run(trace.frames)
