"""Phase detection from completeness with a 1-D Gaussian mixture.

One kernel per interior phase, fitted directly from ground-truth
completeness labels (no EM: the phase of every frame is known). Boundary
phases are assigned by thresholds on completeness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError
from .trace import PhaseSchema, ProcessTrace, label_completeness

SIGMA_MIN = 1e-3
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PhaseGMM:
    """Kernels over completeness for the interior phases of ``schema``.

    ``weights``, ``means`` and ``stds`` are indexed by kernel; kernel ``k``
    models schema phase ``schema.interior[k]``.
    """

    schema: PhaseSchema
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    eps0: float = 0.005
    eps1: float = 0.005
    _log_norm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        k = len(self.schema.interior)
        if not (self.weights.shape == self.means.shape == self.stds.shape == (k,)):
            raise UsageError(f"need {k} weights, means and stds")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise UsageError("mixture weights must be positive and sum to 1")
        if np.any(np.diff(self.means) <= 0):
            raise DataError("kernel means must be strictly increasing for a linear process")
        if np.any(self.stds < SIGMA_MIN):
            raise UsageError(f"kernel stds must be >= {SIGMA_MIN}")
        self._log_norm = np.log(self.weights) - 0.5 * np.log(2.0 * np.pi * self.stds**2)

    @property
    def n_kernels(self) -> int:
        return len(self.means)

    def kernel_of(self, phase: int) -> int:
        interior = self.schema.interior
        if phase not in interior:
            raise UsageError(f"phase {phase} is not modeled by the mixture")
        return phase - interior[0]

    def log_likelihoods(self, x) -> np.ndarray:
        """Per-kernel scores ``log w - log(2 pi s^2)/2 - (x - mu)^2 / (2 s^2)``.

        Shape ``(..., K)`` for input shape ``(...)``.
        """
        x = np.asarray(x, dtype=np.float64)[..., None]
        return self._log_norm - (x - self.means) ** 2 / (2.0 * self.stds**2)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "eps0": self.eps0,
            "eps1": self.eps1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseGMM":
        return cls(
            PhaseSchema.from_dict(d["schema"]),
            d["weights"],
            d["means"],
            d["stds"],
            d.get("eps0", 0.005),
            d.get("eps1", 0.005),
        )


def fit_gmm(
    traces: Sequence[ProcessTrace],
    schema: PhaseSchema | None = None,
    equal_variance: bool = False,
    eps0: float = 0.005,
    eps1: float = 0.005,
) -> PhaseGMM:
    """Fit one kernel per interior phase from ground-truth labels.

    Weight = share of interior frames in the phase; mean/std = moments of
    the completeness labels over those frames. With ``equal_variance`` all
    kernels share the pooled within-phase std and equal weights, which makes
    the decision regions ordered intervals.
    """
    if not traces:
        raise DataError("fit_gmm needs at least one trace")
    schema = schema or traces[0].schema
    interior = schema.interior
    labels = np.concatenate([label_completeness(t) for t in traces])
    phases = np.concatenate([t.phase_per_frame() for t in traces])
    if phases.max() >= len(schema):
        raise DataError("trace phase index outside the schema")
    n_interior = np.isin(phases, interior).sum()
    w, mu, sd = [], [], []
    for p in interior:
        sel = labels[phases == p]
        if sel.size == 0:
            raise DataError(f"phase {schema.phases[p]!r} never occurs in the training traces")
        w.append(sel.size / n_interior)
        mu.append(sel.mean())
        sd.append(sel.std())
    mu = np.array(mu)
    if np.any(np.diff(mu) <= 0):
        raise DataError("phase means are not increasing: nonlinear processes are unsupported")
    if equal_variance:
        resid = [labels[phases == p] - m for p, m in zip(interior, mu)]
        pooled = math.sqrt(np.mean(np.concatenate(resid) ** 2))
        sd = [pooled] * len(interior)
        w = [1.0 / len(interior)] * len(interior)
    sd = np.maximum(np.array(sd), SIGMA_MIN)
    w = np.array(w)
    w = w / w.sum()
    return PhaseGMM(schema, w, mu, sd, eps0, eps1)


def _check_completeness(x):
    if not np.all((x >= 0) & (x <= 1)):
        raise UsageError("completeness must lie in [0, 1]")


def predict_phases(gmm: PhaseGMM, x) -> np.ndarray:
    """Vectorized :func:`predict_phase`; returns schema phase indices."""
    x = np.asarray(x, dtype=np.float64)
    _check_completeness(x)
    # argmax returns the first maximum: ties go to the earlier phase
    out = np.argmax(gmm.log_likelihoods(x), axis=-1) + gmm.schema.interior[0]
    if gmm.schema.boundary_start:
        out = np.where(x < gmm.eps0, 0, out)
    if gmm.schema.boundary_end:
        out = np.where(x > 1.0 - gmm.eps1, len(gmm.schema) - 1, out)
    return out


def predict_phase(gmm: PhaseGMM, x: float) -> int:
    """Most likely phase for completeness ``x`` (ties toward the lower index)."""
    return int(predict_phases(gmm, np.float64(x)))


def conditional_losses(gmm: PhaseGMM, x, phases):
    """Per-frame conditional phase loss and its gradient w.r.t. ``x``.

    Frames of boundary phases carry no kernel and contribute zero.
    """
    x = np.asarray(x, dtype=np.float64)
    phases = np.asarray(phases)
    pred = predict_phases(gmm, x)
    interior = np.isin(phases, gmm.schema.interior)
    k = np.clip(phases - gmm.schema.interior[0], 0, gmm.n_kernels - 1)
    target = gmm.means[k]
    wrong = interior & (pred != phases)
    loss = np.where(wrong, np.abs(x - target), 0.0)
    grad = np.where(wrong, np.sign(x - target), 0.0)
    return loss, grad


def conditional_loss(gmm: PhaseGMM, x: float, true_phase: int) -> tuple[float, float]:
    """Zero when the mixture predicts ``true_phase``, else ``|x - mu_p|``.

    Returns ``(loss, d loss / d x)``.
    """
    gmm.kernel_of(true_phase)
    loss, grad = conditional_losses(gmm, np.array([x]), np.array([true_phase]))
    return float(loss[0]), float(grad[0])


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.6
    beta: float = 0.4

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or not (self.alpha + self.beta > 0):
            raise UsageError(f"need alpha, beta >= 0 with alpha + beta > 0, got {self.alpha}, {self.beta}")


def combined_loss(loss_c: float, loss_p: float, weights: LossWeights = LossWeights()) -> float:
    return weights.alpha * loss_c + weights.beta * loss_p
