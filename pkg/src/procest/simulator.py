"""Seeded synthetic datasets of linear sequential processes.

Each trace walks through every phase once, in schema order. Phase durations
are Gaussian (rejection-truncated at 20% of the mean) and every frame's
feature vector is its phase's mean vector plus isotropic Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import UsageError
from .trace import PhaseSchema, ProcessTrace

MIN_DURATION_FRACTION = 0.2

# Six-phase resuscitation-like preset: pre-arrival, arrival, primary,
# secondary, post-secondary, patient leave. Seconds at 1 fps.
RESUSCITATION_PHASES = ("pre_arrival", "arrival", "primary", "secondary", "post_secondary", "patient_leave")
RESUSCITATION_MEANS = (60.0, 90.0, 240.0, 420.0, 300.0, 1.0)
RESUSCITATION_STDS = (20.0, 30.0, 80.0, 120.0, 100.0, 0.0)


@dataclass
class SimulatorConfig:
    seed: int = 0
    num_traces: int = 60
    num_phases: int = 6
    feature_dim: int = 16
    frame_rate: float = 1.0
    phase_duration_means: Optional[list[float]] = None
    phase_duration_stds: Optional[list[float]] = None
    emission_separation: float = 2.0
    noise_std: float = 0.5
    phase_names: Optional[list[str]] = None
    boundary_start: bool = False
    boundary_end: bool = False

    def __post_init__(self):
        k = self.num_phases
        if self.phase_duration_means is None:
            self.phase_duration_means = [30.0] * k if k >= 2 else []
        if self.phase_duration_stds is None:
            self.phase_duration_stds = [0.1 * m for m in self.phase_duration_means]
        if self.phase_names is None:
            self.phase_names = [f"phase_{i}" for i in range(k)]
        self.phase_duration_means = [float(v) for v in self.phase_duration_means]
        self.phase_duration_stds = [float(v) for v in self.phase_duration_stds]
        self.phase_names = [str(v) for v in self.phase_names]
        self.validate()

    def validate(self):
        k = self.num_phases
        if k < 2:
            raise UsageError(f"need at least 2 phases, got {k}")
        if self.feature_dim < 1:
            raise UsageError("feature_dim must be >= 1")
        if self.num_traces < 1:
            raise UsageError("num_traces must be >= 1")
        if not self.frame_rate > 0:
            raise UsageError("frame_rate must be positive")
        if len(self.phase_duration_means) != k or len(self.phase_duration_stds) != k:
            raise UsageError(f"need {k} duration means and stds")
        if len(self.phase_names) != k:
            raise UsageError(f"need {k} phase names")
        if any(not (m > 0 and math.isfinite(m)) for m in self.phase_duration_means):
            raise UsageError("phase duration means must be positive")
        if any(not (s >= 0 and math.isfinite(s)) for s in self.phase_duration_stds):
            raise UsageError("phase duration stds must be non-negative")
        if not self.emission_separation >= 0 or not self.noise_std >= 0:
            raise UsageError("emission_separation and noise_std must be non-negative")

    @property
    def schema(self) -> PhaseSchema:
        return PhaseSchema(tuple(self.phase_names), self.boundary_start, self.boundary_end)

    def to_dict(self) -> dict:
        return asdict(self)


def emission_means(config: SimulatorConfig) -> np.ndarray:
    """Per-phase feature means, shape ``(K, F)``, pairwise ``emission_separation`` apart.

    With ``K <= F`` the means sit on a regular simplex (scaled orthonormal
    directions), so every pair is exactly the separation apart. Otherwise
    random directions are scaled so the closest pair is.
    """
    k, f = config.num_phases, config.feature_dim
    rng = np.random.default_rng(_children(config)[0])
    g = rng.standard_normal((f, k))
    if k <= f:
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))  # unique QR
        return config.emission_separation / math.sqrt(2.0) * q.T
    means = g.T
    d = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
    dmin = d[np.triu_indices(k, 1)].min()
    return means * (config.emission_separation / dmin)


def _children(config: SimulatorConfig) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(config.seed).spawn(config.num_traces + 1)


def _draw_duration(rng: np.random.Generator, mean: float, std: float) -> float:
    lo = MIN_DURATION_FRACTION * mean
    while True:
        d = mean + std * rng.standard_normal()
        if d >= lo:
            return d


def generate_trace(config: SimulatorConfig, index: int, means: Optional[np.ndarray] = None) -> ProcessTrace:
    """Generate trace ``index`` of the dataset; independent of the other traces."""
    if means is None:
        means = emission_means(config)
    rng = np.random.default_rng(_children(config)[index + 1])
    fr = config.frame_rate
    counts = []
    for m, s in zip(config.phase_duration_means, config.phase_duration_stds):
        d = _draw_duration(rng, m, s)
        counts.append(max(1, int(round(d * fr))))
    n = sum(counts)
    phase = np.repeat(np.arange(config.num_phases), counts)
    noise = rng.standard_normal((n, config.feature_dim))
    feats = means[phase] + config.noise_std * noise
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return ProcessTrace(
        id=f"trace_{index:04d}",
        schema=config.schema,
        times=np.arange(n) / fr,
        features=feats,
        phase_marks=tuple((k, int(s)) for k, s in enumerate(starts)),
        duration=n / fr,
    )


def generate_dataset(config: SimulatorConfig) -> list[ProcessTrace]:
    means = emission_means(config)
    return [generate_trace(config, i, means) for i in range(config.num_traces)]


def phase_durations(trace: ProcessTrace) -> np.ndarray:
    """Seconds spent in each phase, taken from the phase marks."""
    starts = [f for _, f in trace.phase_marks] + [len(trace)]
    period = trace.duration / len(trace)
    return np.diff(starts) * period
