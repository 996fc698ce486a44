"""Process traces: data model, completeness labels, splitting and the trace file format.

A trace file is UTF-8 JSON lines. The first line is a header::

    {"version": 1, "id": ..., "feature_dim": F, "duration_s": T,
     "phases": [...], "phase_marks": [[phase_idx, frame_idx], ...]}

optionally with ``boundary_start`` / ``boundary_end`` flags. Every following
line is one frame ``{"t": seconds, "x": [F reals]}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, UsageError

FORMAT_VERSION = 1
N_SEGMENTS = 20  # completeness labels move in 5% steps


@dataclass(frozen=True)
class PhaseSchema:
    """Ordered phase names of a linear process.

    ``boundary_start`` marks the first phase as a pre-start phase and
    ``boundary_end`` the last phase as an end phase. Boundary phases are
    detected by completeness thresholds instead of mixture kernels.
    """

    phases: tuple[str, ...]
    boundary_start: bool = False
    boundary_end: bool = False

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(str(p) for p in self.phases))
        if len(self.phases) < 2:
            raise UsageError("a phase schema needs at least 2 phases")
        if len(set(self.phases)) != len(self.phases):
            raise UsageError(f"phase names must be unique: {self.phases}")
        if len(self.interior) < 1:
            raise UsageError("schema has no interior phase left to model")

    def __len__(self) -> int:
        return len(self.phases)

    @property
    def interior(self) -> list[int]:
        """Schema indices of the phases modeled by the mixture."""
        lo = 1 if self.boundary_start else 0
        hi = len(self.phases) - (1 if self.boundary_end else 0)
        return list(range(lo, hi))

    def to_dict(self) -> dict:
        return {
            "phases": list(self.phases),
            "boundary_start": self.boundary_start,
            "boundary_end": self.boundary_end,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseSchema":
        return cls(
            tuple(d["phases"]),
            bool(d.get("boundary_start", False)),
            bool(d.get("boundary_end", False)),
        )


@dataclass(frozen=True)
class FeatureFrame:
    timestamp: float
    features: np.ndarray


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)  # always a private copy
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProcessTrace:
    """One enactment of a process.

    Frames are stored column-wise: ``times`` has shape ``(n,)`` and
    ``features`` shape ``(n, F)``. ``phase_marks`` lists
    ``(phase_index, first_frame_index)`` pairs in order.
    """

    id: str
    schema: PhaseSchema
    times: np.ndarray
    features: np.ndarray
    phase_marks: tuple[tuple[int, int], ...]
    duration: float

    def __post_init__(self):
        times = _readonly(self.times)
        feats = _readonly(self.features)
        if feats.ndim == 1:
            feats = _readonly(feats.reshape(-1, 1))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "features", feats)
        marks = tuple((int(p), int(f)) for p, f in self.phase_marks)
        object.__setattr__(self, "phase_marks", marks)
        object.__setattr__(self, "duration", float(self.duration))
        self._validate()

    def _validate(self):
        n = len(self.times)
        if n == 0:
            raise DataError(f"trace {self.id!r} has no frames")
        if self.features.shape[0] != n:
            raise DataError(f"trace {self.id!r}: {n} timestamps but {self.features.shape[0]} feature rows")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.features))):
            raise DataError(f"trace {self.id!r} contains non-finite values")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise DataError(f"trace {self.id!r}: timestamps must be strictly increasing")
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise DataError(f"trace {self.id!r}: duration must be positive, got {self.duration}")
        marks = self.phase_marks
        if not marks or marks[0][1] != 0:
            raise DataError(f"trace {self.id!r}: first phase mark must start at frame 0")
        for (p0, f0), (p1, f1) in zip(marks, marks[1:]):
            if not (p1 > p0 and f1 > f0):
                raise DataError(f"trace {self.id!r}: phase marks must be strictly increasing")
        for p, f in marks:
            if not 0 <= p < len(self.schema):
                raise DataError(f"trace {self.id!r}: phase index {p} outside schema")
            if f >= n:
                raise DataError(f"trace {self.id!r}: phase mark at frame {f} beyond {n} frames")

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, ProcessTrace):
            return NotImplemented
        return (
            self.id == other.id
            and self.schema == other.schema
            and self.phase_marks == other.phase_marks
            and self.duration == other.duration
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.features, other.features)
        )

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def frames(self) -> list[FeatureFrame]:
        return [FeatureFrame(float(t), x) for t, x in zip(self.times, self.features)]

    def phase_per_frame(self) -> np.ndarray:
        """Schema phase index of every frame."""
        out = np.empty(len(self), dtype=np.int64)
        bounds = [f for _, f in self.phase_marks] + [len(self)]
        for (p, _), a, b in zip(self.phase_marks, bounds, bounds[1:]):
            out[a:b] = p
        return out

    def normalized_time(self) -> np.ndarray:
        return self.times / self.duration


def label_completeness(trace: ProcessTrace) -> np.ndarray:
    """Stepwise completeness labels in 5% increments.

    A frame at time ``t`` gets ``min(floor(20 t / T), 19) / 20``; the final
    frame is pinned to 1.0.
    """
    if len(trace) < 2:
        raise DataError(f"trace {trace.id!r}: need at least 2 frames to label")
    if trace.duration <= 0:
        raise DataError(f"trace {trace.id!r}: non-positive duration")
    seg = np.floor(N_SEGMENTS * trace.times / trace.duration)
    seg = np.clip(seg, 0, N_SEGMENTS - 1)
    labels = seg / N_SEGMENTS
    labels[-1] = 1.0
    return labels


# -- persistence -------------------------------------------------------------


def _header(trace: ProcessTrace) -> dict:
    head = {
        "version": FORMAT_VERSION,
        "id": trace.id,
        "feature_dim": trace.feature_dim,
        "duration_s": trace.duration,
        "phases": list(trace.schema.phases),
        "phase_marks": [list(m) for m in trace.phase_marks],
    }
    if trace.schema.boundary_start:
        head["boundary_start"] = True
    if trace.schema.boundary_end:
        head["boundary_end"] = True
    return head


def frame_line(t: float, x: Iterable[float]) -> str:
    return json.dumps({"t": float(t), "x": [float(v) for v in x]}, allow_nan=False)


def dumps_trace(trace: ProcessTrace) -> str:
    lines = [json.dumps(_header(trace), allow_nan=False)]
    lines.extend(frame_line(t, x) for t, x in zip(trace.times, trace.features))
    return "\n".join(lines) + "\n"


def save_trace(trace: ProcessTrace, path) -> None:
    Path(path).write_text(dumps_trace(trace), encoding="utf-8")


def parse_header(line: str, lineno: int = 1) -> dict:
    try:
        head = json.loads(line)
    except json.JSONDecodeError as e:
        raise DataError(f"line {lineno}: malformed header ({e.msg})") from None
    if not isinstance(head, dict):
        raise DataError(f"line {lineno}: header must be an object")
    if head.get("version") != FORMAT_VERSION:
        raise DataError(f"line {lineno}: unsupported trace version {head.get('version')!r}")
    for key in ("id", "feature_dim", "duration_s", "phases", "phase_marks"):
        if key not in head:
            raise DataError(f"line {lineno}: header missing {key!r}")
    if not isinstance(head["feature_dim"], int) or head["feature_dim"] < 1:
        raise DataError(f"line {lineno}: feature_dim must be a positive integer")
    return head


def parse_frame(line: str, feature_dim: int, lineno: int) -> tuple[float, list[float]]:
    """Parse one frame line, checking its dimension against ``feature_dim``."""
    try:
        rec = json.loads(line)
        t = float(rec["t"])
        x = [float(v) for v in rec["x"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        raise DataError(f"line {lineno}: malformed frame record") from None
    if len(x) != feature_dim:
        raise DataError(f"line {lineno}: expected {feature_dim} features, got {len(x)}")
    if not (math.isfinite(t) and all(math.isfinite(v) for v in x)):
        raise DataError(f"line {lineno}: non-finite value")
    return t, x


def loads_trace(text: str) -> ProcessTrace:
    lines = text.splitlines()
    if not lines:
        raise DataError("line 1: empty trace file")
    head = parse_header(lines[0])
    dim = head["feature_dim"]
    times, feats = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        t, x = parse_frame(line, dim, lineno)
        if times and t <= times[-1]:
            raise DataError(f"line {lineno}: timestamp {t!r} not after {times[-1]!r}")
        times.append(t)
        feats.append(x)
    try:
        schema = PhaseSchema(
            tuple(head["phases"]),
            bool(head.get("boundary_start", False)),
            bool(head.get("boundary_end", False)),
        )
        return ProcessTrace(
            id=str(head["id"]),
            schema=schema,
            times=np.array(times, dtype=np.float64),
            features=np.array(feats, dtype=np.float64).reshape(len(times), dim),
            phase_marks=tuple(tuple(m) for m in head["phase_marks"]),
            duration=float(head["duration_s"]),
        )
    except UsageError as e:
        raise DataError(f"line 1: {e}") from None


def load_trace(path) -> ProcessTrace:
    path = Path(path)
    try:
        return loads_trace(path.read_text(encoding="utf-8"))
    except DataError as e:
        raise DataError(f"{path}: {e}") from None


def save_dataset(traces: Sequence[ProcessTrace], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for tr in traces:
        p = directory / f"{tr.id}.trace"
        save_trace(tr, p)
        paths.append(p)
    return paths


def load_dataset(directory) -> list[ProcessTrace]:
    """Load every ``*.trace`` file in ``directory``, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a dataset directory")
    traces = [load_trace(p) for p in sorted(directory.glob("*.trace"))]
    if not traces:
        raise DataError(f"{directory}: no .trace files")
    dims = {t.feature_dim for t in traces}
    if len(dims) > 1:
        raise DataError(f"{directory}: mixed feature dimensions {sorted(dims)}")
    schemas = {t.schema for t in traces}
    if len(schemas) > 1:
        raise DataError(f"{directory}: traces disagree on the phase schema")
    return traces


def split_dataset(
    traces: Sequence[ProcessTrace], test_fraction: float, seed: int
) -> tuple[list[ProcessTrace], list[ProcessTrace]]:
    """Split whole traces into (train, test).

    The test set holds ``round(test_fraction * N)`` traces (at least one);
    both outputs keep the input order.
    """
    n = len(traces)
    if n < 2:
        raise UsageError("need at least 2 traces to split")
    if not 0 < test_fraction < 1:
        raise UsageError(f"test_fraction must be in (0, 1), got {test_fraction}")
    ids = [t.id for t in traces]
    if len(set(ids)) != n:
        raise UsageError("trace ids must be unique")
    n_test = int(math.floor(test_fraction * n + 0.5))
    n_test = min(max(n_test, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = set(perm[:n_test].tolist())
    train = [t for i, t in enumerate(traces) if i not in test_idx]
    test = [t for i, t in enumerate(traces) if i in test_idx]
    return train, test
