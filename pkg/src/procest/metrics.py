"""Evaluation metrics for phase detection, completeness and remaining time.

Class-averaged scores are weighted by ground-truth support. Ratios with a
zero denominator count as 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UsageError


def _pair(gt, pred):
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape or gt.ndim != 1:
        raise UsageError(f"sequence shapes differ: {gt.shape} vs {pred.shape}")
    if gt.size == 0:
        raise UsageError("empty sequences")
    return gt, pred


def _div(a, b):
    return a / b if b else 0.0


def confusion_matrix(gt, pred, n_classes: Optional[int] = None) -> np.ndarray:
    """Counts with rows = ground truth, columns = prediction."""
    gt, pred = _pair(gt, pred)
    k = n_classes if n_classes is not None else int(max(gt.max(), pred.max())) + 1
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (gt, pred), 1)
    return cm


def mcc_from_confusion(cm: np.ndarray) -> float:
    """Multiclass Matthews correlation (Gorodkin's R_K)."""
    cm = cm.astype(np.float64)
    s = cm.sum()
    c = np.trace(cm)
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    num = c * s - t @ p
    den = math.sqrt((s * s - p @ p) * (s * s - t @ t))
    return float(num / den) if den else 0.0


@dataclass
class ClassificationReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    informedness: float
    markedness: float
    mcc: float

    def to_dict(self) -> dict:
        return asdict(self)


def classification_report(gt, pred) -> ClassificationReport:
    gt, pred = _pair(gt, pred)
    classes = np.union1d(gt, pred)
    cm = confusion_matrix(np.searchsorted(classes, gt), np.searchsorted(classes, pred), len(classes))
    n = cm.sum()
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    fn = support - tp
    fp = predicted - tp
    tn = n - tp - fn - fp
    weights = support / n
    prec = np.array([_div(a, b) for a, b in zip(tp, tp + fp)])
    rec = np.array([_div(a, b) for a, b in zip(tp, tp + fn)])
    f1 = np.array([_div(2 * a * b, a + b) for a, b in zip(prec, rec)])
    inv_rec = np.array([_div(a, b) for a, b in zip(tn, tn + fp)])
    inv_prec = np.array([_div(a, b) for a, b in zip(tn, tn + fn)])
    return ClassificationReport(
        accuracy=float(tp.sum() / n),
        precision=float(weights @ prec),
        recall=float(weights @ rec),
        f1=float(weights @ f1),
        informedness=float(weights @ (rec + inv_rec - 1.0)),
        markedness=float(weights @ (prec + inv_prec - 1.0)),
        mcc=mcc_from_confusion(cm),
    )


def runs(seq) -> list[tuple[object, int, int]]:
    """Maximal runs of equal values as ``(value, start, end)`` with ``end`` inclusive."""
    seq = np.asarray(seq)
    if seq.size == 0:
        return []
    cut = np.flatnonzero(seq[1:] != seq[:-1]) + 1
    starts = np.concatenate([[0], cut])
    ends = np.concatenate([cut - 1, [len(seq) - 1]])
    return [(seq[s].item(), int(s), int(e)) for s, e in zip(starts, ends)]


@dataclass
class SegmentErrorReport:
    fragmentation: float
    under_fill: float
    over_fill: float

    def to_dict(self) -> dict:
        return asdict(self)


def segment_error_counts(gt, pred) -> dict:
    """Per-class frame counts ``{class: (fragmentation, under_fill, over_fill)}``.

    For each ground-truth run of class ``c``: mispredicted frames strictly
    between the first and last frame predicted ``c`` are fragmentation; the
    mispredicted head and tail (the whole run if nothing matched) are
    under-fill. Frames predicted ``c`` outside every ground-truth run of
    ``c``, inside a predicted run that overlaps one, are over-fill.
    """
    gt, pred = _pair(gt, pred)
    out = {}
    for c in np.unique(gt):
        frag = under = over = 0
        gt_c = gt == c
        pred_c = pred == c
        for _, s, e in (r for r in runs(gt_c) if r[0]):
            hit = np.flatnonzero(pred_c[s : e + 1])
            if hit.size == 0:
                under += e - s + 1
                continue
            first, last = hit[0], hit[-1]
            under += first + (e - s - last)
            frag += (last - first + 1) - hit.size
        for _, s, e in (r for r in runs(pred_c) if r[0]):
            if gt_c[s : e + 1].any():
                over += int((~gt_c[s : e + 1]).sum())
        out[c.item()] = (int(frag), int(under), int(over))
    return out


def two_set(gt, pred) -> SegmentErrorReport:
    """Fragmentation / under-fill / over-fill rates.

    Each class's counts are divided by the total frame count and the
    classes are averaged with ground-truth support as weights.
    """
    return two_set_many([gt], [pred])


def two_set_many(gts: Sequence, preds: Sequence) -> SegmentErrorReport:
    """:func:`two_set` over several traces.

    Runs never span traces; counts and supports are pooled before the rates
    are formed, so the result equals a frame-weighted combination.
    """
    if len(gts) != len(preds):
        raise UsageError(f"{len(gts)} ground-truth sequences but {len(preds)} predictions")
    counts: dict = {}
    support: dict = {}
    n = 0
    for gt, pred in zip(gts, preds):
        gt, pred = _pair(gt, pred)
        n += len(gt)
        for c, cnt in segment_error_counts(gt, pred).items():
            counts[c] = counts.get(c, np.zeros(3)) + cnt
            support[c] = support.get(c, 0) + int(np.count_nonzero(gt == c))
    acc = np.zeros(3)
    for c, cnt in counts.items():
        acc += (support[c] / n) * cnt / n
    return SegmentErrorReport(*(float(v) for v in acc))


def count_nonadjacent_jumps(pred) -> int:
    """Number of consecutive-frame transitions that skip over a phase index."""
    pred = np.asarray(pred)
    return int(np.count_nonzero(np.abs(np.diff(pred)) > 1))


@dataclass
class CompletenessError:
    overall: float
    per_phase: dict
    curve: np.ndarray  # mean absolute error per normalized-time bin (NaN if empty)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "per_phase": {str(k): v for k, v in self.per_phase.items()},
            "curve": [None if math.isnan(v) else float(v) for v in self.curve],
        }


def completeness_error(
    gt_labels,
    estimates,
    phases=None,
    normalized_time=None,
    bins: int = 100,
) -> CompletenessError:
    """Absolute completeness error overall, per phase and per time bin.

    Inputs are flat per-frame arrays (concatenate traces beforehand).
    """
    gt_labels = np.asarray(gt_labels, dtype=np.float64)
    estimates = np.asarray(estimates, dtype=np.float64)
    _pair(gt_labels, estimates)
    err = np.abs(estimates - gt_labels)
    per_phase = {}
    if phases is not None:
        phases = np.asarray(phases)
        _pair(gt_labels, phases)
        for p in np.unique(phases):
            per_phase[p.item()] = float(err[phases == p].mean())
    curve = np.full(bins, np.nan)
    if normalized_time is not None:
        nt = np.asarray(normalized_time, dtype=np.float64)
        _pair(gt_labels, nt)
        idx = np.clip((nt * bins).astype(np.int64), 0, bins - 1)
        sums = np.bincount(idx, weights=err, minlength=bins)
        cnt = np.bincount(idx, minlength=bins)
        nz = cnt > 0
        curve[nz] = sums[nz] / cnt[nz]
    return CompletenessError(float(err.mean()), per_phase, curve)


@dataclass
class RemainingTimeError:
    overall: Optional[float]
    per_phase: dict
    excluded: int
    counted: int

    def to_dict(self) -> dict:
        return {
            "overall_s": self.overall,
            "per_phase_s": {str(k): v for k, v in self.per_phase.items()},
            "excluded": self.excluded,
            "counted": self.counted,
        }


def remaining_time_error(traces: Sequence, estimates: Sequence[Sequence[Optional[float]]]) -> RemainingTimeError:
    """Mean ``|estimate - (T - t)|`` in seconds over all frames with a known
    estimate. ``estimates[i][j]`` is the remaining-time estimate for frame
    ``j`` of trace ``i`` (``None`` when unknown)."""
    if len(traces) != len(estimates):
        raise UsageError(f"{len(traces)} traces but {len(estimates)} estimate sequences")
    errs, phs = [], []
    excluded = 0
    for tr, est in zip(traces, estimates):
        if len(est) != len(tr):
            raise UsageError(f"trace {tr.id!r}: {len(tr)} frames but {len(est)} estimates")
        truth = tr.duration - tr.times
        phase = tr.phase_per_frame()
        for j, e in enumerate(est):
            if e is None:
                excluded += 1
                continue
            errs.append(abs(e - truth[j]))
            phs.append(phase[j])
    if not errs:
        return RemainingTimeError(None, {}, excluded, 0)
    errs = np.array(errs)
    phs = np.array(phs)
    per_phase = {p.item(): float(errs[phs == p].mean()) for p in np.unique(phs)}
    return RemainingTimeError(float(errs.mean()), per_phase, excluded, len(errs))
