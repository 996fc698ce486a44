"""Training loop: curriculum case feeding, combined loss, Adam, early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError, UsageError
from .gmm import LossWeights, PhaseGMM, conditional_losses
from .model import ProgressRegressor
from .nn import AdamState, adam_update, dropout_mask, mae_loss
from .trace import ProcessTrace, label_completeness

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    curriculum_start_cases: int = 2
    curriculum_loss_threshold: float = 0.05
    early_stop_patience: int = 3
    early_stop_delta: float = 1e-4
    max_epochs: int = 200
    bptt_window: Optional[int] = None
    dropout_rate: float = 0.0
    learning_rate: float = 0.001
    decay: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.early_stop_patience < 1:
            raise UsageError("early_stop_patience must be >= 1")
        if self.curriculum_start_cases < 1:
            raise UsageError("curriculum_start_cases must be >= 1")
        if not self.curriculum_loss_threshold > 0:
            raise UsageError("curriculum_loss_threshold must be positive")
        if self.early_stop_delta < 0:
            raise UsageError("early_stop_delta must be non-negative")
        if self.max_epochs < 1:
            raise UsageError("max_epochs must be >= 1")
        if self.bptt_window is not None and self.bptt_window < 1:
            raise UsageError("bptt_window must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise UsageError("dropout_rate must be in [0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    active_cases: int
    loss_c: float
    loss_p: float
    total: float


# (estimates, labels, phases) -> (loss_c, loss_p, d total / d estimates)
LossFn = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[float, float, np.ndarray]]


def make_loss(gmm: PhaseGMM, weights: LossWeights) -> LossFn:
    """Per-trace loss: alpha * MAE + beta * mean conditional phase loss."""

    def loss(y, labels, phases):
        lc, gc = mae_loss(y, labels)
        lp_frames, gp = conditional_losses(gmm, y, phases)
        n = len(y)
        return lc, float(lp_frames.mean()), weights.alpha * gc + weights.beta * gp / n

    return loss


def _windows(n: int, window: Optional[int]):
    if window is None or window >= n:
        return [(0, n)]
    return [(a, min(a + window, n)) for a in range(0, n, window)]


def train(
    model: ProgressRegressor,
    traces: Sequence[ProcessTrace],
    gmm: PhaseGMM,
    config: TrainConfig = TrainConfig(),
    weights: LossWeights = LossWeights(),
    loss_fn: Optional[LossFn] = None,
    adam: Optional[AdamState] = None,
) -> tuple[ProgressRegressor, list[EpochRecord]]:
    """Train ``model`` in place and return it with the per-epoch log.

    One Adam step per trace. The active set starts with
    ``curriculum_start_cases`` traces and grows by one after every epoch
    whose mean loss falls below ``curriculum_loss_threshold``. Training
    stops once the epoch loss has moved by less than ``early_stop_delta``
    for ``early_stop_patience`` consecutive epochs.
    """
    if not traces:
        raise UsageError("training set is empty")
    loss_fn = loss_fn or make_loss(gmm, weights)
    adam = adam or AdamState(learning_rate=config.learning_rate, decay=config.decay)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(traces))
    data = [(traces[i].features, label_completeness(traces[i]), traces[i].phase_per_frame()) for i in order]
    params = model.params()
    n_active = min(config.curriculum_start_cases, len(data))
    history: list[EpochRecord] = []
    stagnant = 0
    E, N1 = model.config.encoder_dims[-1], model.config.fc_dims[0]

    for epoch in range(1, config.max_epochs + 1):
        sum_c = sum_p = sum_t = 0.0
        for j in rng.permutation(n_active):
            feats, labels, phases = data[j]
            for a, b in _windows(len(feats), config.bptt_window):
                masks = None
                if config.dropout_rate > 0:
                    masks = [
                        (dropout_mask(E, config.dropout_rate, rng), dropout_mask(N1, config.dropout_rate, rng))
                        for _ in range(b - a)
                    ]
                y, caches = model.forward_train(feats[a:b], masks)
                lc, lp, dy = loss_fn(y, labels[a:b], phases[a:b])
                total = weights.alpha * lc + weights.beta * lp
                if not math.isfinite(total):
                    raise NumericError(f"loss diverged (non-finite) at epoch {epoch}")
                grads = model.backward(caches, dy)
                try:
                    adam_update(params, grads, adam)
                except NumericError as e:
                    raise NumericError(f"epoch {epoch}: {e}") from None
                frac = (b - a) / len(feats)
                sum_c += lc * frac
                sum_p += lp * frac
                sum_t += total * frac
        rec = EpochRecord(epoch, int(n_active), sum_c / n_active, sum_p / n_active, sum_t / n_active)
        history.append(rec)
        log.info("epoch %d active=%d loss_c=%.5f loss_p=%.5f total=%.5f", *asdict(rec).values())

        if len(history) > 1 and abs(history[-1].total - history[-2].total) < config.early_stop_delta:
            stagnant += 1
        else:
            stagnant = 0
        if stagnant >= config.early_stop_patience:
            break
        if rec.total < config.curriculum_loss_threshold and n_active < len(data):
            n_active += 1
    return model, history


def evaluate_mae(model: ProgressRegressor, traces: Sequence[ProcessTrace]) -> float:
    """Frame-weighted mean absolute error against the stepwise labels."""
    errs = [np.abs(model.forward(t) - label_completeness(t)) for t in traces]
    return float(np.mean(np.concatenate(errs)))


@dataclass
class ActivationComparison:
    """Epochs to convergence and test MAE for the two output activations.

    An epoch count equal to the budget means the run never converged.
    """

    rtanh_epochs: int
    sigmoid_epochs: int
    rtanh_mae: float
    sigmoid_mae: float

    @property
    def speedup(self) -> float:
        """Relative reduction in epochs of rtanh against sigmoid."""
        return 1.0 - self.rtanh_epochs / self.sigmoid_epochs


def epochs_to_converge(history: Sequence[EpochRecord], n_cases: int, target: float) -> int:
    """First epoch with every case active and the epoch loss below ``target``;
    ``len(history)`` if that never happens."""
    for rec in history:
        if rec.active_cases == n_cases and rec.total < target:
            return rec.epoch
    return len(history)


def compare_activations(
    model: ProgressRegressor,
    train_traces: Sequence[ProcessTrace],
    test_traces: Sequence[ProcessTrace],
    gmm: PhaseGMM,
    config: TrainConfig = TrainConfig(),
    weights: LossWeights = LossWeights(),
) -> ActivationComparison:
    """Train copies of ``model`` with rtanh and with sigmoid output, from the
    same initial parameters, for the full ``config.max_epochs`` budget.

    Early stopping is switched off so both runs get the same budget; a run
    counts as converged once the curriculum has admitted every case and the
    epoch loss is below ``config.curriculum_loss_threshold``.
    """
    budget = replace(config, early_stop_patience=config.max_epochs + 1)
    out = {}
    for act in ("rtanh", "sigmoid"):
        m = model.copy()
        m.set_activation(act)
        _, hist = train(m, train_traces, gmm, budget, weights)
        epochs = epochs_to_converge(hist, len(train_traces), config.curriculum_loss_threshold)
        out[act] = (epochs, evaluate_mae(m, test_traces))
    return ActivationComparison(out["rtanh"][0], out["sigmoid"][0], out["rtanh"][1], out["sigmoid"][1])
