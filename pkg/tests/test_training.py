import numpy as np
import pytest

from procest.errors import NumericError, UsageError
from procest.gmm import LossWeights, fit_gmm
from procest.model import ModelConfig, ProgressRegressor
from procest.simulator import SimulatorConfig, generate_dataset
from procest.training import TrainConfig, evaluate_mae, make_loss, train


def model_for(ds, seed=0):
    return ProgressRegressor(ModelConfig(feature_dim=ds[0].feature_dim, encoder_dims=(8,), hidden=8,
                                         fc_dims=(8, 8), seed=seed))


def flat_loss(value):
    """Loss that never changes and never moves the parameters."""
    return lambda y, labels, phases: (value, 0.0, np.zeros_like(y))


def test_stagnation_stops_after_patience_plus_one(small_dataset):
    gmm = fit_gmm(small_dataset)
    _, hist = train(model_for(small_dataset), small_dataset, gmm, TrainConfig(early_stop_delta=1.0),
                    loss_fn=flat_loss(1.0))
    assert len(hist) == 4


@pytest.mark.parametrize("patience", [1, 2, 5])
def test_patience_is_respected(small_dataset, patience):
    gmm = fit_gmm(small_dataset)
    cfg = TrainConfig(early_stop_patience=patience)
    _, hist = train(model_for(small_dataset), small_dataset, gmm, cfg, loss_fn=flat_loss(1.0))
    assert len(hist) == patience + 1


def test_curriculum_grows_to_full_set(small_dataset):
    gmm = fit_gmm(small_dataset)
    cfg = TrainConfig(early_stop_patience=20)
    _, hist = train(model_for(small_dataset), small_dataset, gmm, cfg, loss_fn=flat_loss(0.01))
    active = [r.active_cases for r in hist]
    assert active[0] == 2
    assert active == sorted(active)
    assert np.all(np.diff(active) <= 1)
    assert active[-1] == len(small_dataset)


def test_curriculum_waits_for_threshold(small_dataset):
    gmm = fit_gmm(small_dataset)
    _, hist = train(model_for(small_dataset), small_dataset, gmm, TrainConfig(), loss_fn=flat_loss(1.0))
    assert {r.active_cases for r in hist} == {2}


def test_loss_decreases_on_easy_traces():
    cfg = SimulatorConfig(seed=6, num_traces=6, num_phases=3, feature_dim=4, noise_std=0.0,
                          phase_duration_means=[8, 8, 8], phase_duration_stds=[1, 1, 1])
    ds = sorted(generate_dataset(cfg), key=len)[:2]
    gmm = fit_gmm(ds)
    _, hist = train(model_for(ds, seed=2), ds, gmm, TrainConfig(max_epochs=5))
    totals = [r.total for r in hist]
    assert len(totals) == 5
    assert np.all(np.diff(totals) < 0), totals


def test_training_reduces_error(small_dataset):
    gmm = fit_gmm(small_dataset)
    m = model_for(small_dataset)
    before = evaluate_mae(m, small_dataset)
    train(m, small_dataset, gmm, TrainConfig(max_epochs=15, learning_rate=0.01, curriculum_start_cases=8))
    assert evaluate_mae(m, small_dataset) < before


def test_deterministic(small_dataset):
    gmm = fit_gmm(small_dataset)
    cfg = TrainConfig(max_epochs=4, seed=3, dropout_rate=0.2, bptt_window=7)
    a, ha = train(model_for(small_dataset), small_dataset, gmm, cfg)
    b, hb = train(model_for(small_dataset), small_dataset, gmm, cfg)
    assert ha == hb
    for k, v in a.params().items():
        np.testing.assert_array_equal(b.params()[k], v)


def test_log_columns(small_dataset):
    gmm = fit_gmm(small_dataset)
    w = LossWeights(1.0, 0.0)
    _, hist = train(model_for(small_dataset), small_dataset, gmm, TrainConfig(max_epochs=2), weights=w)
    for r in hist:
        assert r.total == pytest.approx(r.loss_c)
        assert r.loss_p >= 0


def test_make_loss_matches_components(small_dataset):
    gmm = fit_gmm(small_dataset)
    tr = small_dataset[0]
    y = np.linspace(0, 0.9, len(tr))
    from procest.trace import label_completeness
    lc, lp, dy = make_loss(gmm, LossWeights())(y, label_completeness(tr), tr.phase_per_frame())
    assert lc == pytest.approx(np.mean(np.abs(y - label_completeness(tr))))
    assert dy.shape == y.shape


def test_divergence_is_numeric_error(small_dataset):
    gmm = fit_gmm(small_dataset)
    with pytest.raises(NumericError, match="epoch 1"):
        train(model_for(small_dataset), small_dataset, gmm, TrainConfig(), loss_fn=flat_loss(float("nan")))


@pytest.mark.parametrize("kw", [{"early_stop_patience": 0}, {"curriculum_loss_threshold": 0.0},
                                {"max_epochs": 0}, {"dropout_rate": 1.0}, {"bptt_window": 0}])
def test_invalid_config(kw):
    with pytest.raises(UsageError):
        TrainConfig(**kw)


def test_empty_training_set(small_dataset):
    with pytest.raises(UsageError):
        train(model_for(small_dataset), [], fit_gmm(small_dataset))
