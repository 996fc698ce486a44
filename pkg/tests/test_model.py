import json

import numpy as np
import pytest

from gradcheck import numeric_grad, rel_error
from procest.errors import DataError, UsageError
from procest.gmm import LossWeights, PhaseGMM, conditional_losses, predict_phases
from procest.model import ModelConfig, ProgressRegressor, load_model, ratchet_backward, save_model
from procest.nn import gaussian_smooth
from procest.trace import PhaseSchema
from procest.training import make_loss

SCHEMA = PhaseSchema(("a", "b", "c"))
GMM = PhaseGMM(SCHEMA, [0.3, 0.3, 0.4], [0.2, 0.5, 0.8], [0.1, 0.1, 0.1])


def small_model(**kw):
    cfg = dict(feature_dim=3, encoder_dims=(4,), hidden=5, fc_dims=(4, 3), seed=1)
    cfg.update(kw)
    return ProgressRegressor(ModelConfig(**cfg))


def test_zero_parameters_give_zero():
    m = small_model()
    for p in m.params().values():
        p[...] = 0.0
    x = np.random.default_rng(0).normal(size=(7, 3))
    np.testing.assert_array_equal(m.forward(x), 0.0)


def test_radius_zero_is_raw_output():
    m = small_model(smooth_radius=0, monotone=False)
    x = np.random.default_rng(1).normal(size=(9, 3))
    raw, _ = m.raw_outputs(x)
    np.testing.assert_array_equal(m.forward(x), raw)


def test_smoothing_then_running_max():
    m = small_model()
    m.out.b[:] = 0.4
    x = np.random.default_rng(2).normal(size=(30, 3))
    raw, _ = m.raw_outputs(x)
    smooth = gaussian_smooth(raw, m.config.smooth_sigma, m.config.smooth_radius)
    np.testing.assert_array_equal(m.forward(x), np.maximum.accumulate(smooth))
    m.config.monotone = False
    np.testing.assert_array_equal(m.forward(x), smooth)


def test_outputs_in_unit_interval():
    m = small_model()
    m.out.b[:] = 5.0
    y = m.forward(np.random.default_rng(3).normal(size=(20, 3)))
    assert np.all((y >= 0) & (y < 1))


def test_dimension_mismatch():
    with pytest.raises(UsageError):
        small_model().forward(np.zeros((4, 2)))


def test_ratchet_backward_routes_to_source():
    y = np.array([0.1, 0.3, 0.3, 0.5])
    dy = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(ratchet_backward(y, dy), [1.0, 5.0, 0.0, 4.0])


@pytest.mark.parametrize("monotone", [False, True])
@pytest.mark.parametrize("activation", ["rtanh", "sigmoid"])
def test_full_step_gradient(monotone, activation):
    m = small_model(activation=activation, monotone=monotone, smooth_radius=2, smooth_sigma=1.0)
    m.out.b[:] = 0.5
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 3))
    labels = np.array([0.0, 1 / 3, 2 / 3])
    phases = np.array([0, 1, 2])
    loss_fn = make_loss(GMM, LossWeights())

    def total():
        y, _ = m.forward_train(x)
        lc, lp, _ = loss_fn(y, labels, phases)
        return 0.6 * lc + 0.4 * lp

    y, caches = m.forward_train(x)
    # the conditional term must be active somewhere for the check to mean anything
    assert np.any(predict_phases(GMM, y) != phases)
    assert conditional_losses(GMM, y, phases)[0].sum() > 0
    _, _, dy = loss_fn(y, labels, phases)
    grads = m.backward(caches, dy)
    for name, p in m.params().items():
        num = numeric_grad(total, p)
        assert rel_error(grads[name], num) < 1e-5, name


def test_save_load_roundtrip(tmp_path):
    m = small_model()
    path = tmp_path / "model.json"
    save_model(path, m, GMM, {"seed": 1})
    m2, g2 = load_model(path)
    for k, v in m.params().items():
        np.testing.assert_array_equal(m2.params()[k], v)
    assert m2.config == m.config
    np.testing.assert_array_equal(g2.means, GMM.means)
    x = np.random.default_rng(5).normal(size=(6, 3))
    np.testing.assert_array_equal(m2.forward(x), m.forward(x))
    doc = json.loads(path.read_text())
    assert doc["version"] == 1 and doc["run"] == {"seed": 1}
    assert doc["params"]["lstm.W"]["shape"] == [20, 9]


def test_load_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataError):
        load_model(bad)
    m = small_model()
    save_model(bad, m, GMM)
    doc = json.loads(bad.read_text())
    doc["version"] = 99
    bad.write_text(json.dumps(doc))
    with pytest.raises(DataError):
        load_model(bad)
    doc["version"] = 1
    doc["params"]["fc1.W"]["shape"] = [1, 1]
    doc["params"]["fc1.W"]["data"] = [0.0]
    bad.write_text(json.dumps(doc))
    with pytest.raises(DataError):
        load_model(bad)


def test_copy_is_independent():
    m = small_model()
    c = m.copy()
    c.fc1.W += 1.0
    assert not np.array_equal(c.fc1.W, m.fc1.W)
