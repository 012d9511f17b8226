import math

import numpy as np
import pytest

from qhb.data import FeatureSet, synthetic_dataset
from qhb.gradients import ExecutionCounter
from qhb.head import DenseLayer, softmax
from qhb.model import (
    HqnnConfig, HqnnModel, TrainingFailed, evaluate, expected_executions, expected_steps,
    model_forward, sample_gradient, train,
)
from qhb.statevec import ShotMode, ValidationError


@pytest.fixture(scope="module")
def blobs():
    return synthetic_dataset(2, 5)


def test_forward_is_a_distribution_and_deterministic():
    model = HqnnModel.init(HqnnConfig("se", 2, 4, "Y"))
    x = np.array([0.1, 0.5, 2.0, 3.0])
    p = model_forward(model, x)
    assert p.sum() == pytest.approx(1.0)
    assert np.array_equal(p, model_forward(model, x))


def test_forward_composition_zero_params():
    model = HqnnModel.init(HqnnConfig("be", 2, 4, "Z"))
    model.quantum_params[:] = 0
    w = np.eye(4) * 2 + 0.1
    model.head = DenseLayer(w, np.zeros(4))
    # all-zero features and angles leave |0000>, so every <Z> is 1
    np.testing.assert_allclose(model_forward(model, np.zeros(4)), softmax(w @ np.ones(4)),
                               atol=1e-12)


def test_forward_rejects_out_of_range_features():
    model = HqnnModel.init(HqnnConfig())
    with pytest.raises(ValidationError):
        model_forward(model, np.array([0, 0, 0, 3.5]))


def test_evaluate_extremes():
    model = HqnnModel.init(HqnnConfig())
    x = np.array([[0.2, 0.4, 0.6, 0.8]])
    pred = int(np.argmax(model_forward(model, x[0])))
    assert evaluate(model, FeatureSet(x, [pred], 4)) == 1.0
    assert evaluate(model, FeatureSet(x, [(pred + 1) % 4], 4)) == 0.0
    with pytest.raises(ValidationError):
        evaluate(model, FeatureSet(np.zeros((0, 4)), [], 4))


def test_accuracy_steps(blobs):
    model = HqnnModel.init(HqnnConfig(seed=4))
    acc = evaluate(model, blobs)
    assert 0 <= acc <= 1 and math.isclose(acc * len(blobs), round(acc * len(blobs)))


def test_sample_gradient_matches_finite_differences():
    model = HqnnModel.init(HqnnConfig("rc", 2, 4, "X", seed=8))
    x, label = np.array([0.3, 1.2, 2.2, 0.7]), 2
    loss, g = sample_gradient(model, x, label, ShotMode())
    flat = model.flat()

    def f(vec):
        m = HqnnModel.init(model.config)
        m.set_flat(vec)
        return -np.log(model_forward(m, x)[label])

    assert loss == pytest.approx(f(flat))
    for k in range(0, len(flat), 3):
        e = np.zeros_like(flat)
        e[k] = 1e-5
        assert g[k] == pytest.approx((f(flat + e) - f(flat - e)) / 2e-5, abs=1e-7)


def test_step_and_execution_counts(blobs):
    cfg = HqnnConfig("be", 2, 4, "Z", epochs=3, batch_size=6)
    counter = ExecutionCounter()
    model, report = train(cfg, blobs, blobs, counter)
    assert report.optimizer_steps == expected_steps(20, 6, 3) == 12
    assert counter.count == report.circuit_executions
    assert counter.count == expected_executions(cfg, model.spec.param_count, 20, 20)
    assert len(report.per_epoch_train_accuracy) == len(report.per_epoch_mean_loss) == 3


def test_analytic_training_is_reproducible(blobs):
    cfg = HqnnConfig("se", 2, 4, "X", seed=11, epochs=2)
    m1, r1 = train(cfg, blobs, blobs)
    m2, r2 = train(cfg, blobs, blobs)
    d1, d2 = r1.to_dict(), r2.to_dict()
    d1.pop("wall_clock_training_seconds")
    d2.pop("wall_clock_training_seconds")
    assert d1 == d2
    assert np.array_equal(m1.flat(), m2.flat())


def test_sampled_training_is_reproducible(blobs):
    cfg = HqnnConfig("rc", 2, 4, "Z", shots=50, seed=1, epochs=1)
    assert np.array_equal(train(cfg, blobs)[0].flat(), train(cfg, blobs)[0].flat())
    other = HqnnConfig("rc", 2, 4, "Z", shots=50, seed=2, epochs=1)
    assert not np.array_equal(train(cfg, blobs)[0].flat(), train(other, blobs)[0].flat())


def test_shuffle_changes_trajectory(blobs):
    base = HqnnConfig("be", 2, 4, "Z", epochs=1, seed=3)
    shuf = HqnnConfig("be", 2, 4, "Z", epochs=1, seed=3, shuffle=True)
    assert not np.array_equal(train(base, blobs)[0].flat(), train(shuf, blobs)[0].flat())


def test_nan_loss_raises(blobs, monkeypatch):
    import qhb.model as m
    monkeypatch.setattr(m, "loss_and_backward",
                        lambda *a: (float("nan"), np.zeros((4, 4)), np.zeros(4), np.zeros(4)))
    with pytest.raises(TrainingFailed):
        train(HqnnConfig(epochs=1), blobs)


def test_checkpoint_round_trip(tmp_path, blobs):
    model, _ = train(HqnnConfig("rc", 2, 4, "Y", epochs=1, seed=6), blobs)
    path = tmp_path / "ckpt.json"
    model.save(path)
    loaded = HqnnModel.load(path)
    assert loaded.config == model.config
    assert np.array_equal(loaded.flat(), model.flat())
    x = blobs.features[0]
    assert np.array_equal(model_forward(loaded, x), model_forward(model, x))


def test_config_validation():
    HqnnConfig("rc", 3, 16, "x", 1024).validate_paper_grid()
    with pytest.raises(ValidationError):
        HqnnConfig("be", 7, 4, "Z", 100).validate_paper_grid()
    with pytest.raises(ValidationError):
        HqnnConfig("be", 4, 5, "Z", 100).validate_paper_grid()
    with pytest.raises(ValidationError):
        HqnnConfig("be", 4, 4, "Z", None).validate_paper_grid()
    for bad in (dict(template="mesh"), dict(n_layers=0), dict(shots=0), dict(learning_rate=0),
                dict(batch_size=0)):
        with pytest.raises((ValidationError, ValueError)):
            HqnnConfig(**bad)
    cfg = HqnnConfig("SE", observable="y")
    assert (cfg.template, cfg.observable) == ("strongly_entangling", "Y")
    assert HqnnConfig.from_dict(cfg.to_dict()) == cfg


def test_feature_count_mismatch(blobs):
    with pytest.raises(ValidationError):
        train(HqnnConfig(n_qubits=9), blobs)
