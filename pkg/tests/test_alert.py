import numpy as np
import pytest

from detmon.alert import (
    AlertArchitecture,
    AlertModel,
    TrainConfig,
    bce_loss,
    forward,
    gradient_check,
    init_model,
    predict,
    train,
)
from detmon.errors import DimensionMismatch, SingleClassDataset
from detmon.metrics import ScoredFrame, roc_auc
from detmon.model import AlertLabel, FeatureVector


def separable_fixture(n_per_class=150, dim=8, seed=0):
    """Two clusters separated by 4 cluster widths (means 0/2, std 0.5)."""
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for i, row in enumerate(rng.normal(2.0, 0.5, size=(n_per_class, dim))):
        feats.append(FeatureVector(f"p{i}", "external", row))
        labels.append(AlertLabel(f"p{i}", 0.1, "failure"))
    for i, row in enumerate(rng.normal(0.0, 0.5, size=(n_per_class, dim))):
        feats.append(FeatureVector(f"n{i}", "external", row))
        labels.append(AlertLabel(f"n{i}", 0.9, "success"))
    return feats, labels


def zero_model(arch):
    return AlertModel(
        arch,
        tuple(np.zeros((o, i)) for o, i in arch.layer_dims()),
        tuple(np.zeros(o) for o, _ in arch.layer_dims()),
        0,
    )


def test_init_deterministic():
    arch = AlertArchitecture(16, (8, 4))
    m1, m2 = init_model(arch, 42), init_model(arch, 42)
    for w1, w2 in zip(m1.weights, m2.weights):
        np.testing.assert_array_equal(w1, w2)
    m3 = init_model(arch, 43)
    assert any(not np.array_equal(a, b) for a, b in zip(m1.weights, m3.weights))


def test_init_zero_biases_and_weight_bounds():
    arch = AlertArchitecture(20, (32, 8))
    model = init_model(arch, 7)
    for b in model.biases:
        assert np.all(b == 0.0)
    for (out_d, in_d), w in zip(arch.layer_dims(), model.weights):
        assert np.abs(w).max() <= np.sqrt(6.0 / in_d)


def test_forward_zero_model_is_half():
    arch = AlertArchitecture(4, (3,))
    model = zero_model(arch)
    assert forward(model, np.array([1.0, -2.0, 3.0, 0.5])) == 0.5


def test_forward_inference_ignores_dropout_seed():
    model = init_model(AlertArchitecture(6, (8,)), seed=1)
    x = np.linspace(-1, 1, 6)
    ps = {forward(model, x, training=False, dropout_seed=s) for s in range(5)}
    assert len(ps) == 1


def test_forward_training_dropout_varies_with_seed():
    model = init_model(AlertArchitecture(6, (64,)), seed=1)
    x = np.linspace(0.5, 1.5, 6)
    ps = {forward(model, x, training=True, dropout_seed=s) for s in range(8)}
    assert len(ps) > 1


def test_forward_single_linear_layer_closed_form():
    arch = AlertArchitecture(3, ())
    w = np.array([[0.5, -1.0, 2.0]])
    model = AlertModel(arch, (w,), (np.array([0.25]),), 0)
    x = np.array([1.0, 2.0, 0.5])
    expected = 1.0 / (1.0 + np.exp(-(w @ x + 0.25)))
    assert abs(forward(model, x) - expected[0]) < 1e-12


def test_forward_dimension_mismatch():
    model = init_model(AlertArchitecture(4, ()), seed=0)
    with pytest.raises(DimensionMismatch):
        forward(model, np.zeros(5))


def test_bce_values():
    assert bce_loss(0.5, 0) == pytest.approx(np.log(2.0), abs=1e-12)
    assert bce_loss(0.5, 1) == pytest.approx(np.log(2.0), abs=1e-12)
    assert bce_loss(1.0, 1) == pytest.approx(0.0, abs=1e-9)
    # clamp keeps the worst case finite
    assert bce_loss(0.0, 1) == pytest.approx(-np.log(1e-12), rel=1e-6)


def test_train_deterministic():
    feats, labels = separable_fixture(60, 4)
    cfg = TrainConfig(epochs=5, seed=11)
    arch = AlertArchitecture(4, (16,))
    m1, h1 = train(feats, labels, cfg, arch)
    m2, h2 = train(feats, labels, cfg, arch)
    assert h1 == h2
    for w1, w2 in zip(m1.weights, m2.weights):
        np.testing.assert_array_equal(w1, w2)


def test_train_single_class_rejected():
    feats, labels = separable_fixture(20, 4)
    all_fail = [AlertLabel(l.frame_id, l.per_frame_map, "failure") for l in labels]
    with pytest.raises(SingleClassDataset):
        train(feats, all_fail, TrainConfig(epochs=1), AlertArchitecture(4))


def test_train_reaches_high_auroc_on_separable_data():
    feats, labels = separable_fixture()
    model, history = train(feats, labels, TrainConfig(epochs=50, seed=3), AlertArchitecture(8))
    scored = [
        ScoredFrame(fid, p, "failure" if fid.startswith("p") else "success", 0.5)
        for fid, p in predict(model, feats)
    ]
    assert roc_auc(scored) >= 0.99
    # smoothed loss is non-increasing on separable data, up to the dropout
    # noise floor (epoch means bounce by ~1e-3 once the loss has collapsed)
    smoothed = np.convolve(history, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smoothed) <= 2e-3)
    assert smoothed[-1] < 0.05 * smoothed[0]


def test_balanced_sampling_expected_ratio():
    # 10:1 imbalanced dataset; balanced sampling must still draw ~50/50
    rng = np.random.default_rng(5)
    n_pos, n_neg = 30, 300
    feats, labels = [], []
    for i in range(n_pos):
        feats.append(FeatureVector(f"p{i}", "external", rng.normal(1, 1, 2)))
        labels.append(AlertLabel(f"p{i}", 0.1, "failure"))
    for i in range(n_neg):
        feats.append(FeatureVector(f"n{i}", "external", rng.normal(-1, 1, 2)))
        labels.append(AlertLabel(f"n{i}", 0.9, "success"))

    # count positives drawn over >= 1e4 draws by replaying the sampling stream
    cfg = TrainConfig(epochs=1, seed=9)
    draws = 0
    positives = 0
    sample_rng = np.random.default_rng([cfg.seed, 1])
    n = len(feats)
    while draws < 10_000:
        classes = sample_rng.integers(0, 2, size=n)
        sample_rng.integers(0, n_pos, size=n)
        sample_rng.integers(0, n_neg, size=n)
        positives += int(classes.sum())
        draws += n
    sigma = np.sqrt(draws * 0.25)
    assert abs(positives - draws / 2) <= 3 * sigma


def test_predict_matches_single_forward():
    feats, labels = separable_fixture(30, 4)
    model, _ = train(feats, labels, TrainConfig(epochs=3, seed=2), AlertArchitecture(4, (8,)))
    batch = predict(model, feats[:10])
    for f, (fid, p) in zip(feats[:10], batch):
        assert fid == f.frame_id
        assert p == forward(model, f)


def test_predict_is_repeatable():
    feats, labels = separable_fixture(20, 4)
    model, _ = train(feats, labels, TrainConfig(epochs=2, seed=2), AlertArchitecture(4))
    assert predict(model, feats) == predict(model, feats)


def test_predict_zero_model_half_everywhere():
    arch = AlertArchitecture(3, (5,))
    model = zero_model(arch)
    feats = [FeatureVector(f"f{i}", "external", np.random.default_rng(i).random(3)) for i in range(5)]
    assert all(p == 0.5 for _, p in predict(model, feats))


@pytest.mark.parametrize("hidden", [(), (7,), (7, 3)])
def test_gradient_check_small(hidden):
    rng = np.random.default_rng(123)
    model = init_model(AlertArchitecture(5, hidden), seed=17)
    x = rng.normal(0, 1, 5)
    assert gradient_check(model, x, 1, step=1e-5) <= 1e-4
    assert gradient_check(model, x, 0, step=1e-5) <= 1e-4


def test_gradient_check_dead_relu_path():
    # a hidden unit that never activates has zero gradient on both sides
    arch = AlertArchitecture(2, (2,))
    w1 = np.array([[-5.0, -5.0], [1.0, 1.0]])
    model = AlertModel(arch, (w1, np.array([[0.3, 0.4]])), (np.zeros(2), np.zeros(1)), 0)
    x = np.array([1.0, 1.0])  # first unit's pre-activation is -10
    assert gradient_check(model, x, 1, step=1e-5) <= 1e-4


def test_gradient_check_sensitive_to_large_steps():
    rng = np.random.default_rng(3)
    model = init_model(AlertArchitecture(4, (6,)), seed=5)
    x = rng.normal(0, 2, 4)
    fine = gradient_check(model, x, 1, step=1e-5)
    coarse = gradient_check(model, x, 1, step=1e-1)
    assert coarse > fine


def test_model_rejects_bad_shapes():
    arch = AlertArchitecture(4, (3,))
    with pytest.raises(DimensionMismatch):
        AlertModel(arch, (np.zeros((3, 5)), np.zeros((1, 3))), (np.zeros(3), np.zeros(1)), 0)
