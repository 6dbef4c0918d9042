"""
Training tests: reverse-mode rules, gradient checking, SGD, float and QAT training.
"""
import numpy as np
import pytest

from core.exceptions import DivergenceError, ShapeMismatchError
from models.schemas import TrainConfig
from modules.backbone import BackboneModel, LayerKind, LayerSpec, backward, build_resnet_lite, forward
from modules.data import LabeledImages
from modules.fixedpoint import QFormat
from modules.nn import GradientTape, ste_backward
from modules.training import SGD, grad_check, init_head, train, train_step
from modules.training.trainer import learning_rate_at
from utils.seeding import CONCERNS, rng_for


Q44 = QFormat(4, 4)


def toy_dataset(n_per_class=8, size=8, seed=0):
    """Two linearly separable classes: dark and bright images."""
    rng = np.random.default_rng(seed)
    dark = 0.2 + 0.05 * rng.standard_normal((n_per_class, 1, size, size))
    bright = 0.8 + 0.05 * rng.standard_normal((n_per_class, 1, size, size))
    images = np.clip(np.concatenate([dark, bright]), 0.0, 1.0)
    labels = np.repeat([0, 1], n_per_class)
    return LabeledImages(images=images, labels=labels)


def overlapping_toy_dataset(n_per_class=16, size=8, seed=0):
    """Two classes with overlapping brightness: no backbone fits it within a few epochs."""
    rng = np.random.default_rng(seed)
    levels = np.concatenate([rng.normal(0.45, 0.08, n_per_class), rng.normal(0.55, 0.08, n_per_class)])
    images = levels[:, None, None, None] + 0.05 * rng.standard_normal((2 * n_per_class, 1, size, size))
    labels = np.repeat([0, 1], n_per_class)
    return LabeledImages(images=np.clip(images, 0.0, 1.0), labels=labels)


# ============= STRAIGHT-THROUGH ESTIMATOR =============

def test_ste_interior_and_saturated():
    np.testing.assert_array_equal(ste_backward(np.array([1.0]), np.array([0.5]), Q44), [1.0])
    np.testing.assert_array_equal(ste_backward(np.array([1.0]), np.array([9.0]), Q44), [0.0])
    np.testing.assert_array_equal(ste_backward(np.array([1.0]), np.array([-9.0]), Q44), [0.0])


def test_ste_shape_mismatch():
    with pytest.raises(ShapeMismatchError) as excinfo:
        ste_backward(np.ones(2), np.ones(3), Q44)
    assert excinfo.value.exit_code == 3


def test_ste_matches_identity_through_quantizer_finite_differences():
    """Loss sum(c * x^2): interior gradient equals the quantizer-as-identity derivative."""
    rng = np.random.default_rng(0)
    x = rng.uniform(-7.0, 7.0, size=50)
    c = rng.normal(size=50)
    h = 1e-3
    numeric = np.array([
        (np.sum(c * np.where(np.arange(50) == i, x + h, x) ** 2)
         - np.sum(c * np.where(np.arange(50) == i, x - h, x) ** 2)) / (2 * h)
        for i in range(50)
    ])
    analytic = ste_backward(2 * c * x, x, Q44)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-3, atol=1e-9)


# ============= GRADIENTS =============

def _single_conv_model(w, b):
    layers = [
        LayerSpec(LayerKind.CONV, "unit.conv", {
            "in_channels": 1, "out_channels": 1, "kernel": 1, "stride": 1, "padding": 0, "bias": True,
        }),
        LayerSpec(LayerKind.GLOBAL_AVGPOOL, "gap"),
    ]
    weights = {"unit.conv.weight": np.array([[[[w]]]]), "unit.conv.bias": np.array([b])}
    return BackboneModel(arch="unit", layers=layers, weights=weights, feature_dim=1, input_channels=1)


def test_single_conv_with_head_matches_closed_form():
    w, b, s = 0.7, -0.2, 1.5
    model = _single_conv_model(w, b)
    head = {"head.weight": np.array([[0.3], [-1.1], [0.5]]), "head.bias": np.array([0.1, 0.0, -0.2])}
    label = 1

    loss, _, grads = train_step(model, head, np.array([[[[s]]]]), np.array([label]), TrainConfig())

    z = w * s + b
    logits = head["head.weight"][:, 0] * z + head["head.bias"]
    p = np.exp(logits - logits.max())
    p /= p.sum()
    onehot = np.eye(3)[label]
    dz = np.sum((p - onehot) * head["head.weight"][:, 0])
    assert loss == pytest.approx(-np.log(p[label]))
    assert grads["unit.conv.weight"].shape == (1, 1, 1, 1)
    assert grads["unit.conv.weight"][0, 0, 0, 0] == pytest.approx(s * dz)
    assert grads["unit.conv.bias"][0] == pytest.approx(dz)
    np.testing.assert_allclose(grads["head.weight"][:, 0], (p - onehot) * z)
    np.testing.assert_allclose(grads["head.bias"], p - onehot)


def test_gradient_shapes_equal_weight_shapes():
    model = build_resnet_lite(1, 4)
    tape = GradientTape()
    features = forward(model, np.random.default_rng(1).uniform(size=(2, 1, 8, 8)), training=True, tape=tape)
    grads, dx = backward(model, tape, np.ones_like(features))
    assert set(grads) == set(model.trainable_names())
    for name, g in grads.items():
        assert g.shape == model.weights[name].shape
    assert dx.shape == (2, 1, 8, 8)


def test_grad_check_resnet_lite_float():
    model = build_resnet_lite(1, 4, seed=2)
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(4, 1, 16, 16))
    head = init_head(model.feature_dim, 3, seed=0)
    labels = np.array([0, 1, 2, 1])
    report = grad_check(model, x, epsilon=1e-4, labels=labels, head=head)
    assert report.checked > 0
    assert report.max_error <= 1e-3, report.per_tensor
    assert {"block1.conv1", "block2.conv3", "block2.shortcut.conv"} <= set(report.per_layer)


def test_grad_check_projection_loss():
    model = build_resnet_lite(1, 4, seed=4)
    x = np.random.default_rng(5).uniform(size=(3, 1, 16, 16))
    report = grad_check(model, x, epsilon=1e-4, seed=1)
    assert report.max_error <= 1e-3, report.per_tensor


def test_zero_input_gives_finite_gradients():
    model = build_resnet_lite(1, 4)
    tape = GradientTape()
    features = forward(model, np.zeros((2, 1, 8, 8)), training=True, tape=tape, update_stats=False)
    grads, _ = backward(model, tape, np.ones_like(features))
    for g in grads.values():
        assert np.all(np.isfinite(g))


# ============= OPTIMIZER =============

def test_sgd_momentum_and_weight_decay():
    w = np.array([1.0, -2.0])
    params = {"w": w}
    opt = SGD(learning_rate=0.1, momentum=0.9, weight_decay=0.5)
    opt.step(params, {"w": np.array([1.0, 1.0])})
    # v = g + 0.5 w = [1.5, 0.0]
    np.testing.assert_allclose(w, [0.85, -2.0])
    opt.step(params, {"w": np.array([0.0, 0.0])})
    # v = 0.9 * [1.5, 0] + 0.5 * [0.85, -2.0]
    np.testing.assert_allclose(w, [0.85 - 0.1 * (1.35 + 0.425), -2.0 + 0.1])


def test_sgd_rejects_misshaped_gradient():
    params = {"w": np.zeros((2, 3))}
    with pytest.raises(ShapeMismatchError, match="grad of w"):
        SGD(learning_rate=0.1).step(params, {"w": np.zeros(6)})
    np.testing.assert_array_equal(params["w"], np.zeros((2, 3)))


def test_cosine_schedule():
    cfg = TrainConfig(epochs=4, learning_rate=0.1, cosine_lr=True)
    assert learning_rate_at(cfg, 0) == pytest.approx(0.1)
    assert learning_rate_at(cfg, 2) == pytest.approx(0.05)
    assert learning_rate_at(TrainConfig(epochs=4, learning_rate=0.1), 3) == 0.1


# ============= TRAINING =============

def test_random_streams_are_separate_and_reproducible():
    draws = {concern: rng_for(7, concern).random(4) for concern in CONCERNS}
    assert len({tuple(v) for v in draws.values()}) == len(CONCERNS)
    np.testing.assert_array_equal(rng_for(7, "init").random(4), draws["init"])
    with pytest.raises(ValueError):
        rng_for(7, "dropout")


def test_zero_learning_rate_is_a_fixpoint():
    model = build_resnet_lite(1, 4)
    head = init_head(model.feature_dim, 2)
    result = train(model, head, toy_dataset(), TrainConfig(epochs=2, batch_size=4, learning_rate=0.0, weight_decay=0.0))
    for name in model.trainable_names():
        np.testing.assert_array_equal(result.model.weights[name], model.weights[name])
    np.testing.assert_array_equal(result.head["head.weight"], head["head.weight"])


def test_history_has_one_record_per_batch():
    model = build_resnet_lite(1, 4)
    data = toy_dataset(n_per_class=10)
    result = train(model, init_head(model.feature_dim, 2), data, TrainConfig(epochs=2, batch_size=8))
    assert len(result.history) == 2 * 3
    assert [(r.epoch, r.batch) for r in result.history[:4]] == [(0, 0), (0, 1), (0, 2), (1, 0)]


def test_train_does_not_modify_inputs():
    model = build_resnet_lite(1, 4)
    before = {k: v.copy() for k, v in model.weights.items()}
    train(model, init_head(model.feature_dim, 2), toy_dataset(), TrainConfig(epochs=1, batch_size=8))
    for name, value in before.items():
        np.testing.assert_array_equal(model.weights[name], value)


def test_separable_toy_set_is_fitted():
    model = build_resnet_lite(1, 4, seed=0)
    cfg = TrainConfig(epochs=50, batch_size=16, learning_rate=0.05)
    result = train(model, init_head(model.feature_dim, 2), toy_dataset(), cfg)
    assert result.final_accuracy() == 1.0


def test_qat_high_precision_tracks_float():
    model = build_resnet_lite(1, 4, seed=1)
    head = init_head(model.feature_dim, 2)
    data = overlapping_toy_dataset()
    cfg = dict(epochs=3, batch_size=8, learning_rate=0.01)
    float_run = train(model, head, data, TrainConfig(**cfg))
    qat_run = train(model, head, data, TrainConfig(**cfg, mode="qat", qformat="Q16.16"))
    lf = np.array([r.loss for r in float_run.history])
    lq = np.array([r.loss for r in qat_run.history])
    assert len(lf) == 12
    # the compared window stays away from the near-zero loss regime
    assert lf.min() > 0.3
    np.testing.assert_allclose(lq, lf, rtol=0.05, atol=1e-3)


def test_training_is_deterministic_with_hflip():
    model = build_resnet_lite(1, 4, seed=2)
    cfg = TrainConfig(epochs=2, batch_size=8, hflip=True, seed=7)
    a = train(model, init_head(model.feature_dim, 2), toy_dataset(), cfg)
    b = train(model, init_head(model.feature_dim, 2), toy_dataset(), cfg)
    assert [r.loss for r in a.history] == [r.loss for r in b.history]
    for name in a.model.weights:
        np.testing.assert_array_equal(a.model.weights[name], b.model.weights[name])


def test_non_finite_loss_raises_divergence():
    model = build_resnet_lite(1, 4)
    head = {"head.weight": np.full((2, model.feature_dim), np.inf), "head.bias": np.zeros(2)}
    with pytest.raises(DivergenceError) as excinfo:
        train(model, head, toy_dataset(), TrainConfig(epochs=1, batch_size=16))
    assert excinfo.value.epoch == 0 and excinfo.value.batch == 0


def test_qat_requires_format():
    with pytest.raises(ValueError):
        TrainConfig(mode="qat")
