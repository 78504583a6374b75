import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bce, finite_difference_check, reference_forward
from wavestate import cnn
from wavestate.cnn import LayerSpec, TrainConfig


def _zero(net):
    for p in net.params:
        for v in p.values():
            v[...] = 0.0
    return net


def _batch(seed, shape=(2, 16, 16), n=4):
    return np.random.default_rng(seed).uniform(0, 1, (n, *shape))


def test_zero_network_outputs_half():
    net = _zero(cnn.build_reference_net("deep", (2, 16, 16), 0))
    assert np.all(cnn.forward(net, _batch(0)) == 0.5)


def test_identity_conv_preserves_channel():
    layers = [LayerSpec.conv(1, 1), LayerSpec("flatten"), LayerSpec.dense(1), LayerSpec("sigmoid")]
    net = cnn.build_network(layers, (1, 5, 5), 0)
    net.params[0]["W"][...] = 1.0
    net.params[0]["b"][...] = 0.0
    x = _batch(1, (1, 5, 5))
    out, _ = cnn._conv_forward(x, net.params[0], layers[0])
    assert np.array_equal(out, x)


@pytest.mark.parametrize("kind", ["shallow", "deep"])
def test_forward_matches_reference_and_is_batch_consistent(kind):
    net = cnn.build_reference_net(kind, (2, 16, 16), 3)
    x = _batch(2, n=6)
    p = cnn.forward(net, x)
    ref, _, _ = reference_forward(net.layers, net.params, x)
    assert np.max(np.abs(p - ref)) < 1e-12
    for i in range(len(x)):
        assert abs(cnn.forward(net, x[i:i + 1])[0] - p[i]) < 1e-12


def test_forward_shape_mismatch():
    net = cnn.build_reference_net("shallow", (1, 8, 8), 0)
    with pytest.raises(ValueError):
        cnn.forward(net, np.zeros((2, 1, 9, 8)))


def test_loss_examples():
    assert cnn.loss(np.full(4, 0.5), np.array([0, 1, 1, 0])) == pytest.approx(math.log(2))
    assert cnn.loss(np.array([1.0, 0.0]), np.array([1.0, 0.0])) <= 1e-6
    assert cnn.loss(np.array([0.9, 0.2]), np.array([1, 0])) == pytest.approx(0.164252033486018, abs=1e-12)
    with pytest.raises(ValueError):
        cnn.loss(np.zeros(2), np.zeros(3))


def test_saturated_correct_output_has_zero_gradient():
    net = _zero(cnn.build_reference_net("shallow", (1, 8, 8), 0))
    net.params[4]["b"][...] = 40.0  # p = 1 - 4e-18, clamped
    grads = cnn.backward(net, _batch(0, (1, 8, 8)), np.ones(4))
    assert all(np.all(g == 0) for layer in grads for g in layer.values())


def test_gradient_is_batch_mean():
    net = cnn.build_reference_net("deep", (1, 16, 16), 4)
    a, b = _batch(5, (1, 16, 16), 3), _batch(6, (1, 16, 16), 5)
    ya, yb = np.array([1, 0, 1.0]), np.array([0, 0, 1, 1, 0.0])
    ga, gb = cnn.backward(net, a, ya), cnn.backward(net, b, yb)
    gab = cnn.backward(net, np.concatenate([a, b]), np.concatenate([ya, yb]))
    for la, lb, lab in zip(ga, gb, gab):
        for k in lab:
            assert np.max(np.abs(lab[k] - (3 * la[k] + 5 * lb[k]) / 8)) < 1e-10


@pytest.mark.parametrize("layers", [
    [LayerSpec.conv(3, 3, stride=2), LayerSpec("relu"), LayerSpec.maxpool(2, 1), LayerSpec("flatten"),
     LayerSpec.dense(4), LayerSpec("relu"), LayerSpec.dense(1), LayerSpec("sigmoid")],
    [LayerSpec.conv(2, (3, 2), padding=1), LayerSpec("relu"), LayerSpec.conv(2, 3, stride=1), LayerSpec("relu"),
     LayerSpec.maxpool(3), LayerSpec("flatten"), LayerSpec.dense(1), LayerSpec("sigmoid")],
])
def test_gradient_check_custom_layers(layers):
    net = cnn.build_network(layers, (2, 11, 11), 9)
    x = _batch(7, (2, 11, 11), 3)
    y = np.array([1.0, 0.0, 0.0])
    worst, info = finite_difference_check(net, x, y, cnn.backward(net, x, y))
    assert worst < 1e-5, info


def test_reference_net_parameter_count():
    net = cnn.build_reference_net("shallow", (5, 64, 64), 0)
    conv = 8 * (5 * 5 * 5) + 8
    dense = 8 * 32 * 32 + 1
    assert net.parameter_count() == conv + dense
    deep = cnn.build_reference_net("deep", (5, 64, 64), 0)
    expected = (8 * 5 * 9 + 8) + (16 * 8 * 9 + 16) + (32 * 16 * 9 + 32) + (32 * 8 * 8 * 32 + 32) + (32 + 1)
    assert deep.parameter_count() == expected


def test_reference_net_seeded():
    a = cnn.build_reference_net("deep", (1, 16, 16), 5)
    b = cnn.build_reference_net("deep", (1, 16, 16), 5)
    assert all(np.array_equal(pa[k], pb[k]) for pa, pb in zip(a.params, b.params) for k in pa)


def test_spatial_collapse():
    with pytest.raises(ValueError, match="spatial collapse"):
        cnn.build_reference_net("deep", (5, 8, 8), 0)
    with pytest.raises(ValueError):
        cnn.build_reference_net("wide", (1, 16, 16), 0)


def test_network_must_end_in_sigmoid():
    with pytest.raises(ValueError):
        cnn.build_network([LayerSpec("flatten"), LayerSpec.dense(2), LayerSpec("sigmoid")], (1, 4, 4))
    with pytest.raises(ValueError):
        LayerSpec("softmax")


@given(c=st.integers(1, 3), h=st.integers(6, 20), w=st.integers(6, 20), k=st.integers(1, 5),
       stride=st.integers(1, 3), pad=st.integers(0, 2), out=st.integers(1, 4))
def test_conv_shape_algebra(c, h, w, k, stride, pad, out):
    spec = LayerSpec.conv(out, k, stride=stride, padding=pad)
    expected = (out, (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1)
    assert cnn.output_shape(spec, (c, h, w)) == expected
    x = np.random.default_rng(0).standard_normal((1, c, h, w))
    p = {"W": np.ones((out, c, k, k)), "b": np.zeros(out)}
    y, _ = cnn._conv_forward(x, p, spec)
    assert y.shape[1:] == expected


@given(c=st.integers(1, 3), h=st.integers(4, 20), w=st.integers(4, 20), win=st.integers(1, 3), stride=st.integers(1, 3))
def test_pool_shape_algebra(c, h, w, win, stride):
    spec = LayerSpec.maxpool(win, stride)
    ho, wo = (h - win) // stride + 1, (w - win) // stride + 1
    if ho < 2 or wo < 2:
        with pytest.raises(ValueError):
            cnn.output_shape(spec, (c, h, w))
        return
    assert cnn.output_shape(spec, (c, h, w)) == (c, ho, wo)
    y, _ = cnn._pool_forward(np.random.default_rng(1).standard_normal((2, c, h, w)), spec)
    assert y.shape == (2, c, ho, wo)


def test_conv_pool_translation():
    net = cnn.build_reference_net("shallow", (1, 24, 24), 0)
    x = np.zeros((1, 1, 24, 24))
    x[0, 0, 4:16, 4:16] = np.random.default_rng(0).uniform(size=(12, 12))
    shifted = np.roll(x, (2, 2), axis=(2, 3))
    _, acts, _ = reference_forward(net.layers, net.params, x)
    _, acts_s, _ = reference_forward(net.layers, net.params, shifted)
    a, b = acts[3], acts_s[3]  # input to flatten
    assert np.max(np.abs(b[:, :, 3:10, 3:10] - a[:, :, 2:9, 2:9])) < 1e-12


def _separable(n, seed, shape=(1, 8, 8)):
    rng = np.random.default_rng(seed)
    y = (np.arange(n) % 2).astype(float)
    x = rng.uniform(0, 0.3, (n, *shape))
    x[y == 1, :, : shape[1] // 2] += 0.7
    return x, y


def test_memorise_single_example():
    x, y = _separable(1, 0)
    net = cnn.build_reference_net("shallow", (1, 8, 8), 0)
    report = cnn.train(net, x, np.array([1.0]), config=TrainConfig(epochs=200, batch_size=1))
    assert report.train_loss[-1] < 0.01


def test_separable_reaches_full_accuracy():
    x, y = _separable(50, 1)
    net = cnn.build_reference_net("shallow", (1, 8, 8), 1)
    report = cnn.train(net, x, y, config=TrainConfig(epochs=50, batch_size=10))
    assert max(report.train_accuracy) == 1.0


def test_training_deterministic():
    x, y = _separable(30, 2)
    losses = []
    for _ in range(2):
        net = cnn.build_reference_net("shallow", (1, 8, 8), 3)
        losses.append(cnn.train(net, x, y, config=TrainConfig(epochs=4, seed=11)).train_loss)
    assert losses[0] == losses[1]


def test_early_stopping_restores_best():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(40, 1, 8, 8))
    y = (rng.random(40) < 0.5).astype(float)
    vx = rng.uniform(size=(20, 1, 8, 8))
    vy = (rng.random(20) < 0.5).astype(float)
    net = cnn.build_reference_net("shallow", (1, 8, 8), 0)
    report = cnn.train(net, x, y, vx, vy, TrainConfig(epochs=60, early_stop_patience=3, learning_rate=0.05))
    assert report.stopped_early
    assert len(report.val_loss) == report.best_epoch + 4
    _, p = cnn.predict(net, vx)
    assert cnn.loss(p, vy) == pytest.approx(min(report.val_loss), rel=1e-12)


def test_training_validation():
    net = cnn.build_reference_net("shallow", (1, 8, 8), 0)
    with pytest.raises(ValueError):
        cnn.train(net, np.zeros((0, 1, 8, 8)), np.zeros(0))
    with pytest.raises(ValueError):
        cnn.train(net, np.zeros((2, 1, 8, 8)), np.zeros(3))
    with pytest.raises(ValueError):
        TrainConfig(optimizer="adam")


def test_divergence_detected():
    net = cnn.build_reference_net("shallow", (1, 8, 8), 0)
    with np.errstate(all="ignore"), pytest.raises(cnn.TrainingDiverged):
        cnn.train(net, np.full((4, 1, 8, 8), 1e308), np.array([0, 1, 0, 1.0]), config=TrainConfig(epochs=2))


def test_predict_threshold():
    net = _zero(cnn.build_reference_net("shallow", (1, 8, 8), 0))
    x = _batch(0, (1, 8, 8), 2)
    labels, p = cnn.predict(net, x)
    assert np.all(p == 0.5) and np.all(labels == 0)
    net.params[4]["b"][...] = math.log(0.51 / 0.49)
    labels, p = cnn.predict(net, x)
    assert np.allclose(p, 0.51) and np.all(labels == 1)


def test_predict_consistent_with_probabilities():
    net = cnn.build_reference_net("shallow", (1, 8, 8), 2)
    labels, p = cnn.predict(net, _batch(3, (1, 8, 8), 300), batch_size=64)
    assert np.array_equal(labels, (p > 0.5).astype(int)) and len(p) == 300


def test_checkpoint_round_trip(tmp_path):
    net = cnn.build_reference_net("deep", (2, 16, 16), 8)
    cnn.save_checkpoint(net, tmp_path / "ck", {"note": "x"})
    back = cnn.load_checkpoint(tmp_path / "ck")
    assert back.layers == net.layers and back.input_shape == net.input_shape
    x = _batch(1)
    assert np.array_equal(cnn.forward(back, x), cnn.forward(net, x))
    assert (tmp_path / "ck" / "layer00_W.wstf").exists()


def test_bce_oracle_agrees():
    p, y = np.array([0.3, 0.8, 1.0]), np.array([0.0, 1.0, 1.0])
    assert cnn.loss(p, y) == pytest.approx(float(bce(p, y)), rel=1e-15)
