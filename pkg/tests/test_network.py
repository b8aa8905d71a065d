import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neural_implicit.distance_field import sphere_sdf
from neural_implicit.errors import LengthMismatch, NonFiniteLoss
from neural_implicit.network import (
    AdamState,
    BASE_ARCHITECTURE,
    MlpArchitecture,
    MlpModel,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init_model,
    loss_l1,
    train,
)

from conftest import mlp_loss_ref


def forward_ref(model, points):
    h = np.asarray(points, dtype=np.float64)
    layers = model.layers()
    for w, b in layers[:-1]:
        h = np.maximum(h @ w.T + b, 0)
    w, b = layers[-1]
    return np.tanh(h @ w.T + b)[:, 0]


def test_parameter_count():
    assert BASE_ARCHITECTURE.parameter_count == 7553
    assert MlpArchitecture(1, 4).parameter_count == 4 * 3 + 4 + 4 + 1
    for n, h in [(2, 8), (3, 5), (8, 32)]:
        arch = MlpArchitecture(n, h)
        assert arch.parameter_count == sum(r * c + r for r, c in arch.layer_shapes)


def test_init_finite_and_bounded():
    m = init_model(seed=0)
    assert np.all(np.isfinite(m.params)) and m.params.dtype == np.float32
    out = forward(m, np.random.default_rng(0).uniform(-1, 1, size=(100, 3)))
    assert np.all(np.abs(out) < 1)


def test_forward_matches_reference_and_is_batch_invariant():
    m = init_model(MlpArchitecture(3, 16), seed=4)
    p = np.random.default_rng(1).uniform(-1, 1, size=(257, 3))
    out = forward(m, p)
    np.testing.assert_allclose(out, forward_ref(m, p), rtol=1e-12, atol=1e-14)
    pieces = np.concatenate([forward(m, p[i : i + 10]) for i in range(0, len(p), 10)])
    np.testing.assert_array_equal(out, pieces)
    np.testing.assert_array_equal(forward(m, np.repeat(p[:1], 5, axis=0)), np.full(5, out[0]))


def test_loss_l1():
    assert loss_l1([0.1, -0.2], [0.1, 0.2]) == pytest.approx(0.2)
    with pytest.raises(LengthMismatch):
        loss_l1([1.0], [1.0, 2.0])
    with pytest.raises(LengthMismatch):
        loss_l1([], [])


def test_gradient_matches_extended_precision_differences():
    rng = np.random.default_rng(2)
    arch = MlpArchitecture(2, 6)
    m = init_model(arch, seed=1)
    m = MlpModel(arch, m.params + rng.normal(scale=0.1, size=arch.parameter_count).astype(np.float32))
    x = rng.uniform(-1, 1, size=(12, 3))
    y = rng.uniform(-0.8, 0.8, size=12)
    g = backward(m, x, y)
    base = m.params.astype(np.longdouble)
    h = np.longdouble(1e-6)
    fd = np.empty(len(base))
    for i in range(len(base)):
        up, dn = base.copy(), base.copy()
        up[i] += h
        dn[i] -= h
        fd[i] = float((mlp_loss_ref(arch, up, x, y) - mlp_loss_ref(arch, dn, x, y)) / (2 * h))
    big = np.abs(g) > 1e-8
    assert np.max(np.abs(g[big] - fd[big]) / np.abs(fd[big])) < 1e-4
    assert np.all(np.abs(fd[~big]) < 1e-7)


def test_gradient_of_concatenated_batches_is_weighted_mean():
    rng = np.random.default_rng(3)
    m = init_model(MlpArchitecture(2, 8), seed=0)
    a, b = rng.uniform(-1, 1, size=(5, 3)), rng.uniform(-1, 1, size=(11, 3))
    ya, yb = rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 11)
    whole = backward(m, np.vstack([a, b]), np.concatenate([ya, yb]))
    parts = (5 * backward(m, a, ya) + 11 * backward(m, b, yb)) / 16
    np.testing.assert_allclose(whole, parts, rtol=1e-10, atol=1e-15)


def test_first_adam_step_moves_by_learning_rate():
    m = init_model(MlpArchitecture(1, 4), seed=0)
    g = np.random.default_rng(0).choice([-1.0, 1.0], size=m.architecture.parameter_count)
    cfg = TrainConfig(learning_rate=1e-3)
    new, state = adam_step(m, g, AdamState.zeros(len(g)), cfg)
    delta = new.params.astype(np.float64) - m.params.astype(np.float64)
    np.testing.assert_allclose(delta, -1e-3 * g, rtol=1e-3)
    assert state.step == 1


def test_train_zero_epochs_returns_initial_model():
    m = init_model(MlpArchitecture(1, 4))
    r = train(m, np.zeros((4, 3)), np.zeros(4), TrainConfig(max_epochs=0))
    assert r.model is m and r.history == []
    model, history = r
    assert history == []


def test_train_reduces_loss_and_is_deterministic():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(2000, 3))
    y = sphere_sdf(0.5)(x)
    cfg = TrainConfig(learning_rate=1e-3, max_epochs=15, batch_size=256)
    arch = MlpArchitecture(2, 16)
    r1 = train(init_model(arch), x, y, cfg)
    r2 = train(init_model(arch), x, y, cfg)
    assert r1.history[-1] < r1.history[0]
    np.testing.assert_array_equal(r1.model.params, r2.model.params)
    assert r1.best_loss == min(r1.history)


def test_early_stopping_returns_best_epoch():
    x = np.zeros((8, 3))
    y = np.zeros(8)
    # a zero model already fits; loss cannot improve, so it stops after `patience` epochs
    arch = MlpArchitecture(1, 4)
    zero = MlpModel(arch, np.zeros(arch.parameter_count, dtype=np.float32))
    r = train(zero, x, y, TrainConfig(max_epochs=50, patience=3))
    assert r.stopped_early and r.epochs_ran == 4 and r.best_epoch == 1


def test_non_finite_targets_abort():
    with pytest.raises(NonFiniteLoss) as err:
        train(init_model(MlpArchitecture(1, 4)), np.zeros((4, 3)), [0, 0, np.nan, 0], TrainConfig(max_epochs=2))
    assert err.value.epoch == 0 and err.value.batch == 0


def test_progress_sink_receives_tuples():
    seen = []
    train(init_model(MlpArchitecture(1, 4)), np.ones((10, 3)) * 0.1, np.full(10, 0.2),
          TrainConfig(max_epochs=3, patience=10), progress=lambda *t: seen.append(t))
    assert [s[0] for s in seen] == [1, 2, 3]
    assert all(len(s) == 3 and s[2] >= 0 for s in seen)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_output_in_tanh_range(p):
    m = init_model(MlpArchitecture(2, 8), seed=5)
    assert -1 <= forward(m, p)[0] <= 1
