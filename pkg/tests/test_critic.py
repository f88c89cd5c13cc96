import numpy as np
import pytest

from vgmpc.critic import (
    Adam,
    CriticParams,
    init_params,
    load_checkpoint,
    loss_and_grad,
    polyak_update,
    save_checkpoint,
    value_and_jacobian,
    value_forward,
    value_input_jacobian,
)


def random_params(rng, nonzero_head=True):
    p = init_params(rng)
    if nonzero_head:
        p.weights[-1][:] = rng.normal(scale=0.5, size=p.weights[-1].shape)
        p.biases[-1][:] = rng.normal(scale=0.1, size=p.biases[-1].shape)
    return p


def test_zero_output_layer_gives_zero_value():
    rng = np.random.default_rng(0)
    p = init_params(rng)
    s = rng.uniform(-1, 1, (100, 5))
    assert np.all(value_forward(p, s) == 0.0)
    assert np.all(value_input_jacobian(p, s) == 0.0)


def test_forward_deterministic():
    s = np.array([0.1, -0.2, 0.3, 0.5, -0.1])
    a = value_forward(random_params(np.random.default_rng(42)), s)
    b = value_forward(random_params(np.random.default_rng(42)), s)
    assert a == b


def test_manual_single_hidden_unit_oracle():
    # V = w3 * tanh(w1 . (c*s) + b1) + b3, hand-computed
    w1 = np.array([[0.3, -0.2, 0.1, 0.4, -0.5]])
    b1 = np.array([0.05])
    w3 = np.array([[1.7]])
    b3 = np.array([-0.2])
    scale = np.array([1.0, 1.0, 0.5, 2.0, 0.25])
    p = CriticParams([w1, w3], [b1, b3], scale)
    s = np.array([0.2, -0.1, 0.4, 0.3, -0.6])
    pre = float(w1 @ (scale * s)) + 0.05
    expect = 1.7 * np.tanh(pre) - 0.2
    assert value_forward(p, s) == pytest.approx(expect, abs=1e-12)
    # jacobian oracle
    expect_j = 1.7 * (1 - np.tanh(pre) ** 2) * w1[0] * scale
    np.testing.assert_allclose(value_input_jacobian(p, s), expect_j, atol=1e-12)


def test_linear_network_jacobian_is_weight_vector():
    w = np.array([[0.3, -0.4, 0.2, 0.9, -1.1]])
    # identity "hidden" comes from a linear head on raw inputs: single layer
    p = CriticParams([w], [np.array([0.0])], np.ones(5))
    np.testing.assert_allclose(value_input_jacobian(p, np.zeros(5)), w[0], atol=1e-15)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(1)
    p = random_params(rng)
    ok = 0
    total = 0
    for _ in range(20):
        s = rng.uniform(-1, 1, 5)
        J = value_input_jacobian(p, s)
        for i in range(5):
            d = np.zeros(5)
            d[i] = 1e-5
            fd = (value_forward(p, s + d) - value_forward(p, s - d)) / 2e-5
            total += 1
            if abs(fd - J[i]) <= 1e-4 * max(1.0, abs(fd)):
                ok += 1
    assert ok / total >= 0.99


def test_value_and_jacobian_consistent():
    rng = np.random.default_rng(2)
    p = random_params(rng)
    s = rng.uniform(-1, 1, (7, 5))
    v, g = value_and_jacobian(p, s)
    np.testing.assert_allclose(v, value_forward(p, s), atol=1e-14)
    np.testing.assert_allclose(g, value_input_jacobian(p, s), atol=1e-14)


def test_loss_zero_on_perfect_fit():
    rng = np.random.default_rng(3)
    p = random_params(rng)
    s = rng.uniform(-1, 1, (16, 5))
    y = value_forward(p, s)
    loss, g = loss_and_grad(p, s, y, beta=0.0, lam=0.0)
    assert loss == pytest.approx(0.0, abs=1e-20)
    for arr in g.weights + g.biases:
        np.testing.assert_allclose(arr, 0.0, atol=1e-12)


def test_weight_decay_only():
    rng = np.random.default_rng(4)
    p = random_params(rng)
    s = rng.uniform(-1, 1, (8, 5))
    y = value_forward(p, s)
    lam = 0.01
    loss, g = loss_and_grad(p, s, y, beta=0.0, lam=lam)
    assert loss == pytest.approx(lam * p.sq_norm(), rel=1e-12)
    for arr, parr in zip(g.weights + g.biases, p.weights + p.biases):
        np.testing.assert_allclose(arr, 2 * lam * parr, atol=1e-12)


def test_full_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    p = random_params(rng)
    s = rng.uniform(-1, 1, (8, 5))
    y = rng.normal(size=8)
    beta, lam = 1e-2, 1e-4
    _, g = loss_and_grad(p, s, y, beta=beta, lam=lam)
    eps = 1e-6
    ok = total = 0
    for li in range(p.n_layers):
        for arr, garr in ((p.weights[li], g.weights[li]), (p.biases[li], g.biases[li])):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = arr[idx]
                arr[idx] = old + eps
                lp, _ = loss_and_grad(p, s, y, beta=beta, lam=lam)
                arr[idx] = old - eps
                lm, _ = loss_and_grad(p, s, y, beta=beta, lam=lam)
                arr[idx] = old
                fd = (lp - lm) / (2 * eps)
                total += 1
                if abs(fd - garr[idx]) <= 1e-4 * max(1.0, abs(fd)):
                    ok += 1
    assert ok / total >= 0.99


def test_nonfinite_loss_raises():
    rng = np.random.default_rng(6)
    p = random_params(rng)
    with pytest.raises(FloatingPointError):
        loss_and_grad(p, np.zeros((2, 5)), np.array([np.inf, 0.0]))


def test_polyak_endpoints_and_formula():
    rng = np.random.default_rng(7)
    p = random_params(rng)
    t0 = init_params(np.random.default_rng(8))
    t1 = polyak_update(t0, p, rho=1.0)
    for a, b in zip(t1.weights, p.weights):
        np.testing.assert_array_equal(a, b)
    t2 = polyak_update(t0, p, rho=0.0)
    for a, b in zip(t2.weights, t0.weights):
        np.testing.assert_array_equal(a, b)
    zeros = CriticParams([np.zeros_like(w) for w in p.weights],
                         [np.zeros_like(b) for b in p.biases], p.input_scale)
    ones = CriticParams([np.ones_like(w) for w in p.weights],
                        [np.ones_like(b) for b in p.biases], p.input_scale)
    t3 = polyak_update(zeros, ones, rho=0.1)
    for a in t3.weights + t3.biases:
        np.testing.assert_allclose(a, 0.1, atol=1e-15)


def test_polyak_shape_mismatch_rejected():
    rng = np.random.default_rng(9)
    p = random_params(rng)
    small = init_params(rng, hidden=(4,))
    with pytest.raises(ValueError):
        polyak_update(small, p, 0.5)


def test_adam_regression_to_constant():
    rng = np.random.default_rng(10)
    p = random_params(rng)
    s = np.array([[0.2, -0.1, 0.3, 0.5, -0.2]])
    y = np.array([1.234])
    opt = Adam(p, lr=1e-2)
    for _ in range(2000):
        _, g = loss_and_grad(p, s, y)
        opt.step(p, g)
    assert value_forward(p, s[0]) == pytest.approx(1.234, abs=1e-3)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    p = random_params(rng)
    path = tmp_path / "ck.json"
    save_checkpoint(path, p, meta={"reward_mode": "dense"})
    q, meta = load_checkpoint(path)
    assert meta["reward_mode"] == "dense"
    s = rng.uniform(-1, 1, (10, 5))
    np.testing.assert_array_equal(value_forward(p, s), value_forward(q, s))
