import numpy as np

from vgmpc.autodiff import Tensor


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def test_chain_matmul_tanh_square():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(4, 3))
    x = rng.normal(size=3)

    def f_np(Wv):
        return np.sum(np.tanh(Wv @ x) ** 2)

    tW = Tensor(W)
    out = ((tW @ Tensor(x)).tanh()).square().sum()
    out.backward()
    np.testing.assert_allclose(tW.grad, numeric_grad(f_np, W), atol=1e-7)


def test_broadcast_add_and_mul():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(5, 3))
    b = rng.normal(size=3)

    def f_np(bv):
        return np.mean((A + bv) * (A + bv))

    tb = Tensor(b)
    tA = Tensor(A)
    s = tA + tb
    out = (s * s).mean()
    out.backward()
    np.testing.assert_allclose(tb.grad, numeric_grad(f_np, b), atol=1e-7)


def test_reused_node_accumulates():
    x = Tensor(np.array(3.0))
    y = x * x + x  # dy/dx = 2x + 1 = 7
    y.backward()
    assert np.allclose(x.grad, 7.0)


def test_second_order_style_composition():
    # gradient of || d/dx tanh(w x) ||^2 wrt w, built from the analytic
    # jacobian expression (the double-backprop pattern the critic loss uses)
    rng = np.random.default_rng(2)
    w = rng.normal(size=(4,))
    x = rng.normal(size=(4,))

    def f_np(wv):
        t = np.tanh(wv @ x)
        jac = (1 - t ** 2) * wv  # d(tanh(w.x))/dx
        return np.sum(jac ** 2)

    tw = Tensor(w)
    t = (tw @ Tensor(x)).tanh()
    one = Tensor(np.array(1.0))
    d = one - t.square()
    jac = d * tw
    out = jac.square().sum()
    out.backward()
    np.testing.assert_allclose(tw.grad, numeric_grad(f_np, w), atol=1e-7)


def test_matmul_1d_2d_cases():
    rng = np.random.default_rng(3)
    a = rng.normal(size=4)
    B = rng.normal(size=(4, 2))

    def f_np(av):
        return np.sum((av @ B) ** 2)

    ta = Tensor(a)
    out = (ta @ Tensor(B)).square().sum()
    out.backward()
    np.testing.assert_allclose(ta.grad, numeric_grad(f_np, a), atol=1e-7)
