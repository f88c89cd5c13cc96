"""Value network: forward pass, input Jacobian, regularized regression loss.

Architecture: 5 -> 32 -> 32 -> 1, tanh hidden activations, linear output.
Tanh keeps the network twice differentiable everywhere, which the actor's
Gauss-Newton machinery relies on. Inputs are scaled by fixed diagonal
normalization before the first layer; Jacobians reported to callers are
chain-ruled back to physical units.

The training loss is

    L = (1/M) sum_i [ (y_i - V(s_i))^2 + beta * ||dV/ds(s_i)||^2 ] + lambda * ||theta||^2

with targets y treated as constants. The beta term's parameter gradient is a
double backpropagation, handled by the autodiff engine.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

CHECKPOINT_VERSION = 1

DEFAULT_HIDDEN = (32, 32)


def default_input_scale(v_max: float = 1.0, omega_max: float = 1.5) -> np.ndarray:
    return np.array([1.0, 1.0, 1.0 / math.pi, 1.0 / v_max, 1.0 / omega_max])


@dataclass
class CriticParams:
    """Weights/biases of the value network plus the input normalization."""

    weights: list  # list of (out, in) arrays
    biases: list   # list of (out,) arrays
    input_scale: np.ndarray = field(default_factory=default_input_scale)
    # fixed multiplier on the network output: keeps weights O(1) when value
    # magnitudes are large (tanh features are bounded, so without it the
    # head weights would have to grow to the value scale, which the
    # per-parameter step-size cap of adaptive-moment optimizers makes slow)
    output_scale: float = 1.0

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "CriticParams":
        return CriticParams([w.copy() for w in self.weights],
                           [b.copy() for b in self.biases],
                           self.input_scale.copy(), self.output_scale)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def sq_norm(self) -> float:
        return float(sum(np.sum(a * a) for a in self.weights + self.biases))


def init_params(rng: np.random.Generator, n_in: int = 5,
                hidden=DEFAULT_HIDDEN,
                input_scale: np.ndarray | None = None,
                output_scale: float = 1.0) -> CriticParams:
    """Fan-in-scaled uniform init; zero output layer so V == 0 initially."""
    sizes = [n_in, *hidden, 1]
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        fan_in = sizes[i]
        bound = 1.0 / math.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(sizes[i + 1], fan_in))
        b = rng.uniform(-bound, bound, size=sizes[i + 1])
        weights.append(W)
        biases.append(b)
    weights[-1][:] = 0.0
    biases[-1][:] = 0.0
    if input_scale is None:
        input_scale = default_input_scale()
    return CriticParams(weights, biases, np.asarray(input_scale, dtype=float),
                        output_scale)


def value_forward(p: CriticParams, s: np.ndarray) -> float | np.ndarray:
    """V(s) for a single 5-vector or an (M, 5) batch."""
    h = np.asarray(s, dtype=float) * p.input_scale
    for W, b in zip(p.weights[:-1], p.biases[:-1]):
        h = np.tanh(h @ W.T + b)
    out = (h @ p.weights[-1].T + p.biases[-1]) * p.output_scale
    return float(out[0]) if out.ndim == 1 else out[:, 0]


def value_input_jacobian(p: CriticParams, s: np.ndarray) -> np.ndarray:
    """Exact dV/ds in physical units; (5,) for a vector, (M, 5) for a batch."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    x = np.atleast_2d(s) * p.input_scale
    acts = []
    h = x
    for W, b in zip(p.weights[:-1], p.biases[:-1]):
        h = np.tanh(h @ W.T + b)
        acts.append(h)
    g = np.repeat(p.weights[-1], h.shape[0], axis=0)  # (M, n_last)
    for i in range(len(acts) - 1, -1, -1):
        g = g * (1.0 - acts[i] ** 2)
        g = g @ p.weights[i]
    g = g * (p.input_scale * p.output_scale)
    return g[0] if single else g


def value_and_jacobian(p: CriticParams, s: np.ndarray):
    """V(s) and dV/ds in one pass (the actor's hot path)."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    x = np.atleast_2d(s) * p.input_scale
    acts = []
    h = x
    for W, b in zip(p.weights[:-1], p.biases[:-1]):
        h = np.tanh(h @ W.T + b)
        acts.append(h)
    v = (h @ p.weights[-1].T + p.biases[-1]) * p.output_scale
    g = np.repeat(p.weights[-1], h.shape[0], axis=0)
    for i in range(len(acts) - 1, -1, -1):
        g = g * (1.0 - acts[i] ** 2)
        g = g @ p.weights[i]
    g = g * (p.input_scale * p.output_scale)
    if single:
        return float(v[0, 0]), g[0]
    return v[:, 0], g


def loss_and_grad(p: CriticParams, batch_s: np.ndarray, batch_y: np.ndarray,
                  beta: float = 0.0, lam: float = 0.0):
    """Loss value and exact parameter gradients (same shapes as p)."""
    batch_s = np.atleast_2d(np.asarray(batch_s, dtype=float))
    batch_y = np.asarray(batch_y, dtype=float)
    if batch_s.shape[0] == 0:
        raise ValueError("batch must be non-empty")

    tws = [Tensor(W) for W in p.weights]
    tbs = [Tensor(b) for b in p.biases]
    x = Tensor(batch_s * p.input_scale)

    acts = []
    h = x
    for W, b in zip(tws[:-1], tbs[:-1]):
        pre = h @ _transposed(W) + b
        h = pre.tanh()
        acts.append(h)
    v = (h @ _transposed(tws[-1]) + tbs[-1]) * Tensor(p.output_scale)  # (M, 1)

    resid = Tensor(batch_y[:, None]) - v
    loss = resid.square().mean()  # mean over M (output dim is 1)

    # beta may be a scalar or a per-input-dimension vector: the slope noise
    # a greedy planner can exploit differs by coordinate (position slopes
    # are well determined by the data, heading/speed/turn-rate slopes less
    # so), and anisotropic smoothing targets exactly the weak directions.
    beta_vec = np.broadcast_to(np.asarray(beta, dtype=float),
                               (batch_s.shape[1],))
    if np.any(beta_vec != 0.0):
        one = Tensor(1.0)
        g = None
        for i in range(len(acts) - 1, -1, -1):
            d = one - acts[i].square()
            if g is None:
                # output layer weight row broadcast over the batch
                g = d * tws[-1]
            else:
                g = d * (g @ tws[i + 1])
        g = g @ tws[0]
        g = g * Tensor(p.input_scale * p.output_scale)
        loss = loss + (g.square() * Tensor(beta_vec.copy())).sum(axis=1).mean()

    if lam != 0.0:
        reg = None
        for t in tws + tbs:
            term = t.square().sum()
            reg = term if reg is None else reg + term
        loss = loss + Tensor(lam) * reg

    loss.backward()
    if not np.isfinite(loss.value):
        raise FloatingPointError("non-finite critic loss (training divergence)")
    gw = [t.grad if t.grad is not None else np.zeros_like(t.value) for t in tws]
    gb = [t.grad if t.grad is not None else np.zeros_like(t.value) for t in tbs]
    return float(loss.value), CriticParams(gw, gb, p.input_scale.copy(),
                                            p.output_scale)


def _transposed(t: Tensor) -> Tensor:
    def bw(g, a=t):
        if a.grad is None:
            a.grad = g.T.copy()
        else:
            a.grad = a.grad + g.T

    return Tensor(t.value.T, (t,), bw)


def polyak_update(target: CriticParams, p: CriticParams, rho: float) -> CriticParams:
    """target <- (1 - rho) * target + rho * p, element-wise."""
    if len(target.weights) != len(p.weights) or any(
            tw.shape != pw.shape for tw, pw in zip(target.weights, p.weights)):
        raise ValueError("parameter shapes do not match")
    if target.output_scale != p.output_scale:
        raise ValueError("output scales do not match")
    ws = [(1.0 - rho) * tw + rho * pw for tw, pw in zip(target.weights, p.weights)]
    bs = [(1.0 - rho) * tb + rho * pb for tb, pb in zip(target.biases, p.biases)]
    return CriticParams(ws, bs, p.input_scale.copy(), p.output_scale)


class Adam:
    """Adaptive-moment optimizer over CriticParams."""

    def __init__(self, p: CriticParams, lr: float = 1e-3,
                 b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in p.weights + p.biases]
        self.v = [np.zeros_like(a) for a in p.weights + p.biases]

    def step(self, p: CriticParams, grads: CriticParams) -> None:
        self.t += 1
        arrs = p.weights + p.biases
        gs = grads.weights + grads.biases
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for i, (a, g) in enumerate(zip(arrs, gs)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            a -= self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


def save_checkpoint(path, p: CriticParams, meta: dict | None = None) -> None:
    """Versioned structured-text dump: shapes + row-major weights + scaling."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "layer_shapes": [list(w.shape) for w in p.weights],
        "weights": [w.ravel().tolist() for w in p.weights],
        "biases": [b.tolist() for b in p.biases],
        "input_scale": p.input_scale.tolist(),
        "output_scale": p.output_scale,
        "meta": meta or {},
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> tuple[CriticParams, dict]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {doc.get('version')!r}")
    ws = [np.array(w, dtype=float).reshape(shape)
          for w, shape in zip(doc["weights"], doc["layer_shapes"])]
    bs = [np.array(b, dtype=float) for b in doc["biases"]]
    return (CriticParams(ws, bs, np.array(doc["input_scale"], dtype=float),
                         float(doc.get("output_scale", 1.0))),
            doc.get("meta", {}))
