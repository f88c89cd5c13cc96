"""Self-contained correctness checks for the `check` CLI subcommand.

These are fast, seeded re-runs of the key oracles: finite-difference
verification of the critic derivatives, an exhaustive active-set oracle for
the box-QP solver, and the geometry round-trip/wrapping invariants. Each
check returns (name, passed, detail) so the CLI can print one line per check
and exit nonzero on any failure.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .critic import init_params, loss_and_grad, value_forward, value_input_jacobian
from .dynamics import WorldState, wrap_angle
from .frenet import FrenetError, from_frenet, to_frenet
from .qp import QpProblem, kkt_residual, solve_box_qp


def _randomize(params, rng):
    for w in params.weights:
        w[:] = rng.normal(scale=0.5, size=w.shape)
    for b in params.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)


def check_input_jacobian(n: int = 50, seed: int = 0):
    rng = np.random.default_rng(seed)
    p = init_params(rng)
    _randomize(p, rng)
    h = 1e-5
    worst = 0.0
    for _ in range(n):
        s = rng.normal(size=5)
        jac = value_input_jacobian(p, s)
        for i in range(5):
            e = np.zeros(5)
            e[i] = h
            fd = (value_forward(p, s + e) - value_forward(p, s - e)) / (2 * h)
            denom = max(abs(fd), 1e-6)
            worst = max(worst, abs(jac[i] - fd) / denom)
    ok = worst < 1e-4
    return "critic input Jacobian vs finite differences", ok, f"worst rel err {worst:.2e}"


def check_loss_gradient(seed: int = 1):
    rng = np.random.default_rng(seed)
    p = init_params(rng)
    _randomize(p, rng)
    ss = rng.normal(size=(8, 5))
    ys = rng.normal(size=8)
    _, grads = loss_and_grad(p, ss, ys, beta=1e-3, lam=1e-5)
    h = 1e-6
    n_checked = n_bad = 0
    arrs = p.weights + p.biases
    garrs = grads.weights + grads.biases
    for a, g in zip(arrs, garrs):
        flat_a = a.ravel()
        flat_g = g.ravel()
        idx = rng.choice(flat_a.size, size=min(20, flat_a.size), replace=False)
        for i in idx:
            old = flat_a[i]
            flat_a[i] = old + h
            lp, _ = loss_and_grad(p, ss, ys, beta=1e-3, lam=1e-5)
            flat_a[i] = old - h
            lm, _ = loss_and_grad(p, ss, ys, beta=1e-3, lam=1e-5)
            flat_a[i] = old
            fd = (lp - lm) / (2 * h)
            rel = abs(flat_g[i] - fd) / max(abs(fd), 1e-6)
            n_checked += 1
            n_bad += rel > 1e-4
    ok = n_bad <= max(1, n_checked // 100)
    return ("critic loss gradient vs finite differences", ok,
            f"{n_bad}/{n_checked} coords off")


def exhaustive_box_qp_small(p: QpProblem) -> np.ndarray:
    """Brute-force optimum over all active-set patterns (small d only)."""
    d = p.dim
    best_x, best_f = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=d):
        x = np.empty(d)
        free = [i for i, s in enumerate(pattern) if s == 0]
        for i, s in enumerate(pattern):
            if s == -1:
                x[i] = p.lb[i]
            elif s == 1:
                x[i] = p.ub[i]
        if free:
            fixed = [i for i in range(d) if i not in free]
            rhs = -p.g[free]
            if fixed:
                rhs = rhs - p.H[np.ix_(free, fixed)] @ x[fixed]
            x[free] = np.linalg.solve(p.H[np.ix_(free, free)], rhs)
            if np.any(x[free] < p.lb[free] - 1e-12) or \
               np.any(x[free] > p.ub[free] + 1e-12):
                continue
        f = 0.5 * x @ p.H @ x + p.g @ x
        if f < best_f:
            best_f, best_x = f, x
    return best_x


def check_qp(n: int = 40, d: int = 5, seed: int = 2):
    rng = np.random.default_rng(seed)
    worst_gap = worst_kkt = 0.0
    for _ in range(n):
        a = rng.normal(size=(d, d))
        H = a @ a.T + d * np.eye(d)
        g = rng.normal(size=d)
        lb = rng.uniform(-1.0, 0.0, size=d)
        ub = rng.uniform(0.0, 1.0, size=d)
        p = QpProblem((H + H.T) / 2, g, lb, ub)
        sol = solve_box_qp(p)
        if sol.status != "optimal":
            return "box-QP vs exhaustive oracle", False, f"status {sol.status}"
        ref = exhaustive_box_qp_small(p)
        worst_gap = max(worst_gap, float(np.max(np.abs(sol.x - ref))))
        worst_kkt = max(worst_kkt, kkt_residual(p, sol.x))
    ok = worst_gap < 1e-8 and worst_kkt < 1e-8
    return ("box-QP vs exhaustive oracle", ok,
            f"max gap {worst_gap:.2e}, max KKT residual {worst_kkt:.2e}")


def check_frenet_roundtrip(n: int = 2000, seed: int = 3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        s = WorldState(*rng.uniform(-3, 3, size=2), rng.uniform(-np.pi, np.pi),
                       rng.uniform(0, 1), rng.uniform(-1.5, 1.5))
        ref = (rng.uniform(-3, 3), rng.uniform(-3, 3),
               rng.uniform(-np.pi, np.pi))
        e = to_frenet(s, ref, l=0.2)
        s2 = from_frenet(e, ref, l=0.2)
        worst = max(worst, abs(s2.x - s.x), abs(s2.y - s.y),
                    abs(wrap_angle(s2.psi - s.psi)),
                    abs(s2.v - s.v), abs(s2.omega - s.omega))
    ok = worst < 1e-12
    return "Frenet transform round-trip", ok, f"worst err {worst:.2e}"


def check_wrap(n: int = 200_000, seed: int = 4):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-50, 50, size=n)
    w = np.array([wrap_angle(x) for x in a])
    in_range = np.all((w > -math.pi) & (w <= math.pi))
    same = np.max(np.abs(np.sin(w - a))) < 1e-9
    ok = bool(in_range and same)
    return "angle wrapping invariant", ok, (
        f"range ok: {in_range}, congruence ok: {same}")


ALL_CHECKS = (check_input_jacobian, check_loss_gradient, check_qp,
              check_frenet_roundtrip, check_wrap)


def run_checks(verbose_print=None) -> bool:
    all_ok = True
    for fn in ALL_CHECKS:
        name, ok, detail = fn()
        all_ok &= ok
        if verbose_print is not None:
            verbose_print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
