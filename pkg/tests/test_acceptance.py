"""Acceptance gate: one test (one pass/fail line under ``pytest -v``) per
release criterion, at pinned tolerances.

Criteria 4-7 need trained critics; those are trained once into
``out/acceptance/train/`` and reused on later runs (delete the directory to
force retraining). Every test also prints a ``[PASS]/[FAIL] criterion N``
line with the measured numbers; pytest shows it with ``-rA`` or on failure.
"""

import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from qp_oracle import exhaustive_box_qp, random_pd_problem
from vgmpc.actor import MpcActor, MpcConfig
from vgmpc.config import ExperimentConfig
from vgmpc.critic import (init_params, load_checkpoint, loss_and_grad,
                          value_forward, value_input_jacobian)
from vgmpc.dynamics import WorldState, wrap_angle
from vgmpc.env import EnvConfig, PlantConfig, TrackingEnv, default_initial_state
from vgmpc.experiments import (evaluate_episode, run_mismatch_sweep,
                               run_training_experiment, train_checkpoint_path)
from vgmpc.frenet import from_frenet, to_frenet
from vgmpc.qp import QpProblem, kkt_residual, solve_box_qp
from vgmpc.reference import make_track, project_to_reference, reference_at
from vgmpc.rewards import RewardConfig
from vgmpc.training import plateau_iteration, run_training

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "out", "acceptance")
SEEDS = (0, 1, 2)
TAU_TRAIN = 0.6


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")


# ---------------------------------------------------------------- trained
# artifacts (criteria 4-7). Training is the expensive part; it runs at most
# once per reward mode and seed, cached on disk.

def _experiment_config(reward_mode: str) -> ExperimentConfig:
    return ExperimentConfig(
        env=EnvConfig(plant=PlantConfig(tau=TAU_TRAIN),
                      reward=RewardConfig(mode=reward_mode)),
        output_dir=OUT_DIR, seeds=SEEDS)


@pytest.fixture(scope="session")
def trained(request):
    """{'dense'|'sparse': {seed: params}}, plus training wall time in s."""
    t0 = time.perf_counter()
    critics = {}
    for mode in ("dense", "sparse"):
        cfg = _experiment_config(mode)
        critics[mode] = {s: run_training_experiment(cfg, seed=s)[0]
                         for s in SEEDS}
    return critics, time.perf_counter() - t0


# ------------------------------------------------------------ criterion 1

def test_criterion_1_derivative_suite():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    n_checked = n_bad = 0
    # input Jacobian: 400 states x 5 coords = 2000 coordinates
    p = init_params(rng)
    for w in p.weights:
        w[:] = rng.normal(scale=0.5, size=w.shape)
    for b in p.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    h = 1e-5
    for _ in range(400):
        s = rng.normal(size=5)
        jac = value_input_jacobian(p, s)
        for i in range(5):
            e = np.zeros(5)
            e[i] = h
            fd = (value_forward(p, s + e) - value_forward(p, s - e)) / (2 * h)
            n_checked += 1
            n_bad += abs(jac[i] - fd) / max(abs(fd), 1e-6) > 1e-4
    # loss gradient (beta and lambda terms on): sweep every parameter
    # coordinate over several draws until >= 10,000 total coordinates
    h = 1e-6
    while n_checked < 10_000:
        p = init_params(rng)
        for w in p.weights:
            w[:] = rng.normal(scale=0.5, size=w.shape)
        for b in p.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        ss = rng.normal(size=(8, 5))
        ys = rng.normal(size=8)
        _, grads = loss_and_grad(p, ss, ys, beta=1e-3, lam=1e-5)
        for a, g in zip(p.weights + p.biases, grads.weights + grads.biases):
            fa, fg = a.ravel(), g.ravel()
            for i in range(fa.size):
                old = fa[i]
                fa[i] = old + h
                lp, _ = loss_and_grad(p, ss, ys, beta=1e-3, lam=1e-5)
                fa[i] = old - h
                lm, _ = loss_and_grad(p, ss, ys, beta=1e-3, lam=1e-5)
                fa[i] = old
                fd = (lp - lm) / (2 * h)
                n_checked += 1
                n_bad += abs(fg[i] - fd) / max(abs(fd), 1e-6) > 1e-4
    dt = time.perf_counter() - t0
    ok = n_bad <= 0.01 * n_checked and dt < 30.0
    _report(1, ok, f"{n_bad}/{n_checked} coords beyond 1e-4, {dt:.1f}s")
    assert ok


# ------------------------------------------------------------ criterion 2

def test_criterion_2_qp_oracle():
    rng = np.random.default_rng(22)
    t0 = time.perf_counter()
    worst_gap = worst_kkt = 0.0
    for k in range(500):
        d = int(rng.integers(1, 13))
        H, g, lb, ub = random_pd_problem(rng, d)
        prob = QpProblem(H, g, lb, ub)
        sol = solve_box_qp(prob)
        assert sol.status == "optimal", f"problem {k}: status {sol.status}"
        ref, _ = exhaustive_box_qp(H, g, lb, ub)
        worst_gap = max(worst_gap, float(np.max(np.abs(sol.x - ref))))
        worst_kkt = max(worst_kkt, kkt_residual(prob, sol.x))
    dt = time.perf_counter() - t0
    ok = worst_gap < 1e-8 and worst_kkt < 1e-8 and dt < 60.0
    _report(2, ok, f"max gap {worst_gap:.1e}, max KKT {worst_kkt:.1e}, "
                   f"{dt:.1f}s over 500 problems")
    assert ok


# ------------------------------------------------------------ criterion 3

def _brute_force_min_distance(ref, px, py):
    """Golden-section search on every polyline segment, global minimum.

    Independent of the implementation's closed-form per-segment projection;
    returns the closest distance from (px, py) to the polyline.
    """
    ax, ay = ref.x[:-1], ref.y[:-1]
    dx, dy = ref.x[1:] - ax, ref.y[1:] - ay

    def f(s):
        return (ax + s * dx - px) ** 2 + (ay + s * dy - py) ** 2

    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a = np.zeros_like(ax)
    b = np.ones_like(ax)
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(70):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - phi * (b - a)
        d_new = a + phi * (b - a)
        fc, fd = f(c_new), f(d_new)
        c, d = c_new, d_new
    best = np.minimum.reduce([f(a), f(b), f(np.zeros_like(a)),
                              f(np.ones_like(a))])
    return math.sqrt(float(np.min(best)))


def test_criterion_3_geometry_suite():
    rng = np.random.default_rng(33)
    # transform round-trip
    worst_rt = 0.0
    for _ in range(2000):
        s = WorldState(*rng.uniform(-3, 3, size=2),
                       rng.uniform(-np.pi, np.pi),
                       rng.uniform(0, 1), rng.uniform(-1.5, 1.5))
        pose = (rng.uniform(-3, 3), rng.uniform(-3, 3),
                rng.uniform(-np.pi, np.pi))
        e = to_frenet(s, pose, l=0.2)
        s2 = from_frenet(e, pose, l=0.2)
        worst_rt = max(worst_rt, abs(s2.x - s.x), abs(s2.y - s.y),
                       abs(wrap_angle(s2.psi - s.psi)),
                       abs(s2.v - s.v), abs(s2.omega - s.omega))
    # projection vs golden-section brute force (distance, not parameter:
    # near-circular arcs make t ill-conditioned where the point is near
    # the arc center)
    ref = make_track("curve")
    worst_proj = 0.0
    for _ in range(200):
        px, py = rng.uniform(-1, 4, size=2)
        s_fast = project_to_reference(ref, px, py)
        xf = float(np.interp(s_fast, ref.arc, ref.x))
        yf = float(np.interp(s_fast, ref.arc, ref.y))
        df = math.hypot(xf - px, yf - py)
        d_true = _brute_force_min_distance(ref, px, py)
        worst_proj = max(worst_proj, abs(df - d_true))
    # wrapping invariant on 1e6 states
    a = rng.uniform(-60, 60, size=1_000_000)
    w = np.vectorize(wrap_angle)(a)
    wrap_ok = bool(np.all((w > -math.pi) & (w <= math.pi))
                   and np.max(np.abs(np.sin(w - a))) < 1e-9)
    ok = worst_rt < 1e-12 and worst_proj < 1e-9 and wrap_ok
    _report(3, ok, f"round-trip {worst_rt:.1e}, projection gap "
                   f"{worst_proj:.1e}, wrap on 1e6 states: {wrap_ok}")
    assert ok


# ------------------------------------------------------------ criterion 4

def test_criterion_4_mismatch_ordering(trained):
    critics, train_wall = trained
    cfg = _experiment_config("dense")
    t0 = time.perf_counter()
    summaries = run_mismatch_sweep(cfg, critics=dict(critics["dense"]))
    wall = train_wall + (time.perf_counter() - t0)

    def reward(controller, tau, seed=0):
        for s in summaries:
            if (s.controller == controller and s.tau == tau
                    and s.seed == seed):
                return s.cumulative_reward
        raise KeyError((controller, tau, seed))

    ordering_ok = all(
        reward(m, 0.8, s) > reward("naive", 0.8, s)
        for m in ("dmpc", "tdmpc") for s in SEEDS)
    # one-sided 20% band: small mismatch must not hurt the lag-blind
    # baselines relative to their tau=0.6 performance
    baseline_ok = all(
        reward(m, 0.2) >= reward(m, 0.6) - 0.2 * abs(reward(m, 0.6))
        for m in ("naive", "expert"))
    budget_ok = wall < 1800.0
    ok = ordering_ok and baseline_ok and budget_ok
    worst = {m: min(reward(m, 0.8, s) - reward("naive", 0.8, s)
                    for s in SEEDS) for m in ("dmpc", "tdmpc")}
    _report(4, ok, "tau=0.8 margin over naive (worst seed): "
                   f"dmpc {worst['dmpc']:+.2f}, tdmpc {worst['tdmpc']:+.2f}; "
                   f"baselines within band: {baseline_ok}; "
                   f"train+sweep {wall:.0f}s")
    assert ok


# ------------------------------------------------------------ criterion 5

def _curve_rewards(mode, seed):
    path = os.path.join(OUT_DIR, "train", f"curve_{mode}_seed{seed}.csv")
    rows = np.genfromtxt(path, delimiter=",", names=True)
    return rows["avg_episode_reward"]


def test_criterion_5_training_convergence(trained):
    dense_p, sparse_p = {}, {}
    for seed in SEEDS:
        dense_p[seed] = plateau_iteration(_curve_rewards("dense", seed))
        sparse_p[seed] = plateau_iteration(_curve_rewards("sparse", seed))
    dense_ok = all(p is not None and p <= 20_000 for p in dense_p.values())
    later_ok = all(sparse_p[s] is None or sparse_p[s] > dense_p[s]
                   for s in SEEDS if dense_p[s] is not None)
    sparse_settles = all(p is not None for p in sparse_p.values())
    ok = dense_ok and later_ok and sparse_settles
    _report(5, ok, f"dense plateau iters {dense_p}, sparse {sparse_p}")
    assert ok


# ------------------------------------------------------------ criterion 6

def test_criterion_6_sparse_tracking(trained):
    critics, _ = trained
    ref = make_track("curve")
    env_cfg = EnvConfig(plant=PlantConfig(tau=TAU_TRAIN))
    fracs = {}
    for seed in SEEDS:
        env, _, info = evaluate_episode(
            "dmpc", ref, env_cfg, _experiment_config("dense").mpc,
            critic=critics["sparse"][seed])
        in_band = total = 0.0
        prev = 0.0
        for row in env.log_rows:
            cols = row.split(",")
            x_err, y_err = float(cols[6]), float(cols[7])
            prog = float(cols[10])
            step = prog - prev
            prev = prog
            total += step
            if abs(x_err) <= 0.1 and abs(y_err) <= 0.1:
                in_band += step
        fracs[seed] = in_band / max(total, 1e-9)
    ok = all(f >= 0.8 for f in fracs.values())
    _report(6, ok, "progress fraction within 0.1 m band: "
                   + ", ".join(f"seed{s} {f:.2f}" for s, f in fracs.items()))
    assert ok


# ------------------------------------------------------------ criterion 7

def test_criterion_7_sparse_standstill(trained):
    critics, _ = trained
    # value-gradient flatness at 0.5 m lateral error
    ratios = []
    for seed in SEEDS:
        p = critics["sparse"][seed]
        g_far = g_near = 0.0
        for v in (0.25, 0.5, 0.75):
            for y, acc in ((0.5, "far"), (0.05, "near")):
                jac = value_input_jacobian(p, np.array([0.0, y, 0.0, v, 0.0]))
                if acc == "far":
                    g_far += abs(jac[1])
                else:
                    g_near += abs(jac[1])
        ratios.append(g_far / max(g_near, 1e-12))
    flat_ok = all(r < 0.10 for r in ratios)
    # closed loop: 0.5 m offset on the straight track
    ref = make_track("straight")
    env_cfg = EnvConfig(plant=PlantConfig(tau=TAU_TRAIN))
    mpc = _experiment_config("dense").mpc
    stand_ok = True
    progress = {}
    for seed in SEEDS:
        _, _, dense_info = evaluate_episode(
            "dmpc", ref, env_cfg, mpc, critic=critics["dense"][seed],
            lateral_offset=0.5)
        _, _, sparse_info = evaluate_episode(
            "dmpc", ref, env_cfg, mpc, critic=critics["sparse"][seed],
            lateral_offset=0.5)
        progress[seed] = (sparse_info["final_progress"],
                          dense_info["final_progress"])
        stand_ok &= (sparse_info["final_progress"]
                     < 0.1 * dense_info["final_progress"])
    ok = flat_ok and stand_ok
    _report(7, ok, "grad ratio at 0.5m/0.05m: "
                   + ", ".join(f"{r:.3f}" for r in ratios)
                   + "; progress sparse vs dense: "
                   + ", ".join(f"seed{s} {a:.2f}/{b:.2f}"
                               for s, (a, b) in progress.items()))
    assert ok


# ------------------------------------------------------------ criterion 8

def test_criterion_8_control_step_budget(trained):
    critics, _ = trained
    ref = make_track("curve")
    env_cfg = EnvConfig(plant=PlantConfig(tau=0.8))
    env_cfg = replace(env_cfg, max_steps=200)
    env = TrackingEnv(env_cfg, ref, default_initial_state(env_cfg, ref))
    # pinned solver setting: one real-time iteration per control step
    actor = MpcActor(replace(_experiment_config("dense").mpc, mode="dmpc",
                             sqp_iters=1),
                     ref, critic=critics["dense"][0])
    times = []
    while not env.done and not actor.aborted:
        t0 = time.perf_counter()
        cmd, _, _ = actor.control_step(env.state, env.t)
        times.append((time.perf_counter() - t0) * 1e3)
        env.step(*cmd)
    med = float(np.median(times))
    ok = med < 10.0 and len(times) >= 100
    _report(8, ok, f"median control_step {med:.2f} ms over {len(times)} steps")
    assert ok


# ------------------------------------------------------------ criterion 9

def _train_once(out_dir):
    cfg = replace(_experiment_config("dense"), output_dir=out_dir,
                  total_steps=1200)
    params, ckpt = run_training_experiment(cfg, seed=0, force=True)
    curve = os.path.join(out_dir, "train", "curve_dense_seed0.csv")
    return params, open(ckpt, "rb").read(), open(curve, "rb").read()


def _sweep_once(out_dir, params):
    cfg = replace(_experiment_config("dense"), output_dir=out_dir,
                  tau_list=(0.6,), seeds=(0,))
    summaries = run_mismatch_sweep(cfg, critics={0: params})
    blobs = {}
    for s in summaries:
        for rel in (s.csv, s.csv.replace(".csv", "_planner.csv")):
            blobs[rel] = open(os.path.join(out_dir, rel), "rb").read()
    return blobs


def test_criterion_9_determinism(tmp_path):
    p1, ck1, cu1 = _train_once(str(tmp_path / "a"))
    p2, ck2, cu2 = _train_once(str(tmp_path / "b"))
    train_ok = ck1 == ck2 and cu1 == cu2
    s1 = _sweep_once(str(tmp_path / "a"), p1)
    s2 = _sweep_once(str(tmp_path / "b"), p2)
    sweep_ok = list(s1) == list(s2) and all(s1[k] == s2[k] for k in s1)
    ok = train_ok and sweep_ok
    _report(9, ok, f"train bytes identical: {train_ok}, "
                   f"sweep bytes identical over {len(s1)} files: {sweep_ok}")
    assert ok
