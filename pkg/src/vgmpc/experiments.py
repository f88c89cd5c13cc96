"""Experiment drivers: training runs, the model-mismatch sweep, benchmarks.

Each experiment writes episode CSVs named
``<experiment>/<controller>_<track>_tau<tau>_seed<k>.csv`` (with a matching
``*_planner.csv`` per-step solver log) plus a ``run.json`` manifest listing
every file produced. Wall-clock and solve-time columns are written as 0.0
unless ``record_timing`` is set, so repeat runs are byte-identical.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace

from . import __version__
from .actor import MODES, MpcActor, MpcConfig
from .config import ExperimentConfig
from .critic import CriticParams, load_checkpoint
from .env import EnvConfig, TrackingEnv, default_initial_state
from .reference import Reference, make_track
from .training import run_training

PLANNER_CSV_HEADER = ("t,mode,sqp_iters_done,qp_status,qp_iters,"
                      "objective,solve_time_ms,fault_count")


@dataclass(frozen=True)
class EpisodeSummary:
    controller: str
    track: str
    tau: float
    seed: int
    cumulative_reward: float
    final_progress: float
    max_abs_y_err: float
    steps: int
    aborted: bool
    csv: str


def evaluate_episode(mode: str, ref: Reference, env_cfg: EnvConfig,
                     mpc_cfg: MpcConfig, critic: CriticParams | None = None,
                     lateral_offset: float = 0.0,
                     record_timing: bool = False):
    """Run one controller for one episode; returns (env, planner_rows, info).

    The episode is sized to the reference duration; it ends early only on a
    tracking abort or a persistent solver fault.
    """
    steps = max(1, math.ceil(ref.duration / env_cfg.control_dt))
    env_cfg = replace(env_cfg, max_steps=steps)
    env = TrackingEnv(env_cfg, ref,
                      default_initial_state(env_cfg, ref, lateral_offset))
    actor = MpcActor(replace(mpc_cfg, mode=mode), ref, critic=critic)
    planner_rows = [PLANNER_CSV_HEADER]
    total = 0.0
    info = {"aborted": False, "progress": 0.0}
    while not env.done and not actor.aborted:
        t = env.t
        cmd, _, diag = actor.control_step(env.state, t)
        _, r, _, info = env.step(*cmd)
        total += r
        ms = diag.solve_time_ms if record_timing else 0.0
        planner_rows.append(
            f"{t!r},{mode},{diag.sqp_iters_done},{diag.qp_status},"
            f"{diag.qp_iters},{diag.objective!r},{ms!r},{diag.fault_count}")
    return env, planner_rows, {
        "cumulative_reward": total,
        "final_progress": info["progress"],
        "aborted": info["aborted"] or actor.aborted,
        "steps": env.steps,
    }


def _max_abs_y_err(env: TrackingEnv) -> float:
    col = EPISODE_Y_ERR_COLUMN
    worst = 0.0
    for row in env.log_rows:
        worst = max(worst, abs(float(row.split(",")[col])))
    return worst


EPISODE_Y_ERR_COLUMN = 7  # index of y_err in the episode CSV schema


def _fmt_tau(tau: float) -> str:
    return f"{tau:g}"


def _run_cell(out_dir: str, experiment: str, controller: str, track: str,
              tau: float, seed: int, ref: Reference, env_cfg: EnvConfig,
              mpc_cfg: MpcConfig, critic, lateral_offset: float,
              record_timing: bool, label: str | None = None) -> EpisodeSummary:
    env_cfg = replace(env_cfg,
                      plant=replace(env_cfg.plant, tau=tau))
    env, planner_rows, info = evaluate_episode(
        controller, ref, env_cfg, mpc_cfg, critic,
        lateral_offset=lateral_offset, record_timing=record_timing)
    label = label or controller
    stem = f"{label}_{track}_tau{_fmt_tau(tau)}_seed{seed}"
    rel = os.path.join(experiment, stem + ".csv")
    env.write_log(os.path.join(out_dir, rel))
    with open(os.path.join(out_dir, experiment, stem + "_planner.csv"),
              "w") as f:
        f.write("\n".join(planner_rows) + "\n")
    return EpisodeSummary(
        controller=label, track=track, tau=tau, seed=seed,
        cumulative_reward=info["cumulative_reward"],
        final_progress=info["final_progress"],
        max_abs_y_err=_max_abs_y_err(env),
        steps=info["steps"], aborted=info["aborted"], csv=rel)


def write_manifest(out_dir: str, experiment: str, cfg: ExperimentConfig,
                   summaries: list, extra_files: list | None = None,
                   wall_clock_s: float = 0.0) -> str:
    """Atomic run.json: config snapshot, summaries, every file produced."""
    doc = {
        "experiment": experiment,
        "code_version": __version__,
        "config": asdict(cfg),
        "seeds": list(cfg.seeds),
        "wall_clock_s": wall_clock_s,
        "episodes": [asdict(s) for s in summaries],
        "files": sorted({s.csv for s in summaries}
                        | {s.csv.replace(".csv", "_planner.csv")
                           for s in summaries}
                        | set(extra_files or [])),
    }
    path = os.path.join(out_dir, experiment, "run.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
    os.replace(tmp, path)
    return path


def train_checkpoint_path(out_dir: str, reward_mode: str, seed: int) -> str:
    return os.path.join(out_dir, "train",
                        f"critic_{reward_mode}_seed{seed}.json")


def run_training_experiment(cfg: ExperimentConfig, seed: int | None = None,
                            force: bool = False):
    """Train one critic (reward mode from cfg.env); reuses an existing
    checkpoint for the same (mode, seed) unless force is set.

    Returns (params, checkpoint_path).
    """
    seed = cfg.train.seed if seed is None else seed
    mode = cfg.env.reward.mode
    out = cfg.output_dir
    os.makedirs(os.path.join(out, "train"), exist_ok=True)
    ckpt = train_checkpoint_path(out, mode, seed)
    if os.path.isfile(ckpt) and not force:
        params, _ = load_checkpoint(ckpt)
        return params, ckpt
    t0 = time.perf_counter()
    ref = make_track(cfg.train_track, dt=cfg.env.plant.dt)
    curve = os.path.join(out, "train",
                         f"curve_{mode}_seed{seed}.csv")
    train_cfg = replace(cfg.train, seed=seed)
    train_mpc = replace(cfg.train_mpc, mode="tdmpc")
    init_offset, init_heading = cfg.init_offset, cfg.init_heading
    if mode == "sparse":
        # Sparse reward protocol: the -0.5 out-of-band penalty carries no
        # gradient, so episodes must start inside the reward band and the
        # behavior policy must be strong enough to stay there — otherwise
        # the buffer fills with constant-penalty transitions, the value fit
        # flattens, and the weak value-guided behavior collapses with it.
        init_offset = min(init_offset, 0.1)
        init_heading = min(init_heading, 0.1)
        train_mpc = replace(train_mpc, tdmpc_stage_state=MpcConfig().expert.state)
    res = run_training(
        cfg.env, train_cfg, train_mpc, ref, cfg.total_steps,
        init_offset=init_offset, init_heading=init_heading,
        record_timing=cfg.record_timing,
        checkpoint_path=ckpt, curve_path=curve,
        checkpoint_meta={"tau_s": cfg.env.plant.tau,
                         "track": cfg.train_track})
    wall = time.perf_counter() - t0 if cfg.record_timing else 0.0
    write_manifest(cfg.output_dir, "train", cfg, [],
                   extra_files=[os.path.relpath(p, out)
                                for p in (ckpt, curve)],
                   wall_clock_s=wall)
    return res.params, ckpt


def _critic_for(mode: str, critics: dict, seed: int):
    if mode in ("tdmpc", "dmpc"):
        return critics[seed]
    return None


def run_mismatch_sweep(cfg: ExperimentConfig,
                       critics: dict | None = None) -> list:
    """All four controllers at each tau in cfg.tau_list on the sweep track.

    ``critics`` maps seed -> CriticParams; missing entries are trained (at
    the config's plant tau) and cached under <out>/train/.
    """
    out = cfg.output_dir
    os.makedirs(os.path.join(out, "mismatch_sweep"), exist_ok=True)
    critics = dict(critics or {})
    for seed in cfg.seeds:
        if seed not in critics:
            critics[seed], _ = run_training_experiment(cfg, seed=seed)
    ref = make_track(cfg.sweep_track, dt=cfg.env.plant.dt)
    t0 = time.perf_counter()
    summaries = []
    for tau in cfg.tau_list:
        for controller in MODES:
            for seed in cfg.seeds:
                summaries.append(_run_cell(
                    out, "mismatch_sweep", controller, cfg.sweep_track,
                    tau, seed, ref, cfg.env, cfg.mpc,
                    _critic_for(controller, critics, seed), 0.0,
                    cfg.record_timing))
    wall = time.perf_counter() - t0 if cfg.record_timing else 0.0
    write_manifest(out, "mismatch_sweep", cfg, summaries, wall_clock_s=wall)
    return summaries


def run_benchmark(cfg: ExperimentConfig, critics: dict | None = None,
                  sparse_critics: dict | None = None) -> list:
    """Four controllers on each benchmark track, plus sparse-trained DMPC.

    The straight track starts with a 0.5 m lateral offset; the others start
    on the path. Sparse-critic runs are labelled ``dmpc_sparse``.
    """
    out = cfg.output_dir
    os.makedirs(os.path.join(out, "benchmark"), exist_ok=True)
    critics = dict(critics or {})
    for seed in cfg.seeds:
        if seed not in critics:
            critics[seed], _ = run_training_experiment(cfg, seed=seed)
    sparse_critics = dict(sparse_critics or {})
    sparse_cfg = replace(cfg, env=replace(
        cfg.env, reward=replace(cfg.env.reward, mode="sparse")))
    for seed in cfg.seeds:
        if seed not in sparse_critics:
            sparse_critics[seed], _ = run_training_experiment(
                sparse_cfg, seed=seed)
    tau = cfg.env.plant.tau
    t0 = time.perf_counter()
    summaries = []
    for track in cfg.tracks:
        ref = make_track(track, dt=cfg.env.plant.dt)
        offset = 0.5 if track == "straight" else 0.0
        for controller in MODES:
            for seed in cfg.seeds:
                summaries.append(_run_cell(
                    out, "benchmark", controller, track, tau, seed, ref,
                    cfg.env, cfg.mpc,
                    _critic_for(controller, critics, seed), offset,
                    cfg.record_timing))
        for seed in cfg.seeds:
            summaries.append(_run_cell(
                out, "benchmark", "dmpc", track, tau, seed, ref,
                cfg.env, cfg.mpc, sparse_critics[seed], offset,
                cfg.record_timing, label="dmpc_sparse"))
    wall = time.perf_counter() - t0 if cfg.record_timing else 0.0
    write_manifest(out, "benchmark", cfg, summaries, wall_clock_s=wall)
    return summaries
