"""Experiment configuration: YAML with unit-suffixed keys, strict validation.

All durations carry an ``_s`` suffix and lengths an ``_m`` suffix in the
file so a config is readable without consulting the code. Unknown keys are
rejected — a typo should fail loudly, not silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .actor import MpcConfig
from .dynamics import PlantConfig
from .env import EnvConfig
from .replay import TrainConfig
from .rewards import RewardConfig

EXPERIMENTS = ("train", "mismatch_sweep", "benchmark")


class ConfigError(ValueError):
    """Malformed or missing configuration; message carries path and field."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "train"
    env: EnvConfig = field(default_factory=EnvConfig)
    # experiment-level replay ratio: one critic update per 2 env steps gives
    # the 30k-step runs enough iterations to shape the value surface without
    # overfitting the on-policy buffer (the TrainConfig default of 10 is the
    # conservative library setting). The anisotropic beta smooths the critic
    # harder along heading/speed/turn-rate, the inputs the on-policy buffer
    # covers thinly, while leaving the well-identified position slopes free.
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            update_interval=2, beta=(1e-3, 1e-3, 1e-2, 1e-2, 1e-2)))
    # evaluation solver: converge the SQP instead of taking one real-time
    # iteration. dmpc's stage curvature is low-rank, so its single-iteration
    # step direction is dominated by the damping; iterating to (near)
    # convergence makes the applied command reflect the actual objective and
    # removes the sensitivity to mu.
    mpc: MpcConfig = field(
        default_factory=lambda: MpcConfig(mu=0.35, sqp_iters=20))
    # training behavior solver: single real-time iteration, as deployed
    # on-line during data collection (cheap, and the tdmpc behavior stage
    # gives it dense curvature so one damped step is enough)
    train_mpc: MpcConfig = field(default_factory=lambda: MpcConfig(mu=0.2))
    total_steps: int = 30_000      # training env steps
    train_track: str = "oval"
    init_offset: float = 0.5       # training episode lateral start spread [m]
    # training episode heading spread [rad]: wide enough that the buffer
    # covers combined heading/position error (off-path recovery plans end in
    # such states), narrow enough not to dilute the on-path fit
    init_heading: float = 0.3
    tau_list: tuple = (0.2, 0.6, 0.8)
    sweep_track: str = "curve"
    tracks: tuple = ("straight", "curve", "tight_turn")
    seeds: tuple = (0, 1, 2)
    output_dir: str = "out"
    record_timing: bool = False    # wall-clock columns break byte-determinism

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.experiment == "mismatch_sweep" and not self.tau_list:
            raise ConfigError("tau_list must be non-empty for mismatch_sweep")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")


def _take(section: dict, path: str, name: str, mapping: dict) -> dict:
    """Map unit-suffixed YAML keys to constructor kwargs, rejecting strays."""
    out = {}
    for key, val in section.items():
        if key not in mapping:
            raise ConfigError(f"{path}: unknown key '{name}.{key}'")
        out[mapping[key]] = val
    return out


_PLANT_KEYS = {"tau_s": "tau", "dt_s": "dt", "v_max_mps": "v_max",
               "omega_max_radps": "omega_max", "a_max_mps2": "a_max",
               "alpha_max_radps2": "alpha_max"}
_REWARD_KEYS = {"mode": "mode", "sparse_threshold_m": "sparse_threshold",
                "sparse_penalty": "sparse_penalty"}
_ENV_KEYS = {"control_point_offset_m": "l", "control_every": "control_every",
             "max_steps": "max_steps", "abort_error_m": "abort_error"}
_TRAIN_KEYS = {"gamma": "gamma", "n_step": "n_step", "rho": "rho",
               "beta": "beta", "lambda": "lam", "batch_size": "batch_size",
               "update_interval": "update_interval",
               "learning_rate": "learning_rate", "value_scale": "value_scale",
               "seed": "seed"}
_MPC_KEYS = {"horizon": "N", "delta_t_s": "delta_t", "gamma": "gamma",
             "mode": "mode", "sqp_iters": "sqp_iters", "mu": "mu",
             "a_max_mps2": "a_max", "alpha_max_radps2": "alpha_max",
             "v_max_mps": "v_max", "omega_max_radps": "omega_max",
             "control_point_offset_m": "l",
             "soft_velocity_weight": "soft_velocity_weight"}
_TOP_KEYS = {"experiment", "env", "reward", "train", "mpc", "train_mpc",
             "total_steps",
             "train_track", "init_offset_m", "init_heading_rad",
             "tau_list_s", "sweep_track",
             "tracks", "seeds", "output_dir", "record_timing"}


def from_dict(doc: dict, path: str = "<config>") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    stray = set(doc) - _TOP_KEYS
    if stray:
        raise ConfigError(f"{path}: unknown key '{sorted(stray)[0]}'")
    env_section = dict(doc.get("env", {}))
    plant_kwargs = {}
    env_kwargs = {}
    for key, val in env_section.items():
        if key in _PLANT_KEYS:
            plant_kwargs[_PLANT_KEYS[key]] = val
        elif key in _ENV_KEYS:
            env_kwargs[_ENV_KEYS[key]] = val
        else:
            raise ConfigError(f"{path}: unknown key 'env.{key}'")
    reward_kwargs = _take(doc.get("reward", {}), path, "reward", _REWARD_KEYS)
    train_kwargs = _take(doc.get("train", {}), path, "train", _TRAIN_KEYS)
    mpc_kwargs = _take(doc.get("mpc", {}), path, "mpc", _MPC_KEYS)
    train_mpc_kwargs = _take(doc.get("train_mpc", {}), path, "train_mpc",
                             _MPC_KEYS)
    # experiment-level defaults, see ExperimentConfig field comments
    mpc_kwargs.setdefault("mu", 0.35)
    mpc_kwargs.setdefault("sqp_iters", 20)
    train_mpc_kwargs.setdefault("mu", 0.2)
    train_kwargs.setdefault("update_interval", 2)
    train_kwargs.setdefault("beta", (1e-3, 1e-3, 1e-2, 1e-2, 1e-2))
    try:
        env = EnvConfig(plant=PlantConfig(**plant_kwargs),
                        reward=RewardConfig(**reward_kwargs), **env_kwargs)
        if "beta" in train_kwargs and isinstance(train_kwargs["beta"], list):
            train_kwargs["beta"] = tuple(train_kwargs["beta"])
        train = TrainConfig(**train_kwargs)
        mpc = MpcConfig(**mpc_kwargs)
        train_mpc = MpcConfig(**train_mpc_kwargs)
        return ExperimentConfig(
            experiment=doc.get("experiment", "train"),
            env=env, train=train, mpc=mpc, train_mpc=train_mpc,
            total_steps=int(doc.get("total_steps", 30_000)),
            train_track=doc.get("train_track", "oval"),
            init_offset=float(doc.get("init_offset_m", 0.5)),
            init_heading=float(doc.get("init_heading_rad", 0.3)),
            tau_list=tuple(doc.get("tau_list_s", (0.2, 0.6, 0.8))),
            sweep_track=doc.get("sweep_track", "curve"),
            tracks=tuple(doc.get("tracks", ("straight", "curve",
                                            "tight_turn"))),
            seeds=tuple(doc.get("seeds", (0, 1, 2))),
            output_dir=str(doc.get("output_dir", "out")),
            record_timing=bool(doc.get("record_timing", False)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Parse a YAML experiment config; errors carry the file path."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    return from_dict(doc, path=str(p))


def with_overrides(cfg: ExperimentConfig, *, seed: int | None = None,
                   output_dir: str | None = None) -> ExperimentConfig:
    """CLI-level overrides; --seed resets both the seed list and train seed."""
    out = cfg
    if seed is not None:
        out = replace(out, seeds=(seed,), train=replace(out.train, seed=seed))
    if output_dir is not None:
        out = replace(out, output_dir=output_dir)
    return out
