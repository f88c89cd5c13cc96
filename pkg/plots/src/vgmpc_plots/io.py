"""Readers for the experiment artifacts: episode CSVs, training curves,
critic checkpoints, and run manifests."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass

import numpy as np

EPISODE_COLUMNS = ("t", "x", "y", "psi", "v", "omega", "x_err", "y_err",
                   "psi_err", "reward", "progress", "v_cmd", "omega_cmd")
CURVE_COLUMNS = ("iter", "loss", "avg_episode_reward", "buffer_size",
                 "wall_clock_s")

_EPISODE_RE = re.compile(
    r"^(?P<head>.+)_tau(?P<tau>[0-9.]+)_seed(?P<seed>\d+)$")

CONTROLLERS = ("naive", "expert", "tdmpc", "dmpc")
# longest first: both controller labels (dmpc_sparse) and track names
# (tight_turn) contain underscores, so the controller is matched as a
# known prefix rather than split on "_"
_CONTROLLER_PREFIXES = ("dmpc_sparse",) + CONTROLLERS


class ArtifactError(RuntimeError):
    """Missing or malformed experiment artifact."""


@dataclass(frozen=True)
class Episode:
    controller: str
    track: str
    tau: float
    seed: int
    data: np.ndarray  # structured array with EPISODE_COLUMNS fields


def parse_episode_stem(stem: str):
    m = _EPISODE_RE.match(stem)
    if m is None:
        return None
    head = m["head"]
    for ctrl in _CONTROLLER_PREFIXES:
        if head.startswith(ctrl + "_"):
            track = head[len(ctrl) + 1:]
            break
    else:
        parts = head.split("_", 1)
        if len(parts) != 2:
            return None
        ctrl, track = parts
    return (ctrl, track, float(m["tau"]), int(m["seed"]))


def read_episode_csv(path: str) -> Episode:
    stem = os.path.splitext(os.path.basename(path))[0]
    parsed = parse_episode_stem(stem)
    if parsed is None:
        raise ArtifactError(f"{path}: name does not match episode schema")
    data = np.genfromtxt(path, delimiter=",", names=True)
    missing = set(EPISODE_COLUMNS) - set(data.dtype.names or ())
    if missing:
        raise ArtifactError(f"{path}: missing columns {sorted(missing)}")
    return Episode(*parsed, data=np.atleast_1d(data))


def find_episodes(csv_dir: str) -> list[Episode]:
    """Every episode CSV in a directory (planner logs are skipped)."""
    if not os.path.isdir(csv_dir):
        raise ArtifactError(f"not a directory: {csv_dir}")
    eps = []
    for name in sorted(os.listdir(csv_dir)):
        stem, ext = os.path.splitext(name)
        if ext != ".csv" or stem.endswith("_planner"):
            continue
        if parse_episode_stem(stem) is None:
            continue
        eps.append(read_episode_csv(os.path.join(csv_dir, name)))
    if not eps:
        raise ArtifactError(f"no episode CSVs found in {csv_dir}")
    return eps


def read_curve_csv(path: str) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    missing = set(CURVE_COLUMNS) - set(data.dtype.names or ())
    if missing:
        raise ArtifactError(f"{path}: missing columns {sorted(missing)}")
    return np.atleast_1d(data)


def control_point_offset(csv_dir: str) -> float:
    """Control-point offset l from the run manifest, 0.0 if unavailable."""
    path = os.path.join(csv_dir, "run.json")
    try:
        with open(path) as f:
            doc = json.load(f)
        return float(doc["config"]["env"]["l"])
    except (OSError, KeyError, ValueError, TypeError):
        return 0.0


@dataclass(frozen=True)
class Checkpoint:
    weights: list        # list of (out, in) arrays
    biases: list
    input_scale: np.ndarray
    output_scale: float
    meta: dict


def read_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path) as f:
            doc = json.load(f)
        ws = [np.array(w, dtype=float).reshape(shape)
              for w, shape in zip(doc["weights"], doc["layer_shapes"])]
        bs = [np.array(b, dtype=float) for b in doc["biases"]]
        return Checkpoint(ws, bs,
                          np.array(doc["input_scale"], dtype=float),
                          float(doc["output_scale"]), doc.get("meta", {}))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ArtifactError(f"unreadable checkpoint {path}: {exc}") from exc


def value_batch(ckpt: Checkpoint, states: np.ndarray) -> np.ndarray:
    """Critic forward pass for an (M, 5) batch of error states."""
    h = np.atleast_2d(states) * ckpt.input_scale
    for W, b in zip(ckpt.weights[:-1], ckpt.biases[:-1]):
        h = np.tanh(h @ W.T + b)
    return (h @ ckpt.weights[-1].T + ckpt.biases[-1])[:, 0] * ckpt.output_scale
