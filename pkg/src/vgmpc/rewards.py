"""Dense and sparse tracking rewards over Frenet errors."""

from __future__ import annotations

from dataclasses import dataclass

from .frenet import FrenetError


@dataclass(frozen=True)
class RewardConfig:
    mode: str = "dense"            # "dense" | "sparse"
    sparse_threshold: float = 0.1  # [m]
    sparse_penalty: float = -0.5

    def __post_init__(self):
        if self.mode not in ("dense", "sparse"):
            raise ValueError(f"unknown reward mode: {self.mode!r}")
        if self.sparse_threshold <= 0:
            raise ValueError("sparse_threshold must be > 0")
        if self.sparse_penalty >= 0:
            raise ValueError("sparse_penalty must be < 0")


def dense_reward(e: FrenetError) -> float:
    """Negative squared deviation from the path."""
    return -(e.x_err ** 2 + e.y_err ** 2)


def sparse_reward(e: FrenetError, cfg: RewardConfig = RewardConfig(mode="sparse")) -> float:
    """Penalty outside the tracking band; the boundary counts as inside."""
    if abs(e.x_err) > cfg.sparse_threshold or abs(e.y_err) > cfg.sparse_threshold:
        return cfg.sparse_penalty
    return 0.0


def reward(e: FrenetError, cfg: RewardConfig) -> float:
    if cfg.mode == "dense":
        return dense_reward(e)
    return sparse_reward(e, cfg)
