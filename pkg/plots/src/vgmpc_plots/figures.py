"""The three figure families: mismatch sweep, training, benchmark.

Every function renders deterministic static images (PNG + SVG, no embedded
timestamps) and returns the list of files written. Missing expected series
are reported as warning strings so the CLI can exit nonzero while still
rendering what exists.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
# deterministic output: no embedded timestamps, stable SVG ids, text kept
# as text so labels are inspectable
matplotlib.rcParams["svg.hashsalt"] = "vgmpc-plots"
matplotlib.rcParams["svg.fonttype"] = "none"

import matplotlib.pyplot as plt
import numpy as np

from .io import (ArtifactError, CONTROLLERS, Episode, control_point_offset,
                 find_episodes, read_checkpoint, read_curve_csv, value_batch)

_COLORS = {"naive": "tab:red", "expert": "tab:orange",
           "tdmpc": "tab:blue", "dmpc": "tab:green",
           "dmpc_sparse": "tab:purple"}

_SAVEFIG = {"metadata": {"Date": None}}  # suppress embedded timestamps

# testing hooks: layout and per-axes y-limits of the last rendered figure
LAST_LAYOUT: tuple = ()
LAST_YLIMS: list = []


def _save(fig, out_dir: str, stem: str) -> list[str]:
    global LAST_YLIMS
    LAST_YLIMS = [ax.get_ylim() for ax in fig.axes]
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for ext in ("png", "svg"):
        path = os.path.join(out_dir, f"{stem}.{ext}")
        fig.savefig(path, **_SAVEFIG)
        paths.append(path)
    plt.close(fig)
    return paths


def _series(eps: list[Episode], controller: str):
    return [e for e in eps if e.controller == controller]


def plot_mismatch(csv_dir: str, out_dir: str):
    """One column per tau: cumulative reward vs time, lateral response.

    Returns (paths, warnings); a warning per missing controller series.
    """
    eps = find_episodes(csv_dir)
    taus = sorted({e.tau for e in eps})
    warnings = []
    global LAST_LAYOUT
    LAST_LAYOUT = (2, len(taus))
    fig, axes = plt.subplots(2, len(taus), figsize=(4 * len(taus), 6),
                             squeeze=False, sharex="col")
    for col, tau in enumerate(taus):
        at_tau = [e for e in eps if e.tau == tau]
        top, bot = axes[0][col], axes[1][col]
        for controller in CONTROLLERS:
            runs = _series(at_tau, controller)
            if not runs:
                warnings.append(
                    f"mismatch: no {controller} series at tau={tau:g}")
                continue
            for i, e in enumerate(runs):
                kw = {"color": _COLORS.get(controller, "gray"),
                      "label": controller if i == 0 else None, "lw": 1.0}
                top.plot(e.data["t"], np.cumsum(e.data["reward"]), **kw)
                bot.plot(e.data["t"], e.data["y_err"], **kw)
        top.set_title(f"tau = {tau:g} s")
        top.set_ylabel("cumulative reward" if col == 0 else "")
        bot.set_ylabel("lateral error [m]" if col == 0 else "")
        bot.set_xlabel("time [s]")
        top.grid(alpha=0.3)
        bot.grid(alpha=0.3)
    axes[0][0].legend(loc="lower left", fontsize=8)
    fig.suptitle("Model-mismatch sweep")
    fig.tight_layout()
    return _save(fig, out_dir, "mismatch"), warnings


def value_surface(ckpt, v_ref: float = 0.5, half_range: float = 1.0,
                  n: int = 61):
    """V over (x_err, y_err) at psi_err=0, v=v_ref, omega=0."""
    g = np.linspace(-half_range, half_range, n)
    xx, yy = np.meshgrid(g, g)
    states = np.column_stack([xx.ravel(), yy.ravel(),
                              np.zeros(xx.size), np.full(xx.size, v_ref),
                              np.zeros(xx.size)])
    return xx, yy, value_batch(ckpt, states).reshape(xx.shape)


def value_surface_half_width(ckpt, v_ref: float = 0.5,
                             half_range: float = 1.0) -> float:
    """Half-width at half-depth of the lateral value profile V(0, y).

    Depth is V(0,0) minus the worst value over |y| <= half_range; the width
    is the mean of the smallest |y| on each side where half the depth is
    lost. Smaller means a steeper, slimmer value basin.
    """
    y = np.linspace(-half_range, half_range, 2001)
    states = np.column_stack([np.zeros_like(y), y, np.zeros_like(y),
                              np.full_like(y, v_ref), np.zeros_like(y)])
    v = value_batch(ckpt, states)
    mid = len(y) // 2
    depth = v[mid] - v.min()
    if depth <= 0.0:
        return float(half_range)
    widths = []
    for side in (v[mid:], v[mid::-1]):
        below = np.nonzero(v[mid] - side >= 0.5 * depth)[0]
        widths.append(y[mid + below[0]] if below.size else half_range)
    return float(np.mean(np.abs(widths)))


def plot_training(curve_csv: str, checkpoint: str, out_dir: str,
                  label: str = "training"):
    """Reward-vs-training-time curve plus the value surface."""
    curve = read_curve_csv(curve_csv)
    ckpt = read_checkpoint(checkpoint)
    fig = plt.figure(figsize=(10, 4.2))
    ax = fig.add_subplot(1, 2, 1)
    wall = curve["wall_clock_s"]
    if np.any(wall > 0):
        ax.plot(wall, curve["avg_episode_reward"], color="tab:blue", lw=1.0)
        ax.set_xlabel("wall clock [s]")
    else:   # timing columns disabled for determinism: fall back to iteration
        ax.plot(curve["iter"], curve["avg_episode_reward"],
                color="tab:blue", lw=1.0)
        ax.set_xlabel("training iteration")
    ax.set_ylabel("average episode reward")
    ax.grid(alpha=0.3)
    ax3 = fig.add_subplot(1, 2, 2, projection="3d")
    xx, yy, vv = value_surface(ckpt)
    ax3.plot_surface(xx, yy, vv, cmap="viridis", linewidth=0)
    ax3.set_xlabel("x_err [m]")
    ax3.set_ylabel("y_err [m]")
    ax3.set_zlabel("V")
    fig.suptitle(label)
    fig.tight_layout()
    return _save(fig, out_dir, label), []


def _reference_path(e: Episode, l: float):
    """World-frame reference path reconstructed from the logged errors."""
    d = e.data
    ref_psi = d["psi"] - d["psi_err"]
    c, s = np.cos(ref_psi), np.sin(ref_psi)
    rx = d["x"] + l * np.cos(d["psi"]) - (c * d["x_err"] - s * d["y_err"])
    ry = d["y"] + l * np.sin(d["psi"]) - (s * d["x_err"] + c * d["y_err"])
    return rx, ry


def plot_benchmark(csv_dir: str, out_dir: str):
    """Per track: cumulative reward and lateral error vs progress, plus the
    reference geometry with start (green) / end (red) markers."""
    eps = find_episodes(csv_dir)
    tracks = sorted({e.track for e in eps})
    l = control_point_offset(csv_dir)
    warnings = []
    global LAST_LAYOUT
    LAST_LAYOUT = (3, len(tracks))
    fig, axes = plt.subplots(3, len(tracks), figsize=(4 * len(tracks), 9),
                             squeeze=False)
    for col, track in enumerate(tracks):
        on_track = [e for e in eps if e.track == track]
        r_ax, y_ax, g_ax = (axes[i][col] for i in range(3))
        for controller in CONTROLLERS + ("dmpc_sparse",):
            runs = _series(on_track, controller)
            if not runs:
                if controller == "dmpc_sparse":
                    # the sparse critic may legitimately produce no motion
                    g_ax.set_title("(no sparse-DMPC series)", fontsize=8)
                else:
                    warnings.append(
                        f"benchmark: no {controller} series on {track}")
                continue
            for i, e in enumerate(runs):
                kw = {"color": _COLORS.get(controller, "gray"),
                      "label": controller if i == 0 else None, "lw": 1.0}
                r_ax.plot(e.data["progress"], np.cumsum(e.data["reward"]),
                          **kw)
                y_ax.plot(e.data["progress"], e.data["y_err"], **kw)
        best = max(on_track, key=lambda e: e.data["progress"][-1])
        rx, ry = _reference_path(best, l)
        g_ax.plot(rx, ry, color="k", lw=1.0)
        g_ax.plot(rx[0], ry[0], "o", color="green", ms=6)
        g_ax.plot(rx[-1], ry[-1], "o", color="red", ms=6)
        g_ax.set_aspect("equal")
        r_ax.set_title(track)
        r_ax.set_ylabel("cumulative reward" if col == 0 else "")
        y_ax.set_ylabel("lateral error [m]" if col == 0 else "")
        y_ax.set_xlabel("progress [m]")
        r_ax.grid(alpha=0.3)
        y_ax.grid(alpha=0.3)
    axes[0][0].legend(loc="lower left", fontsize=8)
    fig.suptitle("Benchmark tracks")
    fig.tight_layout()
    return _save(fig, out_dir, "benchmark"), warnings
