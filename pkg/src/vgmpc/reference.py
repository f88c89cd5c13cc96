"""Time-parameterized reference trajectories and geometric queries.

References are constant-speed polylines sampled at the simulation step. Four
track families cover the experiment scenarios: straight, curve (90 deg arc
with lead-in/out), tight_turn (150 deg arc, small radius), and oval (the
training track).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import wrap_angle


@dataclass(frozen=True)
class Reference:
    """Ordered samples (t, x_ref, y_ref, psi_ref) plus cumulative arc length."""

    t: np.ndarray        # strictly increasing [s]
    x: np.ndarray        # [m]
    y: np.ndarray        # [m]
    psi: np.ndarray      # [rad], wrapped
    arc: np.ndarray = field(default=None)  # cumulative arc length [m]

    def __post_init__(self):
        if len(self.t) == 0:
            raise ValueError("reference must be non-empty")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.arc is None:
            seg = np.hypot(np.diff(self.x), np.diff(self.y))
            object.__setattr__(self, "arc", np.concatenate([[0.0], np.cumsum(seg)]))

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    @property
    def length(self) -> float:
        return float(self.arc[-1])


def reference_at(ref: Reference, t: float):
    """Pose at time t: linear position interpolation, shortest-arc heading.

    Clamps to the final sample beyond the end and to the first before t=0.
    """
    if t <= ref.t[0]:
        return float(ref.x[0]), float(ref.y[0]), float(ref.psi[0])
    if t >= ref.t[-1]:
        return float(ref.x[-1]), float(ref.y[-1]), float(ref.psi[-1])
    i = int(np.searchsorted(ref.t, t, side="right")) - 1
    w = (t - ref.t[i]) / (ref.t[i + 1] - ref.t[i])
    x = ref.x[i] + w * (ref.x[i + 1] - ref.x[i])
    y = ref.y[i] + w * (ref.y[i + 1] - ref.y[i])
    dpsi = wrap_angle(ref.psi[i + 1] - ref.psi[i])
    psi = wrap_angle(ref.psi[i] + w * dpsi)
    return float(x), float(y), float(psi)


def reference_state_at(ref: Reference, t: float, eps: float = 1e-4):
    """Pose plus nominal body velocities (v_ref, omega_ref) at time t.

    Velocities from central differencing of the interpolated pose; beyond the
    end of the trajectory they are zero (the reference holds its last pose).
    """
    x, y, psi = reference_at(ref, t)
    if t >= ref.t[-1]:
        return x, y, psi, 0.0, 0.0
    t0, t1 = max(t - eps, ref.t[0]), min(t + eps, ref.t[-1])
    x0, y0, p0 = reference_at(ref, t0)
    x1, y1, p1 = reference_at(ref, t1)
    dt = t1 - t0
    v = math.hypot(x1 - x0, y1 - y0) / dt
    omega = wrap_angle(p1 - p0) / dt
    return x, y, psi, v, omega


def project_to_reference(ref: Reference, px: float, py: float) -> float:
    """Arc length of the closest point on the piecewise-linear reference.

    Ties (within 1e-12 in distance) break toward larger progress.
    """
    if len(ref.t) == 1:
        return 0.0
    ax, ay = ref.x[:-1], ref.y[:-1]
    bx, by = ref.x[1:], ref.y[1:]
    dx, dy = bx - ax, by - ay
    seg_len2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        s = ((px - ax) * dx + (py - ay) * dy) / seg_len2
    s = np.where(seg_len2 > 0, np.clip(s, 0.0, 1.0), 0.0)
    cx, cy = ax + s * dx, ay + s * dy
    d2 = (px - cx) ** 2 + (py - cy) ** 2
    best = np.min(d2)
    # tie-break toward larger progress
    cand = np.nonzero(d2 <= best + 1e-12)[0]
    progress = ref.arc[cand] + s[cand] * np.sqrt(seg_len2[cand])
    return float(np.max(progress))


def phase_shift(ref: Reference, frac: float) -> Reference:
    """Rotate a closed-loop reference to start ``frac`` of the way around.

    Requires the first and last samples to coincide (a closed loop). The
    returned reference keeps the original time grid; only the start point
    moves. Training uses this so episode starts cover the whole loop —
    otherwise every episode sees the same curvature sequence and the critic
    confounds state features with track position.
    """
    if math.hypot(ref.x[0] - ref.x[-1], ref.y[0] - ref.y[-1]) > 1e-6:
        raise ValueError("phase_shift requires a closed-loop reference")
    frac = frac % 1.0
    m = len(ref.t) - 1  # unique samples (last duplicates the first)
    k = int(round(frac * m)) % m
    if k == 0:
        return ref
    xs = np.concatenate([ref.x[k:-1], ref.x[:k], [ref.x[k]]])
    ys = np.concatenate([ref.y[k:-1], ref.y[:k], [ref.y[k]]])
    ps = np.concatenate([ref.psi[k:-1], ref.psi[:k], [ref.psi[k]]])
    return Reference(t=ref.t.copy(), x=xs, y=ys, psi=ps)


def _resample_constant_speed(pts: np.ndarray, speed: float, dt: float) -> Reference:
    """Turn a dense waypoint polyline into a constant-speed timed reference."""
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    duration = total / speed
    n = int(math.floor(duration / dt)) + 1
    ts = np.arange(n) * dt
    ss = np.minimum(ts * speed, total)
    xs = np.interp(ss, arc, pts[:, 0])
    ys = np.interp(ss, arc, pts[:, 1])
    # headings from forward tangents; last heading repeats
    hx = np.diff(xs)
    hy = np.diff(ys)
    psi = np.arctan2(hy, hx)
    # degenerate tail samples (clamped at the end) inherit the previous heading
    for i in range(len(psi)):
        if hx[i] == 0.0 and hy[i] == 0.0:
            psi[i] = psi[i - 1] if i > 0 else 0.0
    psi = np.concatenate([psi, [psi[-1]]])
    return Reference(t=ts, x=xs, y=ys, psi=psi)


def _arc_points(cx, cy, r, a0, a1, n):
    ang = np.linspace(a0, a1, n)
    return np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang)], axis=1)


def make_track(kind: str, speed: float = 0.5, dt: float = 0.05, **params) -> Reference:
    """Build a constant-speed reference for one of the benchmark scenarios.

    Kinds: straight (length), curve (radius, lead), tight_turn (radius,
    turn_deg, lead), oval (straight_len, radius).
    """
    dense = 2000
    if kind == "straight":
        length = params.get("length", 5.0)
        pts = np.stack([np.linspace(0, length, dense), np.zeros(dense)], axis=1)
    elif kind == "curve":
        radius = params.get("radius", 1.5)
        lead = params.get("lead", 1.0)
        p1 = np.stack([np.linspace(0, lead, dense // 4), np.zeros(dense // 4)], axis=1)
        p2 = _arc_points(lead, radius, radius, -math.pi / 2, 0.0, dense // 2)
        # exit straight heads in +y from (lead + radius, radius)
        p3 = np.stack([np.full(dense // 4, lead + radius),
                       np.linspace(radius, radius + lead, dense // 4)], axis=1)
        pts = np.concatenate([p1, p2[1:], p3[1:]], axis=0)
    elif kind == "tight_turn":
        radius = params.get("radius", 0.5)
        turn = math.radians(params.get("turn_deg", 150.0))
        lead = params.get("lead", 1.0)
        p1 = np.stack([np.linspace(0, lead, dense // 3), np.zeros(dense // 3)], axis=1)
        p2 = _arc_points(lead, radius, radius, -math.pi / 2, -math.pi / 2 + turn, dense // 2)
        # exit tangent after the turn
        hx, hy = -math.sin(-math.pi / 2 + turn), math.cos(-math.pi / 2 + turn)
        end = p2[-1]
        p3 = end[None, :] + np.linspace(0, lead, dense // 3)[:, None] * np.array([hx, hy])
        pts = np.concatenate([p1, p2[1:], p3[1:]], axis=0)
    elif kind == "oval":
        straight = params.get("straight_len", 5.0)
        radius = params.get("radius", 1.0)
        n4 = dense // 4
        p1 = np.stack([np.linspace(0, straight, n4), np.zeros(n4)], axis=1)
        p2 = _arc_points(straight, radius, radius, -math.pi / 2, math.pi / 2, n4)
        p3 = np.stack([np.linspace(straight, 0, n4), np.full(n4, 2 * radius)], axis=1)
        p4 = _arc_points(0.0, radius, radius, math.pi / 2, 3 * math.pi / 2, n4)
        pts = np.concatenate([p1, p2[1:], p3[1:], p4[1:]], axis=0)
    else:
        raise ValueError(f"unknown track kind: {kind!r}")
    return _resample_constant_speed(pts, speed, dt)
