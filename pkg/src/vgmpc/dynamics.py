"""Unicycle model, RK4 integration with analytic Jacobians, and the lagged plant.

The nominal model (used by the controller for prediction) is acceleration
driven:

    [x_dot, y_dot, psi_dot, v_dot, omega_dot] = [v cos(psi), v sin(psi), omega, a, alpha]

The "true" plant takes velocity commands and adds a first-order lag on the
turning rate, omega_dot = (omega_cmd - omega) / tau, which is the deliberate
model mismatch studied by the experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    r = math.fmod(a + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


def wrap_angle_np(a):
    """Vectorized wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), TWO_PI)


@dataclass(frozen=True)
class WorldState:
    x: float
    y: float
    psi: float  # wrapped to (-pi, pi]
    v: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v, self.omega])

    @staticmethod
    def from_array(s: np.ndarray) -> "WorldState":
        return WorldState(float(s[0]), float(s[1]), wrap_angle(float(s[2])), float(s[3]), float(s[4]))


@dataclass(frozen=True)
class Action:
    a: float      # linear acceleration [m/s^2]
    alpha: float  # angular acceleration [rad/s^2]

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.alpha])


@dataclass(frozen=True)
class PlantConfig:
    tau: float = 0.6          # turning time constant [s]
    v_max: float = 1.0        # [m/s]
    omega_max: float = 1.5    # [rad/s]
    a_max: float = 2.0        # [m/s^2]
    alpha_max: float = 3.0    # [rad/s^2]
    dt: float = 0.05          # simulation step [s]

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if min(self.v_max, self.omega_max, self.a_max, self.alpha_max) <= 0:
            raise ValueError("limits must be > 0")


def unicycle_derivative(s: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Continuous-time derivative of the nominal model; pure function."""
    x, y, psi, v, omega = s
    return np.array([v * math.cos(psi), v * math.sin(psi), omega, u[0], u[1]])


def _deriv_jacobians(s: np.ndarray):
    """Jacobians of unicycle_derivative with respect to state and action."""
    psi, v = s[2], s[3]
    c, sn = math.cos(psi), math.sin(psi)
    fx = np.zeros((5, 5))
    fx[0, 2] = -v * sn
    fx[0, 3] = c
    fx[1, 2] = v * c
    fx[1, 3] = sn
    fx[2, 4] = 1.0
    fu = np.zeros((5, 2))
    fu[3, 0] = 1.0
    fu[4, 1] = 1.0
    return fx, fu


def rk4_step(s: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step of the nominal model, no wrapping or clamping."""
    k1 = unicycle_derivative(s, u)
    k2 = unicycle_derivative(s + 0.5 * dt * k1, u)
    k3 = unicycle_derivative(s + 0.5 * dt * k2, u)
    k4 = unicycle_derivative(s + dt * k3, u)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_nominal(s: WorldState, u: Action, dt: float,
                      v_max: float = np.inf, omega_max: float = np.inf) -> WorldState:
    """RK4 step of the nominal model; psi re-wrapped, velocities clamped."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    out = rk4_step(s.as_array(), u.as_array(), dt)
    out[2] = wrap_angle(out[2])
    out[3] = min(max(out[3], -v_max), v_max)
    out[4] = min(max(out[4], -omega_max), omega_max)
    return WorldState.from_array(out)


def rk4_step_jacobians(s: np.ndarray, u: np.ndarray, dt: float):
    """Exact analytic Jacobians (A, B) of rk4_step via stage-wise chain rule."""
    eye = np.eye(5)
    x1 = s
    k1 = unicycle_derivative(x1, u)
    f1x, f1u = _deriv_jacobians(x1)
    k1x, k1u = f1x, f1u

    x2 = s + 0.5 * dt * k1
    k2 = unicycle_derivative(x2, u)
    f2x, f2u = _deriv_jacobians(x2)
    k2x = f2x @ (eye + 0.5 * dt * k1x)
    k2u = f2x @ (0.5 * dt * k1u) + f2u

    x3 = s + 0.5 * dt * k2
    k3 = unicycle_derivative(x3, u)
    f3x, f3u = _deriv_jacobians(x3)
    k3x = f3x @ (eye + 0.5 * dt * k2x)
    k3u = f3x @ (0.5 * dt * k2u) + f3u

    x4 = s + dt * k3
    f4x, f4u = _deriv_jacobians(x4)
    k4x = f4x @ (eye + dt * k3x)
    k4u = f4x @ (dt * k3u) + f4u

    A = eye + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    B = (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    return A, B


def integrate_nominal_cmd(s: WorldState, v_cmd: float, omega_cmd: float,
                          cfg: PlantConfig) -> WorldState:
    """Velocity-command variant of the nominal step (lag-free plant).

    The linear velocity ramps toward v_cmd at rate a_max; omega jumps to
    omega_cmd at the start of the step.
    """
    v_cmd = min(max(v_cmd, -cfg.v_max), cfg.v_max)
    omega_cmd = min(max(omega_cmd, -cfg.omega_max), cfg.omega_max)
    v_of = _ramp_profile(s.v, v_cmd, cfg.a_max)

    def psi_of(t):
        return s.psi + omega_cmd * t

    return _integrate_pose(s, v_of, psi_of, lambda t: omega_cmd, cfg.dt)


def plant_step(s: WorldState, v_cmd: float, omega_cmd: float, cfg: PlantConfig) -> WorldState:
    """Advance the true plant one dt.

    Linear velocity tracks v_cmd directly (rate-limited by a_max); the angular
    velocity follows the first-order lag with its exact exponential solution
    omega(t) = omega_cmd + (omega0 - omega_cmd) * exp(-t / tau), and the
    heading uses the exact integral of that profile.
    """
    v_cmd = min(max(v_cmd, -cfg.v_max), cfg.v_max)
    omega_cmd = min(max(omega_cmd, -cfg.omega_max), cfg.omega_max)
    omega0 = s.omega
    tau = cfg.tau
    v_of = _ramp_profile(s.v, v_cmd, cfg.a_max)

    def omega_of(t):
        return omega_cmd + (omega0 - omega_cmd) * math.exp(-t / tau)

    def psi_of(t):
        return s.psi + omega_cmd * t + (omega0 - omega_cmd) * tau * (1.0 - math.exp(-t / tau))

    out = _integrate_pose(s, v_of, psi_of, omega_of, cfg.dt)
    # clamp velocities to actuator limits (commands were already clamped, so
    # this only matters for out-of-range initial conditions)
    v = min(max(out.v, -cfg.v_max), cfg.v_max)
    om = min(max(out.omega, -cfg.omega_max), cfg.omega_max)
    return WorldState(out.x, out.y, out.psi, v, om)


def _ramp_profile(v0: float, v_cmd: float, a_max: float):
    """v(t) ramping from v0 toward v_cmd at rate a_max, then holding."""
    dv = v_cmd - v0
    t_reach = abs(dv) / a_max if a_max > 0 else 0.0
    sgn = math.copysign(1.0, dv) if dv != 0 else 0.0

    def v_of(t):
        if t >= t_reach:
            return v_cmd
        return v0 + sgn * a_max * t

    return v_of


_SIMPSON_N = 8  # intervals per step for the position quadrature


def _integrate_pose(s: WorldState, v_of, psi_of, omega_of, dt: float) -> WorldState:
    """Position by composite-Simpson quadrature over the known velocity
    and heading time-profiles (heading itself is exact)."""
    n = _SIMPSON_N
    h = dt / n
    x, y = s.x, s.y
    for i in range(n):
        t0 = i * h
        tm = t0 + 0.5 * h
        t1 = t0 + h
        for t, w in ((t0, 1.0), (tm, 4.0), (t1, 1.0)):
            v = v_of(t)
            psi = psi_of(t)
            x += (h / 6.0) * w * v * math.cos(psi)
            y += (h / 6.0) * w * v * math.sin(psi)
    return WorldState(x, y, wrap_angle(psi_of(dt)), v_of(dt), omega_of(dt))


def mirror_state(s: WorldState) -> WorldState:
    """Reflect a world state across the map x-axis."""
    return WorldState(s.x, -s.y, wrap_angle(-s.psi), s.v, -s.omega)
