"""Receding-horizon SQP controller in four cost modes.

Modes:
  naive  - tracking reward as stage and terminal cost
  expert - hand-tuned diagonal quadratic stage and terminal cost
  tdmpc  - small tracking quadratic stage, learned value as terminal cost
  dmpc   - Lie-derivative stage cost dT * dV/dx . f(x, u) plus value terminal

Each control step performs real-time-iteration SQP: roll out the nominal
model, linearize, build Gauss-Newton stage quadratics, condense onto the
stacked action increments (single shooting), and solve one box QP. Critic
curvature enters only through first derivatives and their outer products;
damping mu*I keeps the condensed Hessian positive definite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .critic import CriticParams, value_and_jacobian
from .dynamics import (
    Action,
    WorldState,
    integrate_nominal,
    rk4_step,
    rk4_step_jacobians,
)
from .frenet import frenet_jacobian, to_frenet
from .qp import QpProblem, solve_box_qp
from .reference import Reference, reference_state_at

MODES = ("naive", "expert", "tdmpc", "dmpc")


@dataclass(frozen=True)
class ExpertWeights:
    """Diagonal penalties on (x_err, y_err, psi_err, v_dev, omega_dev) and (a, alpha)."""

    state: tuple = (10.0, 10.0, 5.0, 0.5, 2.0)
    action: tuple = (0.05, 0.05)

    def __post_init__(self):
        if any(w < 0 for w in self.state) or any(w < 0 for w in self.action):
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class MpcConfig:
    N: int = 20
    delta_t: float = 0.1
    gamma: float = 0.99
    mode: str = "tdmpc"
    sqp_iters: int = 1
    mu: float = 1e-3                  # Levenberg-Marquardt damping
    a_max: float = 2.0
    alpha_max: float = 3.0
    v_max: float = 1.0
    omega_max: float = 1.5
    l: float = 0.2                    # control-point offset
    soft_velocity_weight: float = 10.0
    action_penalty: tuple = (0.005, 0.005)   # conditioning penalty, all modes
    expert: ExpertWeights = field(default_factory=ExpertWeights)
    # tdmpc behavior-policy stage: 0.1 * expert state weights by default
    tdmpc_stage_state: tuple = (1.0, 1.0, 0.5, 0.05, 0.2)

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.delta_t <= 0 or self.mu <= 0:
            raise ValueError("delta_t and mu must be > 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode: {self.mode!r}")


@dataclass
class Plan:
    states: np.ndarray    # (N+1, 5)
    actions: np.ndarray   # (N, 2)
    errors: np.ndarray    # (N+1, 5) predicted Frenet errors
    objective: float


@dataclass
class StepDiag:
    sqp_iters_done: int = 0
    qp_status: str = ""
    qp_iters: int = 0
    objective: float = np.nan
    solve_time_ms: float = 0.0
    fault_count: int = 0


def linearize_dynamics(x: np.ndarray, u: np.ndarray, delta_t: float,
                       v_max: float = np.inf, omega_max: float = np.inf):
    """Analytic Jacobians of the discrete RK4 step; clamped velocity rows
    propagate zero sensitivity."""
    A, B = rk4_step_jacobians(x, u, delta_t)
    out = rk4_step(x, u, delta_t)
    if abs(out[3]) > v_max:
        A[3, :] = 0.0
        B[3, :] = 0.0
    if abs(out[4]) > omega_max:
        A[4, :] = 0.0
        B[4, :] = 0.0
    return A, B


def tracking_quadratic(err: np.ndarray, Fx: np.ndarray, weights: np.ndarray,
                       scale: float):
    """Value, gradient (5,), GN Hessian (5,5) of scale * sum_i w_i err_i^2."""
    we = weights * err
    value = scale * float(err @ we)
    grad = 2.0 * scale * (Fx.T @ we)
    H = 2.0 * scale * (Fx.T @ (weights[:, None] * Fx))
    return value, grad, H


def _action_penalty(u: np.ndarray, w: np.ndarray, scale: float):
    value = scale * float(w @ (u * u))
    grad = 2.0 * scale * w * u
    H = np.diag(2.0 * scale * w)
    return value, grad, H


def _soft_velocity_penalty(x: np.ndarray, w: float, v_max: float,
                           omega_max: float, scale: float):
    """Quadratic penalty outside the velocity bounds (C1-smooth).

    The speed band is [0, v_max], not symmetric: the tracking task is
    forward motion, the critic never sees reversing data, and letting the
    planner exploit extrapolated values at v < 0 destabilizes dmpc.
    """
    value = 0.0
    grad = np.zeros(5)
    H = np.zeros((5, 5))
    for idx, lo, hi in ((3, 0.0, v_max), (4, -omega_max, omega_max)):
        excess = max(x[idx] - hi, lo - x[idx])
        if excess > 0:
            sgn = 1.0 if x[idx] > hi else -1.0
            value += scale * w * excess * excess
            grad[idx] += 2.0 * scale * w * excess * sgn
            H[idx, idx] += 2.0 * scale * w
    return value, grad, H


def tdmpc_stage_cost(err: np.ndarray, Fx: np.ndarray, u: np.ndarray,
                     cfg: MpcConfig, scale: float):
    """TDMPC's behavior-policy running cost: small tracking quadratic plus
    the action regularizer."""
    v, gx, Hxx = tracking_quadratic(err, Fx, np.asarray(cfg.tdmpc_stage_state), scale)
    va, gu, Huu = _action_penalty(u, np.asarray(cfg.action_penalty), scale)
    return v + va, gx, gu, Hxx, Huu


def stage_terms(mode: str, x: np.ndarray, u: np.ndarray | None, ref_state,
                critic: CriticParams | None, k: int, cfg: MpcConfig,
                terminal: bool = False):
    """Discounted quadratic model of one stage (or the terminal term).

    Returns (value, grad(7,), Hessian(7,7)) over z = (x, u); for terminal
    terms the action block is zero.
    """
    scale = cfg.gamma ** k
    xr, yr, psir, vr, omr = ref_state
    ws = WorldState.from_array(x)
    e = to_frenet(ws, (xr, yr, psir), l=cfg.l).as_array()
    Fx = frenet_jacobian(ws, (xr, yr, psir), l=cfg.l)
    err = e.copy()
    err[3] -= vr
    err[4] -= omr

    val = 0.0
    gx = np.zeros(5)
    gu = np.zeros(2)
    Hxx = np.zeros((5, 5))
    Huu = np.zeros((2, 2))

    if mode == "naive":
        w = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
        v_, g_, H_ = tracking_quadratic(err, Fx, w, scale)
        val += v_
        gx += g_
        Hxx += H_
    elif mode == "expert":
        w = np.asarray(cfg.expert.state, dtype=float)
        v_, g_, H_ = tracking_quadratic(err, Fx, w, scale)
        val += v_
        gx += g_
        Hxx += H_
    elif mode == "tdmpc":
        if critic is None:
            raise ValueError("tdmpc mode requires a critic snapshot")
        # tracking quadratic at every step including the terminal one, so the
        # zero-critic degenerate case coincides with naive mode
        w = np.asarray(cfg.tdmpc_stage_state, dtype=float)
        v_, g_, H_ = tracking_quadratic(err, Fx, w, scale)
        val += v_
        gx += g_
        Hxx += H_
        if terminal:
            v_, g_, H_ = _value_terminal(e, Fx, critic, scale)
            val += v_
            gx += g_
            Hxx += H_
    elif mode == "dmpc":
        if critic is None:
            raise ValueError("dmpc mode requires a critic snapshot")
        if terminal:
            v_, g_, H_ = _value_terminal(e, Fx, critic, scale)
            val += v_
            gx += g_
            Hxx += H_
        else:
            v_, g5, g2, H7 = _lie_stage(x, u, e, Fx, critic, scale,
                                        ref_state, cfg)
            val += v_
            gx += g5
            gu += g2
            Hxx += H7[:5, :5]
            Huu += H7[5:, 5:]
            # keep the cross block from the rank-one model
            cross = H7[:5, 5:]
    else:
        raise ValueError(f"unknown mode: {mode!r}")

    if not terminal and u is not None:
        aw = cfg.expert.action if mode == "expert" else cfg.action_penalty
        va, ga, Ha = _action_penalty(u, np.asarray(aw), scale)
        val += va
        gu += ga
        Huu += Ha

    vs, gs, Hs = _soft_velocity_penalty(x, cfg.soft_velocity_weight,
                                        cfg.v_max, cfg.omega_max, scale)
    val += vs
    gx += gs
    Hxx += Hs

    if not np.isfinite(val):
        raise FloatingPointError("non-finite stage cost (critic output)")

    grad = np.concatenate([gx, gu])
    H = np.zeros((7, 7))
    H[:5, :5] = Hxx
    H[5:, 5:] = Huu
    if mode == "dmpc" and not terminal:
        H[:5, 5:] = cross
        H[5:, :5] = cross.T
    return val, grad, H


def _value_outer(g: np.ndarray, v: float) -> np.ndarray:
    """Gauss-Newton curvature for a value term from its gradient outer product.

    For a concave quadratic V = -e'Qe the Hessian of the cost -V along the
    gradient direction is outer(g, g) / (2|V|); the raw outer product would
    scale like |g|^2 and grotesquely over-penalize whichever actions influence
    many stages, so the normalization is essential for sane step sizes.
    """
    return np.outer(g, g) / max(2.0 * abs(v), 1e-3)


def _value_terminal(e: np.ndarray, Fx: np.ndarray, critic: CriticParams,
                    scale: float):
    """Cost -V(e(x)); gradient exact, curvature from the gradient outer product."""
    v, jv = value_and_jacobian(critic, e)
    gx = Fx.T @ jv
    return -scale * v, -scale * gx, scale * _value_outer(gx, v)


def _advance_ref(ref_state, delta_t: float):
    """Propagate a reference pose one step along its own constant twist
    (exact on straight and arc segments)."""
    xr, yr, psir, vr, omr = ref_state
    psi1 = psir + omr * delta_t
    if abs(omr) < 1e-9:
        return (xr + vr * delta_t * np.cos(psir),
                yr + vr * delta_t * np.sin(psir), psi1, vr, omr)
    r = vr / omr
    return (xr + r * (np.sin(psi1) - np.sin(psir)),
            yr - r * (np.cos(psi1) - np.cos(psir)), psi1, vr, omr)


def _lie_stage(x: np.ndarray, u: np.ndarray, e: np.ndarray, Fx: np.ndarray,
               critic: CriticParams, scale: float, ref_state, cfg: "MpcConfig"):
    """Cost -(V(e_{k+1}) - V(e_k)): the Lie-derivative stage dT * dV/de . de/dt
    evaluated as its exact one-step increment.

    The increment form agrees with the continuous Lie derivative to O(dT^2)
    but, unlike it, admits an exact gradient that needs only first derivatives
    of V (chained through the discrete step Jacobians); differentiating the
    continuous form itself would require the critic Hessian, which the
    formulation forbids. The reference's own motion over the step is carried
    by evaluating e_{k+1} against the advanced reference pose.
    """
    v0, jv0 = value_and_jacobian(critic, e)
    s1 = integrate_nominal(WorldState.from_array(x), Action(u[0], u[1]),
                           cfg.delta_t, v_max=cfg.v_max, omega_max=cfg.omega_max)
    A, B = linearize_dynamics(x, u, cfg.delta_t, cfg.v_max, cfg.omega_max)
    ref1 = _advance_ref(ref_state, cfg.delta_t)
    e1 = to_frenet(s1, ref1[:3], l=cfg.l).as_array()
    Fx1 = frenet_jacobian(s1, ref1[:3], l=cfg.l)
    v1, jv1 = value_and_jacobian(critic, e1)
    val = -scale * (v1 - v0)
    gp = Fx1.T @ jv1           # dV(e_{k+1})/dx_{k+1}
    g5 = -scale * (A.T @ gp) + scale * (Fx.T @ jv0)
    g2 = -scale * (B.T @ gp)
    # Gauss-Newton curvature from the stage's own gradient outer product.
    # Using per-endpoint outer products instead would over-count curvature on
    # early actions ~N-fold (the increment gradients telescope across stages
    # but PSD outer products cannot), which pushes all control effort to the
    # horizon tail and destabilizes the receding-horizon loop.
    d = np.concatenate([A.T @ gp - Fx.T @ jv0, B.T @ gp])
    H7 = scale * _value_outer(d, v1 - v0)
    return val, g5, g2, H7


def rollout(x0: np.ndarray, actions: np.ndarray, cfg: MpcConfig) -> np.ndarray:
    """Nominal-model trajectory under an action sequence."""
    xs = np.empty((len(actions) + 1, 5))
    xs[0] = x0
    s = WorldState.from_array(x0)
    for k, u in enumerate(actions):
        s = integrate_nominal(s, Action(u[0], u[1]), cfg.delta_t,
                              v_max=cfg.v_max, omega_max=cfg.omega_max)
        xs[k + 1] = s.as_array()
    return xs


def condense(As, Bs, stage_grads, stage_hessians, term_grad, term_hess,
             actions, cfg: MpcConfig) -> QpProblem:
    """Single-shooting condensing onto stacked action increments du (2N,)."""
    N = len(As)
    if len(Bs) != N or len(stage_grads) != N or len(stage_hessians) != N:
        raise ValueError("dimension mismatch in condensing inputs")
    d = 2 * N
    H = cfg.mu * np.eye(d)
    g = np.zeros(d)
    P = np.zeros((5, d))  # sensitivity of x_k wrt du
    for k in range(N):
        Z = np.zeros((7, d))
        Z[:5] = P
        Z[5 + 0, 2 * k] = 1.0
        Z[5 + 1, 2 * k + 1] = 1.0
        Qk = stage_hessians[k]
        gk = stage_grads[k]
        H += Z.T @ Qk @ Z
        g += Z.T @ gk
        P = As[k] @ P
        P[:, 2 * k:2 * k + 2] += Bs[k]
    H += P.T @ term_hess @ P
    g += P.T @ term_grad
    H = 0.5 * (H + H.T)
    lb = np.empty(d)
    ub = np.empty(d)
    bounds = np.array([cfg.a_max, cfg.alpha_max])
    for k in range(N):
        lb[2 * k:2 * k + 2] = -bounds - actions[k]
        ub[2 * k:2 * k + 2] = bounds - actions[k]
    return QpProblem(H, g, lb, ub)


class MpcActor:
    """One controller instance: owns the warm-started plan and fault state."""

    def __init__(self, cfg: MpcConfig, ref: Reference,
                 critic: CriticParams | None = None):
        if cfg.mode in ("tdmpc", "dmpc") and critic is None:
            raise ValueError(f"{cfg.mode} mode requires a critic snapshot")
        self.cfg = cfg
        self.ref = ref
        self.critic = critic
        self.warm_actions = np.zeros((cfg.N, 2))
        self.fault_count = 0
        self.consecutive_faults = 0
        self.last_command = (0.0, 0.0)
        self.aborted = False

    def set_critic(self, critic: CriticParams) -> None:
        self.critic = critic

    def control_step(self, x0: WorldState, t: float):
        """One real-time-iteration control cycle; returns (command, Plan, StepDiag)."""
        cfg = self.cfg
        diag = StepDiag()
        t0 = time.perf_counter()
        try:
            plan = self._solve(x0.as_array(), t, diag)
        except FloatingPointError:
            plan = None
        diag.solve_time_ms = (time.perf_counter() - t0) * 1e3
        if plan is None or not np.all(np.isfinite(plan.states)):
            self.fault_count += 1
            self.consecutive_faults += 1
            diag.fault_count = self.fault_count
            diag.qp_status = diag.qp_status or "fault"
            if self.consecutive_faults >= 3:
                self.aborted = True
            return self.last_command, None, diag
        self.consecutive_faults = 0
        cmd = (float(plan.states[1, 3]), float(plan.states[1, 4]))
        self.last_command = cmd
        # shift the plan one step for the next cycle, duplicating the tail
        self.warm_actions[:-1] = plan.actions[1:]
        self.warm_actions[-1] = plan.actions[-1]
        diag.fault_count = self.fault_count
        return cmd, plan, diag

    def _solve(self, x0: np.ndarray, t: float, diag: StepDiag) -> Plan | None:
        cfg = self.cfg
        u = self.warm_actions.copy()
        np.clip(u[:, 0], -cfg.a_max, cfg.a_max, out=u[:, 0])
        np.clip(u[:, 1], -cfg.alpha_max, cfg.alpha_max, out=u[:, 1])
        refs = [reference_state_at(self.ref, t + k * cfg.delta_t)
                for k in range(cfg.N + 1)]
        xs = None
        for _ in range(cfg.sqp_iters):
            xs = rollout(x0, u, cfg)
            As, Bs, grads, hessians = [], [], [], []
            for k in range(cfg.N):
                A, B = linearize_dynamics(xs[k], u[k], cfg.delta_t,
                                          cfg.v_max, cfg.omega_max)
                As.append(A)
                Bs.append(B)
                _, gk, Hk = stage_terms(cfg.mode, xs[k], u[k], refs[k],
                                        self.critic, k, cfg)
                grads.append(gk)
                hessians.append(Hk)
            _, gN, HN = stage_terms(cfg.mode, xs[cfg.N], None, refs[cfg.N],
                                    self.critic, cfg.N, cfg, terminal=True)
            qp = condense(As, Bs, grads, hessians, gN[:5], HN[:5, :5], u, cfg)
            sol = solve_box_qp(qp)
            diag.qp_status = sol.status
            diag.qp_iters = sol.iterations
            diag.sqp_iters_done += 1
            if sol.status == "infeasible_bounds" or not np.all(np.isfinite(sol.x)):
                return None
            u = u + sol.x.reshape(cfg.N, 2)
        xs = rollout(x0, u, cfg)
        errors, objective = self._evaluate(xs, u, refs)
        diag.objective = objective
        return Plan(states=xs, actions=u, errors=errors, objective=objective)

    def _evaluate(self, xs: np.ndarray, u: np.ndarray, refs):
        cfg = self.cfg
        errors = np.empty((cfg.N + 1, 5))
        objective = 0.0
        for k in range(cfg.N + 1):
            ws = WorldState.from_array(xs[k])
            errors[k] = to_frenet(ws, refs[k][:3], l=cfg.l).as_array()
            if k < cfg.N:
                v, _, _ = stage_terms(cfg.mode, xs[k], u[k], refs[k],
                                      self.critic, k, cfg)
            else:
                v, _, _ = stage_terms(cfg.mode, xs[k], None, refs[k],
                                      self.critic, k, cfg, terminal=True)
            objective += v
        return errors, objective
