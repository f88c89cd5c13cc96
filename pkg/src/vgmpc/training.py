"""Online critic training: alternating roll-out and update phases.

The agent rolls out under the terminal-value controller (tdmpc mode) while
transitions — plus their mirrored twins — accumulate in the replay buffer.
Every ``update_interval`` environment steps, once the buffer holds at least
one batch, the critic takes a single regression step toward n-step targets
bootstrapped from the Polyak-averaged target network.

A non-finite loss halts training immediately; the parameters from before the
failing update are preserved (and checkpointed) so a diverged run still
leaves a usable artifact behind.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .actor import MpcActor, MpcConfig
from .critic import (Adam, CriticParams, default_input_scale, init_params,
                     loss_and_grad, polyak_update, save_checkpoint)
from .env import EnvConfig, TrackingEnv, default_initial_state
from .reference import Reference, phase_shift
from .replay import ReplayBuffer, TrainConfig, Transition

TRAIN_CURVE_HEADER = "iter,loss,avg_episode_reward,buffer_size,wall_clock_s"


@dataclass
class TrainingResult:
    params: CriticParams
    target: CriticParams
    buffer: ReplayBuffer
    curve_rows: list = field(default_factory=list)
    iterations: int = 0
    env_steps: int = 0
    episodes: int = 0
    diverged: bool = False

    def curve_csv(self) -> str:
        return "\n".join([TRAIN_CURVE_HEADER] + self.curve_rows) + "\n"

    def episode_rewards(self) -> np.ndarray:
        """avg_episode_reward column of the curve, one entry per update."""
        return np.array([float(r.split(",")[2]) for r in self.curve_rows])


def run_training(env_cfg: EnvConfig, train_cfg: TrainConfig,
                 mpc_cfg: MpcConfig, ref: Reference, total_steps: int,
                 *, init_offset: float = 0.5, init_heading: float = 0.3,
                 episode_steps: int = 200,
                 record_timing: bool = False,
                 checkpoint_path=None, curve_path=None,
                 checkpoint_meta: dict | None = None) -> TrainingResult:
    """Train a critic for ``total_steps`` environment steps.

    Episode starts are offset laterally and longitudinally by uniform draws
    from [-init_offset, init_offset], rotated against the path tangent by a
    uniform draw from [-init_heading, init_heading], and begin at a uniform
    random speed so the buffer covers off-path and off-speed states (a
    critic trained only on-path has no gradient to exploit off-path, and
    one trained only at the reference speed is flat in the longitudinal
    error). Episodes are
    capped at ``episode_steps`` so the buffer sees many independent start
    states; long episodes let recovery phases dominate and the fit then
    confounds speed with lateral error.
    """
    if mpc_cfg.mode != "tdmpc":
        raise ValueError("training rolls out under the tdmpc controller")
    seq = np.random.SeedSequence(train_cfg.seed)
    rng_init, rng_sample, rng_env = (np.random.default_rng(s)
                                     for s in seq.spawn(3))
    scale = default_input_scale(mpc_cfg.v_max, mpc_cfg.omega_max)
    params = init_params(rng_init, input_scale=scale,
                         output_scale=train_cfg.value_scale)
    target = params.copy()
    adam = Adam(params, lr=train_cfg.learning_rate)
    buffer = ReplayBuffer()
    result = TrainingResult(params=params, target=target, buffer=buffer)

    t_start = time.perf_counter()
    # Polyak-Ruppert tail average: the deployed parameters are the mean of
    # the iterates over the last quarter of the run. Adam's gradient-noise
    # floor leaves percent-level ripple on the value surface; the greedy
    # value-climbing controller rides on margins of that size, and the
    # average removes the ripple without changing what the fit converges to.
    avg = params.copy()
    avg_count = 0
    last_episode_reward = 0.0
    env = actor = None
    mirror_pending: list[Transition] = []
    episode_reward = 0.0

    def close_episode():
        nonlocal last_episode_reward, episode_reward
        buffer.add_episode(mirror_pending)
        mirror_pending.clear()
        last_episode_reward = episode_reward
        episode_reward = 0.0
        result.episodes += 1

    for step in range(total_steps):
        if env is None or env.done:
            if env is not None:
                close_episode()
            offset = float(rng_env.uniform(-init_offset, init_offset))
            speed = float(rng_env.uniform(0.0, mpc_cfg.v_max))
            along = float(rng_env.uniform(-init_offset, init_offset))
            # heading draw: without it the buffer never holds states with
            # large simultaneous heading and longitudinal error, and the
            # critic extrapolates a spurious value bump there that the
            # planner's brake/stall plans terminate in
            heading = float(rng_env.uniform(-init_heading, init_heading))
            phase = float(rng_env.uniform(0.0, 1.0))
            try:
                ep_ref = phase_shift(ref, phase)
            except ValueError:   # open track: no phase to randomize
                ep_ref = ref
            ep_cfg = replace(env_cfg,
                             max_steps=min(env_cfg.max_steps, episode_steps))
            env = TrackingEnv(ep_cfg, ep_ref,
                              default_initial_state(ep_cfg, ep_ref, offset,
                                                    speed=speed,
                                                    longitudinal_offset=along,
                                                    heading_offset=heading))
            actor = MpcActor(mpc_cfg, ep_ref, critic=params.copy())
            buffer.start_episode()
        s = env.observe()
        cmd, _, _ = actor.control_step(env.state, env.t)
        s_next, r, done, _ = env.step(*cmd)
        tr = Transition(s, cmd, r, s_next, done)
        buffer.add(tr)
        mirror_pending.append(tr.mirrored())
        episode_reward += r
        result.env_steps += 1

        due = (step + 1) % train_cfg.update_interval == 0
        if due and len(buffer) >= train_cfg.batch_size:
            # linear lr decay to 10%: the constant-lr Adam noise floor leaves
            # spurious slopes in flat directions of the value landscape, which
            # the greedy dmpc controller amplifies into steady-state offsets
            frac = (step + 1) / total_steps
            adam.lr = train_cfg.learning_rate * (1.0 - 0.9 * frac)
            ss, ys = buffer.sample_batch(rng_sample, target, train_cfg)
            before = params.copy()
            try:
                loss, grads = loss_and_grad(params, ss, ys,
                                            beta=train_cfg.beta,
                                            lam=train_cfg.lam)
                adam.step(params, grads)
            except FloatingPointError:
                params.weights[:] = before.weights
                params.biases[:] = before.biases
                result.diverged = True
                break
            new_target = polyak_update(target, params, train_cfg.rho)
            target.weights[:] = new_target.weights
            target.biases[:] = new_target.biases
            actor.set_critic(params.copy())
            if frac >= 0.75:
                avg_count += 1
                w = 1.0 / avg_count
                for a, p in zip(avg.weights, params.weights):
                    a += w * (p - a)
                for a, p in zip(avg.biases, params.biases):
                    a += w * (p - a)
            result.iterations += 1
            wall = time.perf_counter() - t_start if record_timing else 0.0
            result.curve_rows.append(",".join(repr(float(v)) for v in (
                result.iterations, loss, last_episode_reward,
                len(buffer), wall)))
    if mirror_pending:
        close_episode()
    if avg_count > 0 and not result.diverged:
        params.weights[:] = avg.weights
        params.biases[:] = avg.biases

    if curve_path is not None:
        with open(curve_path, "w") as f:
            f.write(result.curve_csv())
    if checkpoint_path is not None:
        meta = dict(checkpoint_meta or {})
        meta.setdefault("reward_mode", env_cfg.reward.mode)
        meta.update(seed=train_cfg.seed, iterations=result.iterations,
                    env_steps=result.env_steps, diverged=result.diverged)
        save_checkpoint(checkpoint_path, params, meta)
    return result


def ema(values, span: int = 50) -> np.ndarray:
    """Exponential moving average with smoothing 2/(span+1)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values
    alpha = 2.0 / (span + 1.0)
    out = np.empty_like(values)
    out[0] = values[0]
    for i in range(1, values.size):
        out[i] = alpha * values[i] + (1.0 - alpha) * out[i - 1]
    return out


def plateau_iteration(rewards, window: int = 50,
                      tol: float = 0.02) -> int | None:
    """First update index after which the reward EMA has flattened.

    Flat means every subsequent per-step EMA slope stays within
    ``tol * |plateau|`` of zero, where the plateau value is the final EMA.
    Returns a 1-based iteration index, or None if the curve never settles.
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size < 2:
        return None
    e = ema(rewards, span=window)
    plateau = e[-1]
    thresh = tol * max(abs(plateau), 1e-9)
    slopes = np.abs(np.diff(e))
    bad = np.nonzero(slopes > thresh)[0]
    if bad.size == 0:
        return 1
    first = int(bad[-1]) + 1
    if first >= slopes.size + 1:
        return None
    return first + 1
