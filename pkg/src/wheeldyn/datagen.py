"""Synthetic ground-truth oracle and the unattended collection protocol.

The oracle stands in for a physical robot plus a motion-capture rig: it runs
the formulated dynamics with hidden parameters, injects per-step wheel slip
(multiplicative lognormal) into the motion, and observes poses through
additive capture noise while the latent state stays clean. A simple
navigation loop drives it between uniformly sampled targets, producing the
asynchronous pose/command streams the learners consume.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import analytical
from .analytical import RobotParams, twist_to_wheels, wheels_to_twist
from .core import (ChassisTwist, Dataset, Pose, TICKS_PER_SECOND, Trajectory)
from .errors import DataError
from .models import build_window

# Window geometry the oracle's latency lookup shares with the models, so a
# learner with matching RobotParams can reproduce noise-free data exactly.
ORACLE_T = 0.2
ORACLE_K = 5

ARRIVE_POS = 0.05
ARRIVE_ANG = 0.1
TURN_THRESHOLD = 0.3
SLOW_RADIUS = 0.5
N_SPEED_LEVELS = 5
N_TURN_LEVELS = 5


@dataclass(frozen=True)
class OracleConfig:
    true_params: RobotParams = field(default_factory=RobotParams)
    slip_noise_std: float = 0.0
    pose_noise_std: float = 0.0
    pose_rate_hz: float = 60.0
    command_rate_hz: float = 25.0
    safe_area: tuple = (-2.0, -2.0, 2.0, 2.0)
    s_max: float = 0.6
    omega_max: float = 1.2
    stuck_timeout: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.pose_rate_hz <= 0 or self.command_rate_hz <= 0:
            raise DataError("sample rates must be positive")
        if self.slip_noise_std < 0 or self.pose_noise_std < 0:
            raise DataError("noise levels must be non-negative")
        xmin, ymin, xmax, ymax = self.safe_area
        if xmax < xmin or ymax < ymin:
            raise DataError("safe_area must satisfy xmin <= xmax, ymin <= ymax")
        if self.stuck_timeout <= 0:
            raise DataError("stuck_timeout must be positive")


@dataclass(frozen=True)
class NavTarget:
    x: float
    y: float
    theta: float


@dataclass
class OracleState:
    """Latent simulator state: pose, actuator twist, current time in ticks."""

    tick: int
    pose: Pose
    twist: ChassisTwist


def wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def grid_ticks(n, rate_hz):
    """n sample times of a rate_hz grid as rounded microsecond ticks."""
    rate = float(rate_hz)
    return np.asarray(np.rint(np.arange(n) * (TICKS_PER_SECOND / rate)),
                      dtype=np.int64)


def sample_target(cfg, rng):
    """Uniform draw over safe_area x [-pi, pi)."""
    xmin, ymin, xmax, ymax = cfg.safe_area
    return NavTarget(x=float(rng.uniform(xmin, xmax)),
                     y=float(rng.uniform(ymin, ymax)),
                     theta=float(rng.uniform(-math.pi, math.pi)))


def _quantize(v, levels):
    return float(levels[int(np.argmin(np.abs(levels - v)))])


def command_vocabulary(cfg):
    """The discrete command levels the controller emits."""
    s_levels = np.linspace(0.0, cfg.s_max, N_SPEED_LEVELS)
    w_levels = np.linspace(-cfg.omega_max, cfg.omega_max, N_TURN_LEVELS)
    return s_levels, w_levels


def nav_controller(pose, target, cfg):
    """Turn-then-drive policy over a quantized command vocabulary.

    Large bearing errors get a pure rotation, otherwise a forward command
    with a small quantized heading correction; once the position is reached
    the heading is aligned with a slower rotation. Output clusters into
    forward / left-turn / right-turn groups by construction.
    """
    s_levels, w_levels = command_vocabulary(cfg)
    dx = target.x - pose.x
    dy = target.y - pose.y
    dist = math.hypot(dx, dy)
    if dist > ARRIVE_POS:
        err = wrap_angle(math.atan2(dy, dx) - pose.theta)
        if abs(err) > TURN_THRESHOLD:
            return 0.0, math.copysign(cfg.omega_max, err)
        s = _quantize(cfg.s_max * min(1.0, dist / SLOW_RADIUS), s_levels)
        w = _quantize(float(np.clip(2.0 * err, -cfg.omega_max, cfg.omega_max)),
                      w_levels)
        return s, w
    err = wrap_angle(target.theta - pose.theta)
    if abs(err) > ARRIVE_ANG:
        return 0.0, math.copysign(_quantize(0.5 * cfg.omega_max, w_levels), err)
    return 0.0, 0.0


def _arrived(pose, target):
    return (math.hypot(target.x - pose.x, target.y - pose.y) <= ARRIVE_POS
            and abs(wrap_angle(target.theta - pose.theta)) <= ARRIVE_ANG)


def oracle_step(state, cmd_ticks, cmd_vals, cfg, dt, rng):
    """Advance the latent state one pose interval and observe it.

    Runs the formulated dynamics with the hidden parameters, perturbs the
    applied motion with per-wheel lognormal slip (the actuator state itself
    stays clean), clamps the latent position to the safe area's walls, and
    returns ``(new_state, observed_xytheta)``. Observation noise is Gaussian
    per component (theta in radians), clipped at three sigmas so recorded
    poses stay within the inflated safe area.
    """
    p = cfg.true_params
    window = build_window(cmd_ticks, cmd_vals, state.tick, ORACLE_T, ORACLE_K)
    j = analytical.latency_bin(ORACLE_K, ORACLE_T, p.cmd_latency)
    s_c = float(window.bins[j][0])
    w_c = float(window.bins[j][1])
    s1 = analytical.lag_update(state.twist.s, p.slip_gain_s * s_c, dt, p.tau_s)
    w1 = analytical.lag_update(state.twist.omega, p.slip_gain_w * w_c, dt, p.tau_w)
    applied = ChassisTwist(s1, w1)
    if cfg.slip_noise_std > 0.0:
        ws = twist_to_wheels(applied, p)
        m_l, m_r = np.exp(rng.normal(0.0, cfg.slip_noise_std, 2))
        applied = wheels_to_twist(type(ws)(ws.w_l * m_l, ws.w_r * m_r), p)
    q = analytical.kinematics_step(state.pose, applied, dt)
    xmin, ymin, xmax, ymax = cfg.safe_area
    q = Pose(min(max(q.x, xmin), xmax), min(max(q.y, ymin), ymax), q.theta)
    new_state = OracleState(tick=state.tick + int(round(dt * TICKS_PER_SECOND)),
                            pose=q, twist=ChassisTwist(s1, w1))
    obs = np.array([q.x, q.y, q.theta])
    if cfg.pose_noise_std > 0.0:
        eps = rng.normal(0.0, cfg.pose_noise_std, 3)
        obs += np.clip(eps, -3.0 * cfg.pose_noise_std, 3.0 * cfg.pose_noise_std)
    return new_state, obs


def collect(cfg, duration):
    """Run the unattended collection loop for ``duration`` seconds.

    Targets are sampled uniformly in the safe area; the navigation loop
    drives toward them at the command rate and resets the target on arrival
    or after ``stuck_timeout`` seconds. Poses are recorded at the pose rate
    with observation noise; the clean latent trajectory rides along on the
    returned Dataset. Fully deterministic in (cfg, duration).
    """
    if duration <= 0:
        raise DataError("collection duration must be positive")
    # separate streams so the latent trajectory and command sequence do not
    # depend on the observation noise level
    rng_sim = np.random.default_rng([cfg.seed, 0])
    rng_obs = np.random.default_rng([cfg.seed, 1])
    n_poses = int(round(duration * cfg.pose_rate_hz))
    n_cmds = int(round(duration * cfg.command_rate_hz))
    pose_ticks = grid_ticks(n_poses, cfg.pose_rate_hz)
    cmd_ticks = grid_ticks(n_cmds, cfg.command_rate_hz)
    cmd_vals = np.zeros((n_cmds, 2))
    obs = np.empty((n_poses, 3))
    latent = np.empty((n_poses, 3))
    xmin, ymin, xmax, ymax = cfg.safe_area
    state = OracleState(tick=0,
                        pose=Pose(0.5 * (xmin + xmax), 0.5 * (ymin + ymax), 0.0),
                        twist=ChassisTwist(0.0, 0.0))
    target = None
    target_tick = 0
    resets = 0
    stuck_ticks = int(round(cfg.stuck_timeout * TICKS_PER_SECOND))
    quiet = dataclasses.replace(cfg, pose_noise_std=0.0)
    ci = 0
    for pi in range(n_poses):
        # issue every command due at or before this pose sample
        while ci < n_cmds and cmd_ticks[ci] <= pose_ticks[pi]:
            if (target is None or _arrived(state.pose, target)
                    or cmd_ticks[ci] - target_tick >= stuck_ticks):
                target = sample_target(cfg, rng_sim)
                target_tick = cmd_ticks[ci]
                resets += 1
            cmd_vals[ci] = nav_controller(state.pose, target, cfg)
            ci += 1
        latent[pi] = (state.pose.x, state.pose.y, state.pose.theta)
        if cfg.pose_noise_std > 0.0:
            eps = rng_obs.normal(0.0, cfg.pose_noise_std, 3)
            obs[pi] = latent[pi] + np.clip(eps, -3.0 * cfg.pose_noise_std,
                                           3.0 * cfg.pose_noise_std)
        else:
            obs[pi] = latent[pi]
        if pi + 1 < n_poses:
            dt = (pose_ticks[pi + 1] - pose_ticks[pi]) / TICKS_PER_SECOND
            state, _ = oracle_step(state, cmd_ticks[:ci], cmd_vals[:ci], quiet,
                                   dt, rng_sim)
    t = pose_ticks / TICKS_PER_SECOND
    poses = Trajectory(t, obs, np.array([0], dtype=np.int64), ticks=pose_ticks)
    latent_traj = Trajectory(t, latent, np.array([0], dtype=np.int64),
                             ticks=pose_ticks, validate=False)
    meta = {"s_max": float(cfg.s_max), "omega_max": float(cfg.omega_max),
            "pose_rate_hz": float(cfg.pose_rate_hz),
            "command_rate_hz": float(cfg.command_rate_hz),
            "target_resets": int(resets), "seed": int(cfg.seed),
            "duration_s": float(duration)}
    return Dataset(poses, cmd_ticks / TICKS_PER_SECOND, cmd_vals, meta,
                   latent_traj, cmd_ticks=cmd_ticks)
