"""Hand-formulated unicycle dynamics with actuator lag, slip gains and latency.

The chassis is modeled as a differential-drive unicycle: forward speed s and
yaw rate omega, pure rolling, explicit Euler integration at the pose frame
rate. Actuators respond to commands through a per-channel first-order lag
toward a slip-scaled target, and the command feed can carry a fixed latency.
Seven scalar parameters cover the whole model.

Every function here works both on plain floats and on autodiff tape nodes:
trig goes through :mod:`wheeldyn.autodiff` dispatch and the lag coefficient
is computed off-tape (time constants are never differentiated, they are fit
by derivative-free search).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from . import autodiff as ad
from .core import ChassisTwist, Pose
from .errors import DataError


@dataclass(frozen=True)
class RobotParams:
    """Physical and actuation parameters of the formulated model.

    r: wheel radius, meters.
    R_half: half the axle track (center to wheel), meters.
    tau_s / tau_w: first-order time constants of the speed and yaw-rate
        actuator response, seconds; zero means instantaneous.
    slip_gain_s / slip_gain_w: multiplicative command attenuation, the
        steady-state ratio of achieved to commanded velocity.
    cmd_latency: delay between a command's timestamp and the actuators
        seeing it, seconds.
    """

    r: float = 0.1
    R_half: float = 0.25
    tau_s: float = 0.0
    tau_w: float = 0.0
    slip_gain_s: float = 1.0
    slip_gain_w: float = 1.0
    cmd_latency: float = 0.0

    def __post_init__(self):
        if not (self.r > 0.0):
            raise DataError(f"wheel radius must be positive, got {self.r}")
        if not (self.R_half > 0.0):
            raise DataError(f"half-axle distance must be positive, got {self.R_half}")
        if self.tau_s < 0.0 or self.tau_w < 0.0:
            raise DataError("actuator time constants must be non-negative")
        for name, g in (("slip_gain_s", self.slip_gain_s), ("slip_gain_w", self.slip_gain_w)):
            if not (0.0 < g <= 2.0):
                raise DataError(f"{name} must lie in (0, 2], got {g}")
        if self.cmd_latency < 0.0:
            raise DataError("command latency must be non-negative")

    FIELD_NAMES = ("r", "R_half", "tau_s", "tau_w", "slip_gain_s", "slip_gain_w", "cmd_latency")

    def as_tuple(self):
        return tuple(getattr(self, name) for name in self.FIELD_NAMES)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_tuple(cls, values):
        return cls(**dict(zip(cls.FIELD_NAMES, map(float, values))))


@dataclass(frozen=True)
class WheelSpeeds:
    w_l: float
    w_r: float


def twist_to_wheels(tw, p):
    """Chassis twist to wheel angular velocities under pure rolling."""
    return WheelSpeeds(w_l=(tw.s - tw.omega * p.R_half) / p.r,
                       w_r=(tw.s + tw.omega * p.R_half) / p.r)


def wheels_to_twist(ws, p):
    return ChassisTwist(s=p.r * (ws.w_l + ws.w_r) / 2.0,
                        omega=p.r * (ws.w_r - ws.w_l) / (2.0 * p.R_half))


def kinematics_step(q, tw, dt):
    """One explicit-Euler unicycle step; differentiable in pose and twist."""
    c = ad.cos(q.theta)
    s = ad.sin(q.theta)
    return Pose(q.x + tw.s * c * dt,
                q.y + tw.s * s * dt,
                q.theta + tw.omega * dt)


def lag_update(current, target, dt, tau):
    """First-order response of ``current`` toward ``target`` over ``dt``.

    Exact for a constant target (uses the integrated exponential), so the
    step response hits 1 - 1/e of the target after exactly tau seconds
    regardless of how the interval is partitioned. ``tau`` below one
    microsecond counts as instantaneous.
    """
    if tau < 1e-6:
        return target
    alpha = 1.0 - math.exp(-dt / tau)
    return current + (target - current) * alpha


def latency_bin(K, T, latency):
    """Index of the newest command bin at least ``latency`` seconds old.

    Bins are zero-order-hold samples at offsets -(K-1-j)*T/K for j=0..K-1
    (oldest first, newest at offset 0). Latency is rounded up to the bin
    grid; anything beyond the window clamps to the oldest bin.
    """
    if latency <= 0.0:
        return K - 1
    step = T / K
    behind = math.ceil(latency / step - 1e-9)
    return max(0, K - 1 - behind)


def formulated_step(q, tw_state, window, p, dt):
    """Advance the formulated model by one pose interval.

    Reads the latency-shifted command from the window, relaxes the actuator
    state toward the slip-scaled target, then Euler-integrates the pose with
    the updated twist. Returns ``(new_pose, new_twist)``.
    """
    if window.K < 1:
        raise DataError("command window must hold at least one bin")
    j = latency_bin(window.K, window.T, p.cmd_latency)
    s_c = float(window.bins[j][0])
    w_c = float(window.bins[j][1])
    s_new = lag_update(tw_state.s, p.slip_gain_s * s_c, dt, p.tau_s)
    w_new = lag_update(tw_state.omega, p.slip_gain_w * w_c, dt, p.tau_w)
    tw_new = ChassisTwist(s_new, w_new)
    return kinematics_step(q, tw_new, dt), tw_new


def constant_twist_arc(s, omega, t):
    """Closed-form pose after ``t`` seconds of constant twist from the origin.

    Reference for integration-error checks; not used by any model.
    """
    if abs(omega) < 1e-12:
        return Pose(s * t, 0.0, 0.0)
    return Pose(s / omega * math.sin(omega * t),
                s / omega * (1.0 - math.cos(omega * t)),
                omega * t)
