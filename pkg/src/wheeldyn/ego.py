"""Egocentric frame management for sequential rollouts.

A rollout never hands the model absolute coordinates. Instead it tracks an
offset (the transform from the rollout's local frame to the global frame) and
re-expresses the recent pose history relative to that offset after every
step, so the model always sees the world from where the robot currently sits
and the current time is always zero. Three frame modes exist:

``ego``
    Full planar rigid transform (rotation + translation). The newest history
    pose is the origin with zero heading.
``translational``
    Translation only; headings stay absolute. Isolates how much the
    rotational part of the symmetry matters.
``none``
    No transform at all; the model sees raw global poses.

All scalar math routes through :mod:`wheeldyn.autodiff` dispatch so the same
functions run on floats and on tape nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import Command, Pose
from .errors import DataError

MODES = ("ego", "translational", "none")


@dataclass(frozen=True)
class EgoOffset:
    """Transform from the rollout-local frame to the global frame."""

    dx: float
    dy: float
    dtheta: float

    @staticmethod
    def identity():
        return EgoOffset(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class EgoState:
    """Offset plus the H most recent poses expressed in the local frame.

    ``history`` is ordered oldest to newest. In ``ego`` mode the newest
    entry is exactly the origin after every rebase.
    """

    offset: EgoOffset
    history: tuple
    mode: str = "ego"

    @property
    def H(self):
        return len(self.history)


def check_mode(mode):
    if mode not in MODES:
        raise DataError(f"unknown frame mode {mode!r}; expected one of {MODES}")
    return mode


def rotation_matrix(dtheta):
    """3x3 planar transform rotating (x, y) and passing theta through."""
    c, s = np.cos(dtheta), np.sin(dtheta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def from_ego(r_hat, off):
    """Local pose to global: rotate by the offset heading, then translate."""
    c = ad.cos(off.dtheta)
    s = ad.sin(off.dtheta)
    return Pose(off.dx + c * r_hat.x - s * r_hat.y,
                off.dy + s * r_hat.x + c * r_hat.y,
                off.dtheta + r_hat.theta)


def to_ego(q, off):
    """Global pose to local; exact inverse of :func:`from_ego`."""
    c = ad.cos(off.dtheta)
    s = ad.sin(off.dtheta)
    dx = q.x - off.dx
    dy = q.y - off.dy
    return Pose(c * dx + s * dy,
                -s * dx + c * dy,
                q.theta - off.dtheta)


def frame_to_global(p, off, mode="ego"):
    if mode == "ego":
        return from_ego(p, off)
    if mode == "translational":
        return Pose(off.dx + p.x, off.dy + p.y, p.theta)
    return p


def global_to_frame(q, off, mode="ego"):
    if mode == "ego":
        return to_ego(q, off)
    if mode == "translational":
        return Pose(q.x - off.dx, q.y - off.dy, q.theta)
    return q


def _offset_through(anchor, off, mode):
    """New offset whose local origin is ``anchor`` (a pose in the old frame)."""
    if mode == "ego":
        g = from_ego(anchor, off)
        return EgoOffset(g.x, g.y, g.theta)
    if mode == "translational":
        return EgoOffset(off.dx + anchor.x, off.dy + anchor.y, 0.0)
    return off


def initial_state(recent_poses, mode="ego"):
    """Build a warmed-up state from the last H observed global poses.

    ``recent_poses`` is ordered oldest to newest; the newest becomes the
    local origin (per mode), and all H poses are re-expressed locally.
    """
    check_mode(mode)
    if not recent_poses:
        raise DataError("need at least one pose to anchor a rollout")
    anchor = recent_poses[-1]
    off = _offset_through(anchor, EgoOffset.identity(), mode)
    history = tuple(global_to_frame(q, off, mode) for q in recent_poses)
    return EgoState(offset=off, history=history, mode=mode)


def advance_offset(st, r_new):
    """Fold a new local-frame prediction into the state.

    The new local origin is the oldest pose retained after the shift (for
    H=1 that is the prediction itself, so the offset simply becomes the
    prediction's global pose). Every retained pose is re-expressed relative
    to the new origin.
    """
    candidates = st.history[1:] + (r_new,)
    anchor = candidates[0]
    new_off = _offset_through(anchor, st.offset, st.mode)
    if st.mode == "none":
        history = candidates
    elif len(candidates) == 1:
        # Re-expressing the anchor relative to itself is the origin by
        # construction; skip the round trip to keep it exact on tape.
        origin = Pose(0.0, 0.0, 0.0) if st.mode == "ego" else Pose(0.0, 0.0, anchor.theta)
        history = (origin,)
    else:
        history = tuple(global_to_frame(frame_to_global(c, st.offset, st.mode), new_off, st.mode)
                        for c in candidates)
    return EgoState(offset=new_off, history=history, mode=st.mode)


def reorigin_timestamps(cmds, now):
    """Shift command stamps so the present moment is time zero.

    Returns commands stamped with t - now (all non-positive). A command
    from the future is a protocol violation and raises.
    """
    out = []
    for c in cmds:
        if c.t > now:
            raise DataError(f"command at t={c.t} lies in the future of now={now}")
        out.append(Command(c.t - now, c.s_c, c.omega_c))
    return out
