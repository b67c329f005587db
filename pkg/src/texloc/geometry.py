"""Planar rigid poses and localization success criteria.

A pose maps points from its local frame into the parent frame: first rotate
by ``theta``, then translate by ``(x, y)``. Units are pixels for translation
and radians for ``theta``, which is always normalized to the half-open
interval (-pi, pi]. Angle thresholds at the API boundary are expressed in
degrees because that is how tolerances are usually quoted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TAU = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle in radians to (-pi, pi]."""
    return math.pi - (math.pi - theta) % TAU


@dataclass(frozen=True)
class Pose2D:
    """SE(2) pose: translation in pixels, rotation in radians."""

    x: float
    y: float
    theta: float

    def normalized(self) -> "Pose2D":
        return Pose2D(self.x, self.y, wrap_angle(self.theta))


@dataclass(frozen=True)
class SuccessThresholds:
    """Acceptance limits for a pose estimate.

    max_position_error is Euclidean, in pixels; max_orientation_error_deg is
    the absolute wrapped angular difference, in degrees.
    """

    max_position_error: float = 30.0
    max_orientation_error_deg: float = 1.5


DEFAULT_THRESHOLDS = SuccessThresholds()


def identity_pose() -> Pose2D:
    return Pose2D(0.0, 0.0, 0.0)


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Compose two poses: the result applies ``b`` first, then ``a``."""
    c = math.cos(a.theta)
    s = math.sin(a.theta)
    return Pose2D(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        wrap_angle(a.theta + b.theta),
    )


def inverse(p: Pose2D) -> Pose2D:
    """Pose mapping the parent frame back into ``p``'s local frame."""
    c = math.cos(p.theta)
    s = math.sin(p.theta)
    return Pose2D(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), wrap_angle(-p.theta))


def transform_point(p: Pose2D, x: float, y: float) -> tuple[float, float]:
    """Map a local-frame point into the parent frame of ``p``."""
    c = math.cos(p.theta)
    s = math.sin(p.theta)
    return (p.x + c * x - s * y, p.y + s * x + c * y)


def pose_error(estimate: Pose2D, truth: Pose2D) -> tuple[float, float]:
    """Position error in pixels and orientation error in degrees.

    The orientation error is wrapped, so it always lies in [0, 180].
    """
    dpos = math.hypot(estimate.x - truth.x, estimate.y - truth.y)
    dang = abs(wrap_angle(estimate.theta - truth.theta))
    return dpos, math.degrees(dang)


def is_success(
    estimate: Pose2D, truth: Pose2D, thresholds: SuccessThresholds = DEFAULT_THRESHOLDS
) -> bool:
    """True when both error components are within limits (inclusive)."""
    dpos, ddeg = pose_error(estimate, truth)
    return dpos <= thresholds.max_position_error and ddeg <= thresholds.max_orientation_error_deg
