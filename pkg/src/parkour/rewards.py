"""Inner-product reward terms, regularization penalties, and rollout metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDirectionError
from .terrain import WaypointCourse

DEGENERATE_DIST = 1e-6


@dataclass(frozen=True)
class RewardConfig:
    w_tracking: float = 1.5
    w_clearance: float = 1.0
    w_stylized: float = 1.0
    w_rate: float = 0.005      # action rate-of-change penalty
    w_mag: float = 0.01        # action magnitude penalty
    w_vz: float = 0.001        # vertical base velocity penalty
    waypoint_radius: float = 0.3


@dataclass
class RewardTerms:
    tracking: float
    clearance: float
    stylized: float
    regularization: float
    weights: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        w = self.weights
        return (w["tracking"] * self.tracking + w["clearance"] * self.clearance
                + w["stylized"] * self.stylized
                + w["regularization"] * self.regularization)

    def as_dict(self) -> dict[str, float]:
        return {
            "tracking": self.tracking,
            "clearance": self.clearance,
            "stylized": self.stylized,
            "regularization": self.regularization,
            "total": self.total,
        }


def waypoint_direction(p, x) -> np.ndarray:
    """Unit 2-vector from the robot's planar position toward the next waypoint."""
    d = np.asarray(p, dtype=np.float64)[:2] - np.asarray(x, dtype=np.float64)[:2]
    n = math.hypot(d[0], d[1])
    if n < DEGENERATE_DIST:
        raise DegenerateDirectionError(
            "robot is on the waypoint; advance the waypoint before computing a heading"
        )
    return d / n


def tracking_reward(v, d_w, v_cmd: float) -> float:
    """World-frame velocity projected on the waypoint direction, capped at v_cmd."""
    d_w = np.asarray(d_w, dtype=np.float64)
    assert abs(np.hypot(d_w[0], d_w[1]) - 1.0) < 1e-6, "heading must be unit length"
    v = np.asarray(v, dtype=np.float64)
    return float(min(v[0] * d_w[0] + v[1] * d_w[1], v_cmd))


def clearance_penalty(contacts, feet_xy, edge_mask_lookup) -> float:
    """-1 for every grounded foot standing on an edge-masked cell."""
    total = 0
    for c, p in zip(contacts, feet_xy):
        if c and edge_mask_lookup(p[0], p[1]):
            total += 1
    return float(-total)


def stylized_reward(fwd, c_hat, W: int) -> float:
    """Squared half-cosine alignment of the body's forward axis, gated by W."""
    fwd = np.asarray(fwd, dtype=np.float64)
    c_hat = np.asarray(c_hat, dtype=np.float64)
    assert abs(np.linalg.norm(fwd) - 1.0) < 1e-6
    assert abs(np.linalg.norm(c_hat) - 1.0) < 1e-6
    return float(W * (0.5 * float(fwd @ c_hat) + 0.5) ** 2)


def regularization_penalty(prev_action, action, base_vel,
                           cfg: RewardConfig) -> float:
    """Generic quadratic smoothness penalties on the action and vertical speed."""
    prev_action = np.asarray(prev_action, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    vz = float(np.asarray(base_vel, dtype=np.float64)[2])
    da = action - prev_action
    return float(-(cfg.w_rate * float(da @ da)
                   + cfg.w_mag * float(action @ action)
                   + cfg.w_vz * vz * vz))


def advance_waypoint(course: WaypointCourse, wp_index: int, x, y,
                     radius: float) -> int:
    """Move the heading target forward while the robot sits inside its radius."""
    wp = course.waypoints
    last = wp.shape[0] - 1
    while wp_index < last:
        dx = wp[wp_index, 0] - x
        dy = wp[wp_index, 1] - y
        if dx * dx + dy * dy <= radius * radius:
            wp_index += 1
        else:
            break
    return wp_index


def total_reward(state, prev_state, action, command, course: WaypointCourse,
                 hf, wp_index: int, cfg: RewardConfig,
                 prev_action=None) -> tuple[RewardTerms, int]:
    """Evaluate every term for one robot; advances the waypoint target first.

    Returns the terms and the (possibly advanced) waypoint index.
    """
    from .dynamics import forward_vector  # local import to avoid a cycle

    x, y = float(state.base_pos[0]), float(state.base_pos[1])
    wp_index = advance_waypoint(course, wp_index, x, y, cfg.waypoint_radius)
    d_w = waypoint_direction(course.waypoints[wp_index], (x, y))
    tracking = tracking_reward(state.base_vel[:2], d_w, command.v_cmd)
    clearance = clearance_penalty(
        state.contacts, state.feet[:, :2],
        lambda px, py: bool(hf.edge_at_batch(np.array([px]), np.array([py]))[0]),
    )
    stylized = stylized_reward(forward_vector(state), command.c_hat, command.W)
    if prev_action is None:
        prev_action = np.zeros_like(action)
    reg = regularization_penalty(prev_action, action, state.base_vel, cfg)
    terms = RewardTerms(
        tracking=tracking, clearance=clearance, stylized=stylized,
        regularization=reg,
        weights={
            "tracking": cfg.w_tracking, "clearance": cfg.w_clearance,
            "stylized": cfg.w_stylized, "regularization": 1.0,
        },
    )
    return terms, wp_index


# ---------------------------------------------------------------------------
# evaluation metrics
# ---------------------------------------------------------------------------

def per_robot_metrics(max_wp_index: np.ndarray, edge_counts: list[np.ndarray],
                      n_waypoints: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-robot normalized progress and mean per-step edge violations."""
    mxd = np.asarray(max_wp_index, dtype=np.float64) / (n_waypoints - 1)
    mev = np.array([float(np.mean(c)) if len(c) else 0.0 for c in edge_counts])
    return mxd, mev


def compute_metrics(trajectories, course: WaypointCourse) -> tuple[float, float]:
    """Batch metrics: mean normalized waypoint progress and mean edge violation.

    ``trajectories`` is a sequence of per-robot records with ``max_wp_index``
    (int) and ``edge_counts`` (per-step grounded-feet-on-edge counts).
    """
    if len(trajectories) == 0:
        raise ValueError("metrics need at least one trajectory")
    max_wp = np.array([t["max_wp_index"] for t in trajectories])
    counts = [np.asarray(t["edge_counts"]) for t in trajectories]
    mxd, mev = per_robot_metrics(max_wp, counts, course.n_waypoints)
    return float(mxd.mean()), float(mev.mean())
