"""Reduced-order quadruped model: rigid base with yaw/pitch and four point feet.

The base is impulse-driven while any foot is in contact and ballistic when
airborne. Feet kinematically track body-frame targets and are clamped to the
terrain surface, so they never penetrate. One step covers dt = 0.02 s (50 Hz
control). All stepping is pure: state in, state out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .kernels import dynamics_step_batch, pack_dyn_params
from .terrain import Heightfield, WaypointCourse, height_at

ACTION_DIM = 12  # (dx, dz) per foot, yaw rate, pitch rate, push gain, flight trigger
FOOT_ORDER = ("FL", "FR", "RL", "RR")


@dataclass(frozen=True)
class DynamicsConfig:
    dt: float = 0.02
    gravity: float = 9.81
    contact_eps: float = 0.02
    friction: float = 1.0
    stance_height: float = 0.26   # thigh-joint height when standing
    foot_half_x: float = 0.2      # half of the 0.40 m body length
    foot_half_y: float = 0.15
    v_max: float = 2.5            # commanded speed at full push gain
    yaw_rate_max: float = 2.5
    pitch_rate_max: float = 3.0
    foot_dx_scale: float = 0.15
    foot_dz_scale: float = 0.12
    impulse_max: float = 3.5      # vertical jump speed at full push gain
    impulse_fwd: float = 1.5
    flight_trigger: float = 0.5
    climb_rate: float = 1.0       # max kinematic base climb while supported
    max_slope: float = 0.9        # steepest walkable rise (tan), > the 37 deg ramp cap
    probe_dist: float = 0.12      # lookahead for the un-walkable-rise check
    min_clearance: float = 0.15   # base must clear a blocking rise by this much
    vz_damping: float = 0.25
    pitch_limit: float = 1.58     # just past the handstand pose
    penetration_tol: float = 0.01
    reset_lateral_range: float = 0.1
    reset_yaw_range: float = 0.3


@dataclass
class RobotState:
    base_pos: np.ndarray      # (3,)
    base_vel: np.ndarray      # (3,)
    yaw: float
    pitch: float
    yaw_rate: float
    pitch_rate: float
    feet: np.ndarray          # (4, 3) world, order FL FR RL RR
    contacts: np.ndarray      # (4,) bool
    time: float = 0.0

    def copy(self) -> "RobotState":
        return replace(
            self,
            base_pos=self.base_pos.copy(),
            base_vel=self.base_vel.copy(),
            feet=self.feet.copy(),
            contacts=self.contacts.copy(),
        )


def forward_vector(state: RobotState) -> np.ndarray:
    """Unit vector along the body's forward axis; points down in a handstand."""
    cy, sy = math.cos(state.yaw), math.sin(state.yaw)
    cp, sp = math.cos(state.pitch), math.sin(state.pitch)
    return np.array([cy * cp, sy * cp, -sp], dtype=np.float64)


def nominal_feet(pos, yaw: float, pitch: float, cfg: DynamicsConfig) -> np.ndarray:
    """World foot positions for the neutral stance at the given pose."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    feet = np.empty((4, 3), dtype=np.float64)
    for f in range(4):
        bx = cfg.foot_half_x if f < 2 else -cfg.foot_half_x
        by = cfg.foot_half_y if f in (0, 2) else -cfg.foot_half_y
        bz = -cfg.stance_height
        rx = cp * bx + sp * bz
        rz = -sp * bx + cp * bz
        feet[f, 0] = pos[0] + cy * rx - sy * by
        feet[f, 1] = pos[1] + sy * rx + cy * by
        feet[f, 2] = pos[2] + rz
    return feet


def detect_contacts(state: RobotState, hf: Heightfield) -> np.ndarray:
    """contact[i] iff foot i is at most contact_eps above the terrain."""
    ground = hf.height_at_batch(state.feet[:, 0], state.feet[:, 1])
    return state.feet[:, 2] <= ground + DynamicsConfig().contact_eps


def step(state: RobotState, action: np.ndarray, hf: Heightfield,
         dt: float = 0.02, cfg: DynamicsConfig | None = None,
         friction: float | None = None, mass_scale: float = 1.0) -> RobotState:
    """Advance one robot one control step (thin wrapper over the batch kernel)."""
    cfg = cfg or DynamicsConfig()
    if abs(dt - cfg.dt) > 1e-12:
        raise ConfigurationError(f"dt is fixed at {cfg.dt}")
    action = np.asarray(action, dtype=np.float64)
    if not (np.isfinite(action).all() and np.isfinite(state.base_pos).all()
            and np.isfinite(state.base_vel).all()):
        raise ContractViolation("NaN or inf in dynamics inputs")
    fr = cfg.friction if friction is None else friction
    out = dynamics_step_batch(
        state.base_pos[None], state.base_vel[None],
        np.array([state.yaw]), np.array([state.pitch]),
        state.feet[None], state.contacts[None], action[None],
        np.array([fr]), np.array([mass_scale]),
        hf.heights, hf.cell_size, hf.origin[0], hf.origin[1],
        pack_dyn_params(cfg),
    )
    pos, vel, yaw, pitch, yrate, prate, feet, contacts = out
    return RobotState(
        base_pos=pos[0], base_vel=vel[0], yaw=float(yaw[0]), pitch=float(pitch[0]),
        yaw_rate=float(yrate[0]), pitch_rate=float(prate[0]),
        feet=feet[0], contacts=contacts[0], time=state.time + cfg.dt,
    )


def reset(course: WaypointCourse, level: int, rng, hf: Heightfield,
          cfg: DynamicsConfig | None = None,
          randomize: bool = True) -> RobotState:
    """Spawn at a level's start waypoint in the nominal stance.

    Lateral offset and yaw are drawn uniformly from the configured ranges;
    pass ``randomize=False`` for the exact nominal spawn.
    """
    cfg = cfg or DynamicsConfig()
    if not 0 <= level < course.difficulty_levels:
        raise ConfigurationError(
            f"level {level} out of range [0, {course.difficulty_levels})"
        )
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    wp = course.waypoints[course.level_starts[level]]
    dy = rng.uniform(-cfg.reset_lateral_range, cfg.reset_lateral_range) if randomize else 0.0
    yaw = rng.uniform(-cfg.reset_yaw_range, cfg.reset_yaw_range) if randomize else 0.0
    x, y = float(wp[0]), float(wp[1] + dy)
    z = height_at(hf, x, y) + cfg.stance_height
    pos = np.array([x, y, z], dtype=np.float64)
    feet = nominal_feet(pos, yaw, 0.0, cfg)
    ground = hf.height_at_batch(feet[:, 0], feet[:, 1])
    feet[:, 2] = np.maximum(feet[:, 2], ground)
    state = RobotState(
        base_pos=pos,
        base_vel=np.zeros(3),
        yaw=yaw, pitch=0.0, yaw_rate=0.0, pitch_rate=0.0,
        feet=feet,
        contacts=feet[:, 2] <= ground + cfg.contact_eps,
        time=0.0,
    )
    return state


@dataclass
class BatchState:
    """State arrays for N robots, the layout the step kernel consumes."""

    pos: np.ndarray           # (N, 3)
    vel: np.ndarray           # (N, 3)
    yaw: np.ndarray           # (N,)
    pitch: np.ndarray         # (N,)
    yaw_rate: np.ndarray      # (N,)
    pitch_rate: np.ndarray    # (N,)
    feet: np.ndarray          # (N, 4, 3)
    contacts: np.ndarray      # (N, 4) bool
    time: float = 0.0

    @classmethod
    def zeros(cls, n: int) -> "BatchState":
        return cls(
            pos=np.zeros((n, 3)), vel=np.zeros((n, 3)),
            yaw=np.zeros(n), pitch=np.zeros(n),
            yaw_rate=np.zeros(n), pitch_rate=np.zeros(n),
            feet=np.zeros((n, 4, 3)), contacts=np.zeros((n, 4), dtype=bool),
        )

    @property
    def n(self) -> int:
        return self.pos.shape[0]


def step_batch(bs: BatchState, actions: np.ndarray, hf: Heightfield,
               cfg: DynamicsConfig, friction: np.ndarray,
               mass_scale: np.ndarray) -> BatchState:
    if not np.isfinite(actions).all():
        raise ContractViolation("NaN or inf in batched actions")
    pos, vel, yaw, pitch, yrate, prate, feet, contacts = dynamics_step_batch(
        bs.pos, bs.vel, bs.yaw, bs.pitch, bs.feet, bs.contacts, actions,
        friction, mass_scale,
        hf.heights, hf.cell_size, hf.origin[0], hf.origin[1],
        pack_dyn_params(cfg),
    )
    return BatchState(pos=pos, vel=vel, yaw=yaw, pitch=pitch,
                      yaw_rate=yrate, pitch_rate=prate,
                      feet=feet, contacts=contacts, time=bs.time + cfg.dt)
