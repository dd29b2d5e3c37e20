"""Batched parkour environment tying terrain, dynamics, sensing, and rewards.

One instance simulates N robots on a shared course. Robots reset
independently at episode end (training) or freeze in place for metric
purposes (evaluation). Everything is driven by one seeded generator, so runs
are reproducible for a fixed robot count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .curriculum import CurriculumState
from .dynamics import BatchState, DynamicsConfig, nominal_feet, step_batch
from .observations import ObsLayout, PROPRIO_DIM, wrap_angle
from .rewards import RewardConfig
from .sensing import NoiseConfig, default_scandot_pattern, sample_scandots_batch
from .terrain import Heightfield, WaypointCourse

FALL_Z = -0.3


@dataclass
class Command:
    v_cmd: float
    heading: float
    W: int
    c_hat: np.ndarray


class ParkourEnv:
    """Vectorized simulation of N robots on one obstacle course."""

    def __init__(self, hf: Heightfield, course: WaypointCourse, cfg: RunConfig,
                 n_robots: int, seed: int, variant: str = "ours",
                 eval_mode: bool = False, curriculum: bool = True):
        self.hf = hf
        self.course = course
        self.cfg = cfg
        self.n = n_robots
        self.variant = variant
        self.eval_mode = eval_mode
        self.dyn = DynamicsConfig()
        self.rew_cfg = RewardConfig(
            w_tracking=cfg.rewards.w_tracking,
            w_clearance=0.0 if variant == "noclear" else cfg.rewards.w_clearance,
            w_stylized=cfg.rewards.w_stylized,
            w_rate=cfg.rewards.w_rate, w_mag=cfg.rewards.w_mag,
            w_vz=cfg.rewards.w_vz, waypoint_radius=cfg.rewards.waypoint_radius,
        )
        self.pattern = default_scandot_pattern()
        self.noise = NoiseConfig(cfg.sensing.noise_sigma_z,
                                 cfg.sensing.noise_drift_sigma)
        self.rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.T_steps = int(round(cfg.episode.duration / self.dyn.dt))
        use_curriculum = curriculum and not eval_mode and course.difficulty_levels > 1
        self.curriculum = (CurriculumState(n_robots, course.difficulty_levels - 1)
                           if use_curriculum else None)

        n = n_robots
        self.state = BatchState.zeros(n)
        self.wp_index = np.zeros(n, dtype=np.int64)
        self.max_wp = np.zeros(n, dtype=np.int64)
        self.ep_step = np.zeros(n, dtype=np.int64)
        self.spawn_x = np.zeros(n)
        self.level = np.zeros(n, dtype=np.int64)
        self.v_cmd = np.zeros(n)
        self.w_flag = np.zeros(n, dtype=np.int64)
        self.c_hat = np.tile(np.array([0.0, 0.0, -1.0]), (n, 1))
        self.friction = np.ones(n)
        self.mass_scale = np.ones(n)
        self.push_mag = np.zeros(n)
        self.prev_action = np.zeros((n, 12))
        self.alive = np.ones(n, dtype=bool)
        self.edge_counts: list[list[int]] = [[] for _ in range(n)]
        self.hist_len = cfg.learning.proprio_history
        self.proprio_hist = np.zeros((n, self.hist_len, PROPRIO_DIM))
        # fixed-latency delay line; equivalent to one LatencyQueue per robot
        # under the fixed 50 Hz push/poll schedule
        self.proprio_delay = max(1, int(math.ceil(
            cfg.sensing.proprio_latency / self.dyn.dt - 1e-9)))
        self._proprio_ring = np.zeros((self.proprio_delay + 1, n, PROPRIO_DIM))
        self._ring_idx = 0
        self.delayed_proprio = np.zeros((n, PROPRIO_DIM))
        self.global_step = 0
        self.trace: list[dict] | None = None
        for i in range(n):
            self._respawn(i)

    # -- lifecycle ----------------------------------------------------------

    def _draw_episode(self, i: int):
        lo, hi = self.cfg.episode.v_cmd_range
        self.v_cmd[i] = self.rng.uniform(lo, hi)
        self.w_flag[i] = int(self.rng.random() < self.cfg.episode.w_prob)
        dr = self.cfg.domain_rand
        self.friction[i] = self.rng.uniform(*dr.friction_range)
        self.mass_scale[i] = self.rng.uniform(*dr.mass_scale_range)
        self.push_mag[i] = self.rng.uniform(*dr.push_magnitude_range)

    def _respawn(self, i: int):
        level = self.curriculum.assign_spawn(i) if self.curriculum else 0
        self.level[i] = level
        wp_idx = self.course.level_starts[level]
        wp = self.course.waypoints[wp_idx]
        dy = self.rng.uniform(-self.dyn.reset_lateral_range, self.dyn.reset_lateral_range)
        yaw = self.rng.uniform(-self.dyn.reset_yaw_range, self.dyn.reset_yaw_range)
        x, y = float(wp[0]), float(wp[1] + dy)
        ground = float(self.hf.height_at_batch(np.array([x]), np.array([y]))[0])
        pos = np.array([x, y, ground + self.dyn.stance_height])
        self.state.pos[i] = pos
        self.state.vel[i] = 0.0
        self.state.yaw[i] = yaw
        self.state.pitch[i] = 0.0
        self.state.yaw_rate[i] = 0.0
        self.state.pitch_rate[i] = 0.0
        feet = nominal_feet(pos, yaw, 0.0, self.dyn)
        gf = self.hf.height_at_batch(feet[:, 0], feet[:, 1])
        feet[:, 2] = np.maximum(feet[:, 2], gf)
        self.state.feet[i] = feet
        self.state.contacts[i] = feet[:, 2] <= gf + self.dyn.contact_eps
        self.wp_index[i] = self._advance_one(wp_idx, x, y)
        self.max_wp[i] = self.wp_index[i]
        self.ep_step[i] = 0
        self.spawn_x[i] = x
        self.prev_action[i] = 0.0
        self._draw_episode(i)
        p0 = self._proprio_rows()[i]
        self.proprio_hist[i] = p0[None, :]
        self._proprio_ring[:, i] = p0[None, :]
        self.delayed_proprio[i] = p0

    def _advance_one(self, idx: int, x: float, y: float) -> int:
        wp = self.course.waypoints
        r2 = self.rew_cfg.waypoint_radius ** 2
        last = wp.shape[0] - 1
        while idx < last:
            dx = wp[idx, 0] - x
            dy = wp[idx, 1] - y
            if dx * dx + dy * dy <= r2:
                idx += 1
            else:
                break
        return idx

    # -- observation construction -------------------------------------------

    def _proprio_rows(self) -> np.ndarray:
        c, s = np.cos(self.state.yaw), np.sin(self.state.yaw)
        vx, vy = self.state.vel[:, 0], self.state.vel[:, 1]
        rows = np.empty((self.n, PROPRIO_DIM))
        rows[:, 0] = c * vx + s * vy
        rows[:, 1] = -s * vx + c * vy
        rows[:, 2] = self.state.vel[:, 2]
        rows[:, 3] = self.state.yaw
        rows[:, 4] = self.state.pitch
        rows[:, 5] = self.state.yaw_rate
        rows[:, 6] = self.state.pitch_rate
        rows[:, 7:19] = self.prev_action
        rows[:, 19:23] = self.state.contacts.astype(np.float64)
        return rows

    def oracle_heading(self) -> np.ndarray:
        wp = self.course.waypoints[self.wp_index]
        return np.arctan2(wp[:, 1] - self.state.pos[:, 1],
                          wp[:, 0] - self.state.pos[:, 0])

    def scandots(self) -> np.ndarray:
        vals = sample_scandots_batch(
            self.hf, self.state.pos[:, 0], self.state.pos[:, 1], self.state.yaw,
            self.pattern, self.state.pos[:, 2],
        )
        if self.variant == "noisy":
            drift = self.rng.normal(0.0, self.noise.drift_sigma, (self.n, 2))
            vals = sample_scandots_batch(
                self.hf, self.state.pos[:, 0] + drift[:, 0],
                self.state.pos[:, 1] + drift[:, 1], self.state.yaw,
                self.pattern, self.state.pos[:, 2],
            )
            vals = vals + self.rng.normal(0.0, self.noise.sigma_z, vals.shape)
        return vals

    def observe(self, phase: int = 1, extero_feat: np.ndarray | None = None,
                latent: np.ndarray | None = None,
                gated_theta: np.ndarray | None = None) -> np.ndarray:
        """Observation matrix (N, layout.dim). The latent slot is zero unless given."""
        layout = ObsLayout(phase)
        obs = np.zeros((self.n, layout.dim))
        obs[:, layout.proprio] = self.delayed_proprio
        if phase == 1:
            obs[:, layout.extero] = self.scandots()
        else:
            if extero_feat is None:
                raise ValueError("phase 2 observations need the depth feature")
            obs[:, layout.extero] = extero_feat
        theta = self.oracle_heading() if gated_theta is None else gated_theta
        err = wrap_angle(theta - self.state.yaw)
        obs[:, layout.heading.start] = np.sin(err)
        obs[:, layout.heading.start + 1] = np.cos(err)
        obs[:, layout.w_flag] = self.w_flag
        obs[:, layout.v_cmd] = self.v_cmd
        if latent is not None:
            obs[:, layout.latent] = latent
        return obs

    def priv_factors(self) -> np.ndarray:
        return np.column_stack([self.friction, self.mass_scale, self.push_mag])

    def history(self) -> np.ndarray:
        return self.proprio_hist.copy()

    # -- stepping -------------------------------------------------------------

    def step(self, actions: np.ndarray):
        """Advance every robot one control step.

        Returns (rewards, dones, info); info carries per-term means and
        episode bookkeeping for logging.
        """
        actions = np.clip(np.asarray(actions, dtype=np.float64), -1.0, 1.0)
        prev_vel = self.state.vel.copy()
        self.state = step_batch(self.state, actions, self.hf, self.dyn,
                                self.friction, self.mass_scale)
        self.global_step += 1
        self.ep_step += 1
        now = self.global_step * self.dyn.dt

        # occasional lateral shoves, scaled by the per-episode magnitude
        push_due = (self.ep_step % self.cfg.domain_rand.push_interval_steps) == 0
        if push_due.any():
            ang = self.rng.uniform(-np.pi, np.pi, self.n)
            kick = np.where(push_due, self.push_mag, 0.0)
            self.state.vel[:, 0] += kick * np.cos(ang)
            self.state.vel[:, 1] += kick * np.sin(ang)

        # waypoint advancement precedes the heading used in the reward
        x, y = self.state.pos[:, 0], self.state.pos[:, 1]
        wps = self.course.waypoints
        r2 = self.rew_cfg.waypoint_radius ** 2
        last = self.course.n_waypoints - 1
        while True:
            wp = wps[self.wp_index]
            d2 = (wp[:, 0] - x) ** 2 + (wp[:, 1] - y) ** 2
            can = (d2 <= r2) & (self.wp_index < last)
            if not can.any():
                break
            self.wp_index[can] += 1
        np.maximum(self.max_wp, self.wp_index, out=self.max_wp)

        rewards, terms, edge_counts = self._rewards(actions)
        if self.eval_mode:
            for i in range(self.n):
                if self.alive[i]:
                    self.edge_counts[i].append(int(edge_counts[i]))

        wp = self.course.waypoints[self.wp_index]
        d2_last = (wp[:, 0] - x) ** 2 + (wp[:, 1] - y) ** 2
        at_last = self.wp_index == self.course.n_waypoints - 1
        success = at_last & (d2_last <= self.rew_cfg.waypoint_radius ** 2)
        fell = self.state.pos[:, 2] < FALL_Z
        timeout = self.ep_step >= self.T_steps
        dones = success | fell | timeout

        if self.trace is not None:
            self._record_trace(now, actions, terms, dones)

        self.prev_action = actions.copy()
        rows = self._proprio_rows()
        self.proprio_hist[:, :-1] = self.proprio_hist[:, 1:]
        self.proprio_hist[:, -1] = rows
        self._ring_idx = (self._ring_idx + 1) % self._proprio_ring.shape[0]
        self._proprio_ring[self._ring_idx] = rows
        released = (self._ring_idx - self.proprio_delay) % self._proprio_ring.shape[0]
        self.delayed_proprio = self._proprio_ring[released].copy()

        info = {
            "terms": terms,
            "edge_counts": edge_counts,
            "success": success,
            "fell": fell,
            "timeout": timeout,
            "mean_level": float(self.level.mean()),
        }
        if self.eval_mode:
            self.alive &= ~dones
        else:
            for i in np.nonzero(dones)[0]:
                self._finish_episode(int(i))
        return rewards, dones, info

    def _finish_episode(self, i: int):
        if self.curriculum is not None:
            x0, x1 = self.course.level_x_range(int(self.level[i]))
            self.curriculum.on_episode_end(
                i, traversed=float(self.state.pos[i, 0] - self.spawn_x[i]),
                segment_length=x1 - x0, v_cmd=float(self.v_cmd[i]),
                T=self.cfg.episode.duration,
            )
        self._respawn(i)

    def force_done(self, mask: np.ndarray):
        """External termination signal (e.g. stale exteroception)."""
        for i in np.nonzero(mask)[0]:
            if self.eval_mode:
                self.alive[i] = False
            else:
                self._finish_episode(int(i))

    def _rewards(self, actions: np.ndarray):
        x, y = self.state.pos[:, 0], self.state.pos[:, 1]
        wp = self.course.waypoints[self.wp_index]
        dx = wp[:, 0] - x
        dy = wp[:, 1] - y
        dist = np.maximum(np.hypot(dx, dy), 1e-9)
        if self.variant == "noinner":
            v_fwd = (self.state.vel[:, 0] * np.cos(self.state.yaw)
                     + self.state.vel[:, 1] * np.sin(self.state.yaw))
            tracking = np.minimum(v_fwd, self.v_cmd)
        else:
            proj = (self.state.vel[:, 0] * dx + self.state.vel[:, 1] * dy) / dist
            tracking = np.minimum(proj, self.v_cmd)

        on_edge = np.zeros((self.n, 4), dtype=bool)
        for f in range(4):
            on_edge[:, f] = self.hf.edge_at_batch(self.state.feet[:, f, 0],
                                                  self.state.feet[:, f, 1])
        edge_counts = (self.state.contacts & on_edge).sum(axis=1)
        clearance = -edge_counts.astype(np.float64)

        cy = np.cos(self.state.yaw) * np.cos(self.state.pitch)
        sy = np.sin(self.state.yaw) * np.cos(self.state.pitch)
        fz = -np.sin(self.state.pitch)
        dot = cy * self.c_hat[:, 0] + sy * self.c_hat[:, 1] + fz * self.c_hat[:, 2]
        stylized = self.w_flag * (0.5 * dot + 0.5) ** 2

        da = actions - self.prev_action
        reg = -(self.rew_cfg.w_rate * (da * da).sum(axis=1)
                + self.rew_cfg.w_mag * (actions * actions).sum(axis=1)
                + self.rew_cfg.w_vz * self.state.vel[:, 2] ** 2)

        total = (self.rew_cfg.w_tracking * tracking
                 + self.rew_cfg.w_clearance * clearance
                 + self.rew_cfg.w_stylized * stylized + reg)
        terms = {"tracking": tracking, "clearance": clearance,
                 "stylized": stylized, "regularization": reg, "total": total}
        return total, terms, edge_counts

    # -- tracing and metrics ---------------------------------------------------

    def start_trace(self):
        self.trace = []

    def _record_trace(self, now, actions, terms, dones):
        for i in range(self.n):
            if not self.alive[i]:
                continue
            self.trace.append({
                "t": round(now, 6),
                "robot": int(i),
                "base_pos": [round(float(v), 6) for v in self.state.pos[i]],
                "yaw": round(float(self.state.yaw[i]), 6),
                "pitch": round(float(self.state.pitch[i]), 6),
                "feet": [[round(float(v), 6) for v in foot] for foot in self.state.feet[i]],
                "contacts": [bool(c) for c in self.state.contacts[i]],
                "rewards": {k: round(float(terms[k][i]), 6) for k in terms},
                "level": int(self.level[i]),
                "waypoint_index": int(self.wp_index[i]),
                "done": bool(dones[i]),
            })

    def dump_trace(self, path):
        with open(path, "w") as f:
            for rec in self.trace or []:
                f.write(json.dumps(rec) + "\n")

    def trajectories(self) -> list[dict]:
        return [{"max_wp_index": int(self.max_wp[i]),
                 "edge_counts": self.edge_counts[i]} for i in range(self.n)]
