"""Phase 2: distill the privileged policy into a depth-driven student.

The student actor starts as a copy of the teacher trunk. A convolutional
recurrent encoder turns latency-delayed depth frames into the compact
exteroception feature plus a predicted yaw correction; the heading the
student observes is gated between its own prediction and the oracle while
training. Supervision is plain action imitation against the frozen teacher
(which keeps its scandots and oracle heading) while the student's own
actions drive the environment.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, config_hash
from .env import ParkourEnv
from .errors import ConfigurationError
from .learning import MetricsCSV, _camera_pose, build_course
from .nets import MLP, Adam, Conv2d, GRUCell
from .observations import EXTERO_FEAT_DIM, ObsLayout, wrap_angle
from .policy import PolicyNets
from .rewards import per_robot_metrics
from .sensing import (
    DEPTH_COLS,
    DEPTH_ROWS,
    CameraIntrinsics,
    DepthTraceWriter,
    LatencyQueue,
    normalize_depth,
    render_depth,
)

DEPTH_CONV1 = dict(c_out=8, k=5, stride=4)
DEPTH_CONV2 = dict(c_out=16, k=3, stride=2)


def mts_gate(theta_pred: float, oracle: float, threshold: float = 0.6) -> float:
    """Heading the student observes: its prediction while it stays within
    ``threshold`` radians (wrapped) of the oracle, the oracle otherwise."""
    if abs(float(wrap_angle(theta_pred - oracle))) < threshold:
        return float(theta_pred)
    return float(oracle)


def mts_gate_batch(theta_pred: np.ndarray, oracle: np.ndarray,
                   threshold: float = 0.6) -> np.ndarray:
    keep = np.abs(wrap_angle(theta_pred - oracle)) < threshold
    return np.where(keep, theta_pred, oracle)


class DepthEncoder:
    """Conv stack + GRU producing (extero feature, yaw delta) per frame."""

    def __init__(self, gru_hidden: int = 96, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.conv1 = Conv2d(1, DEPTH_CONV1["c_out"], DEPTH_CONV1["k"],
                            DEPTH_CONV1["stride"], rng, "depth.conv1")
        self.conv2 = Conv2d(DEPTH_CONV1["c_out"], DEPTH_CONV2["c_out"],
                            DEPTH_CONV2["k"], DEPTH_CONV2["stride"], rng, "depth.conv2")
        h1, w1 = self.conv1.out_hw(DEPTH_ROWS, DEPTH_COLS)
        h2, w2 = self.conv2.out_hw(h1, w1)
        self.flat_dim = DEPTH_CONV2["c_out"] * h2 * w2
        self.fc = MLP([self.flat_dim, gru_hidden], rng, "depth.fc", out_tanh=True)
        self.gru = GRUCell(gru_hidden, gru_hidden, rng, "depth.gru")
        self.latent_head = MLP([gru_hidden, EXTERO_FEAT_DIM], rng, "depth.latent",
                               out_tanh=True)
        self.yaw_head = MLP([gru_hidden, 1], rng, "depth.yaw")
        self.gru_hidden = gru_hidden
        self.params: dict[str, np.ndarray] = {}
        for m in (self.conv1, self.conv2, self.fc, self.gru, self.latent_head,
                  self.yaw_head):
            self.params.update(m.params)
            m.params = self.params

    def forward(self, frames: np.ndarray, h: np.ndarray):
        """frames (N, 58, 87) normalized; h (N, gru_hidden). Returns
        (latent, yaw_delta, h_new, cache)."""
        x = frames[:, None, :, :]
        y1, c1 = self.conv1.forward(x)
        a1 = np.maximum(y1, 0.0)
        y2, c2 = self.conv2.forward(a1)
        a2 = np.maximum(y2, 0.0)
        flat = a2.reshape(a2.shape[0], -1)
        f, cf = self.fc.forward(flat)
        h_new, cg = self.gru.forward(f, h)
        lat, cl = self.latent_head.forward(h_new)
        yaw, cy = self.yaw_head.forward(h_new)
        cache = (c1, y1, c2, y2, a2.shape, cf, cg, cl, cy)
        return lat, yaw[:, 0], h_new, cache

    def backward(self, dlat: np.ndarray, dyaw: np.ndarray, dh_next: np.ndarray,
                 cache, grads) -> np.ndarray:
        """Backprop one frame; returns d(h_prev) for the BPTT chain."""
        c1, y1, c2, y2, a2_shape, cf, cg, cl, cy = cache
        dh = dh_next.copy()
        dh += self.latent_head.backward(dlat, cl, grads)
        dh += self.yaw_head.backward(dyaw[:, None], cy, grads)
        df, dh_prev = self.gru.backward(dh, cg, grads)
        dflat = self.fc.backward(df, cf, grads)
        da2 = dflat.reshape(a2_shape)
        dy2 = da2 * (y2 > 0.0)
        da1 = self.conv2.backward(dy2, c2, grads)
        dy1 = da1 * (y1 > 0.0)
        self.conv1.backward(dy1, c1, grads)
        return dh_prev

    def save_into(self, params: dict):
        params.update(self.params)


# ---------------------------------------------------------------------------
# the distillation loop
# ---------------------------------------------------------------------------

@dataclass
class DistillLosses:
    action_mse: float
    yaw_loss: float

    @property
    def total(self) -> float:
        return self.action_mse + self.yaw_loss


class DistillTrainer:
    """DAgger-style imitation with the student driving the environment."""

    def __init__(self, cfg: RunConfig, teacher: PolicyNets, variant: str = "ours",
                 seed: int | None = None, hf=None, course=None):
        if variant not in ("ours", "both", "mask", "oracle"):
            raise ConfigurationError(f"unknown distillation variant {variant!r}")
        self.cfg = cfg
        self.variant = variant
        self.teacher = teacher
        seed = cfg.seed if seed is None else seed
        if hf is None or course is None:
            hf, course = build_course(cfg)
        self.env = ParkourEnv(hf, course, cfg, cfg.distill.workers,
                              seed=seed + 1000, variant="ours")
        self.student = PolicyNets(tuple(cfg.learning.actor_hidden),
                                  tuple(cfg.learning.critic_hidden),
                                  cfg.learning.log_std_init,
                                  cfg.learning.proprio_history, seed=seed + 1)
        self.student.copy_actor_from(teacher)
        self.depth = DepthEncoder(cfg.distill.gru_hidden, seed=seed + 2)
        train_params = {k: v for k, v in self.student.params.items()
                        if k.startswith("trunk.")}
        train_params.update(self.depth.params)
        self.optimizer = Adam(train_params, cfg.distill.lr)
        self.intr = CameraIntrinsics()
        n = cfg.distill.workers
        self.h = np.zeros((n, cfg.distill.gru_hidden))
        self.latent = np.zeros((n, EXTERO_FEAT_DIM))
        self.delta_pred = np.zeros(n)
        self.anchor_yaw = np.zeros(n)    # yaw at the current frame's capture pose
        self.last_capture = np.zeros(n)
        # captures are synchronized across robots, so one queue carries the batch
        self.queue = LatencyQueue(cfg.sensing.depth_latency)
        self.last_reset_time = np.zeros(n)
        self.reset_since_frame = np.zeros(n, dtype=bool)
        self.depth_writer: DepthTraceWriter | None = None

    # -- sensing pipeline ---------------------------------------------------

    def _capture(self, now: float):
        env = self.env
        frames = np.zeros((env.n, DEPTH_ROWS, DEPTH_COLS))
        for i in range(env.n):
            img = render_depth(env.hf, _camera_pose(env, i, self.cfg), self.intr,
                               capture_time=now)
            frames[i] = normalize_depth(img)
            if i == 0 and self.depth_writer is not None:
                self.depth_writer.add(now, img.values)
        payload = (now, frames, env.state.yaw.copy(), env.oracle_heading())
        self.queue.push(now, payload)

    def _poll(self, now: float):
        """Feed a released frame batch through the encoder.

        The yaw prediction is anchored at the capture pose: the target is the
        oracle heading *at capture*, and the absolute predicted heading is
        anchor_yaw + delta, a fixed world setpoint until the next frame.
        Returns (cache, reset_mask, target_delta) or None.
        """
        env = self.env
        payload = self.queue.poll(now)
        if payload is None:
            return None
        t_cap, frames, yaw_cap, oracle_cap = payload
        # robots respawned after this capture get a blank frame and fresh anchors
        stale = self.last_reset_time > t_cap
        if stale.any():
            frames = frames.copy()
            frames[stale] = 0.0
            yaw_cap = np.where(stale, env.state.yaw, yaw_cap)
            oracle_cap = np.where(stale, env.oracle_heading(), oracle_cap)
        reset_mask = self.reset_since_frame.copy()
        self.h[reset_mask] = 0.0
        lat, dyaw, h_new, cache = self.depth.forward(frames, self.h)
        self.h = h_new
        self.latent = lat
        self.delta_pred = dyaw
        self.anchor_yaw = yaw_cap
        self.last_capture[:] = t_cap
        self.last_capture[stale] = now
        self.reset_since_frame[:] = False
        target_delta = wrap_angle(oracle_cap - yaw_cap)
        return cache, reset_mask, target_delta

    def _on_reset(self, mask: np.ndarray, now: float):
        """Invalidate held state for freshly respawned robots."""
        self.reset_since_frame |= mask
        self.latent[mask] = 0.0
        self.delta_pred[mask] = 0.0
        self.anchor_yaw[mask] = self.env.state.yaw[mask]
        self.last_capture[mask] = now
        self.last_reset_time[mask] = now

    def _student_heading(self, oracle: np.ndarray, training: bool) -> tuple[np.ndarray, bool]:
        """(heading array, mask_heading_slots_flag) per the variant."""
        theta_pred = self.anchor_yaw + self.delta_pred
        if self.variant == "oracle":
            return oracle, False
        if self.variant == "mask":
            return oracle, True  # slots zeroed downstream
        if self.variant == "both" or not training:
            return theta_pred, False
        return mts_gate_batch(theta_pred, oracle, self.cfg.distill.mts_threshold), False

    def _observe_student(self, training: bool):
        env = self.env
        oracle = env.oracle_heading()
        theta, mask_slots = self._student_heading(oracle, training)
        z_hat, _ = self.student.encode_history(env.history())
        obs = env.observe(2, extero_feat=self.latent, latent=z_hat,
                          gated_theta=theta)
        if mask_slots:
            layout = ObsLayout(2)
            obs[:, layout.heading] = 0.0
        return obs, oracle

    def _observe_teacher(self):
        env = self.env
        priv = env.priv_factors()
        z, _ = self.teacher.encode_env(priv)
        return env.observe(1, latent=z)

    # -- one optimization chunk ----------------------------------------------

    def distill_step(self) -> DistillLosses:
        """Run one on-policy chunk and apply one gradient step."""
        cfg = self.cfg
        env = self.env
        steps = cfg.distill.chunk_steps
        layout = ObsLayout(2)

        obs_buf = np.zeros((steps, env.n, layout.dim))
        teach_buf = np.zeros((steps, env.n, 12))
        frame_of_step = np.full(steps, -1, dtype=np.int64)
        frames: list[tuple] = []   # (cache, reset_mask)
        oracle_delta: list[np.ndarray] = []
        pred_delta: list[np.ndarray] = []

        for t in range(steps):
            now = env.global_step * env.dyn.dt
            if env.global_step % cfg.distill.depth_every == 0:
                self._capture(now)
            polled = self._poll(now)
            if polled is not None:
                frames.append(polled)
                oracle = env.oracle_heading()
                oracle_delta.append(wrap_angle(oracle - env.state.yaw))
                pred_delta.append(self.delta_pred.copy())
            if frames:
                frame_of_step[t] = len(frames) - 1

            obs_s, _ = self._observe_student(training=True)
            obs_t = self._observe_teacher()
            a_teacher, _ = self.teacher.actor_forward(obs_t, 1)
            a_student, _ = self.student.actor_forward(obs_s, 2)
            obs_buf[t] = obs_s
            teach_buf[t] = a_teacher
            _, dones, _ = env.step(a_student)
            now_after = env.global_step * env.dyn.dt
            if dones.any():
                self._on_reset(dones, now_after)
            stale_mask = (now_after - self.last_capture) > cfg.sensing.max_staleness
            if stale_mask.any():
                env.force_done(stale_mask)
                self._on_reset(stale_mask, now_after)

        # supervised losses over the chunk
        M = steps * env.n
        obs_flat = obs_buf.reshape(M, -1)
        teach_flat = teach_buf.reshape(M, 12)
        grads: dict[str, np.ndarray] = {}
        mean, cache = self.student.actor_forward(obs_flat, 2)
        err = mean - teach_flat
        action_mse = float((err ** 2).sum(axis=1).mean())
        dmean = 2.0 * err / M
        dobs = self.student.actor_backward(dmean, cache, grads)
        dlat_steps = dobs[:, layout.extero].reshape(steps, env.n, -1)

        K = len(frames)
        yaw_loss = 0.0
        if K:
            dlat = [np.zeros((env.n, EXTERO_FEAT_DIM)) for _ in range(K)]
            for t in range(steps):
                k = frame_of_step[t]
                if k >= 0:
                    dlat[k] += dlat_steps[t]
            wrapped = [wrap_angle(p - o) for p, o in zip(pred_delta, oracle_delta)]
            yaw_loss = cfg.distill.w_yaw * float(
                np.mean([np.mean(w ** 2) for w in wrapped]))
            dh = np.zeros_like(self.h)
            for k in reversed(range(K)):
                fcache, reset_mask = frames[k]
                dyaw = cfg.distill.w_yaw * 2.0 * wrapped[k] / (K * env.n)
                dh = self.depth.backward(dlat[k], dyaw, dh, fcache, grads)
                dh[reset_mask] = 0.0

        self.optimizer.step(grads, cfg.learning.max_grad_norm)
        return DistillLosses(action_mse=action_mse, yaw_loss=yaw_loss)

    # -- persistence --------------------------------------------------------

    def save(self, path, extra: dict | None = None):
        params = dict(self.student.params)
        self.depth.save_into(params)
        header = {"phase": 2, "config_hash": config_hash(self.cfg),
                  "variant": self.variant,
                  "gru_hidden": self.cfg.distill.gru_hidden,
                  "proprio_history": self.student.proprio_history}
        if extra:
            header.update(extra)
        from .nets import save_checkpoint
        save_checkpoint(path, params, header)


def load_student(path, cfg: RunConfig) -> tuple[PolicyNets, DepthEncoder, dict]:
    from .nets import load_checkpoint
    params, header = load_checkpoint(path)
    if header.get("phase") != 2:
        raise ConfigurationError(f"{path}: not a phase-2 checkpoint")
    student = PolicyNets(tuple(cfg.learning.actor_hidden),
                         tuple(cfg.learning.critic_hidden),
                         cfg.learning.log_std_init,
                         header.get("proprio_history", 20))
    depth = DepthEncoder(header.get("gru_hidden", cfg.distill.gru_hidden))
    for k, v in params.items():
        target = student.params if k in student.params else depth.params
        if k not in target:
            raise ConfigurationError(f"unexpected tensor {k} in student checkpoint")
        target[k][...] = v
    return student, depth, header


def train_phase2(cfg: RunConfig, teacher_path, workdir, variant: str | None = None,
                 iters: int | None = None) -> dict:
    """Distill a depth student from a phase-1 checkpoint; writes CSV + PKPT."""
    os.makedirs(workdir, exist_ok=True)
    variant = variant or cfg.variant
    iters = iters if iters is not None else cfg.distill.iters
    teacher, header = PolicyNets.load(
        teacher_path, tuple(cfg.learning.actor_hidden),
        tuple(cfg.learning.critic_hidden))
    if header.get("phase") != 1:
        raise ConfigurationError(
            f"{teacher_path}: teacher checkpoint must be phase 1, got {header.get('phase')}")
    if header.get("config_hash") not in ("", None, config_hash(cfg)):
        pass  # informational only; the CLI warns
    trainer = DistillTrainer(cfg, teacher, variant)
    csv = MetricsCSV(os.path.join(workdir, f"distill_{variant}.csv"),
                     ["iter", "action_mse", "yaw_loss"])
    for it in range(iters):
        losses = trainer.distill_step()
        csv.append({"iter": it, "action_mse": losses.action_mse,
                    "yaw_loss": losses.yaw_loss})
    ckpt = os.path.join(workdir, f"phase2_{variant}.pkpt")
    trainer.save(ckpt, extra={"iters": iters})
    return {"checkpoint": ckpt, "csv": csv.path, "trainer": trainer}


# ---------------------------------------------------------------------------
# student evaluation
# ---------------------------------------------------------------------------

def evaluate_student(student: PolicyNets, depth: DepthEncoder, cfg: RunConfig,
                     hf, course, variant: str, n_robots: int = 256,
                     duration: float = 30.0, seed: int = 0,
                     dump_traj=None, dump_depth=None) -> dict:
    """Deployment-style rollout: heading comes from the student's own
    prediction (``ours``/``both``), zeros (``mask``), or the oracle."""
    env = ParkourEnv(hf, course, cfg, n_robots, seed=seed, variant="ours",
                     eval_mode=True)
    if dump_traj is not None:
        env.start_trace()
    writer = DepthTraceWriter() if dump_depth is not None else None
    intr = CameraIntrinsics()
    queues = [LatencyQueue(cfg.sensing.depth_latency) for _ in range(n_robots)]
    h = np.zeros((n_robots, depth.gru_hidden))
    latent = np.zeros((n_robots, EXTERO_FEAT_DIM))
    delta = np.zeros(n_robots)
    layout = ObsLayout(2)
    n_steps = int(round(duration / env.dyn.dt))
    for _ in range(n_steps):
        now = env.global_step * env.dyn.dt
        if env.global_step % cfg.distill.depth_every == 0:
            for i in range(n_robots):
                img = render_depth(env.hf, _camera_pose(env, i, cfg), intr,
                                   capture_time=now)
                queues[i].push(now, img)
                if i == 0 and writer is not None:
                    writer.add(now, img.values)
        frames = np.zeros((n_robots, DEPTH_ROWS, DEPTH_COLS))
        got = False
        for i in range(n_robots):
            img = queues[i].poll(now)
            if img is not None:
                frames[i] = normalize_depth(img)
                got = True
        if got:
            latent, delta, h, _ = depth.forward(frames, h)
        oracle = env.oracle_heading()
        if variant == "oracle":
            theta = oracle
        else:
            theta = env.state.yaw + delta
        z_hat, _ = student.encode_history(env.history())
        obs = env.observe(2, extero_feat=latent, latent=z_hat, gated_theta=theta)
        if variant == "mask":
            obs[:, layout.heading] = 0.0
        mean, _ = student.actor_forward(obs, 2)
        env.step(mean)
    if dump_traj is not None:
        env.dump_trace(dump_traj)
    if writer is not None:
        writer.save(dump_depth)
    mxd, mev = per_robot_metrics(env.max_wp,
                                 [np.asarray(c) for c in env.edge_counts],
                                 course.n_waypoints)
    return {"mxd_mean": float(mxd.mean()), "mxd_std": float(mxd.std()),
            "mev_mean": float(mev.mean()), "mev_std": float(mev.std())}
