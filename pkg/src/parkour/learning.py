"""Phase 1: on-policy actor-critic training with the adaptation latent head.

Rollouts are collected from the batched environment with privileged inputs
(scandots, environment latent z); updates use a clipped surrogate objective
with GAE, plus a latent-consistency loss training the adaptation encoder to
recover z from proprioception history.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, config_hash
from .env import ParkourEnv
from .errors import ContractViolation
from .nets import (
    Adam,
    gaussian_entropy,
    gaussian_log_prob,
    gaussian_log_prob_grads,
    gaussian_sample,
)
from .observations import ObsLayout
from .policy import ACTION_DIM, PolicyNets
from .rewards import per_robot_metrics
from .terrain import arrange_course


def fmt6(x) -> str:
    """Fixed 6-significant-digit float formatting for reproducible CSVs."""
    return f"{float(x):.6g}"


class MetricsCSV:
    def __init__(self, path, columns: list[str]):
        self.path = path
        self.columns = columns
        with open(path, "w") as f:
            f.write(",".join(columns) + "\n")

    def append(self, row: dict):
        cells = []
        for c in self.columns:
            v = row[c]
            cells.append(str(v) if isinstance(v, (int, str)) else fmt6(v))
        with open(self.path, "a") as f:
            f.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# rollout storage
# ---------------------------------------------------------------------------

@dataclass
class RolloutBuffer:
    obs: np.ndarray        # (H, N, obs_dim), latent slots filled at collection
    actions: np.ndarray    # (H, N, act_dim)
    logp: np.ndarray       # (H, N)
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray      # (H, N) bool
    priv: np.ndarray       # (H, N, PRIV_DIM)
    hist: np.ndarray       # (H, N, history, PROPRIO_DIM)
    bootstrap_value: np.ndarray  # (N,)

    @property
    def horizon(self) -> int:
        return self.obs.shape[0]

    @property
    def n_workers(self) -> int:
        return self.obs.shape[1]

    def compute_gae(self, gamma: float, lam: float):
        """Returns (normalized advantages, returns); both (H, N)."""
        H, N = self.rewards.shape
        adv = np.zeros((H, N))
        last = np.zeros(N)
        next_value = self.bootstrap_value
        for t in reversed(range(H)):
            not_done = 1.0 - self.dones[t].astype(np.float64)
            delta = self.rewards[t] + gamma * next_value * not_done - self.values[t]
            last = delta + gamma * lam * not_done * last
            adv[t] = last
            next_value = self.values[t]
        returns = adv + self.values
        mu = adv.mean()
        sigma = adv.std()
        norm = (adv - mu) / max(sigma, 1e-8)
        return norm, returns


def collect_rollout(env: ParkourEnv, nets: PolicyNets, horizon: int, rng) -> tuple[RolloutBuffer, dict]:
    layout = ObsLayout(1)
    H, N = horizon, env.n
    buf = RolloutBuffer(
        obs=np.zeros((H, N, layout.dim)),
        actions=np.zeros((H, N, ACTION_DIM)),
        logp=np.zeros((H, N)),
        rewards=np.zeros((H, N)),
        values=np.zeros((H, N)),
        dones=np.zeros((H, N), dtype=bool),
        priv=np.zeros((H, N, 3)),
        hist=np.zeros((H, N, env.hist_len, 23)),
        bootstrap_value=np.zeros(N),
    )
    term_sums = {k: 0.0 for k in ("tracking", "clearance", "stylized",
                                  "regularization", "total")}
    for t in range(H):
        priv = env.priv_factors()
        hist = env.history()
        z, _ = nets.encode_env(priv)
        obs = env.observe(1, latent=z)
        mean, _ = nets.actor_forward(obs, 1)
        act = gaussian_sample(mean, nets.log_std, rng)
        logp = gaussian_log_prob(mean, nets.log_std, act)
        value, _ = nets.critic_forward(obs)
        rew, done, info = env.step(act)
        buf.obs[t] = obs
        buf.actions[t] = act
        buf.logp[t] = logp
        buf.rewards[t] = rew
        buf.values[t] = value
        buf.dones[t] = done
        buf.priv[t] = priv
        buf.hist[t] = hist
        for k in term_sums:
            term_sums[k] += float(info["terms"][k].mean())
    priv = env.priv_factors()
    z, _ = nets.encode_env(priv)
    obs = env.observe(1, latent=z)
    buf.bootstrap_value, _ = nets.critic_forward(obs)
    stats = {k: v / H for k, v in term_sums.items()}
    stats["mean_level"] = float(env.level.mean())
    return buf, stats


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def ppo_losses(mean, log_std, actions, old_logp, adv, clip: float):
    """Clipped-surrogate loss value and analytic gradients wrt (mean, log_std).

    Returns (loss, dmean, dlog_std, stats); gradients are already divided by
    the batch size.
    """
    M = mean.shape[0]
    logp = gaussian_log_prob(mean, log_std, actions)
    ratio = np.exp(logp - old_logp)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    loss = -np.minimum(unclipped, clipped).mean()
    take = unclipped <= clipped  # min picks the live branch
    dlogp = -(adv * ratio * take) / M
    dmean_lp, dstd_lp = gaussian_log_prob_grads(mean, log_std, actions)
    dmean = dmean_lp * dlogp[:, None]
    dlog_std = (dstd_lp * dlogp[:, None]).sum(axis=0)
    stats = {
        "approx_kl": float(np.mean(old_logp - logp)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip)),
    }
    return float(loss), dmean, dlog_std, stats


def roa_consistency_loss(z, z_hat, lambda_roa: float = 0.1):
    """Latent-consistency objective: value is the plain squared error; the
    gradient regresses z_hat onto a frozen z, with a small pull of z toward
    z_hat weighted by lambda_roa.

    Returns (loss, dz, dz_hat)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    z_hat = np.atleast_2d(np.asarray(z_hat, dtype=np.float64))
    assert z.shape == z_hat.shape
    M = z.shape[0]
    diff = z_hat - z
    loss = float((diff ** 2).sum() / M)
    dz_hat = 2.0 * diff / M
    dz = lambda_roa * (-2.0 * diff) / M
    return loss, dz, dz_hat


# ---------------------------------------------------------------------------
# the update
# ---------------------------------------------------------------------------

def ppo_update(buf: RolloutBuffer, nets: PolicyNets, hyper, optimizer: Adam,
               rng) -> dict:
    """One full update: epochs x minibatches over the flattened rollout."""
    layout = ObsLayout(1)
    H, N = buf.horizon, buf.n_workers
    M = H * N
    adv, returns = buf.compute_gae(hyper.gamma, hyper.lam)
    obs = buf.obs.reshape(M, -1).copy()
    actions = buf.actions.reshape(M, ACTION_DIM)
    old_logp = buf.logp.reshape(M)
    adv = adv.reshape(M)
    returns = returns.reshape(M)
    priv = buf.priv.reshape(M, -1)
    hist = buf.hist.reshape(M, buf.hist.shape[2], buf.hist.shape[3])

    agg = {"approx_kl": 0.0, "clip_frac": 0.0, "value_loss": 0.0,
           "policy_loss": 0.0, "roa_loss": 0.0, "entropy": 0.0}
    n_batches = 0
    mb_size = M // hyper.minibatches
    for _ in range(hyper.epochs):
        perm = rng.permutation(M)
        for b in range(hyper.minibatches):
            idx = perm[b * mb_size:(b + 1) * mb_size]
            grads: dict[str, np.ndarray] = {}
            # recompute z with the live encoder so gradient reaches it
            z, z_cache = nets.encode_env(priv[idx])
            obs_mb = obs[idx]
            obs_mb[:, layout.latent] = z
            mean, a_cache = nets.actor_forward(obs_mb, 1)
            loss_pi, dmean, dlog_std, stats = ppo_losses(
                mean, nets.log_std, actions[idx], old_logp[idx], adv[idx], hyper.clip)
            dlog_std -= hyper.entropy_coef  # entropy bonus: dH/dlog_std = 1
            grads["log_std"] = dlog_std
            dobs = nets.actor_backward(dmean, a_cache, grads)
            dz_from_actor = dobs[:, layout.latent]

            value, c_cache = nets.critic_forward(obs_mb)
            verr = value - returns[idx]
            loss_v = 0.5 * float(np.mean(verr ** 2))
            dv = hyper.value_coef * verr / idx.shape[0]
            nets.critic_backward(dv, c_cache, grads)

            z_hat, h_cache = nets.encode_history(hist[idx])
            loss_roa, dz_roa, dz_hat = roa_consistency_loss(z, z_hat, hyper.lambda_roa)
            nets.adapt_encoder.backward(dz_hat, h_cache, grads)
            nets.env_encoder.backward(dz_from_actor + dz_roa, z_cache, grads)

            total = loss_pi + hyper.value_coef * loss_v + loss_roa
            if not np.isfinite(total):
                raise ContractViolation(
                    f"non-finite loss (pi={loss_pi}, v={loss_v}, roa={loss_roa})")
            optimizer.step(grads, hyper.max_grad_norm)
            nets.clamp_log_std()

            agg["approx_kl"] += stats["approx_kl"]
            agg["clip_frac"] += stats["clip_frac"]
            agg["value_loss"] += loss_v
            agg["policy_loss"] += loss_pi
            agg["roa_loss"] += loss_roa
            agg["entropy"] += gaussian_entropy(nets.log_std)
            n_batches += 1
    return {k: v / n_batches for k, v in agg.items()}


# ---------------------------------------------------------------------------
# training driver
# ---------------------------------------------------------------------------

def build_course(cfg: RunConfig):
    t = cfg.terrain
    return arrange_course(
        t.kinds, t.levels, seed=t.seed,
        extent=(t.tile_length, t.tile_width),
        spacer_length=t.spacer_length, max_difficulty=t.max_difficulty,
        cell_size=t.cell_size,
    )


def train_phase1(cfg: RunConfig, workdir, variant: str | None = None,
                 iters: int | None = None) -> dict:
    """Full phase-1 run; writes checkpoint, per-iteration CSV, summary JSON."""
    os.makedirs(workdir, exist_ok=True)
    variant = variant or cfg.variant
    iters = iters if iters is not None else cfg.learning.iters
    hyper = cfg.learning
    hf, course = build_course(cfg)
    env = ParkourEnv(hf, course, cfg, hyper.workers, seed=cfg.seed, variant=variant)
    nets = PolicyNets(tuple(hyper.actor_hidden), tuple(hyper.critic_hidden),
                      hyper.log_std_init, hyper.proprio_history, seed=cfg.seed)
    optimizer = Adam(nets.params, hyper.lr)
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,))
    act_rng = np.random.default_rng(ss.spawn(1)[0])
    upd_rng = np.random.default_rng(ss.spawn(1)[0])

    max_level = course.difficulty_levels - 1
    cols = (["iter", "reward_total", "tracking", "clearance", "stylized",
             "regularization", "mean_level", "approx_kl", "clip_frac",
             "value_loss", "entropy", "roa_loss"]
            + [f"level_{k}" for k in range(max_level + 1)])
    csv_path = os.path.join(workdir, "train_phase1.csv")
    csv = MetricsCSV(csv_path, cols)

    try:
        for it in range(iters):
            buf, roll_stats = collect_rollout(env, nets, hyper.horizon, act_rng)
            stats = ppo_update(buf, nets, hyper, optimizer, upd_rng)
            hist = (env.curriculum.histogram() if env.curriculum is not None
                    else np.array([env.n] + [0] * max_level))
            row = {"iter": it, "reward_total": roll_stats["total"],
                   "tracking": roll_stats["tracking"],
                   "clearance": roll_stats["clearance"],
                   "stylized": roll_stats["stylized"],
                   "regularization": roll_stats["regularization"],
                   "mean_level": roll_stats["mean_level"],
                   "approx_kl": stats["approx_kl"],
                   "clip_frac": stats["clip_frac"],
                   "value_loss": stats["value_loss"],
                   "entropy": stats["entropy"], "roa_loss": stats["roa_loss"]}
            for k in range(max_level + 1):
                row[f"level_{k}"] = int(hist[k]) if k < len(hist) else 0
            csv.append(row)
    except ContractViolation as e:
        dump = os.path.join(workdir, "abort_diagnostics.json")
        with open(dump, "w") as f:
            json.dump({"error": str(e), "log_std": nets.log_std.tolist()}, f)
        raise

    ckpt_path = os.path.join(workdir, "phase1.pkpt")
    nets.save(ckpt_path, phase=1, config_hash=config_hash(cfg),
              extra={"variant": variant, "iters": iters})
    summary = {"iters": iters, "variant": variant,
               "final_mean_level": float(env.level.mean()),
               "checkpoint": os.path.basename(ckpt_path)}
    with open(os.path.join(workdir, "summary_phase1.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return {"checkpoint": ckpt_path, "csv": csv_path, "summary": summary,
            "nets": nets, "env": env}


# ---------------------------------------------------------------------------
# evaluation (phase 1 policies)
# ---------------------------------------------------------------------------

def evaluate(nets: PolicyNets, hf, course, cfg: RunConfig, n_robots: int = 256,
             duration: float = 30.0, seed: int = 0, variant: str = "ours",
             dump_traj=None, dump_depth=None) -> dict:
    """Deterministic rollout of the privileged policy; returns the metric row."""
    env = ParkourEnv(hf, course, cfg, n_robots, seed=seed, variant=variant,
                     eval_mode=True)
    if dump_traj is not None:
        env.start_trace()
    depth_writer = _DepthTap(env, cfg, seed) if dump_depth is not None else None
    n_steps = int(round(duration / env.dyn.dt))
    for _ in range(n_steps):
        priv = env.priv_factors()
        z, _ = nets.encode_env(priv)
        obs = env.observe(1, latent=z)
        mean, _ = nets.actor_forward(obs, 1)
        env.step(mean)
        if depth_writer is not None:
            depth_writer.maybe_capture()
    if dump_traj is not None:
        env.dump_trace(dump_traj)
    if depth_writer is not None:
        depth_writer.save(dump_depth)
    mxd, mev = per_robot_metrics(env.max_wp, [np.asarray(c) for c in env.edge_counts],
                                 course.n_waypoints)
    return {"mxd_mean": float(mxd.mean()), "mxd_std": float(mxd.std()),
            "mev_mean": float(mev.mean()), "mev_std": float(mev.std())}


class _DepthTap:
    """Renders robot 0's camera at jittered capture times during an eval run."""

    def __init__(self, env: ParkourEnv, cfg: RunConfig, seed: int):
        from .sensing import CameraIntrinsics, DepthTraceWriter, jittered_capture_times
        self.env = env
        self.cfg = cfg
        self.intr = CameraIntrinsics()
        self.writer = DepthTraceWriter()
        self.times = jittered_capture_times(cfg.sensing.capture_rate_hz,
                                            cfg.sensing.capture_jitter_hz,
                                            np.random.default_rng(seed + 77))
        self.next_t = next(self.times)

    def maybe_capture(self):
        from .sensing import render_depth
        now = self.env.global_step * self.env.dyn.dt
        while self.next_t <= now:
            img = render_depth(self.env.hf, _camera_pose(self.env, 0, self.cfg),
                               self.intr, capture_time=self.next_t)
            self.writer.add(self.next_t, img.values)
            self.next_t = next(self.times)

    def save(self, path):
        self.writer.save(path)


def _camera_pose(env: ParkourEnv, i: int, cfg: RunConfig):
    """Head-mounted camera pose for robot i."""
    import math as _m
    off = cfg.sensing.camera_offset
    yaw = float(env.state.yaw[i])
    pitch = float(env.state.pitch[i])
    cy, sy = _m.cos(yaw), _m.sin(yaw)
    cp, sp = _m.cos(pitch), _m.sin(pitch)
    rx = cp * off[0] + sp * off[2]
    rz = -sp * off[0] + cp * off[2]
    x = env.state.pos[i, 0] + cy * rx
    y = env.state.pos[i, 1] + sy * rx
    z = env.state.pos[i, 2] + rz
    return (float(x), float(y), float(z), yaw, pitch + cfg.sensing.camera_pitch, 0.0)
