"""Actor, critic, and encoder assembly shared by both training phases.

The actor trunk always consumes [proprio, heading, W, v_cmd, latent, extero
feature]; in phase 1 the feature comes from a learned projection of the raw
scandot block, in phase 2 the depth encoder writes its output straight into
the feature slots. Copying the trunk therefore transfers behavior exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .nets import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    MLP,
    load_checkpoint,
    save_checkpoint,
)
from .observations import (
    EXTERO_FEAT_DIM,
    ObsLayout,
    PRIV_DIM,
    PROPRIO_DIM,
    SCAN_COUNT,
    Z_DIM,
)

ACTION_DIM = 12
OTHER_DIM = PROPRIO_DIM + 2 + 1 + 1 + Z_DIM  # everything but the extero block


class PolicyNets:
    """Parameter container plus forward/backward paths for the policy stack."""

    def __init__(self, actor_hidden=(128, 64), critic_hidden=(128, 64),
                 log_std_init: float = -0.7, proprio_history: int = 20,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.proprio_history = proprio_history
        self.scan_proj = MLP([SCAN_COUNT, EXTERO_FEAT_DIM], rng, "scan_proj",
                             out_tanh=True)
        self.trunk = MLP([OTHER_DIM + EXTERO_FEAT_DIM, *actor_hidden, ACTION_DIM],
                         rng, "trunk")
        self.critic = MLP([ObsLayout(1).dim, *critic_hidden, 1], rng, "critic")
        self.env_encoder = MLP([PRIV_DIM, 32, Z_DIM], rng, "env_enc", out_tanh=True)
        self.adapt_encoder = MLP([proprio_history * PROPRIO_DIM, 64, 64, Z_DIM],
                                 rng, "adapt_enc", out_tanh=True)
        self.params: dict[str, np.ndarray] = {}
        for m in (self.scan_proj, self.trunk, self.critic, self.env_encoder,
                  self.adapt_encoder):
            self.params.update(m.params)
            m.params = self.params  # share storage so updates hit every module
        self.params["log_std"] = np.full(ACTION_DIM, float(log_std_init))

    # -- actor ------------------------------------------------------------

    def _split(self, obs: np.ndarray, layout: ObsLayout):
        other = np.concatenate([
            obs[:, layout.proprio], obs[:, layout.heading],
            obs[:, layout.w_flag:layout.w_flag + 1],
            obs[:, layout.v_cmd:layout.v_cmd + 1], obs[:, layout.latent],
        ], axis=1)
        return other, obs[:, layout.extero]

    def actor_forward(self, obs: np.ndarray, phase: int):
        layout = ObsLayout(phase)
        other, extero = self._split(obs, layout)
        if phase == 1:
            feat, proj_cache = self.scan_proj.forward(extero)
        else:
            feat, proj_cache = extero, None
        trunk_in = np.concatenate([other, feat], axis=1)
        mean, trunk_cache = self.trunk.forward(trunk_in)
        return mean, (layout, proj_cache, trunk_cache)

    def actor_backward(self, dmean: np.ndarray, cache, grads) -> np.ndarray:
        """Returns d(obs); useful for routing gradient into the latent slots."""
        layout, proj_cache, trunk_cache = cache
        dtrunk_in = self.trunk.backward(dmean, trunk_cache, grads)
        dother = dtrunk_in[:, :OTHER_DIM]
        dfeat = dtrunk_in[:, OTHER_DIM:]
        dobs = np.zeros((dmean.shape[0], layout.dim))
        if layout.phase == 1:
            dobs[:, layout.extero] = self.scan_proj.backward(dfeat, proj_cache, grads)
        else:
            dobs[:, layout.extero] = dfeat
        n_p = PROPRIO_DIM
        dobs[:, layout.proprio] = dother[:, :n_p]
        dobs[:, layout.heading] = dother[:, n_p:n_p + 2]
        dobs[:, layout.w_flag] = dother[:, n_p + 2]
        dobs[:, layout.v_cmd] = dother[:, n_p + 3]
        dobs[:, layout.latent] = dother[:, n_p + 4:n_p + 4 + Z_DIM]
        return dobs

    @property
    def log_std(self) -> np.ndarray:
        return self.params["log_std"]

    def clamp_log_std(self):
        np.clip(self.params["log_std"], LOG_STD_MIN, LOG_STD_MAX,
                out=self.params["log_std"])

    # -- critic and encoders ----------------------------------------------

    def critic_forward(self, obs: np.ndarray):
        v, cache = self.critic.forward(obs)
        return v[:, 0], cache

    def critic_backward(self, dv: np.ndarray, cache, grads):
        return self.critic.backward(dv[:, None], cache, grads)

    def encode_env(self, priv: np.ndarray):
        return self.env_encoder.forward(priv)

    def encode_history(self, hist: np.ndarray):
        """hist is (N, history, PROPRIO_DIM); flattened internally."""
        flat = hist.reshape(hist.shape[0], -1)
        return self.adapt_encoder.forward(flat)

    # -- persistence --------------------------------------------------------

    def save(self, path, phase: int, config_hash: str, extra: dict | None = None):
        header = {"phase": phase, "config_hash": config_hash,
                  "proprio_history": self.proprio_history}
        if extra:
            header.update(extra)
        save_checkpoint(path, self.params, header)

    @classmethod
    def load(cls, path, actor_hidden=(128, 64), critic_hidden=(128, 64)):
        params, header = load_checkpoint(path)
        nets = cls(actor_hidden=actor_hidden, critic_hidden=critic_hidden,
                   proprio_history=header.get("proprio_history", 20))
        for k, v in params.items():
            if k not in nets.params:
                raise ConfigurationError(f"unexpected tensor {k} in checkpoint")
            if nets.params[k].shape != v.shape:
                raise ConfigurationError(f"tensor {k} shape mismatch")
            nets.params[k][...] = v
        return nets, header

    def copy_actor_from(self, other: "PolicyNets"):
        """Clone the trunk, scandot projection, and exploration std."""
        for k, v in other.params.items():
            if k.startswith(("trunk.", "scan_proj.")) or k == "log_std":
                self.params[k][...] = v
        for k, v in other.params.items():
            if k.startswith("adapt_enc."):
                self.params[k][...] = v
