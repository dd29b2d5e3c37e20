"""Fixed observation layouts for both training phases.

Phase 1 carries raw scandots plus the privileged environment latent z; phase 2
replaces the scandot block with the compact depth feature and z with the
adaptation estimate. The heading slot always holds (sin, cos) of the yaw error
toward the commanded heading, which keeps the encoding unit-norm and free of
wrap discontinuities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

PROPRIO_DIM = 23          # body-frame vel (3), yaw, pitch, rates (2), prev action (12), contacts (4)
SCAN_COUNT = 132
EXTERO_FEAT_DIM = 32      # compact exteroception feature fed to the actor trunk
Z_DIM = 8
PRIV_DIM = 3              # friction, mass scale, push magnitude


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), 2.0 * np.pi)


@dataclass(frozen=True)
class ObsLayout:
    phase: int

    @property
    def extero_dim(self) -> int:
        return SCAN_COUNT if self.phase == 1 else EXTERO_FEAT_DIM

    @property
    def dim(self) -> int:
        return PROPRIO_DIM + self.extero_dim + 2 + 1 + 1 + Z_DIM

    @property
    def proprio(self) -> slice:
        return slice(0, PROPRIO_DIM)

    @property
    def extero(self) -> slice:
        return slice(PROPRIO_DIM, PROPRIO_DIM + self.extero_dim)

    @property
    def heading(self) -> slice:
        o = PROPRIO_DIM + self.extero_dim
        return slice(o, o + 2)

    @property
    def w_flag(self) -> int:
        return PROPRIO_DIM + self.extero_dim + 2

    @property
    def v_cmd(self) -> int:
        return PROPRIO_DIM + self.extero_dim + 3

    @property
    def latent(self) -> slice:
        o = PROPRIO_DIM + self.extero_dim + 4
        return slice(o, o + Z_DIM)


def proprio_vector(state, prev_action) -> np.ndarray:
    """Proprioception block for one robot (body-frame velocity convention)."""
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    vx, vy, vz = state.base_vel
    out = np.empty(PROPRIO_DIM)
    out[0] = c * vx + s * vy
    out[1] = -s * vx + c * vy
    out[2] = vz
    out[3] = state.yaw
    out[4] = state.pitch
    out[5] = state.yaw_rate
    out[6] = state.pitch_rate
    out[7:19] = prev_action
    out[19:23] = state.contacts.astype(np.float64)
    return out


def build_observation(state, command, sensors: dict, phase: int,
                      gated_theta: float | None = None) -> np.ndarray:
    """Assemble one robot's observation vector.

    ``sensors`` carries latency-released payloads: ``proprio`` always, plus
    ``scandots`` (phase 1) or ``extero_feat`` (phase 2), and ``latent``.
    The heading slot encodes the yaw error toward ``gated_theta`` when given,
    otherwise toward ``command.heading`` (the oracle).
    """
    layout = ObsLayout(phase)
    obs = np.zeros(layout.dim)
    obs[layout.proprio] = sensors["proprio"]
    extero = sensors["scandots"] if phase == 1 else sensors["extero_feat"]
    extero = np.asarray(extero, dtype=np.float64)
    if extero.shape[0] != layout.extero_dim:
        raise ConfigurationError(
            f"exteroception block has {extero.shape[0]} values, "
            f"layout expects {layout.extero_dim}"
        )
    obs[layout.extero] = extero
    theta = command.heading if gated_theta is None else gated_theta
    err = float(wrap_angle(theta - state.yaw))
    obs[layout.heading] = (math.sin(err), math.cos(err))
    obs[layout.w_flag] = float(command.W)
    obs[layout.v_cmd] = command.v_cmd
    obs[layout.latent] = sensors["latent"]
    assert obs.shape[0] == layout.dim
    return obs
