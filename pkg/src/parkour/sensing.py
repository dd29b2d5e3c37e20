"""Exteroception and sensor timing: scandots, raycast depth, latency queues.

Scandot heights are reported relative to the base height (terrain minus base
z), matching how the privileged policy consumes them. Depth images come from
a pinhole camera ray-marched against the heightfield and are post-processed
to the fixed 58x87 layout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .kernels import raycast_heightfield
from .terrain import Heightfield

DEPTH_ROWS = 58
DEPTH_COLS = 87

SCAN_X_RANGE = (-0.3, 1.2)   # forward-biased: obstacles are ahead
SCAN_Y_RANGE = (-0.5, 0.5)
SCAN_NX = 12
SCAN_NY = 11

DEPTH_LATENCY = 0.08
PROPRIO_LATENCY = 0.016
CAPTURE_RATE_HZ = 10.0
CAPTURE_JITTER_HZ = 2.0


@dataclass(frozen=True)
class ScandotPattern:
    """Fixed body-frame (dx, dy) sample grid for privileged terrain sensing."""

    offsets: np.ndarray  # (n, 2) meters

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 2)
        if off.shape[0] == 0:
            raise ConfigurationError("scandot pattern must not be empty")
        if not np.isfinite(off).all():
            raise ConfigurationError("scandot offsets must be finite")
        object.__setattr__(self, "offsets", off)

    @property
    def count(self) -> int:
        return self.offsets.shape[0]


def default_scandot_pattern() -> ScandotPattern:
    """11x12 grid over x in [-0.3, 1.2], y in [-0.5, 0.5] (132 points)."""
    xs = np.linspace(*SCAN_X_RANGE, SCAN_NX)
    ys = np.linspace(*SCAN_Y_RANGE, SCAN_NY)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return ScandotPattern(np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1))


def sample_scandots(hf: Heightfield, base_pose: tuple[float, float, float],
                    pattern: ScandotPattern, base_z: float) -> np.ndarray:
    """Terrain height under each pattern point, minus the base height.

    ``base_pose`` is (x, y, yaw); offsets rotate by yaw before translating.
    """
    x, y, yaw = base_pose
    c, s = math.cos(yaw), math.sin(yaw)
    px = x + c * pattern.offsets[:, 0] - s * pattern.offsets[:, 1]
    py = y + s * pattern.offsets[:, 0] + c * pattern.offsets[:, 1]
    return hf.height_at_batch(px, py) - base_z


def sample_scandots_batch(hf: Heightfield, x, y, yaw, pattern: ScandotPattern,
                          base_z) -> np.ndarray:
    """Vectorized scandot sampling for N robots; returns (N, n_points)."""
    x = np.asarray(x)[:, None]
    y = np.asarray(y)[:, None]
    c = np.cos(np.asarray(yaw))[:, None]
    s = np.sin(np.asarray(yaw))[:, None]
    ox = pattern.offsets[None, :, 0]
    oy = pattern.offsets[None, :, 1]
    px = x + c * ox - s * oy
    py = y + s * ox + c * oy
    h = hf.height_at_batch(px.reshape(-1), py.reshape(-1))
    return h.reshape(px.shape) - np.asarray(base_z)[:, None]


@dataclass(frozen=True)
class NoiseConfig:
    """Additive scandot corruption for the elevation-map baseline."""

    sigma_z: float = 0.05        # per-point Gaussian, meters
    drift_sigma: float = 0.1     # per-step whole-pattern (x, y) shift, meters
    drift_fixed: tuple[float, float] | None = None  # overrides random drift

    @property
    def is_identity(self) -> bool:
        return self.sigma_z == 0.0 and self.drift_sigma == 0.0 and self.drift_fixed is None


def noisy_elevation(scandots: np.ndarray, noise_cfg: NoiseConfig, rng,
                    *, hf: Heightfield | None = None,
                    base_pose: tuple[float, float, float] | None = None,
                    pattern: ScandotPattern | None = None,
                    base_z: float = 0.0) -> np.ndarray:
    """Corrupt scandot readings: correlated (x, y) drift plus per-point noise.

    The drift shifts the whole pattern, so the terrain must be re-sampled;
    ``hf``/``base_pose``/``pattern`` are required whenever drift is active.
    ``rng`` may be a seed or a numpy Generator.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    scandots = np.asarray(scandots, dtype=np.float64)
    if noise_cfg.is_identity:
        return scandots.copy()
    out = scandots
    drift = noise_cfg.drift_fixed
    if drift is None and noise_cfg.drift_sigma > 0.0:
        drift = tuple(rng.normal(0.0, noise_cfg.drift_sigma, size=2))
    if drift is not None and (drift[0] != 0.0 or drift[1] != 0.0):
        if hf is None or base_pose is None or pattern is None:
            raise ConfigurationError("pattern drift requires hf, base_pose and pattern")
        x, y, yaw = base_pose
        out = sample_scandots(hf, (x + drift[0], y + drift[1], yaw), pattern, base_z)
    if noise_cfg.sigma_z > 0.0:
        out = out + rng.normal(0.0, noise_cfg.sigma_z, size=scandots.shape)
    return out


# ---------------------------------------------------------------------------
# depth camera
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model matching the physical sensor's published field of view."""

    fov_h_deg: float = 87.0
    fov_v_deg: float = 58.0
    near: float = 0.05
    far: float = 2.0
    march_step: float = 0.01
    n_bisect: int = 8


@dataclass
class DepthImage:
    values: np.ndarray    # (58, 87) float32 meters in [near, far]
    capture_time: float
    near: float
    far: float

    def __post_init__(self):
        if self.values.shape != (DEPTH_ROWS, DEPTH_COLS):
            raise ConfigurationError(
                f"depth image must be {DEPTH_ROWS}x{DEPTH_COLS}, got {self.values.shape}"
            )
        v = self.values
        if v.min() < self.near - 1e-6 or v.max() > self.far + 1e-6:
            raise ContractViolation("depth values outside clip range")


def _pixel_dirs(rows: int, cols: int, intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame unit rays (x forward, y left, z up), row 0 at the top."""
    fx = (cols / 2.0) / math.tan(math.radians(intr.fov_h_deg) / 2.0)
    fy = (rows / 2.0) / math.tan(math.radians(intr.fov_v_deg) / 2.0)
    u = (np.arange(cols) + 0.5) - cols / 2.0
    v = (np.arange(rows) + 0.5) - rows / 2.0
    yy = -u / fx
    zz = -v / fy
    d = np.empty((rows, cols, 3), dtype=np.float64)
    d[:, :, 0] = 1.0
    d[:, :, 1] = yy[None, :]
    d[:, :, 2] = zz[:, None]
    d /= np.linalg.norm(d, axis=2, keepdims=True)
    return d.reshape(-1, 3)


_DIR_CACHE: dict[tuple, np.ndarray] = {}


def camera_rays(pose, intr: CameraIntrinsics, rows: int = DEPTH_ROWS,
                cols: int = DEPTH_COLS) -> tuple[np.ndarray, np.ndarray]:
    """World-frame origin and per-pixel ray directions for a 6-DoF pose.

    ``pose`` is (x, y, z, yaw, pitch, roll); positive pitch looks down.
    """
    x, y, z, yaw, pitch, roll = pose
    key = (rows, cols, intr.fov_h_deg, intr.fov_v_deg)
    if key not in _DIR_CACHE:
        _DIR_CACHE[key] = _pixel_dirs(rows, cols, intr)
    d = _DIR_CACHE[key]
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    rot = rz @ ry @ rx
    return np.array([x, y, z], dtype=np.float64), d @ rot.T


def render_depth(hf: Heightfield, camera_pose, intr: CameraIntrinsics | None = None,
                 capture_time: float = 0.0) -> DepthImage:
    """Ray-march every pixel against the heightfield; misses read ``far``."""
    intr = intr or CameraIntrinsics()
    origin, dirs = camera_rays(camera_pose, intr)
    rng = raycast_heightfield(
        hf.heights, hf.cell_size, hf.origin[0], hf.origin[1],
        origin, dirs, intr.near, intr.far, intr.march_step, intr.n_bisect,
    )
    values = rng.reshape(DEPTH_ROWS, DEPTH_COLS).astype(np.float32)
    return DepthImage(values=values, capture_time=capture_time,
                      near=intr.near, far=intr.far)


def _area_resample_1d(arr: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    """Exact area-average resampling along one axis."""
    in_n = arr.shape[axis]
    if in_n == out_n:
        return arr
    arr = np.moveaxis(arr, axis, 0).astype(np.float64)
    edges = np.linspace(0.0, in_n, out_n + 1)
    csum = np.concatenate([np.zeros((1,) + arr.shape[1:]), np.cumsum(arr, axis=0)])

    def integral(t):
        i = np.clip(np.floor(t).astype(int), 0, in_n - 1)
        frac = t - i
        return csum[i] + frac[..., None] * arr[i] if arr.ndim > 1 else csum[i] + frac * arr[i]

    lo = integral(edges[:-1])
    hi = integral(edges[1:])
    out = (hi - lo) / (in_n / out_n)
    return np.moveaxis(out, 0, axis)


def preprocess_depth(raw: np.ndarray, crop_left: int = 16,
                     near: float = 0.05, far: float = 2.0) -> np.ndarray:
    """Crop dead columns, area-average to 58x87, normalize to [-0.5, 0.5]."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ConfigurationError("raw depth must be a 2-D array")
    if crop_left < 0 or raw.shape[1] - crop_left < DEPTH_COLS or raw.shape[0] < DEPTH_ROWS:
        raise ConfigurationError(
            f"native size {raw.shape} too small for crop {crop_left} and "
            f"target {DEPTH_ROWS}x{DEPTH_COLS}"
        )
    img = raw[:, crop_left:]
    img = _area_resample_1d(img, DEPTH_ROWS, axis=0)
    img = _area_resample_1d(img, DEPTH_COLS, axis=1)
    img = np.clip(img, near, far)
    return (img - near) / (far - near) - 0.5


def normalize_depth(img: DepthImage) -> np.ndarray:
    """Map raw depth meters to the network's [-0.5, 0.5] input range."""
    return (img.values.astype(np.float64) - img.near) / (img.far - img.near) - 0.5


# ---------------------------------------------------------------------------
# sensor timing
# ---------------------------------------------------------------------------

class LatencyQueue:
    """Single-owner FIFO releasing payloads exactly ``fixed_latency`` late.

    Polls return the newest released payload and discard older ones; time must
    never run backwards across push/poll calls.
    """

    def __init__(self, fixed_latency: float):
        if fixed_latency < 0:
            raise ConfigurationError("latency must be non-negative")
        self.fixed_latency = fixed_latency
        self._entries: list[tuple[float, object]] = []
        self._last_time = -math.inf

    def _check_time(self, now: float) -> None:
        if now < self._last_time:
            raise ContractViolation(
                f"time regression: {now} after {self._last_time}"
            )
        self._last_time = now

    def push(self, now: float, payload) -> None:
        self._check_time(now)
        self._entries.append((now + self.fixed_latency, payload))

    def poll(self, now: float):
        """Newest payload with release_time <= now, or None."""
        self._check_time(now)
        idx = -1
        for i, (release, _) in enumerate(self._entries):
            if release <= now:
                idx = i
        if idx < 0:
            return None
        payload = self._entries[idx][1]
        del self._entries[:idx + 1]
        return payload


def latency_push(queue: LatencyQueue, now: float, payload) -> None:
    queue.push(now, payload)


def latency_poll(queue: LatencyQueue, now: float):
    return queue.poll(now)


def jittered_capture_times(rate_hz: float, jitter_hz: float, seed):
    """Yield capture timestamps with intervals uniform in the jitter band.

    The first capture happens at t=0; intervals then lie in
    [1/(rate+jitter), 1/(rate-jitter)]. Deterministic per seed.
    """
    if not rate_hz > jitter_hz >= 0.0:
        raise ConfigurationError("need rate_hz > jitter_hz >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo = 1.0 / (rate_hz + jitter_hz)
    hi = 1.0 / (rate_hz - jitter_hz) if jitter_hz > 0 else lo
    t = 0.0
    while True:
        yield t
        t += lo if jitter_hz == 0.0 else rng.uniform(lo, hi)


# ---------------------------------------------------------------------------
# depth trace export (PKDP)
# ---------------------------------------------------------------------------

PKDP_MAGIC = b"PKDP"
PKDP_VERSION = 1


@dataclass
class DepthTraceWriter:
    """Accumulates frames and writes the flat PKDP binary on save."""

    frames: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def add(self, capture_time: float, values: np.ndarray) -> None:
        v = np.asarray(values, dtype=np.float32)
        if v.shape != (DEPTH_ROWS, DEPTH_COLS):
            raise ConfigurationError("depth trace frames must be 58x87")
        self.frames.append((float(capture_time), v))

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(PKDP_MAGIC)
            f.write(struct.pack("<H", PKDP_VERSION))
            f.write(struct.pack("<I", len(self.frames)))
            for t, v in self.frames:
                f.write(struct.pack("<d", t))
                f.write(v.astype("<f4").tobytes(order="C"))


def load_depth_trace(path) -> list[tuple[float, np.ndarray]]:
    with open(path, "rb") as f:
        if f.read(4) != PKDP_MAGIC:
            raise ConfigurationError(f"{path}: not a PKDP depth trace")
        (version,) = struct.unpack("<H", f.read(2))
        if version != PKDP_VERSION:
            raise ConfigurationError(f"{path}: unsupported PKDP version {version}")
        (count,) = struct.unpack("<I", f.read(4))
        frames = []
        for _ in range(count):
            (t,) = struct.unpack("<d", f.read(8))
            v = np.frombuffer(f.read(4 * DEPTH_ROWS * DEPTH_COLS), dtype="<f4")
            frames.append((t, v.reshape(DEPTH_ROWS, DEPTH_COLS).copy()))
    return frames
