"""Procedural obstacle terrain: heightfields, waypoints, courses, and file I/O.

World convention: x is the direction of travel, y is lateral, z is up. A tile
spans x in [0, length] and y in [-width/2, width/2]; grid node (ix, iy) sits at
world (origin_x + ix * cell, origin_y + iy * cell).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .kernels import bilinear_batch, edge_mask_scan

TERRAIN_KINDS = ("hurdle", "gap", "step", "ramp", "flat")

DEFAULT_CELL_SIZE = 0.025   # 5 cm edge band spans exactly two cells
EDGE_BAND = 0.05
EDGE_HEIGHT_DELTA = 0.05
GAP_DEPTH = -1.0            # gaps are deep trenches, keeping the field total

# obstacle severity ranges, linear in difficulty
GAP_WIDTH_RANGE = (0.1, 0.8)
STEP_HEIGHT_RANGE = (0.1, 0.5)
HURDLE_HEIGHT_RANGE = (0.1, 0.5)
RAMP_TILT_DEG_RANGE = (10.0, 37.0)

HURDLE_THICKNESS = 0.24
HURDLE_SIDE_CORRIDOR = 0.7
STEP_LENGTH = 1.2
RAMP_BAND_LENGTH = 0.8
RAMP_GAP_RANGE = (0.1, 0.4)
RAMP_HEIGHT_CAP = 0.4
RAMP_OFFSET_Y = 0.8

WAYPOINT_MARGIN = 0.3       # start/end inset from tile borders
OBSTACLE_STANDOFF = 0.5     # pre/post waypoint distance from obstacle edges
CENTER_JITTER = 0.15


@dataclass
class Heightfield:
    """Regular elevation grid with a precomputed edge mask."""

    cell_size: float
    heights: np.ndarray          # (nx, ny) float64, meters
    origin: tuple[float, float]  # world (x, y) of node (0, 0)
    edge_mask: np.ndarray        # (nx, ny) bool

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ConfigurationError("cell_size must be positive")
        if self.heights.shape != self.edge_mask.shape:
            raise ConfigurationError("heights and edge_mask dimensions differ")
        if self.heights.ndim != 2 or min(self.heights.shape) < 2:
            raise ConfigurationError("heightfield needs at least a 2x2 grid")
        if not np.isfinite(self.heights).all():
            raise ConfigurationError("heights must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    def height_at_batch(self, xs, ys) -> np.ndarray:
        return bilinear_batch(
            self.heights, self.cell_size, self.origin[0], self.origin[1], xs, ys
        )

    def edge_at_batch(self, xs, ys) -> np.ndarray:
        """Edge-mask lookup at the nearest cell (boolean, no interpolation)."""
        nx, ny = self.heights.shape
        ix = np.clip(np.rint((np.asarray(xs) - self.origin[0]) / self.cell_size), 0, nx - 1)
        iy = np.clip(np.rint((np.asarray(ys) - self.origin[1]) / self.cell_size), 0, ny - 1)
        return self.edge_mask[ix.astype(np.int64), iy.astype(np.int64)]


def height_at(hf: Heightfield, x: float, y: float) -> float:
    """Bilinear terrain height; out-of-bounds queries clamp to the border."""
    return float(hf.height_at_batch(np.array([x]), np.array([y]))[0])


def compute_edge_mask(hf: Heightfield, band: float = EDGE_BAND,
                      delta: float = EDGE_HEIGHT_DELTA) -> np.ndarray:
    """Cells within ``band`` meters (center distance, inclusive) of a height
    discontinuity larger than ``delta`` between 8-connected neighbors."""
    if band < 0:
        raise ConfigurationError("band must be non-negative")
    return edge_mask_scan(hf.heights, hf.cell_size, band, delta)


@dataclass
class WaypointCourse:
    """Ordered waypoints across one or more terrain segments."""

    waypoints: np.ndarray        # (K, 3) world points, strictly increasing x
    segment_kind: list[str]      # K-1 entries, kind of terrain between waypoints
    total_length: float
    difficulty_levels: int
    level_starts: list[int] = field(default_factory=lambda: [0])  # waypoint index per level

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=np.float64)
        if wp.ndim != 2 or wp.shape[0] < 2 or wp.shape[1] != 3:
            raise ConfigurationError("a course needs at least two (x, y, z) waypoints")
        if not (np.diff(wp[:, 0]) > 0).all():
            raise ConfigurationError("waypoints must be strictly increasing in x")
        if len(self.segment_kind) != wp.shape[0] - 1:
            raise ConfigurationError("need one segment kind per waypoint pair")
        self.waypoints = wp

    @property
    def n_waypoints(self) -> int:
        return self.waypoints.shape[0]

    def level_x_range(self, level: int) -> tuple[float, float]:
        """World x extent of one difficulty level's stretch of the course."""
        x0 = self.waypoints[self.level_starts[level], 0]
        if level + 1 < len(self.level_starts):
            x1 = self.waypoints[self.level_starts[level + 1], 0]
        else:
            x1 = self.waypoints[-1, 0]
        return float(x0), float(x1)


@dataclass(frozen=True)
class TerrainSpec:
    kind: str
    difficulty: float
    seed: int
    extent: tuple[float, float] = (4.0, 4.0)

    def __post_init__(self):
        if self.kind not in TERRAIN_KINDS:
            raise ConfigurationError(f"unknown terrain kind {self.kind!r}")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ConfigurationError("difficulty must lie in [0, 1]")
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ConfigurationError("extent must be positive")


def _lerp(lo_hi: tuple[float, float], d: float) -> float:
    return lo_hi[0] + (lo_hi[1] - lo_hi[0]) * d


def gap_width(d: float) -> float:
    return _lerp(GAP_WIDTH_RANGE, d)


def step_height(d: float) -> float:
    return _lerp(STEP_HEIGHT_RANGE, d)


def hurdle_height(d: float) -> float:
    return _lerp(HURDLE_HEIGHT_RANGE, d)


def ramp_tilt_deg(d: float) -> float:
    return _lerp(RAMP_TILT_DEG_RANGE, d)


def _obstacle_length(kind: str, d: float) -> float:
    if kind == "flat":
        return 0.0
    if kind == "hurdle":
        return HURDLE_THICKNESS
    if kind == "gap":
        return gap_width(d)
    if kind == "step":
        return STEP_LENGTH
    return 2 * RAMP_BAND_LENGTH + _lerp(RAMP_GAP_RANGE, d)


def _grid_coords(n: int, cell: float, org: float) -> np.ndarray:
    return org + cell * np.arange(n)


def generate_terrain(spec: TerrainSpec,
                     cell_size: float = DEFAULT_CELL_SIZE) -> tuple[Heightfield, WaypointCourse]:
    """Build one terrain tile of the given kind with its waypoints.

    Deterministic for a fixed spec: the seed only drives the obstacle
    placement jitter and the ramp tilt direction.
    """
    length, width = spec.extent
    obs_len = _obstacle_length(spec.kind, spec.difficulty)
    margin = WAYPOINT_MARGIN + OBSTACLE_STANDOFF + CENTER_JITTER + 0.05
    if spec.kind != "flat" and length < obs_len + 2 * margin:
        raise ConfigurationError(
            f"extent {length:.2f} m too small for a {spec.kind} obstacle of {obs_len:.2f} m"
        )
    if length <= 2 * WAYPOINT_MARGIN:
        raise ConfigurationError("extent too short to place start and end waypoints")

    nx = int(round(length / cell_size)) + 1
    ny = int(round(width / cell_size)) + 1
    origin = (0.0, -width / 2.0)
    heights = np.zeros((nx, ny), dtype=np.float64)
    xs = _grid_coords(nx, cell_size, origin[0])
    ys = _grid_coords(ny, cell_size, origin[1])

    rng = np.random.default_rng(spec.seed)
    center = length / 2.0 + rng.uniform(-CENTER_JITTER, CENTER_JITTER)
    tilt_sign = 1.0 if rng.random() < 0.5 else -1.0

    lead = center - obs_len / 2.0
    trail = center + obs_len / 2.0
    in_x = (xs >= lead) & (xs <= trail)

    waypoints = [(WAYPOINT_MARGIN, 0.0)]
    if spec.kind == "hurdle":
        h = hurdle_height(spec.difficulty)
        in_y = np.abs(ys) <= width / 2.0 - HURDLE_SIDE_CORRIDOR
        heights[np.ix_(in_x, in_y)] = h
        waypoints += [(lead - OBSTACLE_STANDOFF, 0.0), (trail + OBSTACLE_STANDOFF, 0.0)]
    elif spec.kind == "gap":
        heights[in_x, :] = GAP_DEPTH
        waypoints += [(lead - OBSTACLE_STANDOFF, 0.0), (trail + OBSTACLE_STANDOFF, 0.0)]
    elif spec.kind == "step":
        heights[in_x, :] = step_height(spec.difficulty)
        waypoints += [(lead - OBSTACLE_STANDOFF, 0.0), (trail + OBSTACLE_STANDOFF, 0.0)]
    elif spec.kind == "ramp":
        tilt = math.radians(ramp_tilt_deg(spec.difficulty))
        slope = math.tan(tilt)
        band_a = (xs >= lead) & (xs <= lead + RAMP_BAND_LENGTH)
        band_b = (xs >= trail - RAMP_BAND_LENGTH) & (xs <= trail)
        prof_a = np.clip(slope * (tilt_sign * ys), 0.0, RAMP_HEIGHT_CAP)
        prof_b = np.clip(slope * (-tilt_sign * ys), 0.0, RAMP_HEIGHT_CAP)
        heights[band_a, :] = prof_a[None, :]
        heights[band_b, :] = prof_b[None, :]
        trench = (xs > lead + RAMP_BAND_LENGTH) & (xs < trail - RAMP_BAND_LENGTH)
        heights[trench, :] = GAP_DEPTH
        # the offset waypoint forces a diagonal approach across the tilted bands
        off_y = -tilt_sign * min(RAMP_OFFSET_Y, width / 2.0 - 0.2)
        waypoints += [
            (lead - OBSTACLE_STANDOFF, 0.0),
            (lead + RAMP_BAND_LENGTH - 0.05, off_y),
            (trail + OBSTACLE_STANDOFF, 0.0),
        ]
    waypoints.append((length - WAYPOINT_MARGIN, 0.0))

    hf = Heightfield(cell_size, heights, origin, np.zeros_like(heights, dtype=bool))
    hf.edge_mask = compute_edge_mask(hf)

    wp = np.array(
        [(x, y, height_at(hf, x, y)) for x, y in waypoints], dtype=np.float64
    )
    course = WaypointCourse(
        waypoints=wp,
        segment_kind=[spec.kind] * (wp.shape[0] - 1),
        total_length=float(wp[-1, 0] - wp[0, 0]),
        difficulty_levels=1,
        level_starts=[0],
    )
    return hf, course


def arrange_course(kinds: list[str], levels: int, seed: int = 0,
                   extent: tuple[float, float] = (4.0, 4.0),
                   spacer_length: float = 1.0,
                   max_difficulty: float = 1.0,
                   cell_size: float = DEFAULT_CELL_SIZE) -> tuple[Heightfield, WaypointCourse]:
    """Concatenate tiles along +x in increasing difficulty, one pass per level.

    Level k runs every kind in order at difficulty ``k/(levels-1)`` (scaled by
    ``max_difficulty``), with flat spacers between tiles.
    """
    if levels < 1:
        raise ConfigurationError("levels must be >= 1")
    if not kinds:
        raise ConfigurationError("course needs at least one terrain kind")
    for k in kinds:
        if k not in TERRAIN_KINDS:
            raise ConfigurationError(f"unknown terrain kind {k!r}")

    length, width = extent
    n_tiles = levels * len(kinds)
    total_length = n_tiles * length + (n_tiles - 1) * spacer_length
    nx = int(round(total_length / cell_size)) + 1
    ny = int(round(width / cell_size)) + 1
    heights = np.zeros((nx, ny), dtype=np.float64)

    ss = np.random.SeedSequence(seed)
    waypoints: list[tuple[float, float, float]] = []
    kinds_per_segment: list[str] = []
    level_starts: list[int] = []

    x_off = 0.0
    for level in range(levels):
        d = (level / (levels - 1)) * max_difficulty if levels > 1 else 0.0
        level_starts.append(len(waypoints))
        for j, kind in enumerate(kinds):
            tile_seed = int(ss.spawn(1)[0].generate_state(1)[0])
            tile_hf, tile_course = generate_terrain(
                TerrainSpec(kind=kind, difficulty=d, seed=tile_seed, extent=extent),
                cell_size=cell_size,
            )
            ix0 = int(round(x_off / cell_size))
            tnx = tile_hf.heights.shape[0]
            heights[ix0:ix0 + tnx, :] = tile_hf.heights
            if waypoints:
                kinds_per_segment.append("flat")  # spacer between tiles
            for wx, wy, wz in tile_course.waypoints:
                waypoints.append((wx + x_off, wy, wz))
            kinds_per_segment.extend(tile_course.segment_kind)
            x_off += length + spacer_length

    hf = Heightfield(cell_size, heights, (0.0, -width / 2.0),
                     np.zeros_like(heights, dtype=bool))
    hf.edge_mask = compute_edge_mask(hf)

    wp = np.array(waypoints, dtype=np.float64)
    course = WaypointCourse(
        waypoints=wp,
        segment_kind=kinds_per_segment,
        total_length=float(wp[-1, 0] - wp[0, 0]),
        difficulty_levels=levels,
        level_starts=level_starts,
    )
    return hf, course


# ---------------------------------------------------------------------------
# persistence: PKHF binary and a JSON debug mirror
# ---------------------------------------------------------------------------

PKHF_MAGIC = b"PKHF"
PKHF_VERSION = 1


def save_heightfield(path, hf: Heightfield, waypoints: np.ndarray) -> None:
    """Write the terrain and waypoint list in the PKHF binary layout."""
    wp = np.asarray(waypoints, dtype=np.float64).reshape(-1, 3)
    nx, ny = hf.heights.shape
    with open(path, "wb") as f:
        f.write(PKHF_MAGIC)
        f.write(struct.pack("<H", PKHF_VERSION))
        f.write(struct.pack("<d", hf.cell_size))
        f.write(struct.pack("<II", nx, ny))
        f.write(struct.pack("<dd", *hf.origin))
        f.write(hf.heights.astype("<f4").tobytes(order="C"))
        f.write(np.packbits(hf.edge_mask.reshape(-1)).tobytes())
        f.write(struct.pack("<I", wp.shape[0]))
        f.write(wp.astype("<f8").tobytes(order="C"))


def load_heightfield(path) -> tuple[Heightfield, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(4) != PKHF_MAGIC:
            raise ConfigurationError(f"{path}: not a PKHF terrain file")
        (version,) = struct.unpack("<H", f.read(2))
        if version != PKHF_VERSION:
            raise ConfigurationError(f"{path}: unsupported PKHF version {version}")
        (cell,) = struct.unpack("<d", f.read(8))
        nx, ny = struct.unpack("<II", f.read(8))
        origin = struct.unpack("<dd", f.read(16))
        heights = np.frombuffer(f.read(4 * nx * ny), dtype="<f4").astype(np.float64)
        heights = heights.reshape(nx, ny)
        n_mask_bytes = (nx * ny + 7) // 8
        bits = np.unpackbits(np.frombuffer(f.read(n_mask_bytes), dtype=np.uint8),
                             count=nx * ny)
        mask = bits.astype(bool).reshape(nx, ny)
        (n_wp,) = struct.unpack("<I", f.read(4))
        wp = np.frombuffer(f.read(24 * n_wp), dtype="<f8").reshape(n_wp, 3).copy()
    return Heightfield(cell, heights, origin, mask), wp


def heightfield_to_json(hf: Heightfield, waypoints: np.ndarray) -> dict:
    """Debug mirror of the PKHF content as plain JSON-serializable data."""
    return {
        "format": "PKHF",
        "version": PKHF_VERSION,
        "cell_size": hf.cell_size,
        "dims": list(hf.heights.shape),
        "origin": list(hf.origin),
        "heights": hf.heights.tolist(),
        "edge_mask": hf.edge_mask.astype(int).tolist(),
        "waypoints": np.asarray(waypoints, dtype=np.float64).reshape(-1, 3).tolist(),
    }


def save_heightfield_json(path, hf: Heightfield, waypoints: np.ndarray) -> None:
    with open(path, "w") as f:
        json.dump(heightfield_to_json(hf, waypoints), f)
