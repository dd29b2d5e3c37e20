import numpy as np
import pytest

from parkour.terrain import Heightfield, TerrainSpec, generate_terrain


@pytest.fixture(scope="session")
def flat_field():
    hf, course = generate_terrain(TerrainSpec("flat", 0.0, 0))
    return hf, course


def make_field(heights, cell=0.025, origin=(0.0, 0.0)):
    heights = np.asarray(heights, dtype=np.float64)
    return Heightfield(cell, heights, origin, np.zeros_like(heights, dtype=bool))


def edge_mask_oracle(heights, cell, band, delta):
    """Brute-force nearest-discontinuity scan (independent of the kernel path)."""
    heights = np.asarray(heights, dtype=np.float64)
    nx, ny = heights.shape
    disc = np.zeros((nx, ny), dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            for ix in range(nx):
                for iy in range(ny):
                    jx, jy = ix + dx, iy + dy
                    if 0 <= jx < nx and 0 <= jy < ny:
                        if abs(heights[jx, jy] - heights[ix, iy]) > delta:
                            disc[ix, iy] = True
    pts = np.argwhere(disc)
    mask = np.zeros((nx, ny), dtype=bool)
    if pts.shape[0] == 0:
        return mask
    cx, cy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cells = np.stack([cx.reshape(-1), cy.reshape(-1)], axis=1)
    d2 = ((cells[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    near = (d2 * cell * cell) <= band * band + 1e-12
    return near.reshape(nx, ny)
