"""Hot numeric kernels: heightfield sampling, edge masks, ray marching, dynamics.

Every kernel exists twice: a scalar-loop version compiled with numba's @njit
and a vectorized pure-numpy fallback. The backend is chosen once at import
time from the ``PKF_NUMBA`` environment variable ("0" forces numpy; anything
else, or an absent numba install, decides automatically). Both paths perform
the same floating-point operations per element so results are identical.

``benchmarks/bench_backends.py`` times the two paths against each other.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "USE_NUMBA",
    "backend_name",
    "bilinear_batch",
    "edge_mask_scan",
    "raycast_heightfield",
    "dynamics_step_batch",
    "N_DYN_PARAMS",
    "pack_dyn_params",
]


def _numba_enabled() -> bool:
    if os.environ.get("PKF_NUMBA", "1") == "0":
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_enabled()

if USE_NUMBA:
    from numba import njit
else:
    def njit(*args, **kwargs):
        """Identity decorator so the loop bodies stay importable without numba."""
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# bilinear heightfield sampling
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bilinear_loop(heights, cell, ox, oy, xs, ys, out):
    nx, ny = heights.shape
    for i in range(xs.shape[0]):
        gx = (xs[i] - ox) / cell
        gy = (ys[i] - oy) / cell
        if gx < 0.0:
            gx = 0.0
        elif gx > nx - 1.0:
            gx = nx - 1.0
        if gy < 0.0:
            gy = 0.0
        elif gy > ny - 1.0:
            gy = ny - 1.0
        ix = int(gx)
        iy = int(gy)
        if ix > nx - 2:
            ix = nx - 2
        if iy > ny - 2:
            iy = ny - 2
        fx = gx - ix
        fy = gy - iy
        out[i] = (
            heights[ix, iy] * (1.0 - fx) * (1.0 - fy)
            + heights[ix + 1, iy] * fx * (1.0 - fy)
            + heights[ix, iy + 1] * (1.0 - fx) * fy
            + heights[ix + 1, iy + 1] * fx * fy
        )
    return out


def _bilinear_np(heights, cell, ox, oy, xs, ys, out):
    nx, ny = heights.shape
    gx = np.clip((xs - ox) / cell, 0.0, nx - 1.0)
    gy = np.clip((ys - oy) / cell, 0.0, ny - 1.0)
    ix = np.minimum(gx.astype(np.int64), nx - 2)
    iy = np.minimum(gy.astype(np.int64), ny - 2)
    fx = gx - ix
    fy = gy - iy
    out[:] = (
        heights[ix, iy] * (1.0 - fx) * (1.0 - fy)
        + heights[ix + 1, iy] * fx * (1.0 - fy)
        + heights[ix, iy + 1] * (1.0 - fx) * fy
        + heights[ix + 1, iy + 1] * fx * fy
    )
    return out


def bilinear_batch(heights, cell, ox, oy, xs, ys):
    """Sample the heightfield at world points, clamping outside the borders."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    out = np.empty(xs.shape[0], dtype=np.float64)
    if USE_NUMBA:
        return _bilinear_loop(heights, cell, ox, oy, xs, ys, out)
    return _bilinear_np(heights, cell, ox, oy, xs, ys, out)


# ---------------------------------------------------------------------------
# edge mask: cells near a height discontinuity
# ---------------------------------------------------------------------------

@njit(cache=True)
def _discontinuity_loop(heights, delta):
    nx, ny = heights.shape
    disc = np.zeros((nx, ny), dtype=np.bool_)
    for ix in range(nx):
        for iy in range(ny):
            h = heights[ix, iy]
            for dx in range(-1, 2):
                for dy in range(-1, 2):
                    if dx == 0 and dy == 0:
                        continue
                    jx = ix + dx
                    jy = iy + dy
                    if jx < 0 or jx >= nx or jy < 0 or jy >= ny:
                        continue
                    if abs(heights[jx, jy] - h) > delta:
                        disc[ix, iy] = True
    return disc


def _discontinuity_np(heights, delta):
    nx, ny = heights.shape
    disc = np.zeros((nx, ny), dtype=np.bool_)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            sx0, sx1 = max(0, -dx), nx - max(0, dx)
            sy0, sy1 = max(0, -dy), ny - max(0, dy)
            a = heights[sx0:sx1, sy0:sy1]
            b = heights[sx0 + dx:sx1 + dx, sy0 + dy:sy1 + dy]
            disc[sx0:sx1, sy0:sy1] |= np.abs(b - a) > delta
    return disc


@njit(cache=True)
def _dilate_loop(disc, offs):
    nx, ny = disc.shape
    mask = np.zeros((nx, ny), dtype=np.bool_)
    for k in range(offs.shape[0]):
        dx = offs[k, 0]
        dy = offs[k, 1]
        for ix in range(nx):
            jx = ix + dx
            if jx < 0 or jx >= nx:
                continue
            for iy in range(ny):
                jy = iy + dy
                if jy < 0 or jy >= ny:
                    continue
                if disc[jx, jy]:
                    mask[ix, iy] = True
    return mask


def _dilate_np(disc, offs):
    nx, ny = disc.shape
    mask = np.zeros((nx, ny), dtype=np.bool_)
    for dx, dy in offs:
        sx0, sx1 = max(0, -dx), nx - max(0, dx)
        sy0, sy1 = max(0, -dy), ny - max(0, dy)
        mask[sx0:sx1, sy0:sy1] |= disc[sx0 + dx:sx1 + dx, sy0 + dy:sy1 + dy]
    return mask


def edge_mask_scan(heights, cell, band, delta):
    """Mark cells whose center lies within ``band`` meters of a discontinuity.

    A discontinuity cell is one with an 8-connected neighbor differing in
    height by more than ``delta``. Distance is Euclidean between cell centers.
    """
    heights = np.ascontiguousarray(heights, dtype=np.float64)
    # one spare ring; the squared-distance filter below is what decides membership
    r = int(math.ceil(band / cell)) + 1
    offs = [
        (dx, dy)
        for dx in range(-r, r + 1)
        for dy in range(-r, r + 1)
        if (dx * dx + dy * dy) * cell * cell <= band * band + 1e-12
    ]
    offs_arr = np.array(offs, dtype=np.int64).reshape(-1, 2)
    if USE_NUMBA:
        disc = _discontinuity_loop(heights, delta)
        return _dilate_loop(disc, offs_arr)
    disc = _discontinuity_np(heights, delta)
    return _dilate_np(disc, offs_arr)


# ---------------------------------------------------------------------------
# depth raycasting against the heightfield
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sample_one(heights, cell, ox, oy, x, y):
    nx, ny = heights.shape
    gx = (x - ox) / cell
    gy = (y - oy) / cell
    if gx < 0.0:
        gx = 0.0
    elif gx > nx - 1.0:
        gx = nx - 1.0
    if gy < 0.0:
        gy = 0.0
    elif gy > ny - 1.0:
        gy = ny - 1.0
    ix = int(gx)
    iy = int(gy)
    if ix > nx - 2:
        ix = nx - 2
    if iy > ny - 2:
        iy = ny - 2
    fx = gx - ix
    fy = gy - iy
    return (
        heights[ix, iy] * (1.0 - fx) * (1.0 - fy)
        + heights[ix + 1, iy] * fx * (1.0 - fy)
        + heights[ix, iy + 1] * (1.0 - fx) * fy
        + heights[ix + 1, iy + 1] * fx * fy
    )


@njit(cache=True)
def _raycast_loop(heights, cell, ox, oy, origin, dirs, near, far, step, n_bisect, out):
    n = dirs.shape[0]
    n_steps = int(math.ceil((far - near) / step))
    for i in range(n):
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        px = origin[0] + near * dx
        py = origin[1] + near * dy
        pz = origin[2] + near * dz
        if pz <= _sample_one(heights, cell, ox, oy, px, py):
            out[i] = near
            continue
        t_prev = near
        rng = far
        hit = False
        for k in range(1, n_steps + 1):
            t = near + k * step
            if t > far:
                t = far
            px = origin[0] + t * dx
            py = origin[1] + t * dy
            pz = origin[2] + t * dz
            if pz <= _sample_one(heights, cell, ox, oy, px, py):
                lo = t_prev
                hi = t
                for _ in range(n_bisect):
                    mid = 0.5 * (lo + hi)
                    px = origin[0] + mid * dx
                    py = origin[1] + mid * dy
                    pz = origin[2] + mid * dz
                    if pz <= _sample_one(heights, cell, ox, oy, px, py):
                        hi = mid
                    else:
                        lo = mid
                rng = 0.5 * (lo + hi)
                hit = True
                break
            t_prev = t
        if not hit:
            rng = far
        if rng < near:
            rng = near
        elif rng > far:
            rng = far
        out[i] = rng
    return out


def _raycast_np(heights, cell, ox, oy, origin, dirs, near, far, step, n_bisect, out):
    n = dirs.shape[0]
    n_steps = int(math.ceil((far - near) / step))

    def surf(px, py):
        o = np.empty(px.shape[0], dtype=np.float64)
        return _bilinear_np(heights, cell, ox, oy, px, py, o)

    p = origin[None, :] + near * dirs
    below0 = p[:, 2] <= surf(p[:, 0], p[:, 1])
    lo = np.full(n, near, dtype=np.float64)
    hi = np.full(n, far, dtype=np.float64)
    hit = below0.copy()
    hi[below0] = near
    active = ~below0
    t_prev = np.full(n, near, dtype=np.float64)
    for k in range(1, n_steps + 1):
        if not active.any():
            break
        t = min(near + k * step, far)
        idx = np.nonzero(active)[0]
        px = origin[0] + t * dirs[idx, 0]
        py = origin[1] + t * dirs[idx, 1]
        pz = origin[2] + t * dirs[idx, 2]
        below = pz <= surf(px, py)
        newly = idx[below]
        lo[newly] = t_prev[newly]
        hi[newly] = t
        hit[newly] = True
        active[newly] = False
        t_prev[idx[~below]] = t
    bis = hit & (hi > lo)
    for _ in range(n_bisect):
        idx = np.nonzero(bis)[0]
        if idx.size == 0:
            break
        mid = 0.5 * (lo[idx] + hi[idx])
        px = origin[0] + mid * dirs[idx, 0]
        py = origin[1] + mid * dirs[idx, 1]
        pz = origin[2] + mid * dirs[idx, 2]
        below = pz <= surf(px, py)
        hi[idx[below]] = mid[below]
        lo[idx[~below]] = mid[~below]
    out[:] = far
    out[hit] = 0.5 * (lo[hit] + hi[hit])
    np.clip(out, near, far, out=out)
    return out


def raycast_heightfield(heights, cell, ox, oy, origin, dirs, near, far, step, n_bisect):
    """March each ray from ``near`` to ``far``; bisect the first below-surface crossing.

    Returns one range per ray; misses report ``far``.
    """
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    out = np.empty(dirs.shape[0], dtype=np.float64)
    if USE_NUMBA:
        return _raycast_loop(
            heights, cell, ox, oy, origin, dirs, near, far, step, n_bisect, out
        )
    return _raycast_np(heights, cell, ox, oy, origin, dirs, near, far, step, n_bisect, out)


# ---------------------------------------------------------------------------
# reduced-order dynamics step, batched over robots
# ---------------------------------------------------------------------------

# parameter vector layout for dynamics_step_batch
(
    P_DT, P_G, P_V_MAX, P_YAW_RATE_MAX, P_PITCH_RATE_MAX, P_FOOT_DX, P_FOOT_DZ,
    P_IMP_Z, P_IMP_F, P_TRIG, P_CONTACT_EPS, P_CLIMB_RATE, P_MAX_SLOPE,
    P_PROBE_DIST, P_MIN_CLEAR, P_STANCE_H, P_FOOT_HX, P_FOOT_HY, P_VZ_DAMP,
    P_PITCH_LIM,
) = range(20)
N_DYN_PARAMS = 20


def pack_dyn_params(cfg) -> np.ndarray:
    """Flatten a dynamics config object into the kernel parameter vector."""
    p = np.empty(N_DYN_PARAMS, dtype=np.float64)
    p[P_DT] = cfg.dt
    p[P_G] = cfg.gravity
    p[P_V_MAX] = cfg.v_max
    p[P_YAW_RATE_MAX] = cfg.yaw_rate_max
    p[P_PITCH_RATE_MAX] = cfg.pitch_rate_max
    p[P_FOOT_DX] = cfg.foot_dx_scale
    p[P_FOOT_DZ] = cfg.foot_dz_scale
    p[P_IMP_Z] = cfg.impulse_max
    p[P_IMP_F] = cfg.impulse_fwd
    p[P_TRIG] = cfg.flight_trigger
    p[P_CONTACT_EPS] = cfg.contact_eps
    p[P_CLIMB_RATE] = cfg.climb_rate
    p[P_MAX_SLOPE] = cfg.max_slope
    p[P_PROBE_DIST] = cfg.probe_dist
    p[P_MIN_CLEAR] = cfg.min_clearance
    p[P_STANCE_H] = cfg.stance_height
    p[P_FOOT_HX] = cfg.foot_half_x
    p[P_FOOT_HY] = cfg.foot_half_y
    p[P_VZ_DAMP] = cfg.vz_damping
    p[P_PITCH_LIM] = cfg.pitch_limit
    return p


@njit(cache=True)
def _dyn_step_loop(pos, vel, yaw, pitch, feet, contacts, actions,
                   friction, mass_scale, heights, cell, ox, oy, P,
                   n_pos, n_vel, n_yaw, n_pitch, n_yrate, n_prate,
                   n_feet, n_contacts):
    n = pos.shape[0]
    dt = P[P_DT]
    g = P[P_G]
    for i in range(n):
        a = np.empty(12, dtype=np.float64)
        for j in range(12):
            v = actions[i, j]
            if v < -1.0:
                v = -1.0
            elif v > 1.0:
                v = 1.0
            a[j] = v

        yrate = a[8] * P[P_YAW_RATE_MAX]
        prate = a[9] * P[P_PITCH_RATE_MAX]
        yw = yaw[i] + yrate * dt
        pt = pitch[i] + prate * dt
        if pt > P[P_PITCH_LIM]:
            pt = P[P_PITCH_LIM]
        elif pt < -P[P_PITCH_LIM]:
            pt = -P[P_PITCH_LIM]

        cy = math.cos(yw)
        sy = math.sin(yw)
        anyc = contacts[i, 0] or contacts[i, 1] or contacts[i, 2] or contacts[i, 3]
        g_old = _sample_one(heights, cell, ox, oy, pos[i, 0], pos[i, 1])

        vx = vel[i, 0]
        vy = vel[i, 1]
        vz = vel[i, 2]
        jumped = False
        if anyc:
            vdx = a[10] * P[P_V_MAX] * cy - vx
            vdy = a[10] * P[P_V_MAX] * sy - vy
            dv_max = friction[i] * g * dt
            dn = math.sqrt(vdx * vdx + vdy * vdy)
            if dn > dv_max and dn > 0.0:
                vdx *= dv_max / dn
                vdy *= dv_max / dn
            vx += vdx
            vy += vdy
            vz *= P[P_VZ_DAMP]
            if a[11] > P[P_TRIG] and a[10] > 0.0:
                jumped = True
                boost = a[10] / mass_scale[i]
                vz += boost * P[P_IMP_Z]
                vx += boost * P[P_IMP_F] * cy
                vy += boost * P[P_IMP_F] * sy
        else:
            vz -= g * dt

        x = pos[i, 0] + vx * dt
        y = pos[i, 1] + vy * dt
        z = pos[i, 2]
        # un-walkable rises ahead block horizontal motion unless the base
        # clears them (fixed-length probe keeps the test speed-independent)
        dist = math.sqrt((x - pos[i, 0]) ** 2 + (y - pos[i, 1]) ** 2)
        if (not jumped) and dist > 1e-9:
            ux = (x - pos[i, 0]) / dist
            uy = (y - pos[i, 1]) / dist
            g_ahead = _sample_one(heights, cell, ox, oy,
                                  x + P[P_PROBE_DIST] * ux, y + P[P_PROBE_DIST] * uy)
            if (g_ahead - g_old > P[P_PROBE_DIST] * P[P_MAX_SLOPE]
                    and z < g_ahead + P[P_MIN_CLEAR]):
                x = pos[i, 0]
                y = pos[i, 1]
                vx = 0.0
                vy = 0.0
        g_new = _sample_one(heights, cell, ox, oy, x, y)
        z = z + vz * dt
        if anyc and not jumped:
            cp = math.cos(pt)
            if cp < 0.0:
                cp = 0.0
            support = P[P_FOOT_HX] * abs(math.sin(pt)) + P[P_STANCE_H] * cp
            z_tgt = g_new + support
            dz = z_tgt - z
            lim = P[P_CLIMB_RATE] * dt
            if dz > lim:
                dz = lim
            elif dz < -lim:
                dz = -lim
            z += dz

        n_pos[i, 0] = x
        n_pos[i, 1] = y
        n_pos[i, 2] = z
        n_vel[i, 0] = vx
        n_vel[i, 1] = vy
        n_vel[i, 2] = vz
        n_yaw[i] = yw
        n_pitch[i] = pt
        n_yrate[i] = yrate
        n_prate[i] = prate

        # feet track body-frame targets rotated by Rz(yaw) @ Ry(pitch)
        cpt = math.cos(pt)
        spt = math.sin(pt)
        for f in range(4):
            fx = P[P_FOOT_HX] if f < 2 else -P[P_FOOT_HX]
            fy = P[P_FOOT_HY] if (f == 0 or f == 2) else -P[P_FOOT_HY]
            bx = fx + a[2 * f] * P[P_FOOT_DX]
            bz = -P[P_STANCE_H] + a[2 * f + 1] * P[P_FOOT_DZ]
            rx = cpt * bx + spt * bz
            rz = -spt * bx + cpt * bz
            wx = x + cy * rx - sy * fy
            wy = y + sy * rx + cy * fy
            wz = z + rz
            gf = _sample_one(heights, cell, ox, oy, wx, wy)
            if wz < gf:
                wz = gf
            n_feet[i, f, 0] = wx
            n_feet[i, f, 1] = wy
            n_feet[i, f, 2] = wz
            n_contacts[i, f] = wz <= gf + P[P_CONTACT_EPS]
    return n_pos


def _dyn_step_np(pos, vel, yaw, pitch, feet, contacts, actions,
                 friction, mass_scale, heights, cell, ox, oy, P,
                 n_pos, n_vel, n_yaw, n_pitch, n_yrate, n_prate,
                 n_feet, n_contacts):
    dt = P[P_DT]
    g = P[P_G]
    a = np.clip(actions, -1.0, 1.0)

    yrate = a[:, 8] * P[P_YAW_RATE_MAX]
    prate = a[:, 9] * P[P_PITCH_RATE_MAX]
    yw = yaw + yrate * dt
    pt = np.clip(pitch + prate * dt, -P[P_PITCH_LIM], P[P_PITCH_LIM])
    cy = np.cos(yw)
    sy = np.sin(yw)
    anyc = contacts.any(axis=1)
    g_old = bilinear_batch(heights, cell, ox, oy, pos[:, 0], pos[:, 1])

    vx = vel[:, 0].copy()
    vy = vel[:, 1].copy()
    vz = vel[:, 2].copy()

    vdx = a[:, 10] * P[P_V_MAX] * cy - vx
    vdy = a[:, 10] * P[P_V_MAX] * sy - vy
    dv_max = friction * g * dt
    dn = np.sqrt(vdx * vdx + vdy * vdy)
    scale = np.where((dn > dv_max) & (dn > 0.0), dv_max / np.where(dn > 0.0, dn, 1.0), 1.0)
    vdx *= scale
    vdy *= scale
    jumped = anyc & (a[:, 11] > P[P_TRIG]) & (a[:, 10] > 0.0)
    boost = np.where(jumped, a[:, 10] / mass_scale, 0.0)
    vx = np.where(anyc, vx + vdx + boost * P[P_IMP_F] * cy, vx)
    vy = np.where(anyc, vy + vdy + boost * P[P_IMP_F] * sy, vy)
    vz = np.where(anyc, vz * P[P_VZ_DAMP] + boost * P[P_IMP_Z], vz - g * dt)

    x = pos[:, 0] + vx * dt
    y = pos[:, 1] + vy * dt
    z = pos[:, 2].copy()
    mvx = x - pos[:, 0]
    mvy = y - pos[:, 1]
    dist = np.sqrt(mvx * mvx + mvy * mvy)
    moving = dist > 1e-9
    safe = np.where(moving, dist, 1.0)
    ux = mvx / safe
    uy = mvy / safe
    g_ahead = bilinear_batch(heights, cell, ox, oy,
                             x + P[P_PROBE_DIST] * ux, y + P[P_PROBE_DIST] * uy)
    wall = ((~jumped) & moving
            & (g_ahead - g_old > P[P_PROBE_DIST] * P[P_MAX_SLOPE])
            & (z < g_ahead + P[P_MIN_CLEAR]))
    x = np.where(wall, pos[:, 0], x)
    y = np.where(wall, pos[:, 1], y)
    vx = np.where(wall, 0.0, vx)
    vy = np.where(wall, 0.0, vy)
    g_new = bilinear_batch(heights, cell, ox, oy, x, y)
    z = z + vz * dt
    support = P[P_FOOT_HX] * np.abs(np.sin(pt)) + P[P_STANCE_H] * np.maximum(np.cos(pt), 0.0)
    lim = P[P_CLIMB_RATE] * dt
    dz = np.clip(g_new + support - z, -lim, lim)
    z = np.where(anyc & ~jumped, z + dz, z)

    n_pos[:, 0] = x
    n_pos[:, 1] = y
    n_pos[:, 2] = z
    n_vel[:, 0] = vx
    n_vel[:, 1] = vy
    n_vel[:, 2] = vz
    n_yaw[:] = yw
    n_pitch[:] = pt
    n_yrate[:] = yrate
    n_prate[:] = prate

    cpt = np.cos(pt)
    spt = np.sin(pt)
    for f in range(4):
        fx = P[P_FOOT_HX] if f < 2 else -P[P_FOOT_HX]
        fy = P[P_FOOT_HY] if (f == 0 or f == 2) else -P[P_FOOT_HY]
        bx = fx + a[:, 2 * f] * P[P_FOOT_DX]
        bz = -P[P_STANCE_H] + a[:, 2 * f + 1] * P[P_FOOT_DZ]
        rx = cpt * bx + spt * bz
        rz = -spt * bx + cpt * bz
        wx = x + cy * rx - sy * fy
        wy = y + sy * rx + cy * fy
        wz = z + rz
        gf = bilinear_batch(heights, cell, ox, oy, wx, wy)
        wz = np.maximum(wz, gf)
        n_feet[:, f, 0] = wx
        n_feet[:, f, 1] = wy
        n_feet[:, f, 2] = wz
        n_contacts[:, f] = wz <= gf + P[P_CONTACT_EPS]
    return n_pos


def dynamics_step_batch(pos, vel, yaw, pitch, feet, contacts, actions,
                        friction, mass_scale, heights, cell, ox, oy, P):
    """Advance every robot one control step; returns fresh state arrays."""
    n = pos.shape[0]
    n_pos = np.empty((n, 3), dtype=np.float64)
    n_vel = np.empty((n, 3), dtype=np.float64)
    n_yaw = np.empty(n, dtype=np.float64)
    n_pitch = np.empty(n, dtype=np.float64)
    n_yrate = np.empty(n, dtype=np.float64)
    n_prate = np.empty(n, dtype=np.float64)
    n_feet = np.empty((n, 4, 3), dtype=np.float64)
    n_contacts = np.empty((n, 4), dtype=np.bool_)
    fn = _dyn_step_loop if USE_NUMBA else _dyn_step_np
    fn(
        np.ascontiguousarray(pos, dtype=np.float64),
        np.ascontiguousarray(vel, dtype=np.float64),
        np.ascontiguousarray(yaw, dtype=np.float64),
        np.ascontiguousarray(pitch, dtype=np.float64),
        np.ascontiguousarray(feet, dtype=np.float64),
        np.ascontiguousarray(contacts, dtype=np.bool_),
        np.ascontiguousarray(actions, dtype=np.float64),
        np.ascontiguousarray(friction, dtype=np.float64),
        np.ascontiguousarray(mass_scale, dtype=np.float64),
        heights, cell, ox, oy, P,
        n_pos, n_vel, n_yaw, n_pitch, n_yrate, n_prate, n_feet, n_contacts,
    )
    return n_pos, n_vel, n_yaw, n_pitch, n_yrate, n_prate, n_feet, n_contacts
