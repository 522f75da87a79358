"""Hot ray-tracing kernels.

Compiled with numba's @njit by default; setting TEXT2SCENE_NO_NUMBA=1 (or a
missing numba) selects the identical pure-numpy/python path. Both paths share
one code body, so outputs agree; see benchmarks/bench_render.py for a timing
comparison.

Scene encoding: analytic primitives (0 sphere, 1 box, 2 cylinder; canonical
unit shapes with per-object rotation/uniform scale) plus a world-space
triangle soup for faceted geometry variants, plus the ground plane z=0.
"""
from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("TEXT2SCENE_NO_NUMBA", "") == ""
if USE_NUMBA:
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        USE_NUMBA = False
if not USE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range

_EPS = 1e-7
_T_MAX = 1e30


@njit(cache=True)
def _ray_unit_sphere(ox, oy, oz, dx, dy, dz):
    a = dx * dx + dy * dy + dz * dz
    b = ox * dx + oy * dy + oz * dz
    c = ox * ox + oy * oy + oz * oz - 1.0
    disc = b * b - a * c
    if disc < 0.0 or a < 1e-24:
        return -1.0
    s = np.sqrt(disc)
    t = (-b - s) / a
    if t > _EPS:
        return t
    t = (-b + s) / a
    if t > _EPS:
        return t
    return -1.0


@njit(cache=True)
def _ray_unit_box(ox, oy, oz, dx, dy, dz):
    """Slab test against [-1,1]^3; returns (t, axis, sign) or t=-1."""
    tmin = -_T_MAX
    tmax = _T_MAX
    axis = 0
    sign = 1.0
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    for i in range(3):
        if abs(d[i]) < 1e-12:
            if o[i] < -1.0 or o[i] > 1.0:
                return -1.0, 0, 1.0
        else:
            inv = 1.0 / d[i]
            t1 = (-1.0 - o[i]) * inv
            t2 = (1.0 - o[i]) * inv
            s = -1.0
            if t1 > t2:
                t1, t2 = t2, t1
                s = 1.0
            if t1 > tmin:
                tmin = t1
                axis = i
                sign = s
            if t2 < tmax:
                tmax = t2
    if tmax < tmin or tmax < _EPS:
        return -1.0, 0, 1.0
    t = tmin if tmin > _EPS else tmax
    if t <= _EPS:
        return -1.0, 0, 1.0
    if tmin <= _EPS:
        sign = -sign  # exiting from inside
    return t, axis, sign


@njit(cache=True)
def _ray_unit_cylinder(ox, oy, oz, dx, dy, dz):
    """Capped cylinder x^2+y^2<=1, |z|<=1; returns (t, nx, ny, nz) or t=-1."""
    best_t = _T_MAX
    nx = ny = nz = 0.0
    a = dx * dx + dy * dy
    if a > 1e-12:
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - 1.0
        disc = b * b - a * c
        if disc >= 0.0:
            s = np.sqrt(disc)
            for k in range(2):
                t = (-b - s) / a if k == 0 else (-b + s) / a
                if t > _EPS and t < best_t:
                    z = oz + t * dz
                    if -1.0 <= z <= 1.0:
                        best_t = t
                        hx = ox + t * dx
                        hy = oy + t * dy
                        nx, ny, nz = hx, hy, 0.0
    if abs(dz) > 1e-12:
        for cap in range(2):
            zc = 1.0 if cap == 0 else -1.0
            t = (zc - oz) / dz
            if t > _EPS and t < best_t:
                hx = ox + t * dx
                hy = oy + t * dy
                if hx * hx + hy * hy <= 1.0:
                    best_t = t
                    nx, ny, nz = 0.0, 0.0, zc
    if best_t >= _T_MAX:
        return -1.0, 0.0, 0.0, 0.0
    return best_t, nx, ny, nz


@njit(cache=True)
def _ray_triangle(ox, oy, oz, dx, dy, dz, v0, v1, v2):
    e1x = v1[0] - v0[0]
    e1y = v1[1] - v0[1]
    e1z = v1[2] - v0[2]
    e2x = v2[0] - v0[0]
    e2y = v2[1] - v0[1]
    e2z = v2[2] - v0[2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-12:
        return -1.0
    inv = 1.0 / det
    tx = ox - v0[0]
    ty = oy - v0[1]
    tz = oz - v0[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t > _EPS:
        return t
    return -1.0


@njit(cache=True)
def _trace(ox, oy, oz, dx, dy, dz,
           prim_type, prim_obj, prim_center, prim_rot, prim_scale,
           tri_verts, tri_obj, include_ground):
    """Nearest hit: (t, hit_id, nx, ny, nz); hit_id -2 none, -1 ground, >=0 object."""
    best_t = _T_MAX
    hit_id = -2
    nx = ny = nz = 0.0
    for p in range(prim_type.shape[0]):
        s = prim_scale[p]
        cx = prim_center[p, 0]
        cy = prim_center[p, 1]
        cz = prim_center[p, 2]
        r = prim_rot[p]
        # local = R^T (x - c) / s
        wx = ox - cx
        wy = oy - cy
        wz = oz - cz
        lox = (r[0, 0] * wx + r[1, 0] * wy + r[2, 0] * wz) / s
        loy = (r[0, 1] * wx + r[1, 1] * wy + r[2, 1] * wz) / s
        loz = (r[0, 2] * wx + r[1, 2] * wy + r[2, 2] * wz) / s
        ldx = (r[0, 0] * dx + r[1, 0] * dy + r[2, 0] * dz) / s
        ldy = (r[0, 1] * dx + r[1, 1] * dy + r[2, 1] * dz) / s
        ldz = (r[0, 2] * dx + r[1, 2] * dy + r[2, 2] * dz) / s
        lnx = lny = lnz = 0.0
        if prim_type[p] == 0:
            t = _ray_unit_sphere(lox, loy, loz, ldx, ldy, ldz)
            if t > 0.0 and t < best_t:
                lnx = lox + t * ldx
                lny = loy + t * ldy
                lnz = loz + t * ldz
            else:
                t = -1.0
        elif prim_type[p] == 1:
            t, axis, sign = _ray_unit_box(lox, loy, loz, ldx, ldy, ldz)
            if t > 0.0 and t < best_t:
                if axis == 0:
                    lnx = sign
                elif axis == 1:
                    lny = sign
                else:
                    lnz = sign
            else:
                t = -1.0
        else:
            t, lnx, lny, lnz = _ray_unit_cylinder(lox, loy, loz, ldx, ldy, ldz)
            if not (t > 0.0 and t < best_t):
                t = -1.0
        if t > 0.0:
            best_t = t
            hit_id = prim_obj[p]
            nx = r[0, 0] * lnx + r[0, 1] * lny + r[0, 2] * lnz
            ny = r[1, 0] * lnx + r[1, 1] * lny + r[1, 2] * lnz
            nz = r[2, 0] * lnx + r[2, 1] * lny + r[2, 2] * lnz
    for k in range(tri_obj.shape[0]):
        t = _ray_triangle(ox, oy, oz, dx, dy, dz,
                          tri_verts[k, 0], tri_verts[k, 1], tri_verts[k, 2])
        if t > 0.0 and t < best_t:
            best_t = t
            hit_id = tri_obj[k]
            v0 = tri_verts[k, 0]
            v1 = tri_verts[k, 1]
            v2 = tri_verts[k, 2]
            e1x = v1[0] - v0[0]
            e1y = v1[1] - v0[1]
            e1z = v1[2] - v0[2]
            e2x = v2[0] - v0[0]
            e2y = v2[1] - v0[1]
            e2z = v2[2] - v0[2]
            nx = e1y * e2z - e1z * e2y
            ny = e1z * e2x - e1x * e2z
            nz = e1x * e2y - e1y * e2x
    if include_ground and dz < -1e-12:
        t = -oz / dz
        if t > _EPS and t < best_t:
            best_t = t
            hit_id = -1
            nx, ny, nz = 0.0, 0.0, 1.0
    if hit_id == -2:
        return -1.0, -2, 0.0, 0.0, 1.0
    norm = np.sqrt(nx * nx + ny * ny + nz * nz)
    if norm > 0.0:
        # flip toward the viewer so both triangle windings shade correctly
        if nx * dx + ny * dy + nz * dz > 0.0:
            norm = -norm
        nx /= norm
        ny /= norm
        nz /= norm
    return best_t, hit_id, nx, ny, nz


@njit(cache=True, parallel=True)
def render_pixels(width, height,
                  cam_o, cam_right, cam_up, cam_fwd, tan_half_fov,
                  prim_type, prim_obj, prim_center, prim_rot, prim_scale,
                  tri_verts, tri_obj,
                  obj_color, obj_metal,
                  light_dir, ambient, ground_color, bg_top, bg_bottom,
                  supersample):
    img = np.zeros((height, width, 3))
    ids = np.full((height, width), -2, dtype=np.int32)
    aspect = width / height
    lx = -light_dir[0]
    ly = -light_dir[1]
    lz = -light_dir[2]
    ss = supersample
    inv_ss2 = 1.0 / (ss * ss)
    for py in prange(height):
        for px in range(width):
            cr = cg = cb = 0.0
            for sy in range(ss):
                for sx in range(ss):
                    u = (2.0 * (px + (sx + 0.5) / ss) / width - 1.0) * tan_half_fov * aspect
                    v = (1.0 - 2.0 * (py + (sy + 0.5) / ss) / height) * tan_half_fov
                    dx = cam_fwd[0] + u * cam_right[0] + v * cam_up[0]
                    dy = cam_fwd[1] + u * cam_right[1] + v * cam_up[1]
                    dz = cam_fwd[2] + u * cam_right[2] + v * cam_up[2]
                    inv = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
                    dx *= inv
                    dy *= inv
                    dz *= inv
                    t, hid, nx, ny, nz = _trace(
                        cam_o[0], cam_o[1], cam_o[2], dx, dy, dz,
                        prim_type, prim_obj, prim_center, prim_rot, prim_scale,
                        tri_verts, tri_obj, True)
                    if sx == 0 and sy == 0:
                        ids[py, px] = hid
                    if hid == -2:
                        f = 0.5 * (dz + 1.0)
                        cr += bg_bottom[0] + f * (bg_top[0] - bg_bottom[0])
                        cg += bg_bottom[1] + f * (bg_top[1] - bg_bottom[1])
                        cb += bg_bottom[2] + f * (bg_top[2] - bg_bottom[2])
                        continue
                    hx = cam_o[0] + t * dx
                    hy = cam_o[1] + t * dy
                    hz = cam_o[2] + t * dz
                    if hid == -1:
                        br = ground_color[0]
                        bg = ground_color[1]
                        bb = ground_color[2]
                        metal = 0
                    else:
                        br = obj_color[hid, 0]
                        bg = obj_color[hid, 1]
                        bb = obj_color[hid, 2]
                        metal = obj_metal[hid]
                    st, shid, _, _, _ = _trace(
                        hx + nx * 1e-4, hy + ny * 1e-4, hz + nz * 1e-4,
                        lx, ly, lz,
                        prim_type, prim_obj, prim_center, prim_rot, prim_scale,
                        tri_verts, tri_obj, False)
                    if shid != -2:
                        shade = ambient
                        spec = 0.0
                    else:
                        diff = nx * lx + ny * ly + nz * lz
                        if diff < 0.0:
                            diff = 0.0
                        shade = ambient + 0.85 * diff
                        spec = 0.0
                        if metal == 1:
                            hvx = lx - dx
                            hvy = ly - dy
                            hvz = lz - dz
                            hn = np.sqrt(hvx * hvx + hvy * hvy + hvz * hvz)
                            if hn > 0.0:
                                ndh = (nx * hvx + ny * hvy + nz * hvz) / hn
                                if ndh > 0.0:
                                    spec = 0.8 * ndh ** 64
                    cr += min(br * shade + spec, 1.0)
                    cg += min(bg * shade + spec, 1.0)
                    cb += min(bb * shade + spec, 1.0)
            img[py, px, 0] = cr * inv_ss2
            img[py, px, 1] = cg * inv_ss2
            img[py, px, 2] = cb * inv_ss2
    return img, ids
