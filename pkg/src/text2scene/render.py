"""Layout -> placed scene -> ray-traced image or animated frame sequence.

Placement rejection-samples non-overlapping ground positions; five atomic
motions (spin, bounce, shake, move, rest) are composed per frame as rigid
transforms. Geometry per shape is either the analytic primitive or a faceted
triangle mesh (icosphere / prism), switchable per RenderConfig for the
editability workflow.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .corpus import derive_seed
from .schema import ObjectSpec, SceneLayout, ConfigError

# CLEVR-style palette, 0-255 RGB
DEFAULT_PALETTE = {
    "gray": (87, 87, 87),
    "red": (173, 35, 35),
    "blue": (42, 75, 215),
    "green": (29, 105, 20),
    "brown": (129, 74, 25),
    "purple": (129, 38, 192),
    "cyan": (41, 208, 208),
    "yellow": (255, 238, 51),
}

DEFAULT_SIZE_SCALE = {"large": 0.7, "small": 0.35}

GEOMETRY_VARIANTS = {
    "sphere": ("analytic", "icosphere"),
    "cube": ("analytic", "faceted"),
    "cylinder": ("analytic", "faceted"),
}

_SHAPE_CODE = {"sphere": 0, "cube": 1, "cylinder": 2}


class RenderError(RuntimeError):
    pass


@dataclass
class RenderConfig:
    width: int = 192
    height: int = 128
    fps: int = 8
    camera_pos: tuple = (7.5, -6.5, 5.3)
    look_at: tuple = (0.0, 0.0, 0.0)
    fov_deg: float = 35.0
    palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    size_scale: dict = field(default_factory=lambda: dict(DEFAULT_SIZE_SCALE))
    geometry: dict = field(default_factory=dict)  # shape -> analytic|faceted|icosphere
    bounds: tuple = (-3.0, 3.0)
    margin: float = 0.1
    light_dir: tuple = (-0.35, 0.25, -0.9)
    ambient: float = 0.25
    ground_color: tuple = (0.62, 0.62, 0.64)
    background_top: tuple = (0.85, 0.88, 0.92)
    background_bottom: tuple = (0.65, 0.68, 0.72)
    supersample: int = 1
    max_place_attempts: int = 200
    max_restarts: int = 20

    def validate(self):
        for color in DEFAULT_PALETTE:
            if color not in self.palette:
                raise ConfigError(f"palette missing color {color!r}")
        for shape, variant in self.geometry.items():
            if shape not in GEOMETRY_VARIANTS:
                raise ConfigError(f"unknown shape {shape!r} in geometry map")
            if variant not in GEOMETRY_VARIANTS[shape]:
                raise ConfigError(
                    f"unknown geometry variant {variant!r} for {shape!r}")
        if tuple(self.camera_pos) == tuple(self.look_at):
            raise ConfigError("degenerate camera: position equals look-at")
        if self.supersample < 1:
            raise ConfigError("supersample must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "RenderConfig":
        cfg = RenderConfig(**d)
        for key in ("camera_pos", "look_at", "bounds", "light_dir",
                    "ground_color", "background_top", "background_bottom"):
            setattr(cfg, key, tuple(getattr(cfg, key)))
        cfg.palette = {k: tuple(v) for k, v in cfg.palette.items()}
        return cfg


@dataclass(frozen=True)
class PlacedObject:
    spec: ObjectSpec
    center: tuple      # (x, y, z) at t=0
    scale: float       # uniform half-extent / radius in scene units
    yaw: float         # base orientation around z
    motion_seed: int


def _footprint_radius(shape: str, scale: float) -> float:
    # yawed cubes can reach out to the horizontal half-diagonal
    return scale * math.sqrt(2.0) if shape == "cube" else scale


def place_objects(layout: SceneLayout, seed: int, config: RenderConfig) -> list[PlacedObject]:
    """Uniform rejection sampling under the pairwise non-overlap invariant."""
    lo, hi = config.bounds
    for restart in range(config.max_restarts + 1):
        rng = np.random.Generator(np.random.PCG64(
            derive_seed(seed, "placement", restart)))
        placed: list[PlacedObject] = []
        radii: list[float] = []
        ok = True
        for i, obj in enumerate(layout.objects):
            scale = config.size_scale[obj.size]
            radius = _footprint_radius(obj.shape, scale)
            for _ in range(config.max_place_attempts):
                x = rng.uniform(lo, hi)
                y = rng.uniform(lo, hi)
                good = True
                for other, r2 in zip(placed, radii):
                    dx = x - other.center[0]
                    dy = y - other.center[1]
                    if math.hypot(dx, dy) < radius + r2 + config.margin:
                        good = False
                        break
                if good:
                    yaw = rng.uniform(0.0, 2.0 * math.pi)
                    placed.append(PlacedObject(
                        spec=obj, center=(x, y, scale), scale=scale, yaw=yaw,
                        motion_seed=derive_seed(seed, "motion", i)))
                    radii.append(radius)
                    break
            else:
                ok = False
                break
        if ok:
            return placed
    raise RenderError(
        f"unplaceable scene: {len(layout.objects)} objects exceed the bounds "
        f"{config.bounds} after {config.max_restarts} restarts")


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = axis
    cross = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return c * np.eye(3) + s * cross + (1 - c) * np.outer(axis, axis)


def _fold(x: float, lo: float, hi: float) -> float:
    period = 2.0 * (hi - lo)
    u = (x - lo) % period
    return lo + (u if u <= hi - lo else period - u)


def motion_transform(motion: str, t: float, seed: int,
                     origin=(0.0, 0.0, 0.0), bounds=(-3.0, 3.0),
                     pivot=(0.0, 0.0, 0.0)):
    """Rigid transform (R, translation) for one motion at time t.

    The rotation applies about the object's center shifted by `pivot` (used to
    rock about the ground-contact point). move reflects off `bounds`.
    """
    rot = np.eye(3)
    offset = np.zeros(3)
    if motion == "rest":
        pass
    elif motion == "spin":
        rot = _rot_z(2.0 * math.pi * t)  # one revolution per second
    elif motion == "bounce":
        offset[2] = 1.0 * abs(math.sin(math.pi * t / 1.0))
    elif motion == "shake":
        rng = np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))
        theta = rng.uniform(0.0, 2.0 * math.pi)
        axis = np.array([math.cos(theta), math.sin(theta), 0.0])
        rot = _rot_axis(axis, math.radians(15.0) * math.sin(4.0 * math.pi * t))
    elif motion == "move":
        rng = np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))
        theta = rng.uniform(0.0, 2.0 * math.pi)
        vx, vy = math.cos(theta), math.sin(theta)  # speed 1 unit/s
        lo, hi = bounds
        offset[0] = _fold(origin[0] + vx * t, lo, hi) - origin[0]
        offset[1] = _fold(origin[1] + vy * t, lo, hi) - origin[1]
    else:
        raise ConfigError(f"unknown motion {motion!r}")
    pivot = np.asarray(pivot, dtype=np.float64)
    offset += pivot - rot @ pivot
    return rot, offset


# --- faceted geometry -------------------------------------------------------

def _icosphere(subdiv: int = 2) -> np.ndarray:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    tris = verts[np.array(faces)]
    for _ in range(subdiv):
        out = np.empty((len(tris) * 4, 3, 3))
        for i, (a, b, c) in enumerate(tris):
            ab = (a + b) / 2.0
            bc = (b + c) / 2.0
            ca = (c + a) / 2.0
            ab /= np.linalg.norm(ab)
            bc /= np.linalg.norm(bc)
            ca /= np.linalg.norm(ca)
            out[4 * i + 0] = (a, ab, ca)
            out[4 * i + 1] = (ab, b, bc)
            out[4 * i + 2] = (ca, bc, c)
            out[4 * i + 3] = (ab, bc, ca)
        tris = out
    return tris


def _box_mesh() -> np.ndarray:
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)],
                 dtype=np.float64)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
             (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris.append((v[a], v[b], v[c]))
        tris.append((v[a], v[c], v[d]))
    return np.array(tris)


def _prism_mesh(n: int = 24) -> np.ndarray:
    ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    top = np.stack([np.cos(ang), np.sin(ang), np.ones(n)], axis=1)
    bot = np.stack([np.cos(ang), np.sin(ang), -np.ones(n)], axis=1)
    ct, cb = np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris.append((bot[i], bot[j], top[j]))
        tris.append((bot[i], top[j], top[i]))
        tris.append((ct, top[i], top[j]))
        tris.append((cb, bot[j], bot[i]))
    return np.array(tris)


_MESH_CACHE: dict[str, np.ndarray] = {}


def _unit_mesh(shape: str) -> np.ndarray:
    if shape not in _MESH_CACHE:
        if shape == "sphere":
            _MESH_CACHE[shape] = _icosphere(2)
        elif shape == "cube":
            _MESH_CACHE[shape] = _box_mesh()
        else:
            _MESH_CACHE[shape] = _prism_mesh(24)
    return _MESH_CACHE[shape]


# --- frame assembly ---------------------------------------------------------

def _camera_basis(config: RenderConfig):
    pos = np.asarray(config.camera_pos, dtype=np.float64)
    look = np.asarray(config.look_at, dtype=np.float64)
    fwd = look - pos
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ConfigError("degenerate camera: position equals look-at")
    fwd /= norm
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise ConfigError("degenerate camera: looking straight along +z")
    right /= rn
    true_up = np.cross(right, fwd)
    return pos, right, true_up, fwd


def _scene_arrays(placements: list[PlacedObject], t: float, config: RenderConfig):
    prim_type, prim_obj, prim_center, prim_rot, prim_scale = [], [], [], [], []
    tri_list, tri_obj = [], []
    n = len(placements)
    obj_color = np.zeros((max(n, 1), 3))
    obj_metal = np.zeros(max(n, 1), dtype=np.uint8)
    for i, po in enumerate(placements):
        obj = po.spec
        obj_color[i] = np.asarray(config.palette[obj.color], dtype=np.float64) / 255.0
        obj_metal[i] = 1 if obj.texture == "metal" else 0
        center = np.asarray(po.center, dtype=np.float64)
        motion = obj.motion or "rest"
        rot_m, offset = motion_transform(
            motion, t, po.motion_seed, origin=po.center, bounds=config.bounds,
            pivot=(0.0, 0.0, -po.scale))
        rot = rot_m @ _rot_z(po.yaw)
        center = center + offset
        variant = config.geometry.get(obj.shape, "analytic")
        if variant == "analytic":
            prim_type.append(_SHAPE_CODE[obj.shape])
            prim_obj.append(i)
            prim_center.append(center)
            prim_rot.append(rot)
            prim_scale.append(po.scale)
        else:
            mesh = _unit_mesh(obj.shape) * po.scale
            world = mesh @ rot.T + center
            tri_list.append(world)
            tri_obj.append(np.full(len(world), i, dtype=np.int32))
    if prim_type:
        prims = (np.array(prim_type, dtype=np.int32),
                 np.array(prim_obj, dtype=np.int32),
                 np.array(prim_center),
                 np.array(prim_rot),
                 np.array(prim_scale))
    else:
        prims = (np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.int32),
                 np.zeros((0, 3)), np.zeros((0, 3, 3)), np.zeros(0))
    if tri_list:
        tris = (np.concatenate(tri_list), np.concatenate(tri_obj))
    else:
        tris = (np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int32))
    return prims, tris, obj_color, obj_metal


def render_frame(placements: list[PlacedObject], t: float, config: RenderConfig,
                 return_ids: bool = False):
    """Ray-trace one frame; returns a (h, w, 3) uint8 image."""
    config.validate()
    pos, right, true_up, fwd = _camera_basis(config)
    prims, tris, obj_color, obj_metal = _scene_arrays(placements, t, config)
    light = np.asarray(config.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    img, ids = kernels.render_pixels(
        config.width, config.height, pos, right, true_up, fwd,
        math.tan(math.radians(config.fov_deg) / 2.0),
        *prims, *tris, obj_color, obj_metal,
        light, config.ambient,
        np.asarray(config.ground_color, dtype=np.float64),
        np.asarray(config.background_top, dtype=np.float64),
        np.asarray(config.background_bottom, dtype=np.float64),
        config.supersample)
    frame = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if return_ids:
        return frame, ids
    return frame


def write_png(frame: np.ndarray, path) -> None:
    Image.fromarray(frame, mode="RGB").save(path, format="PNG", optimize=False)


def render_static(layout: SceneLayout, seed: int, config: RenderConfig, out_path):
    placements = place_objects(layout, seed, config)
    frame = render_frame(placements, 0.0, config)
    write_png(frame, out_path)
    return out_path


def frame_count(layout: SceneLayout, config: RenderConfig) -> int:
    duration = layout.duration_seconds or 3.0
    count = config.fps * duration
    if abs(count - round(count)) > 1e-9:
        raise ConfigError(f"fps {config.fps} x duration {duration} is not an integer")
    return int(round(count))


def render_scene_frames(layout: SceneLayout, seed: int,
                        config: RenderConfig) -> list[np.ndarray]:
    """All frames in memory (one for static layouts)."""
    placements = place_objects(layout, seed, config)
    if layout.kind == "static":
        return [render_frame(placements, 0.0, config)]
    return [render_frame(placements, k / config.fps, config)
            for k in range(frame_count(layout, config))]


def render_animation(layout: SceneLayout, seed: int, config: RenderConfig,
                     out_dir) -> dict:
    if layout.kind != "animated":
        raise ConfigError("render_animation needs an animated layout")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    placements = place_objects(layout, seed, config)
    paths = []
    for k in range(frame_count(layout, config)):
        frame = render_frame(placements, k / config.fps, config)
        path = out / f"frame_{k:04d}.png"
        write_png(frame, path)
        paths.append(path.name)
    manifest = {
        "fps": config.fps,
        "duration_seconds": layout.duration_seconds,
        "frames": paths,
    }
    (out / "animation.json").write_text(json.dumps(manifest, indent=2))
    return manifest
