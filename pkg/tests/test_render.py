import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from text2scene.corpus import CorpusConfig, sample_scene
from text2scene.metrics import ssim
from text2scene.render import (
    RenderConfig, RenderError, motion_transform, place_objects, render_animation,
    render_frame, render_scene_frames, render_static,
)
from text2scene.schema import ConfigError, ObjectSpec, SceneLayout

SMALL = dict(width=64, height=48)


def test_config_validation():
    RenderConfig().validate()
    with pytest.raises(ConfigError):
        RenderConfig(geometry={"cone": "analytic"}).validate()
    with pytest.raises(ConfigError):
        RenderConfig(geometry={"sphere": "voxels"}).validate()
    with pytest.raises(ConfigError):
        RenderConfig(camera_pos=(0, 0, 0), look_at=(0, 0, 0)).validate()
    with pytest.raises(ConfigError):
        bad = RenderConfig(palette={"red": (1, 2, 3)})
        bad.validate()


def test_config_dict_roundtrip():
    cfg = RenderConfig(width=32, geometry={"sphere": "icosphere"})
    back = RenderConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_placement_respects_margins_and_bounds(seed):
    cfg = CorpusConfig.from_totals("static", 0, 1, 1, 1)
    layout = sample_scene(seed, cfg, "condA")
    rc = RenderConfig()
    placed = place_objects(layout, seed, rc)
    assert len(placed) == len(layout.objects)
    lo, hi = rc.bounds
    for po in placed:
        assert lo <= po.center[0] <= hi and lo <= po.center[1] <= hi
        assert po.center[2] == pytest.approx(po.scale)
    for i, a in enumerate(placed):
        for b in placed[i + 1:]:
            ra = a.scale * (math.sqrt(2) if a.spec.shape == "cube" else 1.0)
            rb = b.scale * (math.sqrt(2) if b.spec.shape == "cube" else 1.0)
            dist = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
            assert dist >= ra + rb + rc.margin - 1e-9


def test_placement_deterministic(static_layout):
    rc = RenderConfig()
    a = place_objects(static_layout, 3, rc)
    b = place_objects(static_layout, 3, rc)
    assert a == b
    c = place_objects(static_layout, 4, rc)
    assert a != c


def test_unplaceable_scene_raises(static_layout):
    rc = RenderConfig(bounds=(-0.5, 0.5), max_restarts=2, max_place_attempts=20)
    with pytest.raises(RenderError, match="unplaceable"):
        place_objects(static_layout, 0, rc)


def test_motion_rest_is_identity():
    rot, off = motion_transform("rest", 0.7, 1)
    assert np.allclose(rot, np.eye(3))
    assert np.allclose(off, 0.0)


def test_motion_spin_half_turn():
    rot, off = motion_transform("spin", 0.5, 1)
    assert np.allclose(rot, [[-1, 0, 0], [0, -1, 0], [0, 0, 1]], atol=1e-12)
    assert np.allclose(off, 0.0)


def test_motion_bounce_period_and_apex():
    for t in (0.0, 1.0, 2.0, 3.0):
        _, off = motion_transform("bounce", t, 1)
        assert off[2] == pytest.approx(0.0, abs=1e-9)
    _, off = motion_transform("bounce", 0.5, 1)
    assert off[2] == pytest.approx(1.0)


def test_motion_shake_rocks_about_contact_point():
    pivot = (0.0, 0.0, -0.5)
    rot, off = motion_transform("shake", 0.125, seed=3, pivot=pivot)
    angle = math.degrees(math.acos(np.clip((np.trace(rot) - 1) / 2, -1, 1)))
    assert angle == pytest.approx(15.0, abs=1e-6)
    # the pivot point itself stays fixed
    p = np.asarray(pivot)
    assert np.allclose(rot @ p + off, p)
    # at t=0 shake is the identity
    rot0, off0 = motion_transform("shake", 0.0, seed=3, pivot=pivot)
    assert np.allclose(rot0, np.eye(3)) and np.allclose(off0, 0.0)


def test_motion_move_stays_in_bounds_and_reflects():
    for seed in range(10):
        origin = (2.5, -1.0, 0.5)
        for t in np.linspace(0, 6, 25):
            _, off = motion_transform("move", t, seed, origin=origin, bounds=(-3, 3))
            assert -3 - 1e-9 <= origin[0] + off[0] <= 3 + 1e-9
            assert -3 - 1e-9 <= origin[1] + off[1] <= 3 + 1e-9
    # speed is one unit per second before any reflection
    _, off = motion_transform("move", 0.1, 0, origin=(0, 0, 0.5), bounds=(-3, 3))
    assert math.hypot(off[0], off[1]) == pytest.approx(0.1)


def test_motion_unknown_raises():
    with pytest.raises(ConfigError):
        motion_transform("teleport", 0.0, 1)


def test_render_deterministic(static_layout):
    rc = RenderConfig(**SMALL)
    placed = place_objects(static_layout, 2, rc)
    a = render_frame(placed, 0.0, rc)
    b = render_frame(placed, 0.0, rc)
    assert np.array_equal(a, b)
    assert a.dtype == np.uint8 and a.shape == (48, 64, 3)


def test_metal_and_rubber_render_differently():
    def one(texture):
        layout = SceneLayout((ObjectSpec("sphere", "red", "large", texture),),
                             kind="static")
        rc = RenderConfig(**SMALL)
        placed = place_objects(layout, 1, rc)
        return render_frame(placed, 0.0, rc)

    assert not np.array_equal(one("metal"), one("rubber"))


def test_color_changes_pixels(static_layout):
    rc = RenderConfig(**SMALL)
    placed = place_objects(static_layout, 2, rc)
    a = render_frame(placed, 0.0, rc)
    recolored = SceneLayout(
        (ObjectSpec("cube", "green", "large", "metal"),)
        + static_layout.objects[1:], kind="static")
    placed2 = place_objects(recolored, 2, rc)
    b = render_frame(placed2, 0.0, rc)
    assert not np.array_equal(a, b)
    assert ssim(a, b) < 1.0


def test_empty_scene_renders(tmp_path):
    layout = SceneLayout((), kind="static")
    rc = RenderConfig(**SMALL)
    render_static(layout, 0, rc, tmp_path / "empty.png")
    assert (tmp_path / "empty.png").exists()


def test_static_png_bytes_deterministic(static_layout, tmp_path):
    rc = RenderConfig(**SMALL)
    render_static(static_layout, 7, rc, tmp_path / "a.png")
    render_static(static_layout, 7, rc, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_animation_manifest_and_frames(animated_layout, tmp_path):
    rc = RenderConfig(**SMALL, fps=4)
    manifest = render_animation(animated_layout, 3, rc, tmp_path / "anim")
    assert manifest["fps"] == 4
    assert len(manifest["frames"]) == 12  # 4 fps * 3 s
    for name in manifest["frames"]:
        assert (tmp_path / "anim" / name).exists()
    stored = json.loads((tmp_path / "anim" / "animation.json").read_text())
    assert stored == manifest


def test_render_animation_rejects_static(static_layout, tmp_path):
    with pytest.raises(ConfigError):
        render_animation(static_layout, 0, RenderConfig(**SMALL), tmp_path / "x")


def test_all_rest_scene_frames_identical(tmp_path):
    layout = SceneLayout(tuple(
        ObjectSpec(s, c, "large", "rubber", "rest")
        for s, c in [("cube", "red"), ("sphere", "blue"), ("cylinder", "green")]),
        kind="animated")
    rc = RenderConfig(**SMALL, fps=2)
    frames = render_scene_frames(layout, 5, rc)
    assert len(frames) == 6
    for f in frames[1:]:
        assert np.array_equal(f, frames[0])


def test_motion_changes_frames(animated_layout):
    rc = RenderConfig(**SMALL, fps=2)
    frames = render_scene_frames(animated_layout, 5, rc)
    assert not np.array_equal(frames[0], frames[1])


def test_faceted_variants_close_to_analytic(static_layout):
    rc1 = RenderConfig(**SMALL)
    rc2 = RenderConfig(**SMALL, geometry={"sphere": "icosphere", "cube": "faceted",
                                          "cylinder": "faceted"})
    placed = place_objects(static_layout, 2, rc1)
    a = render_frame(placed, 0.0, rc1)
    b = render_frame(placed, 0.0, rc2)
    assert ssim(a, b) > 0.7
    assert not np.array_equal(a, b)
