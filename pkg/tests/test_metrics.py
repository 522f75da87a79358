import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from text2scene.metrics import (
    export_attention, object_feature_accuracy, per_head_accuracy, ssim,
    video_ssim,
)
from text2scene.model import AttentionTrace
from text2scene.schema import ObjectSpec, SceneLayout, feature_schema

SCHEMA = feature_schema("static")


def _obj(shape="cube", color="red", size="large", texture="metal", motion=None):
    return ObjectSpec(shape, color, size, texture, motion)


def _layout(*objs, kind="static"):
    return SceneLayout(tuple(objs), kind)


def _brute_force(preds, gts, schema):
    matched = total = 0
    for pred, gt in zip(preds, gts):
        rows = max(len(gt.objects), len(pred.objects))
        total += rows * len(schema.head_names)
        for j in range(min(len(gt.objects), len(pred.objects))):
            for h in schema.head_names:
                a = pred.objects[j].feature(h)
                b = gt.objects[j].feature(h)
                matched += (a == b)
    return 100.0 * matched / total


def test_accuracy_perfect_and_zero():
    gt = _layout(_obj(), _obj("sphere", "blue"))
    assert object_feature_accuracy([gt], [gt], SCHEMA) == 100.0
    wrong = _layout(_obj("cylinder", "gray", "small", "rubber"),
                    _obj("cylinder", "gray", "small", "rubber"))
    assert object_feature_accuracy([wrong], [gt], SCHEMA) == 0.0


def test_accuracy_length_mismatch_denominator():
    gt = _layout(_obj(), _obj())
    pred = _layout(_obj(), _obj(), _obj())
    # 8 matches over max(2,3)*4 = 12 features
    assert object_feature_accuracy([pred], [gt], SCHEMA) == pytest.approx(800 / 12)
    short = _layout(_obj())
    assert object_feature_accuracy([short], [gt], SCHEMA) == pytest.approx(50.0)


def test_accuracy_matches_brute_force_exhaustively():
    # every (pred, gt) pair over a reduced 2-value-per-head universe, 0-2 objects
    variants = [_obj(s, c, "large", "metal")
                for s in ("cube", "sphere") for c in ("red", "blue")]
    layouts = [_layout(*combo) for n in (1, 2)
               for combo in itertools.product(variants, repeat=n)]
    for pred, gt in itertools.product(layouts, repeat=2):
        assert object_feature_accuracy([pred], [gt], SCHEMA) == pytest.approx(
            _brute_force([pred], [gt], SCHEMA), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_accuracy_matches_brute_force_random(seed):
    rng = np.random.default_rng(seed)
    from text2scene.schema import SHAPES, COLORS, SIZES, TEXTURES

    def rand_layout():
        objs = tuple(_obj(str(rng.choice(SHAPES)), str(rng.choice(COLORS)),
                          str(rng.choice(SIZES)), str(rng.choice(TEXTURES)))
                     for _ in range(rng.integers(1, 6)))
        return _layout(*objs)

    preds = [rand_layout() for _ in range(8)]
    gts = [rand_layout() for _ in range(8)]
    assert object_feature_accuracy(preds, gts, SCHEMA) == pytest.approx(
        _brute_force(preds, gts, SCHEMA), abs=1e-9)


def test_specified_only_ignores_dropped_features():
    gt = _layout(_obj("cube", "red", "large", "metal"))
    pred = _layout(_obj("cube", "blue", "small", "metal"))
    specified = [(frozenset({"shape", "texture"}),)]
    acc = object_feature_accuracy([pred], [gt], SCHEMA, mode="specified_only",
                                  specified=specified)
    assert acc == 100.0
    assert object_feature_accuracy([pred], [gt], SCHEMA) == 50.0


def test_specified_only_full_mode_implied_motion():
    schema = feature_schema("full")
    gt = SceneLayout((_obj(),), kind="static")       # no motion: implied rest
    pred_good = SceneLayout((_obj(),), kind="static")
    pred_bad = SceneLayout((_obj(motion="spin"),), kind="animated")
    spec = [(frozenset({"shape"}),)]
    good = object_feature_accuracy([pred_good], [gt], schema,
                                   mode="specified_only", specified=spec)
    bad = object_feature_accuracy([pred_bad], [gt], schema,
                                  mode="specified_only", specified=spec)
    assert good == 100.0
    assert bad == 50.0


def test_accuracy_input_validation():
    gt = _layout(_obj())
    with pytest.raises(ValueError):
        object_feature_accuracy([], [], SCHEMA)
    with pytest.raises(ValueError):
        object_feature_accuracy([gt], [gt, gt], SCHEMA)
    with pytest.raises(ValueError):
        object_feature_accuracy([gt], [gt], SCHEMA, mode="specified_only")


def test_per_head_accuracy():
    gt = _layout(_obj("cube", "red", "large", "metal"))
    pred = _layout(_obj("cube", "blue", "large", "metal"))
    out = per_head_accuracy([pred], [gt], SCHEMA)
    assert out["shape"] == 100.0
    assert out["color"] == 0.0


def _rand_img(rng, h=32, w=48):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def test_ssim_identity(rng):
    img = _rand_img(rng)
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_images_analytic():
    a = np.full((16, 16), 100.0)
    b = np.full((16, 16), 150.0)
    c1 = (0.01 * 255.0) ** 2
    expected = (2 * 100 * 150 + c1) / (100 ** 2 + 150 ** 2 + c1)
    assert ssim(a, b) == pytest.approx(expected, abs=1e-6)


def test_ssim_symmetry(rng):
    a, b = _rand_img(rng), _rand_img(rng)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_single_pixel_change_below_one(rng):
    a = _rand_img(rng)
    b = a.copy()
    b[10, 10] = 255 - b[10, 10]
    assert ssim(a, b) < 1.0


def test_ssim_matches_scipy_reference(rng):
    # independent oracle: same Gaussian window via scipy correlate2d
    from scipy.signal import correlate2d

    a = _rand_img(rng, 24, 24).astype(np.float64)
    b = _rand_img(rng, 24, 24).astype(np.float64)
    x = 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]
    y = 0.299 * b[..., 0] + 0.587 * b[..., 1] + 0.114 * b[..., 2]
    r = np.arange(11) - 5.0
    g = np.exp(-(r ** 2) / (2 * 1.5 ** 2))
    k = np.outer(g, g)
    k /= k.sum()
    win = lambda z: correlate2d(z, k, mode="valid")
    mx, my = win(x), win(y)
    sxx, syy, sxy = win(x * x) - mx ** 2, win(y * y) - my ** 2, win(x * y) - mx * my
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    ref = np.mean((2 * mx * my + c1) * (2 * sxy + c2) /
                  ((mx ** 2 + my ** 2 + c1) * (sxx + syy + c2)))
    assert ssim(a, b) == pytest.approx(ref, abs=1e-9)


def test_ssim_shape_checks(rng):
    with pytest.raises(ValueError, match="differ"):
        ssim(_rand_img(rng, 16, 16), _rand_img(rng, 16, 17))
    with pytest.raises(ValueError, match="window"):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_video_ssim_mean_and_length_check(rng):
    frames = [_rand_img(rng) for _ in range(3)]
    assert video_ssim(frames, frames) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        video_ssim(frames, frames[:2])


def test_export_attention_csv(tmp_path):
    trace = AttentionTrace(weights=np.array([[0.25, 0.75], [0.5, 0.5]]),
                           tokens=("red", "cube"),
                           step_labels=("cube", "<eos>"))
    path = tmp_path / "att.csv"
    export_attention(trace, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["step", "red", "cube"]
    assert rows[1][0] == "cube"
    assert float(rows[1][2]) == pytest.approx(0.75)
    assert len(rows) == 3
