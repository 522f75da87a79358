"""Evaluation: object-feature accuracy, SSIM, attention export, test reports."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .model import AttentionTrace, greedy_decode_batch
from .schema import NONE_MOTION, FeatureSchema, SceneLayout


def _feature_value(obj, head_name: str, mode: str):
    value = obj.feature(head_name)
    if value is None and head_name == "motion" and mode == "full":
        return NONE_MOTION
    return value


def object_feature_accuracy(
    pred_layouts: list[SceneLayout],
    gt_layouts: list[SceneLayout],
    schema: FeatureSchema,
    mode: str = "strict",
    specified: list[tuple[frozenset, ...]] | None = None,
) -> float:
    """Percentage of per-object features matching ground truth.

    Objects are matched positionally. When predicted and true object counts
    differ, the missing/excess objects score 0 against a denominator of
    max(l, predicted) * n. mode="specified_only" restricts matched objects to
    the features actually stated in the description (per-sample masks).
    """
    if not gt_layouts:
        raise ValueError("empty evaluation set")
    if len(pred_layouts) != len(gt_layouts):
        raise ValueError("prediction/ground-truth lists are not aligned")
    if mode == "specified_only" and specified is None:
        raise ValueError("specified_only mode needs per-sample feature masks")
    head_names = schema.head_names
    n = len(head_names)
    matched = 0
    total = 0
    for si, (pred, gt) in enumerate(zip(pred_layouts, gt_layouts)):
        l, p = len(gt.objects), len(pred.objects)
        for j in range(max(l, p)):
            if j < l and mode == "specified_only":
                active = [h for h in head_names if h in specified[si][j]
                          or (h == "motion" and schema.mode == "full"
                              and gt.objects[j].motion is None)]
                # absent motion on a static object is implied, not guessed
                if not active:
                    continue
            else:
                active = head_names
            total += len(active)
            if j >= l or j >= p:
                continue
            for h in active:
                if _feature_value(pred.objects[j], h, schema.mode) == \
                        _feature_value(gt.objects[j], h, schema.mode):
                    matched += 1
    return 100.0 * matched / total if total else 0.0


def per_head_accuracy(pred_layouts, gt_layouts, schema: FeatureSchema) -> dict:
    out = {}
    for h in schema.head_names:
        matched = total = 0
        for pred, gt in zip(pred_layouts, gt_layouts):
            l, p = len(gt.objects), len(pred.objects)
            total += max(l, p)
            for j in range(min(l, p)):
                if _feature_value(pred.objects[j], h, schema.mode) == \
                        _feature_value(gt.objects[j], h, schema.mode):
                    matched += 1
        out[h] = 100.0 * matched / total if total else 0.0
    return out


_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _windowed_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    size = kernel.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(x, (size, size))
    return np.tensordot(windows, kernel, axes=([2, 3], [0, 1]))


def ssim(image_a, image_b, window: int = 11, sigma: float = 1.5) -> float:
    """Structural similarity on luma with a Gaussian window (mean over windows)."""
    a, b = np.asarray(image_a), np.asarray(image_b)
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    x, y = _luma(a), _luma(b)
    if min(x.shape) < window:
        raise ValueError(f"image smaller than the {window}x{window} window")
    k = _gaussian_kernel(window, sigma)
    mu_x = _windowed_mean(x, k)
    mu_y = _windowed_mean(y, k)
    sxx = _windowed_mean(x * x, k) - mu_x ** 2
    syy = _windowed_mean(y * y, k) - mu_y ** 2
    sxy = _windowed_mean(x * y, k) - mu_x * mu_y
    num = (2 * mu_x * mu_y + _C1) * (2 * sxy + _C2)
    den = (mu_x ** 2 + mu_y ** 2 + _C1) * (sxx + syy + _C2)
    return float((num / den).mean())


def video_ssim(frames_a, frames_b) -> float:
    if len(frames_a) != len(frames_b):
        raise ValueError(f"frame counts differ: {len(frames_a)} vs {len(frames_b)}")
    return float(np.mean([ssim(fa, fb) for fa, fb in zip(frames_a, frames_b)]))


def export_attention(trace: AttentionTrace, path) -> None:
    """CSV heatmap: one column per input token, one row per decode step."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + list(trace.tokens))
        for label, row in zip(trace.step_labels, trace.weights):
            writer.writerow([label] + [f"{v:.6g}" for v in row])


def _decode_in_batches(texts, vocab, params, config, schema, batch_size=128):
    layouts, traces = [], []
    for i in range(0, len(texts), batch_size):
        ls, ts = greedy_decode_batch(texts[i: i + batch_size], vocab, params,
                                     config, schema)
        layouts += ls
        traces += ts
    return layouts, traces


def evaluate_split(samples, vocab, params, config, schema,
                   corpus_config=None) -> dict:
    from .corpus import rerender  # local import to avoid a cycle at module load
    texts = [s.text for s in samples]
    gts = [s.layout for s in samples]
    preds, _ = _decode_in_batches(texts, vocab, params, config, schema)
    report = {
        "count": len(samples),
        "strict_accuracy": object_feature_accuracy(preds, gts, schema),
        "per_head_accuracy": per_head_accuracy(preds, gts, schema),
    }
    if corpus_config is not None:
        specified = [rerender(s, corpus_config).specified for s in samples]
        report["specified_only_accuracy"] = object_feature_accuracy(
            preds, gts, schema, mode="specified_only", specified=specified)
    return report, preds


def evaluate_run(checkpoint_path, corpus_dir, render: bool = False,
                 render_config=None, max_render: int = 64) -> dict:
    """Full test-set report for both conditions, optionally with SSIM renders."""
    from .checkpoint import load_checkpoint
    from .corpus import config_from_dict, derive_seed, read_corpus

    params, config, vocab, schema, _, _ = load_checkpoint(checkpoint_path)
    corpus_dir = Path(corpus_dir)
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    corpus_config = config_from_dict(manifest["config"])
    if corpus_config.mode != config.mode:
        raise ValueError(
            f"corpus mode {corpus_config.mode!r} does not match model mode {config.mode!r}")
    report = {
        "mode": config.mode,
        "checkpoint_sha256": hashlib.sha256(Path(checkpoint_path).read_bytes()).hexdigest(),
        "corpus_config_hash": manifest.get("config_hash"),
        "conditions": {},
    }
    for cond in ("condA", "condB"):
        samples = read_corpus(corpus_dir / f"test_{cond}.jsonl")
        cond_report, preds = evaluate_split(samples, vocab, params, config,
                                            schema, corpus_config)
        if render:
            from .render import RenderConfig, render_scene_frames
            rc = render_config or RenderConfig()
            static_scores, animated_scores = [], []
            for s, pred in zip(samples[:max_render], preds[:max_render]):
                seed = derive_seed(s.seed, "placement")
                try:
                    gt_frames = render_scene_frames(s.layout, seed, rc)
                    pred_frames = render_scene_frames(pred, seed, rc)
                except Exception:
                    continue  # unplaceable prediction scores nothing
                n = min(len(gt_frames), len(pred_frames))
                score = video_ssim(pred_frames[:n], gt_frames[:n])
                (animated_scores if s.layout.kind == "animated"
                 else static_scores).append(score)
            if static_scores:
                cond_report["ssim_static"] = float(np.mean(static_scores))
            if animated_scores:
                cond_report["ssim_animated"] = float(np.mean(animated_scores))
        report["conditions"][cond] = cond_report
    return report
