"""Seeded corpus generation: scene sampling under condition constraints,
description rendering, split manifests, distribution audits and class weights.

Every record's randomness derives from hash(master_seed, cell, index, retry),
so regeneration from the same config is byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .schema import (
    COLORS, MOTIONS, SHAPES, SIZES, TEXTURES, SPIN_EXCLUDED_SHAPES,
    ConfigError, FeatureSchema, ObjectSpec, SceneLayout,
    layout_from_dict, layout_to_dict, MIN_OBJECTS, MAX_OBJECTS,
)
from .templates import (
    DEFAULT_DROP_PROB, FAMILIES, RenderedDescription,
    render_description_full, template_bank,
)

# condA withholds half the (shape, color) grid for the two non-sphere shapes;
# condB withholds the complementary half
_CONDA_FORBIDDEN = {
    ("cube", c) for c in ("red", "green", "purple", "cyan")
} | {
    ("cylinder", c) for c in ("gray", "blue", "brown", "yellow")
}
_CONDB_FORBIDDEN = {
    (s, c) for s in ("cube", "cylinder") for c in COLORS
} - _CONDA_FORBIDDEN


@dataclass(frozen=True)
class ConditionRule:
    name: str
    forbidden: frozenset

    def allowed_colors(self, shape: str) -> tuple[str, ...]:
        return tuple(c for c in COLORS if (shape, c) not in self.forbidden)


_RULES = {
    "condA": ConditionRule("condA", frozenset(_CONDA_FORBIDDEN)),
    "condB": ConditionRule("condB", frozenset(_CONDB_FORBIDDEN)),
    "unconstrained": ConditionRule("unconstrained", frozenset()),
}


def condition_rule(name: str) -> ConditionRule:
    try:
        return _RULES[name]
    except KeyError:
        raise ConfigError(f"unknown condition {name!r}")


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit sub-seed; independent of PYTHONHASHSEED and platform."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(master_seed).encode())
    for p in parts:
        h.update(b"\x1f" + str(p).encode())
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class DescriptionSample:
    text: str
    family: str
    condition: str
    split: str
    layout: SceneLayout
    template_id: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "text": self.text,
                "family": self.family,
                "condition": self.condition,
                "split": self.split,
                "template_id": self.template_id,
                "seed": self.seed,
                "layout": layout_to_dict(self.layout),
            },
            separators=(",", ":"),
        )

    @staticmethod
    def from_json(line: str) -> "DescriptionSample":
        d = json.loads(line)
        return DescriptionSample(
            text=d["text"], family=d["family"], condition=d["condition"],
            split=d["split"], layout=layout_from_dict(d["layout"]),
            template_id=d["template_id"], seed=d["seed"],
        )


DEFAULT_FAMILY_RATIO = (0.70, 0.15, 0.15)  # narrative / semi / quantitative


@dataclass
class CorpusConfig:
    mode: str = "static"
    master_seed: int = 0
    # counts[split][condition][family]
    counts: dict = field(default_factory=dict)
    min_objects: int = MIN_OBJECTS
    max_objects: int = MAX_OBJECTS
    drop_prob: float = DEFAULT_DROP_PROB

    @staticmethod
    def from_totals(mode: str, master_seed: int, train: int, val: int, test: int,
                    family_ratio=DEFAULT_FAMILY_RATIO, **kw) -> "CorpusConfig":
        """Split per-cell totals into per-family counts (remainder to narrative)."""
        def fam_counts(total: int) -> dict:
            semi = int(round(total * family_ratio[1]))
            quant = int(round(total * family_ratio[2]))
            return {"narrative": total - semi - quant,
                    "semi_narrative": semi, "quantitative": quant}

        counts = {
            "train": {"condA": fam_counts(train)},
            "val": {"condA": fam_counts(val), "condB": fam_counts(val)},
            "test": {"condA": fam_counts(test), "condB": fam_counts(test)},
        }
        return CorpusConfig(mode=mode, master_seed=master_seed, counts=counts, **kw)

    def validate(self):
        if self.mode not in ("static", "animated", "full"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not (0 <= self.drop_prob < 1):
            raise ConfigError("drop_prob must be in [0, 1)")
        if not self.counts:
            raise ConfigError("empty counts")
        total = 0
        for split, conds in self.counts.items():
            for cond, fams in conds.items():
                for fam, n in fams.items():
                    if fam not in FAMILIES:
                        raise ConfigError(f"unknown family {fam!r}")
                    if n < 0:
                        raise ConfigError("counts must be >= 0")
                    total += n
        if total == 0:
            raise ConfigError("every cell has count zero")


def sample_scene(seed: int, config: CorpusConfig, condition: str,
                 kind: str | None = None) -> SceneLayout:
    """Uniform scene draw honoring the condition rule and the spin exclusion."""
    rule = condition_rule(condition)
    if kind is None:
        if config.mode == "full":
            raise ConfigError("mode 'full' needs an explicit kind per sample")
        kind = "animated" if config.mode == "animated" else "static"
    rng = np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))
    n = int(rng.integers(config.min_objects, config.max_objects + 1))
    objects = []
    for _ in range(n):
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        colors = rule.allowed_colors(shape)
        if not colors:
            raise ConfigError(f"condition {condition!r} leaves no color for {shape!r}")
        color = colors[int(rng.integers(len(colors)))]
        size = SIZES[int(rng.integers(len(SIZES)))]
        texture = TEXTURES[int(rng.integers(len(TEXTURES)))]
        motion = None
        if kind == "animated":
            choices = MOTIONS if shape not in SPIN_EXCLUDED_SHAPES else \
                tuple(m for m in MOTIONS if m != "spin")
            motion = choices[int(rng.integers(len(choices)))]
        objects.append(ObjectSpec(shape, color, size, texture, motion))
    return SceneLayout(tuple(objects), kind)


def render_sample(config: CorpusConfig, condition: str, split: str, family: str,
                  index: int, retry: int = 0) -> tuple[DescriptionSample, RenderedDescription]:
    """Deterministically build one record; bumping `retry` reroll everything."""
    seed = derive_seed(config.master_seed, split, condition, family, index, retry)
    if config.mode == "full":
        kind = "static" if index % 2 == 0 else "animated"
    else:
        kind = "animated" if config.mode == "animated" else "static"
    layout = sample_scene(derive_seed(seed, "scene"), config, condition, kind=kind)
    bank = template_bank(kind, family)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "template")))
    template_id = int(rng.integers(len(bank)))
    rendered = render_description_full(
        layout, family, template_id, derive_seed(seed, "text"),
        drop_prob=config.drop_prob,
    )
    sample = DescriptionSample(
        text=rendered.text, family=family, condition=condition, split=split,
        layout=rendered.layout, template_id=template_id, seed=seed,
    )
    return sample, rendered


def rerender(sample: DescriptionSample, config: CorpusConfig) -> RenderedDescription:
    """Recompute spans / specified-feature sets for a stored sample."""
    rendered = render_description_full(
        sample.layout, sample.family, sample.template_id,
        derive_seed(sample.seed, "text"), drop_prob=config.drop_prob,
    )
    if rendered.text != sample.text:
        raise ValueError("stored text does not match deterministic re-render")
    return rendered


_SPLIT_FILES = [
    ("train", "condA", "train.jsonl"),
    ("val", "condA", "val_condA.jsonl"),
    ("val", "condB", "val_condB.jsonl"),
    ("test", "condA", "test_condA.jsonl"),
    ("test", "condB", "test_condB.jsonl"),
]

_MAX_RETRIES = 64


def generate_corpus(config: CorpusConfig, out_dir) -> dict:
    """Write one JSONL per split/condition plus a manifest; returns the manifest."""
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seen: set[tuple[str, str]] = set()  # (text, layout json) disjointness across splits
    manifest: dict = {"config": _config_dict(config), "files": {}}
    for split, cond, fname in _SPLIT_FILES:
        fams = config.counts.get(split, {}).get(cond)
        if not fams:
            continue
        lines = []
        for family in FAMILIES:
            for i in range(fams.get(family, 0)):
                for retry in range(_MAX_RETRIES):
                    sample, _ = render_sample(config, cond, split, family, i, retry)
                    key = (sample.text, json.dumps(layout_to_dict(sample.layout),
                                                   separators=(",", ":")))
                    if key not in seen:
                        seen.add(key)
                        lines.append(sample.to_json())
                        break
                else:
                    raise RuntimeError(
                        f"could not find a unique sample for {split}/{cond}/{family}#{i}")
        data = ("\n".join(lines) + "\n").encode("utf-8") if lines else b""
        path = out / fname
        path.write_bytes(data)
        manifest["files"][fname] = {
            "split": split, "condition": cond, "count": len(lines),
            "sha256": hashlib.sha256(data).hexdigest(),
        }
    cfg_json = json.dumps(manifest["config"], sort_keys=True).encode()
    manifest["config_hash"] = hashlib.sha256(cfg_json).hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _config_dict(config: CorpusConfig) -> dict:
    return asdict(config)


def config_from_dict(d: dict) -> CorpusConfig:
    return CorpusConfig(**d)


def read_corpus(path) -> list[DescriptionSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(DescriptionSample.from_json(line))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}: malformed corpus line {lineno}: {exc}") from exc
    return samples


def corpus_stats(samples: list[DescriptionSample],
                 config: CorpusConfig | None = None) -> dict:
    """Distribution report: feature marginals, family counts, drop histogram."""
    feature_counts = {
        "shape": {c: 0 for c in SHAPES},
        "color": {c: 0 for c in COLORS},
        "size": {c: 0 for c in SIZES},
        "texture": {c: 0 for c in TEXTURES},
        "motion": {c: 0 for c in MOTIONS},
    }
    family_counts = {f: 0 for f in FAMILIES}
    dropped_hist: dict[str, int] = {"color": 0, "size": 0, "texture": 0, "motion": 0}
    spin_on_excluded = 0
    n_objects = 0
    for s in samples:
        family_counts[s.family] += 1
        for obj in s.layout.objects:
            n_objects += 1
            for head in ("shape", "color", "size", "texture"):
                feature_counts[head][obj.feature(head)] += 1
            if obj.motion is not None:
                feature_counts["motion"][obj.motion] += 1
                if obj.motion == "spin" and obj.shape in SPIN_EXCLUDED_SHAPES:
                    spin_on_excluded += 1
        if s.family == "semi_narrative" and config is not None:
            rendered = rerender(s, config)
            for kept, obj in zip(rendered.specified, s.layout.objects):
                for head in dropped_hist:
                    if obj.feature(head) is not None and head not in kept:
                        dropped_hist[head] += 1
    return {
        "n_samples": len(samples),
        "n_objects": n_objects,
        "family_counts": family_counts,
        "feature_counts": feature_counts,
        "dropped_feature_histogram": dropped_hist,
        "spin_on_excluded_shapes": spin_on_excluded,
    }


def condition_purity(samples: list[DescriptionSample], condition: str) -> dict:
    """Audit forbidden-pair leakage and condB novelty coverage."""
    rule = condition_rule(condition)
    other = condition_rule("condB" if condition == "condA" else "condA")
    leaked = 0
    scenes_with_novel = 0
    eligible = 0
    for s in samples:
        pairs = {(o.shape, o.color) for o in s.layout.objects}
        if pairs & rule.forbidden:
            leaked += 1
        if len(s.layout.objects) >= 3:
            eligible += 1
            if pairs & other.forbidden:
                scenes_with_novel += 1
    return {
        "condition": condition,
        "samples_with_forbidden_pairs": leaked,
        "novel_pair_fraction": scenes_with_novel / eligible if eligible else 0.0,
    }


def class_weights(samples: list[DescriptionSample], schema: FeatureSchema) -> dict:
    """Per-head rescaling weights w_c = N_total / (K * n_c) over observed targets.

    In full mode static objects count toward the reserved NONE motion class.
    The shape head's EOS class is excluded here; the loss weighs EOS at 1.
    """
    if not samples:
        raise ConfigError("class_weights needs a non-empty corpus")
    weights = {}
    for head in schema.heads:
        if head.name == "shape":
            classes = head.classes  # EOS excluded
        else:
            classes = head.all_classes
        counts = np.zeros(len(classes), dtype=np.float64)
        for s in samples:
            for obj in s.layout.objects:
                value = obj.feature(head.name)
                if value is None:
                    if head.name == "motion" and schema.mode == "full":
                        value = head.reserved[0]
                    else:
                        continue
                counts[classes.index(value)] += 1
        total = counts.sum()
        k = len(classes)
        w = np.zeros(k, dtype=np.float64)
        nonzero = counts > 0
        w[nonzero] = total / (k * counts[nonzero])
        if not nonzero.all():
            missing = [c for c, nz in zip(classes, nonzero) if not nz]
            warnings.warn(f"head {head.name!r}: zero-count classes {missing} get weight 0")
        if head.name == "shape":
            w = np.concatenate([w, np.ones(len(head.reserved))])
        weights[head.name] = w
    return weights
