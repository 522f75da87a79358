"""Scene vocabulary and the abstract-layout data model.

Everything downstream (corpus generation, the neural parser, the renderer)
shares these types. All values are immutable after construction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

SHAPES = ("cube", "sphere", "cylinder")
COLORS = ("gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow")
SIZES = ("large", "small")
TEXTURES = ("metal", "rubber")
MOTIONS = ("spin", "bounce", "shake", "move", "rest")

EOS = "<eos>"
NONE_MOTION = "<none>"

# spin is visually indistinguishable from rest for rotationally symmetric shapes
SPIN_EXCLUDED_SHAPES = frozenset({"sphere", "cylinder"})

MODES = ("static", "animated", "full")

DEFAULT_DURATION = 3.0
MIN_OBJECTS = 3
MAX_OBJECTS = 10


class ConfigError(ValueError):
    """Bad mode / configuration value."""


class LayoutParseError(ValueError):
    """Malformed layout JSON; message names the offending field."""


@dataclass(frozen=True)
class FeatureHead:
    name: str
    classes: tuple[str, ...]
    reserved: tuple[str, ...] = ()

    @property
    def all_classes(self) -> tuple[str, ...]:
        return self.classes + self.reserved

    @property
    def size(self) -> int:
        return len(self.classes) + len(self.reserved)

    def index(self, cls: str) -> int:
        try:
            return self.all_classes.index(cls)
        except ValueError:
            raise LayoutParseError(f"unknown class {cls!r} for head {self.name!r}")


@dataclass(frozen=True)
class FeatureSchema:
    mode: str
    heads: tuple[FeatureHead, ...]

    @property
    def head_names(self) -> tuple[str, ...]:
        return tuple(h.name for h in self.heads)

    def head(self, name: str) -> FeatureHead:
        for h in self.heads:
            if h.name == name:
                return h
        raise KeyError(name)

    @property
    def num_heads(self) -> int:
        return len(self.heads)


def feature_schema(mode: str) -> FeatureSchema:
    """Canonical per-mode head layout. Deterministic; indices are stable."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    heads = [
        FeatureHead("shape", SHAPES, (EOS,)),
        FeatureHead("color", COLORS),
        FeatureHead("size", SIZES),
        FeatureHead("texture", TEXTURES),
    ]
    if mode == "animated":
        heads.append(FeatureHead("motion", MOTIONS))
    elif mode == "full":
        heads.append(FeatureHead("motion", MOTIONS, (NONE_MOTION,)))
    return FeatureSchema(mode=mode, heads=tuple(heads))


@dataclass(frozen=True)
class ObjectSpec:
    shape: str
    color: str
    size: str
    texture: str
    motion: Optional[str] = None

    def feature(self, head_name: str) -> Optional[str]:
        return getattr(self, head_name)


@dataclass(frozen=True)
class SceneLayout:
    objects: tuple[ObjectSpec, ...]
    kind: str  # "static" | "animated"
    duration_seconds: Optional[float] = None

    def __post_init__(self):
        if self.kind == "animated" and self.duration_seconds is None:
            object.__setattr__(self, "duration_seconds", DEFAULT_DURATION)


RESERVED_CLASSES = frozenset({EOS, NONE_MOTION})


def validate_layout(
    layout: SceneLayout,
    schema: FeatureSchema,
    min_objects: int = MIN_OBJECTS,
    max_objects: int = MAX_OBJECTS,
) -> list[str]:
    """Return every invariant violation; an empty list means the layout is ok."""
    violations: list[str] = []
    n = len(layout.objects)
    if n < min_objects:
        violations.append(f"count below minimum ({n} < {min_objects})")
    if n > max_objects:
        violations.append(f"count above maximum ({n} > {max_objects})")
    if layout.kind not in ("static", "animated"):
        violations.append(f"unknown kind {layout.kind!r}")
    if layout.kind == "animated":
        if layout.duration_seconds is None or layout.duration_seconds <= 0:
            violations.append("animated layout needs a positive duration")
    for i, obj in enumerate(layout.objects):
        for head in schema.heads:
            value = obj.feature(head.name)
            if head.name == "motion":
                continue  # handled below per layout kind
            if value in RESERVED_CLASSES:
                violations.append(f"object {i}: reserved class {value!r} on {head.name}")
            elif value not in head.classes:
                violations.append(f"object {i}: unknown {head.name} {value!r}")
        if layout.kind == "animated":
            if obj.motion is None:
                violations.append(f"object {i}: animated layout but motion missing")
            elif obj.motion not in MOTIONS:
                violations.append(f"object {i}: unknown motion {obj.motion!r}")
            elif obj.motion == "spin" and obj.shape in SPIN_EXCLUDED_SHAPES:
                violations.append(f"object {i}: spin excluded for {obj.shape}")
        else:
            if obj.motion is not None:
                violations.append(f"object {i}: static layout but motion {obj.motion!r} set")
    return violations


def _object_to_dict(obj: ObjectSpec) -> dict:
    d = {"shape": obj.shape, "color": obj.color, "size": obj.size, "texture": obj.texture}
    if obj.motion is not None:
        d["motion"] = obj.motion
    return d


def layout_to_dict(layout: SceneLayout) -> dict:
    d: dict = {"kind": layout.kind}
    if layout.duration_seconds is not None:
        d["duration_seconds"] = layout.duration_seconds
    d["objects"] = [_object_to_dict(o) for o in layout.objects]
    return d


def layout_to_json(layout: SceneLayout) -> str:
    return json.dumps(layout_to_dict(layout), separators=(",", ":"))


_HEAD_VOCAB = {
    "shape": frozenset(SHAPES),
    "color": frozenset(COLORS),
    "size": frozenset(SIZES),
    "texture": frozenset(TEXTURES),
    "motion": frozenset(MOTIONS),
}


def layout_from_dict(d: dict) -> SceneLayout:
    if not isinstance(d, dict):
        raise LayoutParseError("layout must be a JSON object")
    if "kind" not in d:
        raise LayoutParseError("missing field 'kind'")
    kind = d["kind"]
    if kind not in ("static", "animated"):
        raise LayoutParseError(f"unknown kind {kind!r}")
    if "objects" not in d:
        raise LayoutParseError("missing field 'objects'")
    duration = d.get("duration_seconds")
    if duration is not None and (not isinstance(duration, (int, float)) or duration <= 0):
        raise LayoutParseError("'duration_seconds' must be a positive number")
    objects = []
    for i, od in enumerate(d["objects"]):
        if not isinstance(od, dict):
            raise LayoutParseError(f"object {i} is not a JSON object")
        fields = {}
        for name in ("shape", "color", "size", "texture"):
            if name not in od:
                raise LayoutParseError(f"object {i}: missing field {name!r}")
            value = od[name]
            if value not in _HEAD_VOCAB[name]:
                raise LayoutParseError(f"object {i}: unknown class {value!r} for {name!r}")
            fields[name] = value
        motion = od.get("motion")
        if motion is not None and motion not in _HEAD_VOCAB["motion"]:
            raise LayoutParseError(f"object {i}: unknown class {motion!r} for 'motion'")
        objects.append(ObjectSpec(motion=motion, **fields))
    return SceneLayout(objects=tuple(objects), kind=kind, duration_seconds=duration)


def layout_from_json(text: str) -> SceneLayout:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutParseError(f"malformed JSON: {exc}") from exc
    return layout_from_dict(d)
