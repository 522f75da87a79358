"""Template bank for rendering scene layouts into natural-language descriptions.

Three description families: narrative (every feature of every object stated),
semi_narrative (non-shape features randomly dropped), quantitative (per-shape
counts only). Surface words are diversified through a seeded synonym table.

Besides the text itself, rendering reports per-object token spans and the set
of features actually stated, so evaluation can check attention localization
and score unspecified features separately.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .schema import SceneLayout, ObjectSpec

FAMILIES = ("narrative", "semi_narrative", "quantitative")

DEFAULT_DROP_PROB = 0.35

# surface forms per canonical class; first entry is the canonical word
DEFAULT_SYNONYMS: dict[str, tuple[str, ...]] = {
    "metal": ("metal", "shiny", "metallic"),
    "rubber": ("rubber", "matte"),
    "large": ("large", "big"),
    "small": ("small", "tiny"),
    "spin": ("spinning",),
    "bounce": ("bouncing",),
    "shake": ("rocking", "shaking"),
    "move": ("moving",),
    "rest": ("still", "resting"),
}

COUNT_WORDS = ("zero", "one", "two", "three", "four", "five",
               "six", "seven", "eight", "nine", "ten")

_TOKEN_RE = re.compile(r"[a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; punctuation and digits are dropped."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Template:
    template_id: int
    family: str
    frame: str         # draw | there_are | scene_contains | present
    phrase_style: str  # s1 | s2 | a1 | a2 | count


def _narr_templates(family: str, animated: bool) -> list[Template]:
    styles = ("a1", "a2") if animated else ("s1", "s2")
    if family == "narrative":
        combos = [(f, s) for f in ("draw", "there_are", "scene_contains") for s in styles]
    else:
        combos = [("draw", styles[0]), ("draw", styles[1]),
                  ("there_are", styles[1]), ("scene_contains", styles[0])]
    return [Template(i, family, f, s) for i, (f, s) in enumerate(combos)]


def template_bank(kind: str, family: str) -> list[Template]:
    if family == "quantitative":
        frames = ("there_are", "scene_contains", "draw", "present")
        return [Template(i, family, f, "count") for i, f in enumerate(frames)]
    if family in ("narrative", "semi_narrative"):
        return _narr_templates(family, animated=(kind == "animated"))
    raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True)
class RenderedDescription:
    text: str
    layout: SceneLayout                       # objects in mention order
    token_spans: tuple[tuple[int, int], ...]  # [start, end) token range per object
    specified: tuple[frozenset, ...]          # head names stated per object


def _pick(rng: np.random.Generator, synonyms: dict, word: str) -> str:
    forms = synonyms.get(word)
    if not forms:
        return word
    if len(forms) == 1:
        return forms[0]
    return forms[int(rng.integers(len(forms)))]


def _object_phrase(obj: ObjectSpec, style: str, kept: frozenset,
                   rng: np.random.Generator, synonyms: dict) -> list[str]:
    size = _pick(rng, synonyms, obj.size) if "size" in kept else None
    color = obj.color if "color" in kept else None
    texture = _pick(rng, synonyms, obj.texture) if "texture" in kept else None
    motion = None
    if obj.motion is not None and "motion" in kept:
        motion = _pick(rng, synonyms, obj.motion)

    words = ["a"]
    if style == "s1":
        # a large yellow colored cylinder of matte texture
        if size:
            words.append(size)
        if color:
            words += [color, "colored"]
        words.append(obj.shape)
        if texture:
            words += ["of", texture, "texture"]
    elif style == "s2":
        # a small gray metal sphere
        words += [w for w in (size, color, texture) if w]
        words.append(obj.shape)
    elif style == "a1":
        # a large yellow bouncing cylinder of matte texture
        if size:
            words.append(size)
        if color:
            words += [color, "colored"]
        if motion:
            words.append(motion)
        words.append(obj.shape)
        if texture:
            words += ["of", texture, "texture"]
    elif style == "a2":
        # a yellow moving metal large sphere
        words += [w for w in (color, motion, texture, size) if w]
        words.append(obj.shape)
    else:
        raise ValueError(f"unknown phrase style {style!r}")
    return words


_FRAME_PREFIX = {
    "draw": ["draw"],
    "there_are": ["there", "are"],
    "scene_contains": ["the", "scene", "contains"],
    "present": [],
}


def _render_text(frame: str, phrases: list[list[str]]) -> tuple[str, list[tuple[int, int]]]:
    tokens = list(_FRAME_PREFIX[frame])
    spans = []
    for i, phrase in enumerate(phrases):
        if i == len(phrases) - 1 and len(phrases) > 1:
            tokens.append("and")  # joiner token, outside every span
        start = len(tokens)
        tokens += phrase
        spans.append((start, len(tokens)))
    parts = [" ".join(p) for p in phrases]
    if len(parts) == 1:
        body = parts[0]
    else:
        body = ", ".join(parts[:-1]) + " and " + parts[-1]
    prefix = " ".join(_FRAME_PREFIX[frame])
    if frame == "present":
        text = body + " are present in the scene."
    elif prefix:
        text = prefix + " " + body + "."
    else:
        text = body + "."
    text = text[0].upper() + text[1:]
    assert tokenize(text)[: spans[-1][1]] == tokens[: spans[-1][1]]
    return text, spans


def render_description_full(
    layout: SceneLayout,
    family: str,
    template_id: int,
    seed: int,
    synonyms: dict | None = None,
    drop_prob: float = DEFAULT_DROP_PROB,
) -> RenderedDescription:
    if synonyms is None:
        synonyms = DEFAULT_SYNONYMS
    bank = template_bank(layout.kind, family)
    if not 0 <= template_id < len(bank):
        raise ValueError(f"template_id {template_id} out of range for {layout.kind}/{family}")
    tpl = bank[template_id]
    rng = np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))

    heads = ["shape", "color", "size", "texture"]
    if layout.kind == "animated":
        heads.append("motion")

    if family == "quantitative":
        # group by shape in order of first mention; objects keep sampled order
        order: list[str] = []
        groups: dict[str, list[ObjectSpec]] = {}
        for obj in layout.objects:
            if obj.shape not in groups:
                groups[obj.shape] = []
                order.append(obj.shape)
            groups[obj.shape].append(obj)
        phrases = []
        for shape in order:
            n = len(groups[shape])
            noun = shape if n == 1 else shape + "s"
            phrases.append([COUNT_WORDS[n], noun])
        text, group_spans = _render_text(tpl.frame, phrases)
        objects, spans = [], []
        for shape, span in zip(order, group_spans):
            for obj in groups[shape]:
                objects.append(obj)
                spans.append(span)
        new_layout = SceneLayout(tuple(objects), layout.kind, layout.duration_seconds)
        specified = tuple(frozenset({"shape"}) for _ in objects)
        return RenderedDescription(text, new_layout, tuple(spans), specified)

    phrases = []
    specified = []
    for obj in layout.objects:
        if family == "narrative":
            kept = frozenset(heads)
        else:
            kept = {"shape"}
            for head in heads:
                if head != "shape" and rng.random() >= drop_prob:
                    kept.add(head)
            kept = frozenset(kept)
        phrases.append(_object_phrase(obj, tpl.phrase_style, kept, rng, synonyms))
        specified.append(kept)
    text, spans = _render_text(tpl.frame, phrases)
    return RenderedDescription(text, layout, tuple(spans), tuple(specified))


def render_description(layout, family, template_id, seed,
                       synonyms=None, drop_prob=DEFAULT_DROP_PROB) -> str:
    return render_description_full(layout, family, template_id, seed,
                                   synonyms=synonyms, drop_prob=drop_prob).text
