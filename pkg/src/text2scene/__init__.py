"""text2scene: free-form scene descriptions -> structured layouts -> rendered
images and animations.

A seeded corpus generator produces paired (description, layout) data under
configurable attribute-combination constraints; an attention-based
sequence-to-layout model decodes descriptions into per-object feature tuples;
a small ray tracer renders the layouts. Everything is deterministic given the
seeds.
"""

from .schema import (
    ConfigError, FeatureSchema, LayoutParseError, ObjectSpec, SceneLayout,
    feature_schema, layout_from_json, layout_to_json, validate_layout,
)
from .corpus import (
    CorpusConfig, DescriptionSample, condition_rule, derive_seed,
    generate_corpus, read_corpus,
)
from .model import ModelConfig, Vocab, greedy_decode, greedy_decode_batch
from .training import TrainConfig, train
from .metrics import object_feature_accuracy, ssim, video_ssim
from .render import (
    RenderConfig, RenderError, place_objects, render_animation, render_static,
)

__version__ = "1.0.0"

__all__ = [
    "ConfigError", "FeatureSchema", "LayoutParseError", "ObjectSpec",
    "SceneLayout", "feature_schema", "layout_from_json", "layout_to_json",
    "validate_layout", "CorpusConfig", "DescriptionSample", "condition_rule",
    "derive_seed", "generate_corpus", "read_corpus", "ModelConfig", "Vocab",
    "greedy_decode", "greedy_decode_batch", "TrainConfig", "train",
    "object_feature_accuracy", "ssim", "video_ssim", "RenderConfig",
    "RenderError", "place_objects", "render_animation", "render_static",
    "__version__",
]
