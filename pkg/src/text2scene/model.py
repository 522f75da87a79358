"""Description-to-layout neural parser.

Encoder (trainable token embedding + optional one-layer self-attention mixer),
additive attention over encoded tokens, a single-layer LSTM decoder, one dense
classification head per object-feature, and per-feature embedding feedback
into the next decoder step. Decoding stops when the shape head emits EOS.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import derive_seed
from .schema import (
    EOS, NONE_MOTION, FeatureSchema, ObjectSpec, SceneLayout, ConfigError,
)
from .templates import tokenize

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]  # index -> token; PAD=0, UNK=1

    @staticmethod
    def from_texts(texts) -> "Vocab":
        words = sorted({t for text in texts for t in tokenize(text)})
        return Vocab(tokens=(PAD_TOKEN, UNK_TOKEN) + tuple(words))

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        index = self._index()
        return [index.get(t, 1) for t in tokenize(text)]

    def _index(self) -> dict:
        # rebuilt on demand; Vocab stays a frozen value type
        return {t: i for i, t in enumerate(self.tokens)}


@dataclass
class ModelConfig:
    mode: str = "static"
    enc_dim: int = 128
    attn_dim: int = 128
    hidden_dim: int = 128
    max_objects: int = 11
    dropout: float = 0.1
    use_mixer: bool = True
    soft_embedding: bool = False

    def head_dims(self, schema: FeatureSchema) -> list[int]:
        """Per-head feedback embedding widths; they sum to enc_dim."""
        n = schema.num_heads
        base = self.enc_dim // n
        dims = [base] * n
        dims[-1] = self.enc_dim - base * (n - 1)
        return dims

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig, vocab: Vocab, schema: FeatureSchema,
                seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))
    e, a, h = config.enc_dim, config.attn_dim, config.hidden_dim
    p: dict[str, np.ndarray] = {}
    p["emb"] = _uniform(rng, e, (vocab.size, e))
    if config.use_mixer:
        for name in ("mix_Wq", "mix_Wk", "mix_Wv"):
            p[name] = _uniform(rng, e, (e, e))
    p["att_W1"] = _uniform(rng, e, (e, a))
    p["att_W2"] = _uniform(rng, h, (h, a))
    p["att_b1"] = np.zeros(a)
    p["att_W3"] = _uniform(rng, a, (a, 1))
    p["att_b2"] = np.zeros(1)
    for gate in "ifog":
        p[f"lstm_Wx{gate}"] = _uniform(rng, e, (e, h))
        p[f"lstm_Wh{gate}"] = _uniform(rng, h, (h, h))
        p[f"lstm_b{gate}"] = np.ones(h) if gate == "f" else np.zeros(h)
    dims = config.head_dims(schema)
    for head, dim in zip(schema.heads, dims):
        k = head.size
        p[f"head_{head.name}_W"] = _uniform(rng, h, (h, k))
        p[f"head_{head.name}_b"] = np.zeros(k)
        p[f"femb_{head.name}"] = _uniform(rng, dim, (k, dim))
    p["i0"] = _uniform(rng, e, (1, e))
    return {name: ad.parameter(arr) for name, arr in p.items()}


def pad_batch(token_id_lists: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    if any(len(ids) == 0 for ids in token_id_lists):
        raise ConfigError("empty token sequence")
    d = max(len(ids) for ids in token_id_lists)
    b = len(token_id_lists)
    ids = np.zeros((b, d), dtype=np.int64)
    mask = np.zeros((b, d), dtype=bool)
    for i, row in enumerate(token_id_lists):
        ids[i, : len(row)] = row
        mask[i, : len(row)] = True
    return ids, mask


def encode(token_ids: np.ndarray, pad_mask: np.ndarray, params, config: ModelConfig,
           train: bool = False, drop_seed: int = 0) -> Tensor:
    """Token ids (B, d) -> hidden vectors (B, d, enc_dim)."""
    if token_ids.ndim != 2 or token_ids.shape[1] == 0:
        raise ConfigError("encode expects a non-empty (batch, tokens) array")
    x = ad.embedding_lookup(params["emb"], token_ids)
    if config.use_mixer:
        q = ad.matmul(x, params["mix_Wq"])
        k = ad.matmul(x, params["mix_Wk"])
        v = ad.matmul(x, params["mix_Wv"])
        scores = ad.scale(ad.matmul(q, ad.swap_last(k)), 1.0 / np.sqrt(config.enc_dim))
        attn = ad.softmax(scores, axis=-1, mask=pad_mask[:, None, :])
        x = ad.add(x, ad.matmul(attn, v))
    if train and config.dropout > 0:
        x = ad.dropout(x, config.dropout, drop_seed, train=True)
    return x


def attend(h0: Tensor, h_prev: Tensor, params, pad_mask: np.ndarray,
           p1: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Additive attention: returns context (B, enc) and weights (B, d).

    `p1` lets callers hoist the step-invariant projection of h0 out of the
    decode loop.
    """
    b, d, _ = h0.shape
    if p1 is None:
        p1 = ad.matmul(h0, params["att_W1"])                  # (B, d, attn)
    p2 = ad.matmul(h_prev, params["att_W2"])                  # (B, attn)
    a = ad.tanh(ad.add(ad.add(p1, ad.reshape(p2, (b, 1, -1))), params["att_b1"]))
    scores = ad.reshape(ad.add(ad.matmul(a, params["att_W3"]), params["att_b2"]), (b, d))
    weights = ad.softmax(scores, axis=-1, mask=pad_mask)
    context = ad.reshape(ad.matmul(ad.reshape(weights, (b, 1, d)), h0), (b, -1))
    return context, weights


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params) -> tuple[Tensor, Tensor, Tensor]:
    def gate(name, fn):
        pre = ad.add(ad.add(ad.matmul(x, params[f"lstm_Wx{name}"]),
                            ad.matmul(h, params[f"lstm_Wh{name}"])),
                     params[f"lstm_b{name}"])
        return fn(pre)

    i = gate("i", ad.sigmoid)
    f = gate("f", ad.sigmoid)
    o = gate("o", ad.sigmoid)
    g = gate("g", ad.tanh)
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, h_new, c_new


def heads_forward(y: Tensor, params, schema: FeatureSchema) -> dict[str, Tensor]:
    return {
        head.name: ad.softmax(
            ad.add(ad.matmul(y, params[f"head_{head.name}_W"]),
                   params[f"head_{head.name}_b"]),
            axis=-1)
        for head in schema.heads
    }


def feature_feedback(indices: dict[str, np.ndarray], params,
                     schema: FeatureSchema) -> Tensor:
    parts = [ad.embedding_lookup(params[f"femb_{h.name}"], indices[h.name])
             for h in schema.heads]
    return ad.concat(parts, axis=-1)


def soft_feature_feedback(dists: dict[str, Tensor], params,
                          schema: FeatureSchema) -> Tensor:
    parts = [ad.soft_lookup(params[f"femb_{h.name}"], dists[h.name])
             for h in schema.heads]
    return ad.concat(parts, axis=-1)


@dataclass
class ForwardResult:
    step_dists: list[dict[str, Tensor]]   # per step, per head: (B, K)
    attention: list[Tensor]               # per step: (B, d)


def forward(token_ids: np.ndarray, pad_mask: np.ndarray, params,
            config: ModelConfig, schema: FeatureSchema,
            targets: np.ndarray | None = None, tf_ratio: float = 0.5,
            seed: int = 0, train: bool = False,
            num_steps: int | None = None) -> ForwardResult:
    """Run encode -> (attend, lstm, heads, feedback) for a fixed step count.

    With `targets` (B, T, N int), each (sample, step) independently feeds back
    ground truth with probability tf_ratio, its own argmax otherwise.
    """
    b = token_ids.shape[0]
    h0 = encode(token_ids, pad_mask, params, config, train=train,
                drop_seed=derive_seed(seed, "enc_drop"))
    if targets is not None:
        steps = targets.shape[1]
    else:
        steps = num_steps if num_steps is not None else config.max_objects
    h = ad.constant(np.zeros((b, config.hidden_dim)))
    c = ad.constant(np.zeros((b, config.hidden_dim)))
    i_t = ad.add(ad.constant(np.zeros((b, config.enc_dim))), params["i0"])
    step_dists, attention = [], []
    p1 = ad.matmul(h0, params["att_W1"])
    for t in range(steps):
        context, weights = attend(h0, h, params, pad_mask, p1=p1)
        x = ad.add(context, i_t)
        y, h, c = lstm_step(x, h, c, params)
        if train and config.dropout > 0:
            y = ad.dropout(y, config.dropout, derive_seed(seed, "y_drop", t), train=True)
        dists = heads_forward(y, params, schema)
        step_dists.append(dists)
        attention.append(weights)
        if t + 1 < steps:
            if config.soft_embedding:
                i_t = soft_feature_feedback(dists, params, schema)
                continue
            indices = {}
            if targets is not None:
                rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "tf", t)))
                use_gt = rng.random(b) < tf_ratio
            for hi, head in enumerate(schema.heads):
                pred = dists[head.name].data.argmax(axis=-1)
                if targets is not None:
                    indices[head.name] = np.where(use_gt, targets[:, t, hi], pred)
                else:
                    indices[head.name] = pred
            i_t = feature_feedback(indices, params, schema)
    return ForwardResult(step_dists, attention)


def build_targets(layouts: list[SceneLayout], schema: FeatureSchema,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Target class indices (B, T, N) and loss mask (B, T, N).

    T = longest object list + 1 (EOS step). At the EOS step only the shape
    head contributes; padded steps beyond it contribute nothing.
    """
    b = len(layouts)
    t_max = max(len(l.objects) for l in layouts) + 1
    n = schema.num_heads
    targets = np.zeros((b, t_max, n), dtype=np.int64)
    mask = np.zeros((b, t_max, n), dtype=np.float64)
    shape_head = schema.head("shape")
    for bi, layout in enumerate(layouts):
        for t, obj in enumerate(layout.objects):
            for hi, head in enumerate(schema.heads):
                value = obj.feature(head.name)
                if value is None:
                    if head.name == "motion" and schema.mode == "full":
                        value = NONE_MOTION
                    else:
                        raise ConfigError(
                            f"layout missing {head.name} in mode {schema.mode}")
                targets[bi, t, hi] = head.index(value)
                mask[bi, t, hi] = 1.0
        eos_step = len(layout.objects)
        targets[bi, eos_step, 0] = shape_head.index(EOS)
        mask[bi, eos_step, 0] = 1.0
    return targets, mask


def sequence_loss(result: ForwardResult, targets: np.ndarray, mask: np.ndarray,
                  class_weights: dict[str, np.ndarray],
                  schema: FeatureSchema) -> Tensor:
    """Weighted NLL summed over steps and heads, averaged over the batch."""
    b, t_steps, _ = targets.shape
    if len(result.step_dists) < t_steps:
        raise ConfigError("forward produced fewer steps than targets")
    pieces = []
    for t in range(t_steps):
        for hi, head in enumerate(schema.heads):
            m = mask[:, t, hi]
            if not m.any():
                continue
            pieces.append(ad.nll(result.step_dists[t][head.name],
                                 targets[:, t, hi], class_weights[head.name], m))
    total = pieces[0]
    for piece in pieces[1:]:
        total = ad.add(total, piece)
    return ad.scale(total, 1.0 / b)


@dataclass
class AttentionTrace:
    weights: np.ndarray          # (steps, tokens); rows sum to 1
    tokens: tuple[str, ...]
    step_labels: tuple[str, ...]  # predicted shape class per decode step


def _layout_from_steps(step_preds: list[dict[str, int]], schema: FeatureSchema,
                       mode: str) -> SceneLayout:
    objects = []
    for pred in step_preds:
        fields = {}
        motion = None
        for head in schema.heads:
            cls = head.all_classes[pred[head.name]]
            if head.name == "motion":
                motion = None if cls == NONE_MOTION else cls
            else:
                fields[head.name] = cls
        objects.append(ObjectSpec(motion=motion, **fields))
    if mode == "static":
        kind = "static"
    elif mode == "animated":
        kind = "animated"
    else:
        kind = "animated" if any(o.motion is not None for o in objects) else "static"
    return SceneLayout(tuple(objects), kind)


def greedy_decode_batch(texts: list[str], vocab: Vocab, params,
                        config: ModelConfig, schema: FeatureSchema,
                        ) -> tuple[list[SceneLayout], list[AttentionTrace]]:
    token_lists = [vocab.encode(t) for t in texts]
    ids, mask = pad_batch(token_lists)
    result = forward(ids, mask, params, config, schema, train=False)
    eos_idx = schema.head("shape").index(EOS)
    layouts, traces = [], []
    for bi, text in enumerate(texts):
        d = len(token_lists[bi])
        step_preds: list[dict[str, int]] = []
        rows, labels = [], []
        for t, dists in enumerate(result.step_dists):
            pred = {h.name: int(dists[h.name].data[bi].argmax()) for h in schema.heads}
            rows.append(result.attention[t].data[bi, :d])
            labels.append(schema.head("shape").all_classes[pred["shape"]])
            if pred["shape"] == eos_idx:
                break
            step_preds.append(pred)
        layouts.append(_layout_from_steps(step_preds, schema, config.mode))
        traces.append(AttentionTrace(
            weights=np.array(rows), tokens=tuple(tokenize(text)),
            step_labels=tuple(labels)))
    return layouts, traces


def greedy_decode(text: str, vocab: Vocab, params, config: ModelConfig,
                  schema: FeatureSchema) -> tuple[SceneLayout, AttentionTrace]:
    """Decode one description. Invariant-violating objects are kept verbatim;
    callers flag them with validate_layout."""
    if not text.strip() or not tokenize(text):
        raise ConfigError("empty text")
    layouts, traces = greedy_decode_batch([text], vocab, params, config, schema)
    return layouts[0], traces[0]
