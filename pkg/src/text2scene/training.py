"""Training loop: teacher forcing, weighted loss, periodic validation,
checkpointing and reproducible CSV logs.

All randomness (shuffling, teacher-forcing coins, dropout masks) is derived
from (seed, epoch, batch), so a resumed run is bit-identical to an
uninterrupted one.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import class_weights as compute_class_weights
from .corpus import derive_seed, read_corpus
from .metrics import object_feature_accuracy
from .model import (
    ModelConfig, Vocab, build_targets, forward, greedy_decode_batch,
    init_params, pad_batch, sequence_loss,
)
from .schema import ConfigError, feature_schema


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    mode: str = "static"
    corpus_dir: str = "corpus"
    epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-3
    dropout: float = 0.1
    tf_ratio: float = 0.5
    val_interval: int = 1
    seed: int = 0
    optimizer: str = "adam"  # adam | sgd
    clip_norm: float = 5.0
    enc_dim: int = 128
    attn_dim: int = 128
    hidden_dim: int = 128
    max_objects: int = 11
    use_mixer: bool = True
    early_stop_condA: float | None = None

    def validate(self):
        if self.mode not in ("static", "animated", "full"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not (0.0 <= self.tf_ratio <= 1.0):
            raise ConfigError("teacher-forcing ratio must be in [0, 1]")
        if self.val_interval < 1:
            raise ConfigError("val_interval must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def model_config(self) -> ModelConfig:
        return ModelConfig(mode=self.mode, enc_dim=self.enc_dim,
                           attn_dim=self.attn_dim, hidden_dim=self.hidden_dim,
                           max_objects=self.max_objects, dropout=self.dropout,
                           use_mixer=self.use_mixer)


# hyperparameters reported for the full-scale runs; kept for documentation and
# small-scale experiments, not a desk-scale target
PAPER_PRESET = dict(optimizer="sgd", lr=0.01, dropout=0.1, tf_ratio=0.5,
                    enc_dim=1024, attn_dim=1024, hidden_dim=1024,
                    batch_size=520, epochs=120, val_interval=10)
DESK_PRESET = dict(optimizer="adam", lr=1e-3, dropout=0.1, tf_ratio=0.5,
                   enc_dim=128, attn_dim=128, hidden_dim=128,
                   batch_size=32, epochs=60, val_interval=1)


class Optimizer:
    def state_arrays(self) -> dict:
        return {}

    def load_state(self, arrays: dict):
        pass


class SGD(Optimizer):
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params):
        for t in params.values():
            if t.grad is not None:
                t.data -= self.lr * t.grad


class Adam(Optimizer):
    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, tensor in params.items():
            if tensor.grad is None:
                continue
            m = self.m.setdefault(name, np.zeros_like(tensor.data))
            v = self.v.setdefault(name, np.zeros_like(tensor.data))
            m += (1.0 - self.beta1) * (tensor.grad - m)
            v += (1.0 - self.beta2) * (tensor.grad ** 2 - v)
            tensor.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_arrays(self) -> dict:
        out = {"step": np.array([float(self.t)])}
        for name, arr in self.m.items():
            out[f"m_{name}"] = arr
        for name, arr in self.v.items():
            out[f"v_{name}"] = arr
        return out

    def load_state(self, arrays: dict):
        self.t = int(arrays["step"][0])
        self.m = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("m_")}
        self.v = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("v_")}


def _make_optimizer(config: TrainConfig) -> Optimizer:
    return Adam(config.lr) if config.optimizer == "adam" else SGD(config.lr)


def clip_gradients(params, max_norm: float) -> float:
    total = 0.0
    for t in params.values():
        if t.grad is not None:
            total += float((t.grad ** 2).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for t in params.values():
            if t.grad is not None:
                t.grad *= scale
    return norm


def _strict_accuracy(samples, vocab, params, mcfg, schema) -> float:
    preds, _ = greedy_decode_batch([s.text for s in samples], vocab, params,
                                   mcfg, schema)
    return object_feature_accuracy(preds, [s.layout for s in samples], schema)


def train_step(batch, vocab, params, mcfg, schema, weights, config: TrainConfig,
               step_seed: int) -> float:
    """One forward/backward/update-ready pass; returns the batch loss."""
    ids, mask = pad_batch([vocab.encode(s.text) for s in batch])
    targets, loss_mask = build_targets([s.layout for s in batch], schema)
    result = forward(ids, mask, params, mcfg, schema, targets=targets,
                     tf_ratio=config.tf_ratio, seed=step_seed, train=True)
    loss = sequence_loss(result, targets, loss_mask, weights, schema)
    if not np.isfinite(loss.data):
        raise FloatingPointError("non-finite loss")
    loss.backward()
    return float(loss.data)


def train(config: TrainConfig, out_dir, resume=None) -> dict:
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus_dir = Path(config.corpus_dir)
    train_samples = read_corpus(corpus_dir / "train.jsonl")
    val_a = read_corpus(corpus_dir / "val_condA.jsonl")
    val_b = read_corpus(corpus_dir / "val_condB.jsonl")
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    if manifest["config"]["mode"] != config.mode:
        raise ConfigError(
            f"corpus mode {manifest['config']['mode']!r} does not match "
            f"training mode {config.mode!r}")

    schema = feature_schema(config.mode)
    mcfg = config.model_config()
    optimizer = _make_optimizer(config)
    start_epoch = 0
    if resume is not None:
        params, loaded_cfg, vocab, schema, weights, state = load_checkpoint(
            resume, expected_mode=config.mode)
        if state is None:
            raise TrainingError(f"{resume} carries no training state to resume from")
        if loaded_cfg.to_dict() != mcfg.to_dict():
            raise TrainingError("checkpoint model configuration does not match")
        optimizer.load_state(state["arrays"])
        start_epoch = state["epoch"]
    else:
        vocab = Vocab.from_texts(s.text for s in train_samples)
        weights = compute_class_weights(train_samples, schema)
        params = init_params(mcfg, vocab, schema, seed=config.seed)

    (out / "train_config.json").write_text(json.dumps(asdict(config), indent=2))
    log_path = out / "training_log.csv"
    if start_epoch == 0 and log_path.exists():
        log_path.unlink()
    if not log_path.exists():
        log_path.write_text("epoch,train_loss,val_condA_acc,val_condB_acc,wall_time_s\n")

    best_acc = -1.0
    if start_epoch > 0 and log_path.exists():
        for line in log_path.read_text().splitlines()[1:]:
            best_acc = max(best_acc, float(line.split(",")[2]))
    best_path, last_path = out / "best.ckpt", out / "last.ckpt"
    t0 = time.time()
    n = len(train_samples)
    history = []
    stopped_early = False
    for epoch in range(start_epoch, config.epochs):
        rng = np.random.Generator(np.random.PCG64(derive_seed(config.seed, "shuffle", epoch)))
        order = rng.permutation(n)
        losses = []
        for bi in range(0, n, config.batch_size):
            batch = [train_samples[i] for i in order[bi: bi + config.batch_size]]
            step_seed = derive_seed(config.seed, "step", epoch, bi)
            try:
                losses.append(train_step(batch, vocab, params, mcfg, schema,
                                         weights, config, step_seed))
            except FloatingPointError as exc:
                dump = out / f"diagnostic_epoch{epoch}_batch{bi}.json"
                dump.write_text(json.dumps({
                    "epoch": epoch, "batch_start": bi,
                    "texts": [s.text for s in batch]}, indent=2))
                raise TrainingError(f"{exc}; offending batch dumped to {dump}") from exc
            clip_gradients(params, config.clip_norm)
            optimizer.step(params)
        epoch_done = epoch + 1
        if epoch_done % config.val_interval == 0 or epoch_done == config.epochs:
            acc_a = _strict_accuracy(val_a, vocab, params, mcfg, schema)
            acc_b = _strict_accuracy(val_b, vocab, params, mcfg, schema)
            wall = time.time() - t0
            row = dict(epoch=epoch_done, train_loss=float(np.mean(losses)),
                       val_condA_acc=acc_a, val_condB_acc=acc_b, wall_time_s=wall)
            history.append(row)
            with open(log_path, "a") as fh:
                fh.write(f"{epoch_done},{row['train_loss']:.6f},"
                         f"{acc_a:.4f},{acc_b:.4f},{wall:.2f}\n")
            state = {"epoch": epoch_done, "arrays": optimizer.state_arrays()}
            save_checkpoint(last_path, params, mcfg, vocab, schema, weights,
                            training_state=state)
            if acc_a > best_acc:
                best_acc = acc_a
                save_checkpoint(best_path, params, mcfg, vocab, schema, weights)
            if config.early_stop_condA is not None and acc_a >= config.early_stop_condA:
                stopped_early = True
                break
    return {
        "best_val_condA_acc": best_acc,
        "history": history,
        "best_checkpoint": str(best_path),
        "last_checkpoint": str(last_path),
        "stopped_early": stopped_early,
    }
