"""Command-line entry points: gen-data, train, eval, infer, render.

Exit codes: 0 success, 2 configuration/validation error, 3 runtime failure.
Every command that writes outputs drops a JSON echo of its effective
configuration next to them.
"""
from __future__ import annotations

import functools
import json
import sys
from dataclasses import asdict
from pathlib import Path

import click

from .schema import ConfigError, LayoutParseError, feature_schema, layout_from_json, validate_layout

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _guard(fn):
    """Map exceptions to the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        from .checkpoint import CheckpointError
        from .training import TrainingError
        try:
            return fn(*args, **kwargs)
        except (ConfigError, LayoutParseError, CheckpointError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (TrainingError, RuntimeError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)
    return wrapper


@click.group()
@click.version_option(package_name="text2scene")
def main():
    """Scene descriptions to layouts to rendered images."""


@main.command("gen-data")
@click.option("--mode", type=click.Choice(["static", "animated", "full"]),
              default="static", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--train-size", type=int, default=20000, show_default=True)
@click.option("--val-size", type=int, default=2000, show_default=True,
              help="Samples per condition in the validation split.")
@click.option("--test-size", type=int, default=2000, show_default=True,
              help="Samples per condition in the test split.")
@click.option("--stats", is_flag=True, help="Print corpus statistics.")
@_guard
def gen_data(mode, out_dir, seed, train_size, val_size, test_size, stats):
    """Generate a paired description/layout corpus."""
    from .corpus import CorpusConfig, corpus_stats, generate_corpus, read_corpus
    config = CorpusConfig.from_totals(mode, seed, train_size, val_size, test_size)
    manifest = generate_corpus(config, out_dir)
    click.echo(f"wrote corpus to {out_dir} "
               f"({sum(f['count'] for f in manifest['files'].values())} samples)")
    if stats:
        samples = read_corpus(Path(out_dir) / "train.jsonl")
        click.echo(json.dumps(corpus_stats(samples, config), indent=2))


@main.command()
@click.option("--mode", type=click.Choice(["static", "animated", "full"]),
              default="static", show_default=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=60, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--hidden-dim", type=int, default=128, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default="adam",
              show_default=True)
@click.option("--val-interval", type=int, default=1, show_default=True)
@click.option("--early-stop", type=float, default=None,
              help="Stop once condA validation accuracy reaches this value.")
@click.option("--resume", type=click.Path(exists=True), default=None,
              help="Checkpoint (last.ckpt) to continue from.")
@_guard
def train(mode, corpus_dir, out_dir, epochs, batch_size, lr, hidden_dim, seed,
          optimizer, val_interval, early_stop, resume):
    """Train the description-to-layout model."""
    from .training import TrainConfig, train as run_train
    config = TrainConfig(mode=mode, corpus_dir=corpus_dir, epochs=epochs,
                         batch_size=batch_size, lr=lr, seed=seed,
                         optimizer=optimizer, val_interval=val_interval,
                         enc_dim=hidden_dim, attn_dim=hidden_dim,
                         hidden_dim=hidden_dim, early_stop_condA=early_stop)
    summary = run_train(config, out_dir, resume=resume)
    click.echo(f"best condA validation accuracy: "
               f"{summary['best_val_condA_acc']:.2f}% "
               f"(checkpoint: {summary['best_checkpoint']})")


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the JSON report here (default: stdout only).")
@click.option("--render", is_flag=True,
              help="Also render predictions and report SSIM against ground truth.")
@click.option("--max-render", type=int, default=64, show_default=True)
@_guard
def eval_cmd(checkpoint, corpus_dir, out_path, render, max_render):
    """Score a checkpoint on the test split of a corpus."""
    from .metrics import evaluate_run
    report = evaluate_run(checkpoint, corpus_dir, render=render,
                          max_render=max_render)
    text = json.dumps(report, indent=2)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"report written to {out_path}")
    for cond, r in report["conditions"].items():
        click.echo(f"{cond}: strict {r['strict_accuracy']:.2f}%  "
                   f"specified-only {r.get('specified_only_accuracy', float('nan')):.2f}%")


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--text", required=True, help="Scene description to parse.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the layout JSON here (default: stdout).")
@click.option("--attention", "attention_path", type=click.Path(), default=None,
              help="Export the decoder attention heatmap as CSV.")
@_guard
def infer(checkpoint, text, out_path, attention_path):
    """Decode one description into a scene layout."""
    from .checkpoint import load_checkpoint
    from .metrics import export_attention
    from .model import greedy_decode
    from .schema import layout_to_json
    params, config, vocab, schema, _, _ = load_checkpoint(checkpoint)
    layout, trace = greedy_decode(text, vocab, params, config, schema)
    payload = layout_to_json(layout)
    if out_path:
        Path(out_path).write_text(payload)
    else:
        click.echo(payload)
    if attention_path:
        export_attention(trace, attention_path)


@main.command()
@click.option("--layout", "layout_path", type=click.Path(), required=True,
              help="Layout JSON file ('-' reads stdin).")
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="PNG path for static scenes, directory for animations.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--geometry", multiple=True, metavar="SHAPE=VARIANT",
              help="Override geometry, e.g. sphere=icosphere.")
@click.option("--width", type=int, default=192, show_default=True)
@click.option("--height", type=int, default=128, show_default=True)
@_guard
def render(layout_path, out_path, seed, geometry, width, height):
    """Ray-trace a layout into a PNG or an animation frame directory."""
    from .render import RenderConfig, render_animation, render_static
    raw = sys.stdin.read() if layout_path == "-" else Path(layout_path).read_text()
    layout = layout_from_json(raw)
    schema = feature_schema("full" if layout.kind == "animated" else "static")
    violations = validate_layout(layout, schema, min_objects=1)
    if violations:
        raise ConfigError("; ".join(violations))
    geo = {}
    for item in geometry:
        shape, _, variant = item.partition("=")
        if not variant:
            raise ConfigError(f"geometry override {item!r} is not SHAPE=VARIANT")
        geo[shape] = variant
    config = RenderConfig(width=width, height=height, geometry=geo)
    config.validate()
    if layout.kind == "animated":
        out_dir = Path(out_path)
        render_animation(layout, seed, config, out_dir)
        echo_path = out_dir / "render_config.json"
        click.echo(f"animation frames written to {out_dir}")
    else:
        render_static(layout, seed, config, out_path)
        echo_path = Path(out_path).with_suffix(".render_config.json")
        click.echo(f"image written to {out_path}")
    echo_path.write_text(json.dumps(config.to_dict(), indent=2))


if __name__ == "__main__":
    main()
