"""Command-line entry points: gen / train / eval / ablate / infer / render / serve.

Flags can be overridden with NAILTRACE_-prefixed environment variables
(e.g. NAILTRACE_SERVE_PORT). Exit codes: 0 success, 1 runtime error,
2 usage error.
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .ablation import run_ablation
from .dataset import read_dataset, write_dataset
from .metrics import evaluate, load_split, measure_runtime, predict
from .model import ModelConfig, load_model
from .postprocess import extract_instances
from .render import RenderParams, render_overlay
from .train import TrainConfig, train


@click.group()
def main():
    """Fingernail segmentation and polish try-on toolkit."""


def _fail(msg: str) -> "click.exceptions.Exit":
    click.echo(f"error: {msg}", err=True)
    return SystemExit(1)


def _model_config(size, alpha, variant, cascade) -> ModelConfig:
    return ModelConfig(
        input_size=(size, size),
        width_multiplier=alpha,
        encoder_variant=variant,
        cascade_enabled=cascade,
    )


@main.command()
@click.option("--count", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--size", type=int, default=160, show_default=True, help="scene edge px")
def gen(count, seed, out_dir, size):
    """Generate a synthetic nail dataset with a train/val/test manifest."""
    try:
        manifest = write_dataset(out_dir, count, seed, size=(size, size))
    except Exception as exc:
        raise _fail(str(exc))
    click.echo(
        f"wrote {count} scenes to {out_dir} "
        f"(train/val/test {len(manifest.ids('train'))}/{len(manifest.ids('val'))}/"
        f"{len(manifest.ids('test'))}, fg fraction {manifest.fg_fraction:.3f})"
    )


@main.command("train")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--batch", type=int, default=8, show_default=True)
@click.option("--crop", type=int, default=96, show_default=True)
@click.option("--lr", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--alpha", type=float, default=0.25, show_default=True)
@click.option("--variant", type=click.Choice(["deep55", "shallow43"]), default="deep55")
@click.option("--cascade/--no-cascade", default=True, show_default=True)
@click.option("--lmp/--no-lmp", default=True, show_default=True)
@click.option("--max-train", type=int, default=None)
@click.option("--max-val", type=int, default=None)
def train_cmd(data, out_dir, epochs, batch, crop, lr, seed, alpha, variant, cascade,
              lmp, max_train, max_val):
    """Train on a generated dataset; writes checkpoint, logs and figures."""
    from .figures import plot_training_curves

    try:
        manifest = read_dataset(data)
        hp = TrainConfig(
            epochs=epochs, batch_size=batch, crop=crop, lr=lr, seed=seed,
            use_lmp=lmp, max_train=max_train, max_val=max_val,
        )
        mc = _model_config(crop, alpha, variant, cascade)
        _, result = train(mc, manifest, hp, out_dir=out_dir)
        plot_training_curves(result.log, result.eval_history, Path(out_dir) / "training.png")
    except Exception as exc:
        raise _fail(str(exc))
    click.echo(f"best val binary mIoU {result.best_miou:.4f} (epoch {result.best_epoch})")
    click.echo(f"checkpoint: {result.checkpoint_path}")


@main.command("eval")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--model-config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="val")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--limit", type=int, default=None)
@click.option("--runtime/--no-runtime", default=False, show_default=True)
def eval_cmd(data, checkpoint, config_path, split, out_dir, limit, runtime):
    """Evaluate a checkpoint; writes report JSON and a figure."""
    from .figures import plot_eval_report

    try:
        manifest = read_dataset(data)
        model = load_model(checkpoint, config_path)
        samples = load_split(manifest, split, limit)
        report = evaluate(model, samples)
        if runtime and samples:
            report.runtime_ms_per_frame = measure_runtime(model, samples[0].image)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=1))
        plot_eval_report(report, out / "eval_report.png")
    except Exception as exc:
        raise _fail(str(exc))
    click.echo(json.dumps(report.to_dict(), indent=1))


@main.command()
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--crop", type=int, default=96, show_default=True)
@click.option("--alpha", type=float, default=0.25, show_default=True)
@click.option("--seeds", type=str, default="0,1,2", show_default=True)
@click.option("--max-train", type=int, default=None)
@click.option("--max-val", type=int, default=None)
def ablate(data, out_dir, epochs, crop, alpha, seeds, max_train, max_val):
    """Run the baseline / +LMP / +LMP+cascade comparison; writes CSV and figure."""
    from .figures import plot_ablation

    try:
        manifest = read_dataset(data)
        hp = TrainConfig(epochs=epochs, crop=crop, max_train=max_train, max_val=max_val)
        mc = _model_config(crop, alpha, "deep55", True)
        seed_list = tuple(int(s) for s in seeds.split(","))
        result = run_ablation(manifest, mc, hp, seeds=seed_list)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.write_csv(out / "ablation.csv")
        plot_ablation(result, out / "ablation.png")
    except Exception as exc:
        raise _fail(str(exc))
    for row in result.rows:
        click.echo(f"seed {row.seed} {row.setting:14s} mIoU {row.binary_miou:.4f}")
    click.echo(f"majority trend holds: {result.majority_trend()}")


@main.command()
@click.option("--image", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--model-config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--masks-dir", type=click.Path(), default=None)
def infer(image, checkpoint, config_path, out_path, masks_dir):
    """Segment an image; writes instances JSON (and optional mask PNGs)."""
    try:
        model = load_model(checkpoint, config_path)
        img = np.asarray(Image.open(image).convert("RGB"))
        out = predict(model, img)
        instances = extract_instances(out)
        Path(out_path).write_text(
            json.dumps({"instances": [i.to_json_dict() for i in instances]}, indent=1)
        )
        if masks_dir:
            md = Path(masks_dir)
            md.mkdir(parents=True, exist_ok=True)
            fg = (out.fgbg_logits.data[0].argmax(axis=0) == 1).astype(np.uint8) * 255
            cls = np.where(fg > 0, out.class_logits.data[0].argmax(axis=0) + 1, 0)
            Image.fromarray(fg, mode="L").save(md / "fgbg.png")
            Image.fromarray(cls.astype(np.uint8), mode="L").save(md / "classes.png")
    except Exception as exc:
        raise _fail(str(exc))
    click.echo(f"{len(instances)} instance(s) -> {out_path}")


@main.command()
@click.option("--image", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--model-config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--overlay-out", type=click.Path(), default=None)
@click.option("--color", type=str, default="178,40,68", show_default=True)
@click.option("--opacity", type=float, default=0.85, show_default=True)
@click.option("--gradient-strength", type=float, default=0.35, show_default=True)
@click.option("--stretch", type=int, default=4, show_default=True)
@click.option("--feather", type=float, default=1.5, show_default=True)
def render(image, checkpoint, config_path, out_path, overlay_out, color, opacity,
           gradient_strength, stretch, feather):
    """Composite polish onto an image's detected nails."""
    try:
        params = RenderParams(
            color=tuple(int(c) for c in color.split(",")),
            opacity=opacity,
            gradient_strength=gradient_strength,
            stretch_px=stretch,
            edge_feather_px=feather,
        )
        model = load_model(checkpoint, config_path)
        img = np.asarray(Image.open(image).convert("RGB"))
        out = predict(model, img)
        instances = extract_instances(out)
        overlay, composited = render_overlay(img, instances, params)
        if params.opacity == 0:
            shutil.copyfile(image, out_path)  # untouched pixels: pass source through
        else:
            Image.fromarray(composited, mode="RGB").save(out_path)
        if overlay_out:
            Image.fromarray(overlay, mode="RGBA").save(overlay_out)
    except Exception as exc:
        raise _fail(str(exc))
    click.echo(f"rendered {len(instances)} instance(s) -> {out_path}")


@main.command()
@click.option("--bind", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8707, show_default=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--model-config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--max-edge", type=int, default=640, show_default=True)
def serve(bind, port, checkpoint, config_path, max_edge):
    """Run the HTTP inference service."""
    import uvicorn

    from .render import RenderParams
    from .service import InferenceEngine, create_app

    try:
        model = load_model(checkpoint, config_path)
        engine = InferenceEngine(model, max_edge=max_edge, render_defaults=RenderParams())
        app = create_app(engine)
    except Exception as exc:
        raise _fail(str(exc))
    uvicorn.run(app, host=bind, port=port, log_level="warning")


def entrypoint():
    main(auto_envvar_prefix="NAILTRACE")


if __name__ == "__main__":
    entrypoint()
