"""Command-line entry points for the experiment harness.

Every experiment is driven by a JSON config plus a seed and writes its
outputs (report.json, CSV tables, checkpoints) under --out. With
--deterministic, reruns with identical config and seed produce
byte-identical reports.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from dataclasses import fields

import click

from . import denoise, distortions, imaging, metrics
from .backbone import BackboneConfig, TrainedBackbone, TrainingHyper, build_backbone, train_identity
from .harness import experiments, pairs as pairs_mod, server as server_mod
from .harness.experiments import (
    AblationConfig, CorrelationConfig, DdpmSpec, SweepConfig, set_deterministic,
)


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def _dataclass_from(cls, data: dict, **overrides):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise click.ClickException(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    for key in ("kinds",):
        if key in merged and isinstance(merged[key], dict):
            merged[key] = {k: tuple(v) for k, v in merged[key].items()}
    for key in ("train_sigmas", "test_sigmas", "archs", "losses", "measures", "stop_ts"):
        if key in merged and isinstance(merged[key], list):
            merged[key] = tuple(merged[key])
    return cls(**merged)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON experiment config.")
@click.option("--seed", type=int, default=None, help="Master seed override.")
@click.option("--out", "out_dir", type=click.Path(), default="out", help="Output directory.")
@click.option("--deterministic", is_flag=True, help="Single-threaded bit-reproducible mode.")
@click.pass_context
def main(ctx, config_path, seed, out_dir, deterministic):
    """Label-free image quality assessment experiments."""
    if deterministic:
        set_deterministic()
    ctx.obj = {
        "config": _load_config(config_path),
        "seed": seed,
        "out": out_dir,
        "deterministic": deterministic,
    }


def _seed(ctx, default=0) -> int:
    if ctx.obj["seed"] is not None:
        return ctx.obj["seed"]
    return ctx.obj["config"].get("seed", default)


def _outdir(ctx) -> str:
    os.makedirs(ctx.obj["out"], exist_ok=True)
    return ctx.obj["out"]


@main.command()
@click.option("--count", type=int, default=1)
@click.option("--size", type=int, default=64)
@click.option("--format", "fmt", type=click.Choice(["png8", "png16", "rawf32"]), default="png16")
@click.pass_context
def phantom(ctx, count, size, fmt):
    """Generate deterministic synthetic phantoms."""
    out = _outdir(ctx)
    seed = _seed(ctx)
    ext = "raw" if fmt == "rawf32" else "png"
    for i in range(count):
        img = imaging.generate_phantom(imaging.PhantomSpec(seed=seed + i, size=size))
        path = os.path.join(out, f"phantom-{seed + i:06d}.{ext}")
        imaging.save_image(img, path, format=fmt)
        click.echo(path)


@main.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(distortions.DISTORTION_KINDS), required=True)
@click.option("--level", type=float, required=True)
@click.option("--format", "fmt", type=click.Choice(["png8", "png16", "rawf32"]), default="png16")
@click.pass_context
def distort(ctx, input_path, kind, level, fmt):
    """Apply one parametrized degradation to an image file."""
    img = imaging.load_image(input_path)
    spec = distortions.DistortionSpec(kind=kind, level=level, seed=_seed(ctx))
    result = distortions.apply_distortion(img, spec)
    out = _outdir(ctx)
    ext = "raw" if fmt == "rawf32" else "png"
    stem = os.path.splitext(os.path.basename(input_path))[0]
    path = os.path.join(out, f"{stem}-{kind}-{level:g}.{ext}")
    imaging.save_image(result, path, format=fmt)
    click.echo(path)


@main.command("train-backbone")
@click.pass_context
def train_backbone_cmd(ctx):
    """Train an identity backbone on clean phantoms; writes backbone.ckpt."""
    cfg = ctx.obj["config"]
    seed = _seed(ctx)
    arch = cfg.get("arch", "unet")
    loss = cfg.get("loss", "perceptual")
    images = imaging.generate_phantom_set(seed, cfg.get("n_train", 64), cfg.get("size", 64))
    hyper = TrainingHyper(batch_size=cfg.get("batch_size", 10), epochs=cfg.get("epochs", 60),
                          lr=cfg.get("lr", 1e-3), lr_decay=cfg.get("lr_decay", 0.99), seed=seed)
    model = build_backbone(BackboneConfig(arch=arch), seed=seed)
    trained = train_identity(model, images, loss, hyper)
    path = os.path.join(_outdir(ctx), "backbone.ckpt")
    trained.save(path)
    click.echo(f"{path} final_loss={trained.manifest['epoch_losses'][-1]:.3e}")


@main.command("train-denoiser")
@click.pass_context
def train_denoiser_cmd(ctx):
    """Train a supervised denoiser on synthetic noisy/clean pairs."""
    cfg = ctx.obj["config"]
    seed = _seed(ctx)
    arch = cfg.get("arch", "unet-denoiser")
    images = imaging.generate_phantom_set(seed, cfg.get("n_train", 64), cfg.get("size", 64))
    pair_list = denoise.make_sodium_training_pairs(
        images, seed=seed, sigma_range=tuple(cfg.get("sigma_range", (0.05, 0.2))))
    hyper = TrainingHyper(batch_size=cfg.get("batch_size", 10), epochs=cfg.get("epochs", 40),
                          lr=cfg.get("lr", 1e-4), lr_decay=cfg.get("lr_decay", 0.99), seed=seed)
    model = denoise.train_supervised_denoiser(arch, pair_list, hyper)
    path = os.path.join(_outdir(ctx), "denoiser.ckpt")
    model.save(path)
    click.echo(f"{path} final_loss={model.manifest['epoch_losses'][-1]:.3e}")


@main.command()
@click.argument("inputs", nargs=-1, type=click.Path(exists=True))
@click.option("--backbone", "backbone_path", type=click.Path(exists=True), required=True)
@click.option("--measure", type=click.Choice(metrics.MEASURE_KINDS), default="l2")
@click.pass_context
def score(ctx, inputs, backbone_path, measure):
    """Score images with a trained backbone; writes scores.csv."""
    if not inputs:
        raise click.ClickException("no input images")
    backbone = TrainedBackbone.load(backbone_path)
    m = metrics.DifferenceMeasure(measure)
    rows = []
    for path in inputs:
        img = imaging.load_image(path)
        s = metrics.msm_score(backbone, img, m)
        rows.append({
            "image_id": os.path.basename(path), "distortion_kind": "", "level": "",
            "measure": measure, "value": s.value,
            "orientation": "higher_is_better" if m.higher_is_better else "lower_is_better",
            "backbone_hash": s.backbone_hash,
        })
    out_path = os.path.join(_outdir(ctx), "scores.csv")
    with open(out_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        click.echo(f"{row['image_id']}\t{row['value']:.6g}")
    click.echo(out_path)


@main.command()
@click.pass_context
def sweep(ctx):
    """Specialization sweep: denoisers trained per noise level vs a test grid."""
    cfg = _dataclass_from(SweepConfig, ctx.obj["config"].get("sweep", {}), seed=ctx.obj["seed"])
    report = experiments.run_specialization_sweep(cfg)
    click.echo(report.save(_outdir(ctx)))


def _correlation_config(ctx) -> CorrelationConfig:
    data = dict(ctx.obj["config"].get("correlate", {}))
    if "ddpm" in data and isinstance(data["ddpm"], dict):
        data["ddpm"] = _dataclass_from(DdpmSpec, data["ddpm"])
    return _dataclass_from(CorrelationConfig, data, seed=ctx.obj["seed"])


@main.command()
@click.pass_context
def correlate(ctx):
    """Correlate backbone scores with known distortion levels."""
    report = experiments.run_correlation_experiment(_correlation_config(ctx))
    click.echo(report.save(_outdir(ctx)))


@main.command()
@click.pass_context
def ablate(ctx):
    """Run the (arch x loss x measure) ablation grid."""
    data = dict(ctx.obj["config"].get("ablate", {}))
    if "base" in data:
        base = dict(data["base"])
        if "ddpm" in base and isinstance(base["ddpm"], dict):
            base["ddpm"] = _dataclass_from(DdpmSpec, base["ddpm"])
        data["base"] = _dataclass_from(CorrelationConfig, base, seed=ctx.obj["seed"])
    cfg = _dataclass_from(AblationConfig, data)
    report = experiments.run_ablation_grid(cfg)
    click.echo(report.save(_outdir(ctx)))


@main.command("pairs")
@click.option("--session-id", default="session")
@click.pass_context
def pairs_cmd(ctx, session_id):
    """Build a blinded pair session from config items; writes the session store.

    Config: {"pairs": {"items": [{"id", "file", "provenance"}, ...]}}
    """
    cfg = ctx.obj["config"].get("pairs", {})
    item_cfgs = cfg.get("items", [])
    if len(item_cfgs) < 2:
        raise click.ClickException("config needs >= 2 items under pairs.items")
    items = [
        (it["id"], imaging.load_image(it["file"]), it.get("provenance", {}))
        for it in item_cfgs
    ]
    session = pairs_mod.make_pair_session(items, seed=_seed(ctx), session_id=session_id)
    store = _outdir(ctx)
    pairs_mod.export_session(session, items, store)
    click.echo(f"{store}: {len(session.pairs)} pairs in session {session_id}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8008)
@click.option("--store", "store_dir", type=click.Path(exists=True), required=True)
@click.option("--ui", "ui_dir", type=click.Path(exists=True), default=None,
              help="Directory with the built rater UI (index.html + dist/).")
def serve(host, port, store_dir, ui_dir):
    """Serve the rating HTTP API (and optionally the rater UI) over a store."""
    server_mod.serve(store_dir, host=host, port=port, ui_dir=ui_dir)


@main.command()
@click.option("--store", "store_dir", type=click.Path(exists=True), required=True)
@click.option("--session-id", required=True)
@click.option("--scores", "scores_csv", type=click.Path(exists=True), default=None,
              help="Optional scores.csv adding a metric pseudo-rater.")
@click.pass_context
def report(ctx, store_dir, session_id, scores_csv):
    """Cohen's kappa report for a rated session."""
    sessions = server_mod.load_sessions(store_dir)
    if session_id not in sessions:
        raise click.ClickException(f"unknown session {session_id!r}")
    session = sessions[session_id]
    store = server_mod.RatingStore(os.path.join(store_dir, "ratings.jsonl"))
    by_rater: dict[str, list] = {}
    for rec in store.for_session(session_id):
        by_rater.setdefault(rec.rater, []).append(rec)
    metric_scores = None
    if scores_csv:
        metric_scores = {"metric": _scores_from_csv(scores_csv)}
    result = pairs_mod.kappa_report(session, by_rater, metric_scores)
    out_path = os.path.join(_outdir(ctx), "kappa_report.json")
    with open(out_path, "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
    click.echo(out_path)


def _scores_from_csv(path) -> dict:
    out = {}
    with open(path) as f:
        for row in csv.DictReader(f):
            out[row["image_id"]] = metrics.QualityScore(
                value=float(row["value"]),
                measure=metrics.DifferenceMeasure(row["measure"]),
                backbone_hash=row.get("backbone_hash", ""),
            )
    return out


if __name__ == "__main__":
    main()
