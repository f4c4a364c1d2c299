"""Config-driven experiment runners.

Every runner returns a ReportBundle that serializes deterministically:
reruns with identical config and seeds in single-threaded mode produce
byte-identical report.json files.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch

from ..backbone import (
    BackboneConfig, TrainedBackbone, TrainingHyper, build_backbone, train_identity,
)
from ..denoise import apply_denoiser, train_supervised_denoiser
from ..diffusion import (
    DiffusionHyper, build_linear_schedule, reverse_sample_batch, train_epsilon_predictor,
)
from ..distortions import add_gaussian_noise, build_ladder
from ..imaging import ImageGrid, PhantomSpec, generate_phantom
from ..metrics import (
    DifferenceMeasure, MetricError, measure_difference, plcc, psnr, srcc,
)
from .splits import grouped_kfold

EVAL_SEED_BLOCK = 10_000  # phantom seeds for held-out/eval sets start here


def set_deterministic() -> None:
    """Single-threaded torch so reruns are bit-exact."""
    torch.set_num_threads(1)


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ReportBundle:
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, **self.payload}, sort_keys=True, indent=2)

    def save(self, outdir) -> str:
        os.makedirs(outdir, exist_ok=True)
        path = os.path.join(outdir, "report.json")
        with open(path, "w") as f:
            f.write(self.to_json())
        for name, rows in self.payload.get("tables", {}).items():
            if rows:
                _write_csv(os.path.join(outdir, f"{name}.csv"), rows)
        return path


def _write_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


class IdentityStub:
    """Degenerate backbone whose prediction is the input itself."""

    content_hash = "identity-stub"

    def predict(self, image: ImageGrid) -> ImageGrid:
        return ImageGrid(image.pixels.copy())


# ---------------------------------------------------------------------------
# specialization sweep


@dataclass(frozen=True)
class SweepConfig:
    train_sigmas: tuple = (0.0, 0.05, 0.10)
    test_sigmas: tuple = tuple(round(0.025 * i, 3) for i in range(11))
    n_train: int = 64
    n_eval: int = 20
    size: int = 64
    epochs: int = 100
    batch_size: int = 10
    lr: float = 1e-3
    norm: str = "instance"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _phantoms(seed0: int, count: int, size: int) -> list[ImageGrid]:
    return [generate_phantom(PhantomSpec(seed=seed0 + i, size=size)) for i in range(count)]


def run_specialization_sweep(cfg: SweepConfig) -> ReportBundle:
    """Train a denoiser per training noise level, measure PSNR over a test grid.

    The expected signature: mean output PSNR peaks where the test noise
    level matches the training one, and decays monotonically for a model
    trained on clean images. The default denoiser uses instance
    normalization, which keys the learned mapping to the statistics of the
    training inputs; without it the peak flattens onto sigma_test = 0
    because the network generalizes downward on these synthetic phantoms.
    """
    if not cfg.test_sigmas:
        raise ExperimentError("empty test sigma grid")
    lo, hi = min(cfg.test_sigmas), max(cfg.test_sigmas)
    for s in cfg.train_sigmas:
        if not lo <= s <= hi:
            raise ExperimentError(f"train sigma {s} outside test grid [{lo}, {hi}]")

    clean_train = _phantoms(cfg.seed, cfg.n_train, cfg.size)
    clean_eval = _phantoms(cfg.seed + EVAL_SEED_BLOCK, cfg.n_eval, cfg.size)
    hyper = TrainingHyper(batch_size=cfg.batch_size, epochs=cfg.epochs,
                          lr=cfg.lr, lr_decay=0.99, seed=cfg.seed)

    curves = []
    for sigma_train in cfg.train_sigmas:
        pairs = [
            (add_gaussian_noise(im, sigma_train, cfg.seed + 777 + i), im)
            for i, im in enumerate(clean_train)
        ]
        model = train_supervised_denoiser("unet-denoiser", pairs, hyper, norm=cfg.norm)
        curve = []
        for sigma_test in cfg.test_sigmas:
            vals = []
            for j, im in enumerate(clean_eval):
                noisy = add_gaussian_noise(im, sigma_test, cfg.seed + 999_000 + j)
                vals.append(psnr(im, apply_denoiser(model, noisy)))
            curve.append(float(np.mean(vals)))
        argmax_sigma = float(cfg.test_sigmas[int(np.argmax(curve))])
        curves.append({
            "train_sigma": float(sigma_train),
            "test_sigmas": [float(s) for s in cfg.test_sigmas],
            "mean_psnr": curve,
            "argmax_test_sigma": argmax_sigma,
            "denoiser_hash": model.content_hash,
        })

    rows = [
        {"train_sigma": c["train_sigma"], "test_sigma": s, "mean_psnr": v}
        for c in curves for s, v in zip(c["test_sigmas"], c["mean_psnr"])
    ]
    return ReportBundle(kind="sweep", payload={
        "config": cfg.to_dict(),
        "curves": curves,
        "tables": {"sweep": rows},
    })


# ---------------------------------------------------------------------------
# correlation experiments


@dataclass(frozen=True)
class DdpmSpec:
    stop_ts: tuple = (0, 40, 80, 120, 160)
    n_per_rung: int = 20
    t_max: int = 200
    steps: int = 2000

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CorrelationConfig:
    arch: str = "unet"  # unet | swin-lite | identity-stub
    loss: str = "perceptual"
    measure: str = "l2"
    kinds: dict = field(default_factory=lambda: {
        "gaussian-noise": (0.025, 0.05, 0.1, 0.15, 0.2, 0.25),
        "rician-noise": (0.025, 0.05, 0.1, 0.15, 0.2, 0.25),
        "gaussian-blur": (3, 7, 11, 19, 31, 51),
        "motion-blur": (3, 7, 11, 19, 31, 51),
    })
    n_subjects: int = 27
    group_size: int = 3
    n_folds: int = 1
    n_train: int = 18  # holdout mode (n_folds == 1) only
    size: int = 64
    n_ellipses: int = 6
    texture_amplitude: float = 0.1
    epochs: int = 10
    batch_size: int = 10
    lr: float = 1e-3
    lr_decay: float = 0.99
    seed: int = 0
    backbone_ckpt: str | None = None  # skip training when given (holdout mode)
    ddpm: DdpmSpec | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kinds"] = {k: list(v) for k, v in self.kinds.items()}
        if self.ddpm is not None:
            d["ddpm"] = self.ddpm.to_dict()
        return d


def _folds(cfg: CorrelationConfig):
    subjects = list(range(cfg.n_subjects))
    if cfg.n_folds == 1:
        return [(subjects[:cfg.n_train], subjects[cfg.n_train:])]
    return grouped_kfold(subjects, cfg.group_size, cfg.n_folds)


def _backbone_for_fold(cfg: CorrelationConfig, train_images) -> object:
    if cfg.arch == "identity-stub":
        return IdentityStub()
    if cfg.backbone_ckpt:
        return TrainedBackbone.load(cfg.backbone_ckpt)
    config = BackboneConfig(arch=cfg.arch)
    hyper = TrainingHyper(batch_size=cfg.batch_size, epochs=cfg.epochs,
                          lr=cfg.lr, lr_decay=cfg.lr_decay, seed=cfg.seed)
    model = build_backbone(config, seed=cfg.seed)
    return train_identity(model, train_images, cfg.loss, hyper)


def run_correlation_experiment(cfg: CorrelationConfig) -> ReportBundle:
    """Score distortion ladders of held-out images, correlate with levels.

    Per held-out image and distortion kind, SRCC/PLCC are computed over
    the image's own ladder (score vs level); their signed means across
    images give the per-fold correlation, and |SRCC|/|PLCC| are averaged
    over folds. A constant score series on any ladder (e.g. from a
    degenerate backbone) marks the kind undefined rather than NaN.
    """
    measure = DifferenceMeasure(cfg.measure)
    folds = _folds(cfg)
    per_fold: list[dict] = []
    score_rows: list[dict] = []

    def phantom(s: int) -> ImageGrid:
        return generate_phantom(PhantomSpec(
            seed=cfg.seed + s, size=cfg.size, n_ellipses=cfg.n_ellipses,
            texture_amplitude=cfg.texture_amplitude))

    for fold_idx, (train_subjects, test_subjects) in enumerate(folds):
        if not test_subjects:
            raise ExperimentError("fold has no held-out subjects")
        train_images = [phantom(s) for s in train_subjects]
        test_images = {s: phantom(s) for s in test_subjects}
        backbone = _backbone_for_fold(cfg, train_images)
        bhash = getattr(backbone, "content_hash", "")

        fold_result = {"fold": fold_idx, "kinds": {}}
        for kind, levels in sorted(cfg.kinds.items()):
            series = []
            for s, image in test_images.items():
                ladder = build_ladder(image, kind, list(levels),
                                      seed=cfg.seed + 31 * fold_idx + 1000 + s)
                xs, ys = [], []
                for rung in ladder.rungs:
                    value = measure_difference(rung.image, backbone.predict(rung.image), measure)
                    xs.append(value)
                    ys.append(rung.level)
                    score_rows.append({
                        "image_id": f"phantom-{cfg.seed + s}", "distortion_kind": kind,
                        "level": rung.level, "measure": cfg.measure, "value": value,
                        "orientation": "higher_is_better" if measure.higher_is_better
                        else "lower_is_better",
                        "backbone_hash": bhash,
                    })
                series.append((xs, ys))
            fold_result["kinds"][kind] = _per_image_correlations(series)

        if cfg.ddpm is not None:
            fold_result["kinds"]["ddpm"] = _ddpm_correlations(
                cfg, backbone, measure, train_images, fold_idx, score_rows, bhash)
        per_fold.append(fold_result)

    kinds = sorted(per_fold[0]["kinds"])
    summary = {}
    for kind in kinds:
        abs_srcc = [f["kinds"][kind]["abs_srcc"] for f in per_fold]
        abs_plcc = [f["kinds"][kind]["abs_plcc"] for f in per_fold]
        summary[kind] = {
            "abs_srcc": None if any(v is None for v in abs_srcc) else float(np.mean(abs_srcc)),
            "abs_plcc": None if any(v is None for v in abs_plcc) else float(np.mean(abs_plcc)),
        }

    table = [
        {"kind": k, "abs_srcc": summary[k]["abs_srcc"], "abs_plcc": summary[k]["abs_plcc"]}
        for k in kinds
    ]
    return ReportBundle(kind="correlate", payload={
        "config": cfg.to_dict(),
        "per_fold": per_fold,
        "summary": summary,
        "tables": {"correlations": table, "scores": score_rows},
    })


def _correlations(xs, ys) -> dict:
    try:
        s = srcc(xs, ys)
        p = plcc(xs, ys)
        return {"srcc": s, "plcc": p, "abs_srcc": abs(s), "abs_plcc": abs(p), "n": len(xs)}
    except MetricError:
        return {"srcc": None, "plcc": None, "abs_srcc": None, "abs_plcc": None,
                "n": len(xs), "undefined": True}


def _per_image_correlations(series) -> dict:
    """Signed mean of per-ladder correlations; undefined if any ladder has
    a constant score series."""
    ss, ps, n = [], [], 0
    try:
        for xs, ys in series:
            ss.append(srcc(xs, ys))
            ps.append(plcc(xs, ys))
            n += len(xs)
    except MetricError:
        return {"srcc": None, "plcc": None, "abs_srcc": None, "abs_plcc": None,
                "n": sum(len(xs) for xs, _ in series), "undefined": True}
    s, p = float(np.mean(ss)), float(np.mean(ps))
    return {"srcc": s, "plcc": p, "abs_srcc": abs(s), "abs_plcc": abs(p),
            "n": n, "n_images": len(series)}


def _ddpm_correlations(cfg, backbone, measure, train_images, fold_idx,
                       score_rows, bhash) -> dict:
    spec = cfg.ddpm
    schedule = build_linear_schedule(t_max=spec.t_max)
    predictor = train_epsilon_predictor(
        train_images, schedule,
        DiffusionHyper(steps=spec.steps, seed=cfg.seed + fold_idx))
    xs, ys = [], []
    shape = train_images[0].shape
    for stop_t in spec.stop_ts:
        samples = reverse_sample_batch(predictor, schedule, stop_t, shape,
                                       seed=cfg.seed + 51 * fold_idx + stop_t,
                                       count=spec.n_per_rung)
        for i, sample in enumerate(samples):
            value = measure_difference(sample, backbone.predict(sample), measure)
            xs.append(value)
            ys.append(float(stop_t))
            score_rows.append({
                "image_id": f"ddpm-{stop_t}-{i}", "distortion_kind": "ddpm",
                "level": float(stop_t), "measure": cfg.measure, "value": value,
                "orientation": "higher_is_better" if measure.higher_is_better
                else "lower_is_better",
                "backbone_hash": bhash,
            })
    return _correlations(xs, ys)


# ---------------------------------------------------------------------------
# ablation grid


@dataclass(frozen=True)
class AblationConfig:
    archs: tuple = ("unet", "swin-lite")
    losses: tuple = ("l1", "l2", "perceptual")
    measures: tuple = ("l1", "l2", "s_psnr", "s_ssim")
    base: CorrelationConfig = CorrelationConfig()

    def to_dict(self) -> dict:
        return {"archs": list(self.archs), "losses": list(self.losses),
                "measures": list(self.measures), "base": self.base.to_dict()}


def run_ablation_grid(cfg: AblationConfig) -> ReportBundle:
    """One correlation experiment per (arch, loss, measure) cell.

    All cells share the same data, splits and seeds. In holdout mode the
    trained backbone is reused across the measures of one (arch, loss)
    pair. The best row per arch by mean |SRCC| is flagged.
    """
    if not (cfg.archs and cfg.losses and cfg.measures):
        raise ExperimentError("empty ablation grid")
    import tempfile

    rows = []
    for arch in cfg.archs:
        for loss in cfg.losses:
            ckpt_path = None
            tmp = None
            if cfg.base.n_folds == 1 and arch != "identity-stub" and not cfg.base.backbone_ckpt:
                train_subjects = list(range(cfg.base.n_subjects))[:cfg.base.n_train]
                train_images = [
                    generate_phantom(PhantomSpec(
                        seed=cfg.base.seed + s, size=cfg.base.size,
                        n_ellipses=cfg.base.n_ellipses,
                        texture_amplitude=cfg.base.texture_amplitude))
                    for s in train_subjects
                ]
                cell = replace(cfg.base, arch=arch, loss=loss)
                backbone = _backbone_for_fold(cell, train_images)
                tmp = tempfile.NamedTemporaryFile(suffix=".ckpt", delete=False)
                tmp.close()
                backbone.save(tmp.name)
                ckpt_path = tmp.name
            for measure in cfg.measures:
                cell_cfg = replace(cfg.base, arch=arch, loss=loss, measure=measure,
                                   backbone_ckpt=ckpt_path or cfg.base.backbone_ckpt)
                report = run_correlation_experiment(cell_cfg)
                summary = report.payload["summary"]
                vals = [v["abs_srcc"] for v in summary.values() if v["abs_srcc"] is not None]
                rows.append({
                    "arch": arch, "loss": loss, "measure": measure,
                    "mean_abs_srcc": float(np.mean(vals)) if vals else None,
                    "per_kind": summary, "best": False,
                })
            if tmp is not None:
                os.unlink(tmp.name)
    for arch in cfg.archs:
        arch_rows = [r for r in rows if r["arch"] == arch and r["mean_abs_srcc"] is not None]
        if arch_rows:
            max(arch_rows, key=lambda r: r["mean_abs_srcc"])["best"] = True

    table = [
        {"arch": r["arch"], "loss": r["loss"], "measure": r["measure"],
         "mean_abs_srcc": r["mean_abs_srcc"], "best": r["best"]}
        for r in rows
    ]
    return ReportBundle(kind="ablate", payload={
        "config": cfg.to_dict(), "rows": rows, "tables": {"ablation": table},
    })
