"""Denoising baselines whose outputs the pairwise rating study compares.

A median filter plus two supervised learned denoisers trained on synthetic
low-SNR magnitude images built from clean phantoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import ndimage

from . import checkpoint as ckpt
from .backbone import TrainingHyper
from .imaging import ImageGrid, rng_for
from .nets import DnCNNLite, UNet, seed_all_parameters

DENOISER_ARCHS = ("median", "unet-denoiser", "dncnn-lite")


class DenoiseError(ValueError):
    pass


def median_filter(image: ImageGrid, window: int) -> ImageGrid:
    """Per-pixel median over a window x window neighborhood, reflect padding."""
    if window % 2 == 0 or window < 1:
        raise DenoiseError(f"window must be odd and >= 1, got {window}")
    if window >= min(image.shape):
        raise DenoiseError(f"window {window} >= smallest image side {min(image.shape)}")
    if window == 1:
        return ImageGrid(image.pixels.copy())
    return ImageGrid(ndimage.median_filter(image.pixels, size=window, mode="reflect"))


@dataclass
class DenoiserModel:
    arch: str
    window: int = 1
    module: torch.nn.Module | None = None
    manifest: dict = field(default_factory=dict)

    @property
    def content_hash(self) -> str:
        if self.module is None:
            return f"median-{self.window}"
        return ckpt.state_dict_hash(self.module.state_dict(), self.manifest)

    def save(self, path) -> None:
        if self.module is None:
            raise DenoiseError("median filter has no checkpoint")
        manifest = dict(self.manifest)
        manifest["arch"] = self.arch
        ckpt.save_checkpoint(path, self.module, manifest)

    @staticmethod
    def load(path) -> "DenoiserModel":
        manifest, state = ckpt.load_checkpoint(path)
        arch = manifest.pop("arch")
        module = _build_denoiser_module(arch, manifest)
        module.load_state_dict(state)
        return DenoiserModel(arch=arch, module=module, manifest=manifest)


def _build_denoiser_module(arch: str, manifest: dict) -> torch.nn.Module:
    if arch == "unet-denoiser":
        return UNet(depth=manifest.get("depth", 2), base_channels=manifest.get("base_channels", 16),
                    norm=manifest.get("norm", "none"))
    if arch == "dncnn-lite":
        return DnCNNLite(depth=manifest.get("dncnn_depth", 8))
    raise DenoiseError(f"unknown learned arch {arch!r}")


def make_median_denoiser(window: int = 3) -> DenoiserModel:
    return DenoiserModel(arch="median", window=window)


def train_supervised_denoiser(arch: str, pairs: list[tuple[ImageGrid, ImageGrid]],
                              hyper: TrainingHyper, norm: str = "none") -> DenoiserModel:
    """Minimize MSE(denoiser(noisy), clean) over (noisy, clean) pairs.

    norm="instance" (unet-denoiser only) inserts instance normalization
    after every convolution.
    """
    if arch not in ("unet-denoiser", "dncnn-lite"):
        raise DenoiseError(f"not a trainable arch: {arch!r}")
    if norm != "none" and arch != "unet-denoiser":
        raise DenoiseError(f"norm layers are only supported for unet-denoiser, got {arch!r}")
    if len(pairs) < 1:
        raise DenoiseError("no training pairs")
    shapes = {a.shape for a, b in pairs} | {b.shape for a, b in pairs}
    if len(shapes) != 1:
        raise DenoiseError(f"pairs must share one shape, got {shapes}")

    noisy = torch.from_numpy(np.stack([n.pixels for n, _ in pairs]).astype(np.float32))[:, None]
    clean = torch.from_numpy(np.stack([c.pixels for _, c in pairs]).astype(np.float32))[:, None]

    if arch == "unet-denoiser":
        manifest_arch = {"depth": 2, "base_channels": 16, "norm": norm}
    else:
        manifest_arch = {"dncnn_depth": 8}
    module = _build_denoiser_module(arch, manifest_arch)
    seed_all_parameters(module, hyper.seed)
    opt = torch.optim.Adam(module.parameters(), lr=hyper.lr)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=hyper.lr_decay)
    gen = torch.Generator().manual_seed(hyper.seed)

    n = noisy.shape[0]
    epoch_losses = []
    module.train()
    for _epoch in range(hyper.epochs):
        perm = torch.randperm(n, generator=gen)
        total, count = 0.0, 0
        for start in range(0, n, hyper.batch_size):
            sel = perm[start:start + hyper.batch_size]
            opt.zero_grad()
            loss = torch.mean((module(noisy[sel]) - clean[sel]) ** 2)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(sel)
            count += len(sel)
        sched.step()
        epoch_losses.append(total / count)
    module.eval()

    manifest = dict(manifest_arch)
    manifest.update({
        "hyper": hyper.to_dict(), "epoch_losses": epoch_losses,
        "dataset_hash": ckpt.dataset_hash([n for n, _ in pairs]),
    })
    return DenoiserModel(arch=arch, module=module, manifest=manifest)


def apply_denoiser(model: DenoiserModel, image: ImageGrid) -> ImageGrid:
    """Pure application; learned models reflect-pad to a valid size."""
    if model.arch == "median":
        return median_filter(image, model.window)
    divisor = 2 ** model.manifest.get("depth", 2) if model.arch == "unet-denoiser" else 1
    h, w = image.shape
    ph, pw = (-h) % divisor, (-w) % divisor
    x = torch.from_numpy(image.pixels[None, None]).float()
    if ph or pw:
        x = torch.nn.functional.pad(x, (0, pw, 0, ph), mode="reflect")
    model.module.eval()
    with torch.no_grad():
        y = model.module(x)
    return ImageGrid(y[0, 0, :h, :w].numpy().astype(np.float64))


def make_sodium_training_pairs(clean_set: list[ImageGrid], seed: int,
                               sigma_range: tuple[float, float] = (0.05, 0.2),
                               ) -> list[tuple[ImageGrid, ImageGrid]]:
    """(noisy, clean) pairs via the synthetic magnitude-image construction.

    Per-pair noise std is sampled uniformly from sigma_range and recorded
    nowhere else; callers wanting provenance should log the seed.
    """
    from .distortions import synthesize_sodium

    rng = rng_for(seed)
    pairs = []
    for im in clean_set:
        sigma = rng.uniform(*sigma_range)
        field_ = ImageGrid(rng.normal(0.0, sigma, size=im.shape))
        pairs.append((synthesize_sodium(im, field_), im))
    return pairs
