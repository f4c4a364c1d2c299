"""Identity-trained restoration backbones.

A backbone is trained to map clean images back onto themselves; the
quality score of a test image is then the discrepancy between the image
and the backbone's prediction of it. Only clean images are ever needed,
so no distortion labels enter training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoint as ckpt
from .imaging import ImageGrid
from .nets import DnCNNLite, PerceptualExtractor, SwinLite, UNet, seed_all_parameters

ARCHS = ("unet", "swin-lite", "dncnn-lite")
LOSS_KINDS = ("l1", "l2", "perceptual")


class BackboneError(ValueError):
    pass


@dataclass(frozen=True)
class BackboneConfig:
    arch: str = "unet"
    # unet
    depth: int = 3
    base_channels: int = 32
    # swin-lite
    embed_dim: int = 32
    window_size: int = 8
    heads: int = 4
    n_blocks: int = 4

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise BackboneError(f"unknown arch {self.arch!r}")
        if self.arch == "swin-lite" and self.embed_dim % self.heads != 0:
            raise BackboneError("heads must divide embed_dim")

    @property
    def divisor(self) -> int:
        """Input sides must be divisible by this; smaller inputs are padded."""
        if self.arch == "unet":
            return 2 ** self.depth
        if self.arch == "swin-lite":
            return self.window_size
        return 1

    def to_dict(self) -> dict:
        return {
            "arch": self.arch, "depth": self.depth, "base_channels": self.base_channels,
            "embed_dim": self.embed_dim, "window_size": self.window_size,
            "heads": self.heads, "n_blocks": self.n_blocks,
        }

    @staticmethod
    def from_dict(d: dict) -> "BackboneConfig":
        return BackboneConfig(**d)


@dataclass(frozen=True)
class TrainingHyper:
    batch_size: int = 10
    epochs: int = 200
    lr: float = 1e-3
    lr_decay: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise BackboneError("lr must be > 0")
        if self.epochs < 0:
            raise BackboneError("epochs must be >= 0")

    def to_dict(self) -> dict:
        return {"batch_size": self.batch_size, "epochs": self.epochs,
                "lr": self.lr, "lr_decay": self.lr_decay, "seed": self.seed}


_perceptual_extractor: PerceptualExtractor | None = None


def perceptual_extractor() -> PerceptualExtractor:
    global _perceptual_extractor
    if _perceptual_extractor is None:
        _perceptual_extractor = PerceptualExtractor()
    return _perceptual_extractor


def loss_fn(kind: str):
    """Tensor-level loss on (pred, target) batches."""
    if kind == "l1":
        return lambda p, t: torch.mean(torch.abs(p - t))
    if kind == "l2":
        return lambda p, t: torch.mean((p - t) ** 2)
    if kind == "perceptual":
        def perceptual(p, t):
            ext = perceptual_extractor()
            if p.dtype != torch.float32:
                fp = ext.double()(p)
                ft = ext(t)
                ext.float()
            else:
                fp = ext(p)
                ft = ext(t)
            terms = [torch.mean((a - b) ** 2) for a, b in zip(fp, ft)]
            return sum(terms) / len(terms)
        return perceptual
    raise BackboneError(f"unknown loss kind {kind!r}")


def compute_loss(pred: ImageGrid, target: ImageGrid, loss: str) -> float:
    if pred.shape != target.shape:
        raise BackboneError(f"shape mismatch: {pred.shape} vs {target.shape}")
    p = torch.from_numpy(pred.pixels[None, None]).float()
    t = torch.from_numpy(target.pixels[None, None]).float()
    with torch.no_grad():
        return float(loss_fn(loss)(p, t))


def _build_module(config: BackboneConfig) -> torch.nn.Module:
    if config.arch == "unet":
        return UNet(depth=config.depth, base_channels=config.base_channels)
    if config.arch == "swin-lite":
        return SwinLite(embed_dim=config.embed_dim, window_size=config.window_size,
                        heads=config.heads, n_blocks=config.n_blocks)
    return DnCNNLite()


@dataclass
class TrainedBackbone:
    """Architecture + weights + the manifest that fully determines retraining."""

    config: BackboneConfig
    module: torch.nn.Module
    manifest: dict = field(default_factory=dict)

    @property
    def content_hash(self) -> str:
        return ckpt.state_dict_hash(self.module.state_dict(), self.manifest)

    def predict(self, image: ImageGrid) -> ImageGrid:
        return predict(self, image)

    def save(self, path) -> None:
        manifest = dict(self.manifest)
        manifest["config"] = self.config.to_dict()
        ckpt.save_checkpoint(path, self.module, manifest)

    @staticmethod
    def load(path) -> "TrainedBackbone":
        manifest, state = ckpt.load_checkpoint(path)
        config = BackboneConfig.from_dict(manifest.pop("config"))
        module = _build_module(config)
        module.load_state_dict(state)
        return TrainedBackbone(config=config, module=module, manifest=manifest)


def build_backbone(config: BackboneConfig, seed: int = 0) -> TrainedBackbone:
    """Untrained backbone with deterministic seeded initialization."""
    module = _build_module(config)
    seed_all_parameters(module, seed)
    return TrainedBackbone(config=config, module=module,
                           manifest={"init_seed": seed, "trained": False})


def _stack(images: list[ImageGrid]) -> torch.Tensor:
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise BackboneError(f"images must share one shape, got {shapes}")
    arr = np.stack([im.pixels for im in images]).astype(np.float32)
    return torch.from_numpy(arr)[:, None]


def train_identity(model: TrainedBackbone, clean_set: list[ImageGrid], loss: str,
                   hyper: TrainingHyper, warm_start: TrainedBackbone | None = None,
                   ) -> TrainedBackbone:
    """Minimize loss(M(x), x) over clean images only.

    Single-threaded runs with the same seed are bit-reproducible. Epoch-mean
    losses are recorded in the manifest for convergence checks.
    """
    if len(clean_set) < 1:
        raise BackboneError("clean_set is empty")
    data = _stack(clean_set)
    if data.shape[-1] % model.config.divisor or data.shape[-2] % model.config.divisor:
        raise BackboneError(
            f"image sides {tuple(data.shape[-2:])} not divisible by {model.config.divisor}")

    if warm_start is not None:
        model.module.load_state_dict(warm_start.module.state_dict())

    criterion = loss_fn(loss)
    opt = torch.optim.Adam(model.module.parameters(), lr=hyper.lr)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=hyper.lr_decay)
    gen = torch.Generator().manual_seed(hyper.seed)

    n = data.shape[0]
    epoch_losses = []
    model.module.train()
    for _epoch in range(hyper.epochs):
        perm = torch.randperm(n, generator=gen)
        total, count = 0.0, 0
        for start in range(0, n, hyper.batch_size):
            batch = data[perm[start:start + hyper.batch_size]]
            opt.zero_grad()
            value = criterion(model.module(batch), batch)
            value.backward()
            opt.step()
            total += float(value.detach()) * batch.shape[0]
            count += batch.shape[0]
        sched.step()
        epoch_losses.append(total / count)
    model.module.eval()

    manifest = {
        "trained": True,
        "loss": loss,
        "hyper": hyper.to_dict(),
        "dataset_hash": ckpt.dataset_hash(clean_set),
        "epoch_losses": epoch_losses,
        "init_seed": model.manifest.get("init_seed"),
    }
    if loss == "perceptual":
        manifest["perceptual_extractor"] = perceptual_extractor().spec()
    if warm_start is not None:
        manifest["warm_start_parent"] = warm_start.content_hash
    return TrainedBackbone(config=model.config, module=model.module, manifest=manifest)


def predict(model: TrainedBackbone, image: ImageGrid) -> ImageGrid:
    """Pure forward pass; reflect-pads to a valid size and crops back."""
    d = model.config.divisor
    h, w = image.shape
    ph = (-h) % d
    pw = (-w) % d
    x = torch.from_numpy(image.pixels[None, None]).float()
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="reflect")
    model.module.eval()
    with torch.no_grad():
        y = model.module(x)
    out = y[0, 0, :h, :w].numpy().astype(np.float64)
    return ImageGrid(out)


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_excluded: int


def check_gradients(model: TrainedBackbone, image: ImageGrid, loss: str,
                    epsilon: float = 1e-4, n_params: int = 100,
                    seed: int = 0, one_sided_tol: float = 1e-3) -> GradCheckResult:
    """Central finite differences vs autograd on a random parameter subset.

    Runs in float64. Coordinates where the one-sided differences disagree
    beyond one_sided_tol (non-differentiable points: ReLU/maxpool
    crossings, the L1 kink at pred == target) are excluded and counted in
    the result.
    """
    module = model.module.double()
    criterion = loss_fn(loss)
    x = torch.from_numpy(image.pixels[None, None]).double()

    def objective() -> torch.Tensor:
        return criterion(module(x), x)

    module.zero_grad(set_to_none=True)
    objective().backward()
    params = [p for p in module.parameters()]
    flat_grads = torch.cat([
        (p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1) for p in params])
    total = int(flat_grads.numel())

    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.choice(total, size=min(n_params, total), replace=False)

    flat_params = []
    offsets = []
    off = 0
    for p in params:
        flat_params.append(p)
        offsets.append(off)
        off += p.numel()

    def locate(i):
        for p, o in zip(reversed(flat_params), reversed(offsets)):
            if i >= o:
                return p, i - o
        raise AssertionError

    max_rel = 0.0
    n_excluded = 0
    n_checked = 0
    with torch.no_grad():
        for i in sorted(int(v) for v in idx):
            p, local = locate(i)
            view = p.reshape(-1)
            orig = float(view[local])
            view[local] = orig + epsilon
            f_plus = float(objective())
            view[local] = orig - epsilon
            f_minus = float(objective())
            view[local] = orig
            f_mid = float(objective())
            fwd = (f_plus - f_mid) / epsilon
            bwd = (f_mid - f_minus) / epsilon
            scale = max(abs(fwd), abs(bwd), 1e-12)
            if abs(fwd - bwd) / scale > one_sided_tol:
                n_excluded += 1
                continue
            fd = (f_plus - f_minus) / (2 * epsilon)
            an = float(flat_grads[i])
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
            max_rel = max(max_rel, rel)
            n_checked += 1
    module.float()
    return GradCheckResult(max_rel_error=max_rel, n_checked=n_checked, n_excluded=n_excluded)
