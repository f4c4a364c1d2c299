"""Desk-scale denoising-diffusion pipeline.

Produces content-conditional noisy images whose degradation level is
indexed by the timestep at which ancestral sampling stops: larger stop
timesteps leave more residual noise. Images are mapped to [-1, 1] inside
this module and back to [0, 1] on output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import checkpoint as ckpt
from .imaging import ImageGrid, rng_for
from .nets import TimeUNet, seed_all_parameters

DEFAULT_T_MAX = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DESK_T_MAX = 200


class DiffusionError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule with precomputed cumulative alpha products.

    ``alpha_bars`` has length t_max + 1 with alpha_bars[0] = 1.
    """

    t_max: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def to_dict(self) -> dict:
        return {"t_max": self.t_max,
                "beta_start": float(self.betas[0]), "beta_end": float(self.betas[-1])}


def build_linear_schedule(t_max: int = DEFAULT_T_MAX,
                          beta_start: float = DEFAULT_BETA_START,
                          beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    if t_max < 2:
        raise DiffusionError("t_max must be >= 2")
    if not 0.0 < beta_start < beta_end < 1.0:
        raise DiffusionError(f"need 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, t_max)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    return NoiseSchedule(t_max=t_max, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def forward_noise(image: ImageGrid, t: int, schedule: NoiseSchedule, seed: int) -> ImageGrid:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps in the [0,1] pixel domain."""
    if not 0 <= t <= schedule.t_max:
        raise DiffusionError(f"t must be in [0, {schedule.t_max}], got {t}")
    if t == 0:
        return ImageGrid(image.pixels.copy())
    abar = schedule.alpha_bars[t]
    eps = rng_for(seed).standard_normal(image.shape)
    return ImageGrid(np.sqrt(abar) * image.pixels + np.sqrt(1.0 - abar) * eps)


@dataclass
class EpsilonPredictor:
    """Noise-prediction network plus its schedule and training manifest."""

    module: torch.nn.Module
    schedule: NoiseSchedule
    manifest: dict

    @property
    def content_hash(self) -> str:
        return ckpt.state_dict_hash(self.module.state_dict(), self.manifest)

    def save(self, path) -> None:
        manifest = dict(self.manifest)
        manifest["schedule"] = self.schedule.to_dict()
        ckpt.save_checkpoint(path, self.module, manifest)

    @staticmethod
    def load(path) -> "EpsilonPredictor":
        manifest, state = ckpt.load_checkpoint(path)
        sched_cfg = manifest.pop("schedule")
        module = TimeUNet(base_channels=manifest.get("base_channels", 24))
        module.load_state_dict(state)
        return EpsilonPredictor(module=module, schedule=build_linear_schedule(**sched_cfg),
                                manifest=manifest)


@dataclass(frozen=True)
class DiffusionHyper:
    steps: int = 2000
    batch_size: int = 10
    lr: float = 2e-4
    seed: int = 0
    base_channels: int = 24


def train_epsilon_predictor(clean_set: list[ImageGrid], schedule: NoiseSchedule,
                            hyper: DiffusionHyper = DiffusionHyper()) -> EpsilonPredictor:
    """MSE noise-prediction training over uniformly sampled timesteps."""
    if len(clean_set) < 16:
        raise DiffusionError("need at least 16 clean images")
    shapes = {im.shape for im in clean_set}
    if len(shapes) != 1:
        raise DiffusionError(f"images must share one shape, got {shapes}")

    # [0,1] -> [-1,1]
    data = torch.from_numpy(
        np.stack([im.pixels for im in clean_set]).astype(np.float32))[:, None] * 2.0 - 1.0
    abars = torch.from_numpy(schedule.alpha_bars.astype(np.float32))

    module = TimeUNet(base_channels=hyper.base_channels)
    seed_all_parameters(module, hyper.seed)
    opt = torch.optim.Adam(module.parameters(), lr=hyper.lr)
    gen = torch.Generator().manual_seed(hyper.seed)

    n = data.shape[0]
    final_loss = None
    module.train()
    for _step in range(hyper.steps):
        idx = torch.randint(0, n, (hyper.batch_size,), generator=gen)
        t = torch.randint(1, schedule.t_max + 1, (hyper.batch_size,), generator=gen)
        x0 = data[idx]
        eps = torch.randn(x0.shape, generator=gen)
        ab = abars[t].view(-1, 1, 1, 1)
        xt = torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps
        opt.zero_grad()
        loss = torch.mean((module(xt, t) - eps) ** 2)
        loss.backward()
        opt.step()
        final_loss = float(loss.detach())
    module.eval()

    manifest = {
        "steps": hyper.steps, "batch_size": hyper.batch_size, "lr": hyper.lr,
        "seed": hyper.seed, "base_channels": hyper.base_channels,
        "final_loss": final_loss, "dataset_hash": ckpt.dataset_hash(clean_set),
    }
    return EpsilonPredictor(module=module, schedule=schedule, manifest=manifest)


def reverse_sample_to(model: EpsilonPredictor, schedule: NoiseSchedule, stop_t: int,
                      shape: tuple[int, int], seed: int) -> ImageGrid:
    """Ancestral sampling from pure noise down to x_{stop_t}, mapped to [0, 1]."""
    return reverse_sample_batch(model, schedule, stop_t, shape, seed, count=1)[0]


def reverse_sample_batch(model: EpsilonPredictor, schedule: NoiseSchedule, stop_t: int,
                         shape: tuple[int, int], seed: int, count: int) -> list[ImageGrid]:
    if not 0 <= stop_t < schedule.t_max:
        raise DiffusionError(f"stop_t must be in [0, {schedule.t_max - 1}], got {stop_t}")
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn((count, 1) + tuple(shape), generator=gen)
    model.module.eval()
    with torch.no_grad():
        for t in range(schedule.t_max, stop_t, -1):
            tt = torch.full((count,), t, dtype=torch.long)
            eps_hat = model.module(x, tt)
            alpha = float(schedule.alphas[t - 1])
            abar = float(schedule.alpha_bars[t])
            mean = (x - (1 - alpha) / np.sqrt(1 - abar) * eps_hat) / np.sqrt(alpha)
            if t - 1 > 0:
                abar_prev = float(schedule.alpha_bars[t - 1])
                var = (1 - abar_prev) / (1 - abar) * (1 - alpha)
                x = mean + np.sqrt(var) * torch.randn(x.shape, generator=gen)
            else:
                x = mean
    out = (x[:, 0].numpy().astype(np.float64) + 1.0) / 2.0
    return [ImageGrid(out[i]) for i in range(count)]
