"""Torch network architectures used across the toolkit.

All modules map (B, 1, H, W) -> (B, 1, H, W) unless noted. Weight init is
driven by an explicit seeded generator so builds are reproducible.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def seed_all_parameters(module: nn.Module, seed: int) -> None:
    """Re-initialize every parameter from a dedicated seeded generator."""
    gen = torch.Generator().manual_seed(seed)
    for p in module.parameters():
        if p.dim() >= 2:
            fan_in = p[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                p.uniform_(-bound, bound, generator=gen)
        else:
            with torch.no_grad():
                p.uniform_(-0.01, 0.01, generator=gen)


class DoubleConv(nn.Module):
    def __init__(self, c_in, c_out, norm: str = "none"):
        super().__init__()
        layers = []
        for cin in (c_in, c_out):
            layers.append(nn.Conv2d(cin, c_out, 3, padding=1))
            if norm == "instance":
                layers.append(nn.InstanceNorm2d(c_out))
            elif norm != "none":
                raise ValueError(f"norm must be 'none' or 'instance', got {norm!r}")
            layers.append(nn.ReLU(inplace=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    """Encoder-decoder with skip connections.

    depth downsamplings, base_channels in the first level, x2 expansion.
    Input sides must be divisible by 2**depth. With norm="instance" every
    conv block normalizes by the input's own feature statistics, which
    ties the network's behavior to the statistics of the data it was
    trained on (see the specialization sweep).
    """

    def __init__(self, depth: int = 3, base_channels: int = 32, norm: str = "none"):
        super().__init__()
        self.depth = depth
        chans = [base_channels * (2 ** i) for i in range(depth + 1)]
        self.inc = DoubleConv(1, chans[0], norm)
        self.downs = nn.ModuleList(
            DoubleConv(chans[i], chans[i + 1], norm) for i in range(depth)
        )
        self.ups = nn.ModuleList(
            nn.ConvTranspose2d(chans[i + 1], chans[i], 2, stride=2)
            for i in reversed(range(depth))
        )
        self.up_convs = nn.ModuleList(
            DoubleConv(chans[i] * 2, chans[i], norm) for i in reversed(range(depth))
        )
        self.outc = nn.Conv2d(chans[0], 1, 1)

    def forward(self, x):
        feats = [self.inc(x)]
        for down in self.downs:
            feats.append(down(F.max_pool2d(feats[-1], 2)))
        h = feats[-1]
        for up, conv, skip in zip(self.ups, self.up_convs, reversed(feats[:-1])):
            h = up(h)
            h = conv(torch.cat([skip, h], dim=1))
        return self.outc(h)


class WindowAttention(nn.Module):
    """Multi-head self-attention within non-overlapping square windows."""

    def __init__(self, dim: int, window_size: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"heads ({heads}) must divide embed dim ({dim})")
        self.dim = dim
        self.ws = window_size
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        # x: (B, H, W, C); H, W divisible by window size
        b, h, w, c = x.shape
        ws = self.ws
        x = x.view(b, h // ws, ws, w // ws, ws, c)
        x = x.permute(0, 1, 3, 2, 4, 5).reshape(-1, ws * ws, c)
        qkv = self.qkv(x).reshape(-1, ws * ws, 3, self.heads, c // self.heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(-1, ws * ws, c)
        out = self.proj(out)
        out = out.view(b, h // ws, w // ws, ws, ws, c)
        return out.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, c)


class SwinLiteBlock(nn.Module):
    def __init__(self, dim: int, window_size: int, heads: int, shifted: bool):
        super().__init__()
        self.shift = window_size // 2 if shifted else 0
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, window_size, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim * 2), nn.GELU(), nn.Linear(dim * 2, dim))

    def forward(self, x):
        # x: (B, H, W, C)
        h = self.norm1(x)
        if self.shift:
            h = torch.roll(h, shifts=(-self.shift, -self.shift), dims=(1, 2))
        h = self.attn(h)
        if self.shift:
            h = torch.roll(h, shifts=(self.shift, self.shift), dims=(1, 2))
        x = x + h
        return x + self.mlp(self.norm2(x))


class SwinLite(nn.Module):
    """Shallow windowed self-attention restorer with a global residual.

    Patch embed -> alternating unshifted/shifted window-attention blocks
    -> projection back to one channel, plus input residual. Input sides
    must be divisible by the window size.
    """

    def __init__(self, embed_dim: int = 32, window_size: int = 8,
                 heads: int = 4, n_blocks: int = 4):
        super().__init__()
        self.window_size = window_size
        self.embed = nn.Conv2d(1, embed_dim, 3, padding=1)
        self.blocks = nn.ModuleList(
            SwinLiteBlock(embed_dim, window_size, heads, shifted=(i % 2 == 1))
            for i in range(n_blocks)
        )
        self.out = nn.Conv2d(embed_dim, 1, 3, padding=1)

    def forward(self, x):
        h = self.embed(x).permute(0, 2, 3, 1)  # (B, H, W, C)
        for blk in self.blocks:
            h = blk(h)
        h = h.permute(0, 3, 1, 2)
        return x + self.out(h)


class DnCNNLite(nn.Module):
    """Residual-noise predictor: output = input - predicted noise."""

    def __init__(self, depth: int = 8, channels: int = 32):
        super().__init__()
        layers = [nn.Conv2d(1, channels, 3, padding=1), nn.ReLU(inplace=True)]
        for _ in range(depth - 2):
            layers += [nn.Conv2d(channels, channels, 3, padding=1), nn.ReLU(inplace=True)]
        layers.append(nn.Conv2d(channels, 1, 3, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return x - self.body(x)


class PerceptualExtractor(nn.Module):
    """Fixed random strided-conv feature extractor for the perceptual loss.

    Four strided conv layers with LeakyReLU, weights drawn once from seed 0
    and frozen. A reproducible stand-in for a pretrained feature network;
    the (layer sizes, seed) spec travels in training manifests.
    """

    SEED = 0
    CHANNELS = (8, 16, 32, 64)

    def __init__(self):
        super().__init__()
        layers = []
        c_in = 1
        for c_out in self.CHANNELS:
            layers.append(nn.Conv2d(c_in, c_out, 3, stride=2, padding=1))
            c_in = c_out
        self.convs = nn.ModuleList(layers)
        seed_all_parameters(self, self.SEED)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        feats = []
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
            feats.append(h)
        return feats

    def spec(self) -> dict:
        return {"seed": self.SEED, "channels": list(self.CHANNELS),
                "stride": 2, "kernel": 3, "nonlinearity": "leaky_relu(0.2)"}


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / half
        )
        ang = t[:, None].to(freqs) * freqs[None, :]
        return torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)


class TimeUNet(nn.Module):
    """Two-level U-net with additive sinusoidal time embedding (~100k params).

    Used as the noise predictor in the diffusion pipeline.
    """

    def __init__(self, base_channels: int = 24, time_dim: int = 48):
        super().__init__()
        c = base_channels
        self.time_embed = nn.Sequential(
            SinusoidalTimeEmbedding(time_dim), nn.Linear(time_dim, time_dim), nn.SiLU()
        )
        self.t_proj1 = nn.Linear(time_dim, c)
        self.t_proj2 = nn.Linear(time_dim, c * 2)
        self.inc = DoubleConv(1, c)
        self.down1 = DoubleConv(c, c * 2)
        self.down2 = DoubleConv(c * 2, c * 4)
        self.up2 = nn.ConvTranspose2d(c * 4, c * 2, 2, stride=2)
        self.conv2 = DoubleConv(c * 4, c * 2)
        self.up1 = nn.ConvTranspose2d(c * 2, c, 2, stride=2)
        self.conv1 = DoubleConv(c * 2, c)
        self.outc = nn.Conv2d(c, 1, 1)

    def forward(self, x, t):
        emb = self.time_embed(t.float())
        h0 = self.inc(x) + self.t_proj1(emb)[:, :, None, None]
        h1 = self.down1(F.max_pool2d(h0, 2)) + self.t_proj2(emb)[:, :, None, None]
        h2 = self.down2(F.max_pool2d(h1, 2))
        u2 = self.conv2(torch.cat([h1, self.up2(h2)], dim=1))
        u1 = self.conv1(torch.cat([h0, self.up1(u2)], dim=1))
        return self.outc(u1)
