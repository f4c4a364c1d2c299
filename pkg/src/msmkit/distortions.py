"""Parametrized image degradations: noise, blur, synthetic low-SNR magnitude images.

All operations are pure and deterministic in their seed. Noisy outputs are
not clamped; clamping happens only at 8/16-bit export.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import ImageGrid, ImagingError, rng_for

NOISE_KINDS = ("gaussian-noise", "rician-noise")
BLUR_KINDS = ("gaussian-blur", "motion-blur")
DISTORTION_KINDS = NOISE_KINDS + BLUR_KINDS

MAX_SIGMA = 0.25
MAX_KERNEL = 51


class DistortionError(ValueError):
    pass


@dataclass(frozen=True)
class DistortionSpec:
    """One degradation: kind + level (+ seed for the stochastic kinds)."""

    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise DistortionError(f"unknown distortion kind {self.kind!r}")
        if self.kind in NOISE_KINDS:
            if not 0.0 <= self.level <= MAX_SIGMA:
                raise DistortionError(f"noise sigma must be in [0, {MAX_SIGMA}], got {self.level}")
        else:
            _check_kernel_size(self.level)


def _check_kernel_size(s) -> int:
    s_int = int(s)
    if s_int != s or s_int % 2 == 0 or not 1 <= s_int <= MAX_KERNEL:
        raise DistortionError(f"blur size must be an odd integer in [1, {MAX_KERNEL}], got {s}")
    return s_int


def apply_distortion(image: ImageGrid, spec: DistortionSpec) -> ImageGrid:
    if spec.kind == "gaussian-noise":
        return add_gaussian_noise(image, spec.level, spec.seed)
    if spec.kind == "rician-noise":
        return add_rician_noise(image, spec.level, spec.seed)
    if spec.kind == "gaussian-blur":
        return gaussian_blur(image, int(spec.level))
    return motion_blur(image, int(spec.level))


def add_gaussian_noise(image: ImageGrid, sigma: float, seed: int) -> ImageGrid:
    """image + N(0, sigma^2), i.i.d. per pixel."""
    if sigma < 0:
        raise DistortionError("sigma must be >= 0")
    if sigma == 0:
        return ImageGrid(image.pixels.copy())
    noise = rng_for(seed).normal(0.0, sigma, size=image.shape)
    return ImageGrid(image.pixels + noise)


def add_rician_noise(image: ImageGrid, sigma: float, seed: int) -> ImageGrid:
    """Magnitude of (image + n1, n2) with n1, n2 ~ N(0, sigma^2)."""
    if sigma < 0:
        raise DistortionError("sigma must be >= 0")
    if sigma == 0:
        return ImageGrid(np.abs(image.pixels))
    rng = rng_for(seed)
    n1 = rng.normal(0.0, sigma, size=image.shape)
    n2 = rng.normal(0.0, sigma, size=image.shape)
    return ImageGrid(np.sqrt((image.pixels + n1) ** 2 + n2 ** 2))


def gaussian_kernel_1d(size: int) -> np.ndarray:
    """Normalized 1D Gaussian kernel with the OpenCV default sigma(size)."""
    size = _check_kernel_size(size)
    if size == 1:
        return np.array([1.0])
    sigma = 0.3 * ((size - 1) * 0.5 - 1) + 0.8
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    k = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def gaussian_blur(image: ImageGrid, kernel_size: int) -> ImageGrid:
    """Separable Gaussian blur with reflect-padded borders."""
    s = _check_kernel_size(kernel_size)
    if s >= min(image.shape):
        raise DistortionError(f"kernel size {s} >= smallest image side {min(image.shape)}")
    if s == 1:
        return ImageGrid(image.pixels.copy())
    k = gaussian_kernel_1d(s)
    out = ndimage.correlate1d(image.pixels, k, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, k, axis=1, mode="reflect")
    return ImageGrid(out)


def motion_blur(image: ImageGrid, kernel_size: int) -> ImageGrid:
    """Horizontal 1 x s box blur with reflect-padded borders."""
    s = _check_kernel_size(kernel_size)
    if s >= min(image.shape):
        raise DistortionError(f"kernel size {s} >= smallest image side {min(image.shape)}")
    if s == 1:
        return ImageGrid(image.pixels.copy())
    k = np.full(s, 1.0 / s)
    out = ndimage.correlate1d(image.pixels, k, axis=1, mode="reflect")
    return ImageGrid(out)


def synthesize_sodium(signal: ImageGrid, noise_field: ImageGrid) -> ImageGrid:
    """Magnitude image sqrt((S + N/sqrt(2))^2 + (N/sqrt(2))^2), pixelwise."""
    if signal.shape != noise_field.shape:
        raise DistortionError(f"shape mismatch: {signal.shape} vs {noise_field.shape}")
    s = signal.pixels
    n = noise_field.pixels / np.sqrt(2.0)
    return ImageGrid(np.sqrt((s + n) ** 2 + n ** 2))


@dataclass(frozen=True)
class LadderRung:
    spec: DistortionSpec
    image: ImageGrid
    level: float


@dataclass(frozen=True)
class DistortionLadder:
    """Progressively degraded versions of one base image, ordered by level."""

    kind: str
    base: ImageGrid
    rungs: tuple[LadderRung, ...]

    @property
    def levels(self) -> list[float]:
        return [r.level for r in self.rungs]


def build_ladder(image: ImageGrid, kind: str, levels, seed: int = 0) -> DistortionLadder:
    """One distorted image per level; rung i uses seed + i."""
    levels = list(levels)
    if not levels:
        raise DistortionError("levels must be non-empty")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise DistortionError(f"levels must be strictly ascending, got {levels}")
    rungs = []
    for i, level in enumerate(levels):
        spec = DistortionSpec(kind=kind, level=level, seed=seed + i)
        rungs.append(LadderRung(spec=spec, image=apply_distortion(image, spec), level=float(level)))
    return DistortionLadder(kind=kind, base=image, rungs=tuple(rungs))
