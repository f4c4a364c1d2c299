"""Canonical grayscale image representation, file I/O and synthetic phantoms.

Images are 2D grids of real pixels with a canonical range of [0, 1].
Noisy images may leave that range; they are only clamped at 8/16-bit
export time so that noise statistics stay unbiased on the analysis path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

RAWF32_MAGIC = b"MSMF"

MIN_SIDE = 8
MIN_PHANTOM_SIZE = 32


class ImagingError(ValueError):
    """Raised for invalid image data or unreadable/unwritable files."""


def rng_for(seed: int) -> np.random.Generator:
    """Seeded counter-based generator (Philox); never the global default."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class ImageGrid:
    """A 2D grayscale image. ``canonical`` asserts every pixel is in [0, 1]."""

    pixels: np.ndarray
    canonical: bool = False

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ImagingError(f"pixels must be 2D, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ImagingError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {px.shape}")
        if self.canonical and (px.min() < 0.0 or px.max() > 1.0):
            raise ImagingError("canonical image has pixels outside [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of the deterministic synthetic phantom generator."""

    seed: int
    size: int = 64
    n_ellipses: int = 4
    texture_amplitude: float = 0.05

    def __post_init__(self):
        if self.size < MIN_PHANTOM_SIZE:
            raise ImagingError(f"phantom size must be >= {MIN_PHANTOM_SIZE}, got {self.size}")
        if self.n_ellipses < 0:
            raise ImagingError("n_ellipses must be >= 0")
        if not 0.0 <= self.texture_amplitude <= 0.3:
            raise ImagingError("texture_amplitude must be in [0, 0.3]")


def to_canonical(image: ImageGrid) -> ImageGrid:
    """Clamp pixels to [0, 1] and flag the result canonical."""
    if not np.all(np.isfinite(image.pixels)):
        raise ImagingError("image contains NaN or Inf pixels")
    return ImageGrid(np.clip(image.pixels, 0.0, 1.0), canonical=True)


def load_image(path) -> ImageGrid:
    """Load an 8/16-bit grayscale PNG or a rawf32 file, scaled to [0, 1]."""
    path = str(path)
    with open(path, "rb") as f:
        head = f.read(4)
    if head == RAWF32_MAGIC:
        return _load_rawf32(path)
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise ImagingError(f"unreadable image file {path!r}: {exc}") from exc
    if img.mode in ("L", "P") and img.mode == "P":
        raise ImagingError(f"palette/color image not supported: {path!r}")
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.float64)
        max_code = 255.0
    elif img.mode in ("I;16", "I"):
        arr = np.asarray(img, dtype=np.float64)
        max_code = 65535.0
    else:
        raise ImagingError(f"expected grayscale image, got mode {img.mode!r} in {path!r}")
    if arr.size == 0:
        raise ImagingError(f"zero-sized image: {path!r}")
    return ImageGrid(arr / max_code, canonical=True)


def save_image(image: ImageGrid, path, format: str = "png16") -> None:
    """Write a PNG (clamped + quantized round-half-up) or lossless rawf32."""
    if not np.all(np.isfinite(image.pixels)):
        raise ImagingError("cannot save non-finite image")
    path = str(path)
    if format == "rawf32":
        _save_rawf32(image, path)
        return
    if format == "png8":
        max_code, dtype = 255, np.uint8
    elif format == "png16":
        max_code, dtype = 65535, np.uint16
    else:
        raise ImagingError(f"unknown format {format!r}")
    clamped = np.clip(image.pixels, 0.0, 1.0)
    codes = np.floor(clamped * max_code + 0.5).astype(dtype)
    try:
        Image.fromarray(codes).save(path, format="PNG")
    except OSError as exc:
        raise ImagingError(f"cannot write {path!r}: {exc}") from exc


def _save_rawf32(image: ImageGrid, path: str) -> None:
    data = image.pixels.astype("<f4").tobytes(order="C")
    try:
        with open(path, "wb") as f:
            f.write(RAWF32_MAGIC)
            f.write(struct.pack("<II", image.height, image.width))
            f.write(data)
    except OSError as exc:
        raise ImagingError(f"cannot write {path!r}: {exc}") from exc


def _load_rawf32(path: str) -> ImageGrid:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != RAWF32_MAGIC or len(blob) < 12:
        raise ImagingError(f"not a rawf32 file: {path!r}")
    h, w = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * h * w
    if len(blob) != expected:
        raise ImagingError(f"truncated rawf32 file: {path!r}")
    arr = np.frombuffer(blob, dtype="<f4", offset=12).reshape(h, w)
    return ImageGrid(arr.astype(np.float64))


def generate_phantom(spec: PhantomSpec) -> ImageGrid:
    """Deterministic synthetic test image: gradient + ellipses + texture.

    Pixel values are rounded through float32 so phantoms survive a rawf32
    round trip bit-exactly.
    """
    rng = rng_for(spec.seed)
    n = spec.size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64) / (n - 1)

    # smooth background gradient along a random direction, range <= 0.25
    theta = rng.uniform(0.0, 2 * np.pi)
    proj = xx * np.cos(theta) + yy * np.sin(theta)
    proj = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-12)
    lo = rng.uniform(0.05, 0.15)
    img = lo + proj * rng.uniform(0.15, 0.25)

    for _ in range(spec.n_ellipses):
        cx, cy = rng.uniform(0.2, 0.8, size=2)
        ax_, ay_ = rng.uniform(0.08, 0.3, size=2)
        ang = rng.uniform(0.0, np.pi)
        intensity = rng.uniform(0.2, 1.0)
        dx, dy = xx - cx, yy - cy
        u = dx * np.cos(ang) + dy * np.sin(ang)
        v = -dx * np.sin(ang) + dy * np.cos(ang)
        r = np.sqrt((u / ax_) ** 2 + (v / ay_) ** 2)
        # ~1px anti-aliased edge
        edge = 1.0 / (n * min(ax_, ay_))
        cov = np.clip((1.0 + edge - r) / (2 * edge), 0.0, 1.0)
        img = img * (1.0 - cov) + intensity * cov

    if spec.texture_amplitude > 0:
        fx, fy = rng.uniform(1.0, 4.0, size=2)
        phase = rng.uniform(0.0, 2 * np.pi)
        img = img + spec.texture_amplitude * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)

    img = np.clip(img, 0.0, 1.0).astype(np.float32).astype(np.float64)
    return ImageGrid(img, canonical=True)


def generate_phantom_set(base_seed: int, count: int, size: int = 64,
                         n_ellipses: int = 4, texture_amplitude: float = 0.05) -> list[ImageGrid]:
    """Phantoms for seeds base_seed .. base_seed+count-1."""
    return [
        generate_phantom(PhantomSpec(seed=base_seed + i, size=size,
                                     n_ellipses=n_ellipses,
                                     texture_amplitude=texture_amplitude))
        for i in range(count)
    ]
