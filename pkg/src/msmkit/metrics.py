"""Quality scores and agreement statistics.

The headline score rates an image by the discrepancy between the image and
an identity-trained backbone's prediction of it; no reference image and no
quality labels are involved. Also hosts the four difference/similarity
measures and the correlation/agreement statistics used to validate scores
against known distortion levels and human raters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

MEASURE_KINDS = ("l1", "l2", "s_psnr", "s_ssim")
HIGHER_IS_BETTER = {"l1": False, "l2": False, "s_psnr": True, "s_ssim": True}

PSNR_CAP_DB = 100.0
_PSNR_MSE_FLOOR = 1e-10

# SSIM constants for unit data range, 11x11 Gaussian window
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5
_SSIM_WIN = 11


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class DifferenceMeasure:
    """One of l1 | l2 | s_psnr | s_ssim, with its ranking orientation."""

    kind: str

    def __post_init__(self):
        if self.kind not in MEASURE_KINDS:
            raise MetricError(f"unknown measure {self.kind!r}")

    @property
    def higher_is_better(self) -> bool:
        return HIGHER_IS_BETTER[self.kind]


@dataclass(frozen=True)
class QualityScore:
    value: float
    measure: DifferenceMeasure
    backbone_hash: str = ""

    @property
    def higher_is_better(self) -> bool:
        return self.measure.higher_is_better


def _check_pair(a, b):
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a.pixels)) and np.all(np.isfinite(b.pixels))):
        raise MetricError("non-finite pixels")


def measure_difference(a, b, measure: DifferenceMeasure | str) -> float:
    """L1/L2 distance or PSNR/SSIM similarity between two equal-shape images."""
    if isinstance(measure, str):
        measure = DifferenceMeasure(measure)
    _check_pair(a, b)
    if measure.kind == "l1":
        return float(np.mean(np.abs(a.pixels - b.pixels)))
    if measure.kind == "l2":
        return float(np.mean((a.pixels - b.pixels) ** 2))
    if measure.kind == "s_psnr":
        mse = float(np.mean((a.pixels - b.pixels) ** 2))
        if mse < _PSNR_MSE_FLOOR:
            return PSNR_CAP_DB
        return min(float(10.0 * np.log10(1.0 / mse)), PSNR_CAP_DB)
    return _ssim(a.pixels, b.pixels)


def psnr(a, b) -> float:
    return measure_difference(a, b, "s_psnr")


def ssim(a, b) -> float:
    return measure_difference(a, b, "s_ssim")


def _ssim_window() -> np.ndarray:
    half = (_SSIM_WIN - 1) / 2
    x = np.arange(_SSIM_WIN) - half
    g = np.exp(-(x ** 2) / (2 * _SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    return k / k.sum()


_SSIM_KERNEL = _ssim_window()


def _ssim(x: np.ndarray, y: np.ndarray) -> float:
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    filt = lambda im: ndimage.correlate(im, _SSIM_KERNEL, mode="reflect")
    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x * mu_x
    var_y = filt(y * y) - mu_y * mu_y
    cov = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def msm_score(backbone, image, measure: DifferenceMeasure | str) -> QualityScore:
    """Score an image by comparing it against the backbone's prediction of it.

    ``backbone`` is anything with ``predict(image) -> image`` and an optional
    ``content_hash`` attribute (a trained restoration model in practice).
    """
    if isinstance(measure, str):
        measure = DifferenceMeasure(measure)
    pred = backbone.predict(image)
    value = measure_difference(image, pred, measure)
    return QualityScore(value=value, measure=measure,
                        backbone_hash=getattr(backbone, "content_hash", ""))


# ---------------------------------------------------------------------------
# correlation statistics


@dataclass(frozen=True)
class ScorePairSeries:
    """Paired evaluation results and known distortion levels."""

    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise MetricError("series lengths differ")
        if len(self.xs) < 3:
            raise MetricError("need at least 3 points")
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))


def _as_series(series, ys=None) -> ScorePairSeries:
    if ys is not None:
        return ScorePairSeries(tuple(series), tuple(ys))
    return series


def plcc(series, ys=None) -> float:
    """Pearson linear correlation; signed. Raises on a constant series."""
    s = _as_series(series, ys)
    x = np.asarray(s.xs)
    y = np.asarray(s.ys)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    if denom == 0.0:
        raise MetricError("correlation undefined for a constant series")
    return float(np.clip(np.sum(dx * dy) / denom, -1.0, 1.0))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with average ranks for ties."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def srcc(series, ys=None) -> float:
    """Spearman rank correlation: Pearson on average ranks; signed."""
    s = _as_series(series, ys)
    rx = _average_ranks(np.asarray(s.xs))
    ry = _average_ranks(np.asarray(s.ys))
    return plcc(ScorePairSeries(tuple(rx), tuple(ry)))


# ---------------------------------------------------------------------------
# inter-rater agreement


@dataclass(frozen=True)
class RatingVector:
    """Categorical choices per item, aligned by item id."""

    items: tuple
    choices: tuple

    def __post_init__(self):
        if len(self.items) != len(self.choices):
            raise MetricError("items and choices lengths differ")
        if len(self.items) == 0:
            raise MetricError("empty rating vector")
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "choices", tuple(self.choices))

    def as_dict(self) -> dict:
        return dict(zip(self.items, self.choices))


def cohens_kappa(a: RatingVector, b: RatingVector) -> float:
    """Chance-corrected agreement between two categorical raters."""
    if set(a.items) != set(b.items):
        raise MetricError("rating vectors cover different items")
    da, db = a.as_dict(), b.as_dict()
    items = list(da)
    n = len(items)
    agree = sum(1 for it in items if da[it] == db[it])
    p_o = agree / n
    if p_o == 1.0:
        return 1.0
    cats = sorted({*da.values(), *db.values()}, key=str)
    p_e = 0.0
    for c in cats:
        pa = sum(1 for it in items if da[it] == c) / n
        pb = sum(1 for it in items if db[it] == c) / n
        p_e += pa * pb
    return (p_o - p_e) / (1.0 - p_e)
