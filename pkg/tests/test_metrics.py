import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from msmkit import (
    DifferenceMeasure, ImageGrid, RatingVector, cohens_kappa, measure_difference,
    msm_score, plcc, srcc,
)
from msmkit.metrics import MetricError, PSNR_CAP_DB


def grid(arr):
    return ImageGrid(np.asarray(arr, dtype=np.float64))


class IdentityStub:
    content_hash = "stub"

    def predict(self, image):
        return ImageGrid(image.pixels.copy())


def test_identity_measures(phantom64):
    assert measure_difference(phantom64, phantom64, "l1") == 0.0
    assert measure_difference(phantom64, phantom64, "l2") == 0.0
    assert measure_difference(phantom64, phantom64, "s_psnr") == PSNR_CAP_DB
    assert measure_difference(phantom64, phantom64, "s_ssim") == pytest.approx(1.0, abs=1e-12)


def test_uniform_offset_fixtures(phantom64):
    offset = ImageGrid(phantom64.pixels + 0.1)
    assert measure_difference(phantom64, offset, "l1") == pytest.approx(0.1, abs=1e-12)
    assert measure_difference(phantom64, offset, "l2") == pytest.approx(0.01, abs=1e-12)
    assert measure_difference(phantom64, offset, "s_psnr") == pytest.approx(20.0, abs=1e-9)


def test_measures_symmetric(phantom64):
    other = ImageGrid(phantom64.pixels[::-1].copy())
    for kind in ("l1", "l2", "s_psnr", "s_ssim"):
        ab = measure_difference(phantom64, other, kind)
        ba = measure_difference(other, phantom64, kind)
        assert ab == pytest.approx(ba, abs=1e-12)


def test_measure_orientation():
    assert not DifferenceMeasure("l1").higher_is_better
    assert not DifferenceMeasure("l2").higher_is_better
    assert DifferenceMeasure("s_psnr").higher_is_better
    assert DifferenceMeasure("s_ssim").higher_is_better


def test_measure_shape_mismatch():
    with pytest.raises(MetricError):
        measure_difference(grid(np.zeros((16, 16))), grid(np.zeros((8, 8))), "l1")


def test_measure_nan_rejected():
    with pytest.raises(MetricError):
        measure_difference(grid(np.full((16, 16), np.nan)), grid(np.zeros((16, 16))), "l2")


def test_msm_score_identity_stub(phantom64):
    score = msm_score(IdentityStub(), phantom64, "l2")
    assert score.value == 0.0
    assert score.backbone_hash == "stub"
    assert not score.higher_is_better


def test_ssim_decreases_with_noise(phantom64):
    from msmkit import add_gaussian_noise

    noisy = add_gaussian_noise(phantom64, 0.1, seed=1)
    noisier = add_gaussian_noise(phantom64, 0.25, seed=1)
    s1 = measure_difference(phantom64, noisy, "s_ssim")
    s2 = measure_difference(phantom64, noisier, "s_ssim")
    assert 0 < s2 < s1 < 1


# ---------------------------------------------------------------------------
# correlations


def test_plcc_exact_lines():
    assert plcc([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert plcc([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)
    assert plcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_srcc_fixtures():
    assert srcc([1, 2, 5], [2, 7, 9]) == pytest.approx(1.0)
    assert srcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)  # 1 - 12/60


def test_srcc_ties_match_rank_pearson():
    xs, ys = [1.0, 1.0, 2.0], [1.0, 2.0, 3.0]
    expected = stats.pearsonr(stats.rankdata(xs), stats.rankdata(ys)).statistic
    assert srcc(xs, ys) == pytest.approx(expected, abs=1e-12)


def test_constant_series_error():
    with pytest.raises(MetricError):
        plcc([1, 1, 1], [1, 2, 3])
    with pytest.raises(MetricError):
        srcc([2, 2, 2], [1, 2, 3])


def test_correlations_vs_brute_force_oracle():
    # independent oracle: direct formula + sort-based ranks
    def pearson_oracle(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        num = np.sum((x - x.mean()) * (y - y.mean()))
        den = np.sqrt(np.sum((x - x.mean()) ** 2) * np.sum((y - y.mean()) ** 2))
        return num / den

    def ranks_oracle(v):
        v = np.asarray(v, float)
        out = np.empty(len(v))
        for i, val in enumerate(v):
            less = np.sum(v < val)
            eq = np.sum(v == val)
            out[i] = less + (eq + 1) / 2.0
        return out

    rng = np.random.Generator(np.random.Philox(99))
    for trial in range(1000):
        x = rng.normal(size=50)
        y = rng.normal(size=50) + (trial % 3 - 1) * x
        if trial % 5 == 0:
            x = np.round(x, 1)  # introduce ties
        assert plcc(x, y) == pytest.approx(pearson_oracle(x, y), abs=1e-9)
        assert srcc(x, y) == pytest.approx(pearson_oracle(ranks_oracle(x), ranks_oracle(y)), abs=1e-9)


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=40, unique=True),
       st.floats(0.1, 10.0), st.floats(-100.0, 100.0))
@settings(max_examples=50, deadline=None)
def test_plcc_affine_invariance(xs, a, b):
    ys = list(range(len(xs)))
    try:
        base = plcc(xs, ys)
    except MetricError:
        return
    assert plcc([a * x + b for x in xs], ys) == pytest.approx(base, abs=1e-7)


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=40, unique=True))
@settings(max_examples=50, deadline=None)
def test_srcc_monotone_map_invariance_and_symmetry(xs):
    ys = list(range(len(xs)))
    base = srcc(xs, ys)
    assert srcc([np.arctan(x / 1e3) for x in xs], ys) == pytest.approx(base, abs=1e-9)
    assert srcc(ys, xs) == pytest.approx(base, abs=1e-12)


# ---------------------------------------------------------------------------
# Cohen's kappa


def test_kappa_perfect_agreement():
    a = RatingVector((1, 2, 3), ("A", "B", "A"))
    assert cohens_kappa(a, a) == 1.0


def test_kappa_chance_level():
    a = RatingVector((1, 2, 3, 4), ("A", "A", "B", "B"))
    b = RatingVector((1, 2, 3, 4), ("A", "B", "A", "B"))
    assert cohens_kappa(a, b) == pytest.approx(0.0)


def test_kappa_half():
    a = RatingVector((1, 2, 3, 4), ("A", "A", "A", "B"))
    b = RatingVector((1, 2, 3, 4), ("A", "A", "B", "B"))
    assert cohens_kappa(a, b) == pytest.approx(0.5)


def test_kappa_symmetric_and_degenerate():
    a = RatingVector((1, 2, 3, 4), ("A", "B", "B", "B"))
    b = RatingVector((1, 2, 3, 4), ("B", "B", "B", "B"))
    assert cohens_kappa(a, b) == pytest.approx(cohens_kappa(b, a))
    # p_o = 1 with p_e = 1 degenerate case
    c = RatingVector((1, 2), ("A", "A"))
    assert cohens_kappa(c, c) == 1.0


def test_kappa_random_sets_vs_confusion_matrix_oracle():
    def kappa_oracle(choices_a, choices_b):
        cats = sorted(set(choices_a) | set(choices_b))
        idx = {c: i for i, c in enumerate(cats)}
        m = np.zeros((len(cats), len(cats)))
        for ca, cb in zip(choices_a, choices_b):
            m[idx[ca], idx[cb]] += 1
        n = m.sum()
        p_o = np.trace(m) / n
        p_e = float(np.sum(m.sum(axis=1) * m.sum(axis=0)) / n ** 2)
        if p_o == 1.0:
            return 1.0
        return (p_o - p_e) / (1 - p_e)

    rng = np.random.Generator(np.random.Philox(5))
    for _ in range(50):
        n = int(rng.integers(2, 30))
        cats = ["A", "B", "C"][: int(rng.integers(2, 4))]
        ca = [cats[i] for i in rng.integers(0, len(cats), n)]
        cb = [cats[i] for i in rng.integers(0, len(cats), n)]
        items = tuple(range(n))
        assert cohens_kappa(RatingVector(items, ca), RatingVector(items, cb)) == pytest.approx(
            kappa_oracle(ca, cb), abs=1e-12)


def test_kappa_misaligned_items_rejected():
    a = RatingVector((1, 2), ("A", "B"))
    b = RatingVector((1, 3), ("A", "B"))
    with pytest.raises(MetricError):
        cohens_kappa(a, b)
