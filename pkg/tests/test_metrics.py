import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epgd import psnr, ssim
from epgd.errors import DimensionError
from epgd.metrics import quality


def naive_ssim(a, b):
    """Window-by-window SSIM with an explicit 11x11 Gaussian, averaged over positions and channels."""
    x = np.arange(11) - 5
    g = np.exp(-(x**2) / (2 * 1.5**2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    vals = []
    for ch in range(a.shape[2]):
        for i in range(a.shape[0] - 10):
            for j in range(a.shape[1] - 10):
                pa = a[i:i + 11, j:j + 11, ch]
                pb = b[i:i + 11, j:j + 11, ch]
                ma, mb = np.sum(w * pa), np.sum(w * pb)
                va = np.sum(w * (pa - ma) ** 2)
                vb = np.sum(w * (pb - mb) ** 2)
                cov = np.sum(w * (pa - ma) * (pb - mb))
                vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_psnr_identical_is_inf(rng):
    a = rng.uniform(0, 255, (8, 8, 3))
    assert psnr(a, a) == float("inf")


def test_psnr_off_by_one():
    a = np.full((5, 7, 3), 100.0)
    assert psnr(a, a + 1) == pytest.approx(20 * np.log10(255), abs=1e-12)
    assert f"{psnr(a, a + 1):.4f}" == "48.1308"


def test_psnr_two_pass_reference(rng):
    a = rng.uniform(0, 255, (20, 30, 3))
    b = rng.uniform(0, 255, (20, 30, 3))
    total = 0.0
    for v in (a - b).ravel()[::-1]:
        total += v * v
    assert psnr(a, b) == pytest.approx(10 * np.log10(255**2 / (total / a.size)), rel=1e-12)


def test_psnr_decreases_with_noise(rng):
    clean = rng.uniform(50, 200, (32, 32, 3))
    z = rng.normal(size=clean.shape)
    vals = [psnr(clean, clean + s * z) for s in (1, 2, 5, 10, 25)]
    assert np.all(np.diff(vals) < 0)


def test_ssim_identical_and_constant(rng):
    a = rng.uniform(0, 255, (16, 16, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    c = np.full((16, 16, 3), 100.0)
    assert ssim(c, c) == pytest.approx(1.0, abs=1e-12)


def test_ssim_matches_naive_reference():
    rng = np.random.default_rng(32)
    a = rng.uniform(0, 255, (32, 32, 3))
    b = np.clip(a + rng.normal(0, 20, a.shape), 0, 255)
    assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-6)


def test_ssim_matches_scikit_image(rng):
    metrics = pytest.importorskip("skimage.metrics")
    a = rng.uniform(0, 255, (40, 36, 3))
    b = np.clip(a + rng.normal(0, 15, a.shape), 0, 255)
    ref = metrics.structural_similarity(
        a, b, channel_axis=-1, data_range=255, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
    )
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_symmetry(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 255, (14, 15, 3))
    b = rng.uniform(0, 255, (14, 15, 3))
    assert psnr(a, b) == psnr(b, a)
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12


def test_dimension_errors(rng):
    with pytest.raises(DimensionError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(DimensionError):
        ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))


def test_quality_report_format():
    a = np.full((12, 12, 3), 10.0)
    assert str(quality(a, a)) == "PSNR: inf dB  SSIM: 1.0000"
