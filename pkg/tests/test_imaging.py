import math
import os

import numpy as np
import pytest

from xmodal.imaging import (Image, ImagingError, MetricReport, PhantomSpec,
                            DatasetManifest, UnpairedDataset, ct_to_mri_intensity,
                            generate_phantom_pair, generate_unpaired_dataset,
                            load_image, metric_report, mri_to_ct_intensity, psnr,
                            rmse, save_image, ssim, TEXTURE_AMPLITUDE)
from PIL import Image as PILImage


# --- independent brute-force oracles -------------------------------------

def brute_rmse(a: Image, b: Image) -> float:
    x = a.data * 255.0
    y = b.data * 255.0
    total = 0.0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            total += (x[i, j] - y[i, j]) ** 2
    return math.sqrt(total / x.size)


def brute_psnr(a: Image, b: Image) -> float:
    r = brute_rmse(a, b)
    if r == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / r ** 2)


def _oracle_kernel():
    k = np.empty((11, 11))
    for i in range(11):
        for j in range(11):
            k[i, j] = math.exp(-((i - 5) ** 2 + (j - 5) ** 2) / (2 * 1.5 ** 2))
    return k / k.sum()


def brute_ssim(a: Image, b: Image) -> float:
    x = a.data * 255.0
    y = b.data * 255.0
    k = _oracle_kernel()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            wx = x[i:i + 11, j:j + 11]
            wy = y[i:i + 11, j:j + 11]
            mx = float((wx * k).sum())
            my = float((wy * k).sum())
            vx = float((wx * wx * k).sum()) - mx * mx
            vy = float((wy * wy * k).sum()) - my * my
            cov = float((wx * wy * k).sum()) - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cov + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def random_image(rng, size=64) -> Image:
    return Image(rng.uniform(0.0, 1.0, size=(size, size)))


# --- container invariants --------------------------------------------------

def test_image_rejects_nan_and_out_of_range():
    with pytest.raises(ImagingError):
        Image(np.full((4, 4), np.nan))
    with pytest.raises(ImagingError):
        Image(np.full((4, 4), 1.5))
    with pytest.raises(ImagingError):
        Image(np.full((4, 4), -0.5), "unit")


def test_convention_round_trip():
    rng = np.random.default_rng(0)
    img = random_image(rng, 16)
    back = img.to_signed().to_unit()
    np.testing.assert_allclose(back.data, img.data, atol=1e-12)


def test_metric_report_psnr_sentinel_invariant():
    with pytest.raises(ImagingError):
        MetricReport(rmse=0.0, psnr=50.0, ssim=1.0)
    with pytest.raises(ImagingError):
        MetricReport(rmse=1.0, psnr=math.inf, ssim=0.5)
    MetricReport(rmse=0.0, psnr=math.inf, ssim=1.0)


# --- I/O -------------------------------------------------------------------

def test_load_8bit_extremes(tmp_path):
    for value, expected in ((255, 1.0), (0, 0.0)):
        path = str(tmp_path / f"v{value}.png")
        PILImage.fromarray(np.full((8, 8), value, dtype=np.uint8), mode="L").save(path)
        img = load_image(path)
        assert img.channels == 1
        assert np.all(img.data == expected)


def test_load_16bit_midpoint(tmp_path):
    path = str(tmp_path / "mid.png")
    PILImage.fromarray(np.full((8, 8), 32768, dtype=np.uint16)).save(path)
    img = load_image(path)
    np.testing.assert_allclose(img.data, 32768 / 65535, atol=1e-12)


def test_png16_round_trip_quantization_bound(tmp_path):
    rng = np.random.default_rng(3)
    img = random_image(rng, 32)
    path = str(tmp_path / "rt.png")
    save_image(img, path, bit_depth=16)
    back = load_image(path)
    assert np.max(np.abs(back.data - img.data)) <= 1.0 / 65535 + 1e-12


def test_png16_constant_half(tmp_path):
    img = Image(np.full((16, 16), 0.5))
    path = str(tmp_path / "half.png")
    save_image(img, path)
    back = load_image(path)
    assert np.max(np.abs(back.data - 0.5)) <= 1.0 / 65535


def test_raw_float_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(4)
    img = Image(rng.uniform(0, 1, (16, 16)).astype(np.float32).astype(np.float64))
    path = str(tmp_path / "img.raw")
    save_image(img, path)
    back = load_image(path)
    assert np.array_equal(back.data, img.data)


def test_load_missing_and_bad_mode(tmp_path):
    with pytest.raises(ImagingError):
        load_image(str(tmp_path / "nope.png"))
    rgb = str(tmp_path / "rgb.png")
    PILImage.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(rgb)
    with pytest.raises(ImagingError):
        load_image(rgb)


# --- metrics ---------------------------------------------------------------

def test_rmse_trivial_cases():
    rng = np.random.default_rng(5)
    x = random_image(rng, 32)
    assert rmse(x, x) == 0.0
    a = Image(np.zeros((16, 16)))
    b = Image(np.full((16, 16), 2.0 / 255.0))
    assert abs(rmse(a, b) - 2.0) < 1e-9


def test_psnr_trivial_cases():
    rng = np.random.default_rng(6)
    x = random_image(rng, 32)
    assert math.isinf(psnr(x, x))
    a = Image(np.zeros((16, 16)))
    b = Image(np.full((16, 16), 1.0 / 255.0))  # display-scale MSE = 1
    assert abs(psnr(a, b) - 48.1308) < 5e-5
    zero = Image(np.zeros((16, 16)))
    one = Image(np.ones((16, 16)))  # display diff 255 everywhere
    assert abs(psnr(zero, one)) < 1e-12


def test_ssim_self_is_one():
    rng = np.random.default_rng(7)
    x = random_image(rng)
    assert abs(ssim(x, x) - 1.0) < 1e-12


def test_ssim_negative_for_inverted_high_variance():
    rng = np.random.default_rng(8)
    x = random_image(rng)
    inv = Image(1.0 - x.data)
    value = ssim(x, inv)
    assert value < 0.0
    assert abs(value - brute_ssim(x, inv)) < 1e-6


def test_metrics_match_brute_force_oracles():
    rng = np.random.default_rng(9)
    for _ in range(5):
        a, b = random_image(rng), random_image(rng)
        assert abs(rmse(a, b) - brute_rmse(a, b)) < 1e-9
        assert abs(psnr(a, b) - brute_psnr(a, b)) < 1e-9
        assert abs(ssim(a, b) - brute_ssim(a, b)) < 1e-6


def test_ssim_symmetry():
    rng = np.random.default_rng(10)
    for _ in range(5):
        a, b = random_image(rng), random_image(rng)
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-9


def test_psnr_strictly_decreasing_in_rmse():
    rng = np.random.default_rng(11)
    base = random_image(rng)
    pairs = []
    for sigma in (0.01, 0.05, 0.1, 0.2):
        noisy = Image(np.clip(base.data + rng.normal(0, sigma, base.data.shape), 0, 1))
        pairs.append((rmse(base, noisy), psnr(base, noisy)))
    pairs.sort()
    for (r1, p1), (r2, p2) in zip(pairs, pairs[1:]):
        assert r1 < r2 and p1 > p2


def test_ssim_rejects_tiny_images():
    with pytest.raises(ImagingError):
        ssim(Image(np.zeros((8, 8))), Image(np.zeros((8, 8))))


def test_metric_shape_mismatch():
    with pytest.raises(ImagingError):
        rmse(Image(np.zeros((16, 16))), Image(np.zeros((32, 32))))


def test_metric_report_bundle():
    rng = np.random.default_rng(12)
    a, b = random_image(rng), random_image(rng)
    rep = metric_report(a, b)
    assert rep.rmse == rmse(a, b) and rep.psnr == psnr(a, b) and rep.ssim == ssim(a, b)


# --- phantoms ----------------------------------------------------------------

def test_phantom_determinism():
    spec = PhantomSpec(size=64, num_shapes=3, seed=21, noise_sigma=0.02)
    ct1, mri1 = generate_phantom_pair(spec)
    ct2, mri2 = generate_phantom_pair(spec)
    assert ct1.data.tobytes() == ct2.data.tobytes()
    assert mri1.data.tobytes() == mri2.data.tobytes()


def test_phantom_single_shape_two_levels():
    ct, _ = generate_phantom_pair(PhantomSpec(size=64, num_shapes=1, seed=3,
                                              noise_sigma=0.0))
    assert len(np.unique(ct.data)) == 2


def test_phantom_remap_recovers_mri_up_to_texture():
    spec = PhantomSpec(size=64, num_shapes=3, seed=13, noise_sigma=0.0)
    ct, mri = generate_phantom_pair(spec)
    residual = np.abs(mri.data - ct_to_mri_intensity(ct.data))
    assert residual.max() <= TEXTURE_AMPLITUDE + 1e-9

    noisy_spec = PhantomSpec(size=64, num_shapes=3, seed=13, noise_sigma=0.01)
    _, noisy_mri = generate_phantom_pair(noisy_spec)
    residual = np.abs(noisy_mri.data - ct_to_mri_intensity(ct.data))
    assert residual.max() <= TEXTURE_AMPLITUDE + 6 * 0.01


def test_intensity_remap_invertible():
    v = np.linspace(0, 1, 101)
    np.testing.assert_allclose(mri_to_ct_intensity(ct_to_mri_intensity(v)), v,
                               atol=1e-9)


def test_phantom_spec_validation():
    with pytest.raises(ImagingError):
        PhantomSpec(size=60)
    with pytest.raises(ImagingError):
        PhantomSpec(num_shapes=0)


# --- unpaired dataset --------------------------------------------------------

def test_dataset_layout_and_manifest(tmp_path):
    root = str(tmp_path / "data")
    manifest = generate_unpaired_dataset(4, seed=17, out_dir=root)
    assert len(os.listdir(os.path.join(root, "ct"))) == 4
    assert len(os.listdir(os.path.join(root, "mri"))) == 4
    assert len(manifest.pairs) == 4
    reloaded = DatasetManifest.load(root)
    assert reloaded.pairs == manifest.pairs


def test_dataset_determinism(tmp_path):
    m1 = generate_unpaired_dataset(4, seed=5, out_dir=str(tmp_path / "a"))
    m2 = generate_unpaired_dataset(4, seed=5, out_dir=str(tmp_path / "b"))
    assert m1.pairs == m2.pairs


def test_dataset_rejects_n1(tmp_path):
    with pytest.raises(ImagingError):
        generate_unpaired_dataset(1, seed=0, out_dir=str(tmp_path / "x"))


def test_training_loader_never_reads_manifest(tmp_path):
    root = str(tmp_path / "data")
    generate_unpaired_dataset(3, seed=1, out_dir=root)
    os.remove(os.path.join(root, "pairs.eval.tsv"))
    ds = UnpairedDataset(root)  # works without the manifest
    assert len(ds.ct_files) == 3 and len(ds.mri_files) == 3
    assert ds.load_ct(0).channels == 1
