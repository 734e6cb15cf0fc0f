import numpy as np
import pytest

from xmodal.conditioning import (ConditioningError, ConditioningSpec,
                                 ConditioningTensor, PatchGrid,
                                 build_scenario_conditioning,
                                 conditioning_to_sequence, deinterleave,
                                 downsample_conditioning, extract_patches,
                                 interleave_alternate, reassemble_patches,
                                 sequence_to_conditioning)
from xmodal.imaging import Image


def random_image(rng, h, w):
    return Image(rng.uniform(0, 1, (h, w)))


# --- patch algebra ----------------------------------------------------------

def test_extract_counts_and_grid():
    rng = np.random.default_rng(0)
    img = random_image(rng, 64, 64)
    grid = extract_patches(img, 16)
    assert grid.patches.shape == (16, 16, 16)
    assert (grid.grid_w, grid.grid_h) == (4, 4)


def test_extract_whole_image_is_identity_patch():
    rng = np.random.default_rng(1)
    img = random_image(rng, 64, 64)
    grid = extract_patches(img, 64)
    assert grid.patches.shape == (1, 64, 64)
    assert np.array_equal(grid.patches[0], img.data)


def test_extract_raster_order():
    img = Image(np.arange(16).reshape(4, 4) / 15.0)
    grid = extract_patches(img, 2)
    # top-left patch first, then left-to-right, top-to-bottom
    np.testing.assert_array_equal(grid.patches[0], img.data[0:2, 0:2])
    np.testing.assert_array_equal(grid.patches[1], img.data[0:2, 2:4])
    np.testing.assert_array_equal(grid.patches[2], img.data[2:4, 0:2])


def test_reassemble_inverse():
    rng = np.random.default_rng(2)
    img = random_image(rng, 32, 64)
    for p in (8, 16, 32):
        assert np.array_equal(reassemble_patches(extract_patches(img, p)), img.data)


def test_extract_rejects_indivisible():
    rng = np.random.default_rng(3)
    with pytest.raises(ConditioningError):
        extract_patches(random_image(rng, 48, 48), 32)


def test_interleave_pattern():
    a = PatchGrid(2, 2, 1, np.stack([np.full((2, 2), 0.1), np.full((2, 2), 0.2)]))
    b = PatchGrid(2, 2, 1, np.stack([np.full((2, 2), 0.3), np.full((2, 2), 0.4)]))
    seq = interleave_alternate(a, b)
    values = [seq.entries[i][0, 0] for i in range(4)]
    assert values == [0.1, 0.3, 0.2, 0.4]  # a1, b1, a2, b2


def test_interleave_single_patch():
    a = PatchGrid(2, 1, 1, np.full((1, 2, 2), 0.5))
    b = PatchGrid(2, 1, 1, np.full((1, 2, 2), 0.75))
    seq = interleave_alternate(a, b)
    assert seq.entries.shape == (2, 2, 2)
    assert seq.entries[0][0, 0] == 0.5 and seq.entries[1][0, 0] == 0.75


def test_interleave_shape_mismatch():
    a = PatchGrid(2, 2, 1, np.zeros((2, 2, 2)))
    b = PatchGrid(2, 1, 2, np.zeros((2, 2, 2)))
    with pytest.raises(ConditioningError):
        interleave_alternate(a, b)


def test_interleave_deinterleave_inverse_over_random_shapes():
    rng = np.random.default_rng(4)
    for _ in range(100):
        p = int(rng.choice([1, 2, 3, 4, 8]))
        gw = int(rng.integers(1, 7))
        gh = int(rng.integers(1, 7))
        a = PatchGrid(p, gw, gh, rng.uniform(0, 1, (gw * gh, p, p)))
        b = PatchGrid(p, gw, gh, rng.uniform(0, 1, (gw * gh, p, p)))
        seq = interleave_alternate(a, b)
        assert seq.entries.shape[0] == 2 * gw * gh
        a2, b2 = deinterleave(seq)
        assert np.array_equal(a2.patches, a.patches)
        assert np.array_equal(b2.patches, b.patches)


def test_sequence_to_conditioning_channel_equality():
    rng = np.random.default_rng(5)
    x = random_image(rng, 64, 64)
    y = random_image(rng, 64, 64)
    seq = interleave_alternate(extract_patches(x, 16), extract_patches(y, 16))
    cond = sequence_to_conditioning(seq)
    assert cond.channels == 2
    assert np.array_equal(cond.data[0], x.data)
    assert np.array_equal(cond.data[1], y.data)


def test_tensor_sequence_round_trip():
    rng = np.random.default_rng(6)
    x = random_image(rng, 32, 32)
    y = random_image(rng, 32, 32)
    seq = interleave_alternate(extract_patches(x, 8), extract_patches(y, 8))
    cond = sequence_to_conditioning(seq)
    seq2 = conditioning_to_sequence(cond, 8)
    assert np.array_equal(seq2.entries, seq.entries)
    cond2 = sequence_to_conditioning(seq2, cond.provenance)
    assert np.array_equal(cond2.data, cond.data)


# --- scenarios ----------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ConditioningError):
        ConditioningSpec(kind="nope")
    with pytest.raises(ConditioningError):
        ConditioningSpec(kind="patch_mosaic", patch_size=12)
    with pytest.raises(ConditioningError):
        ConditioningSpec(pool_k=0)
    with pytest.raises(ConditioningError):
        ConditioningSpec(bins=1)
    assert ConditioningSpec(kind="unconditional").channels == 0
    assert ConditioningSpec(kind="random_target").channels == 2


def test_patch_mosaic_channels_reproduce_inputs():
    rng = np.random.default_rng(7)
    img = random_image(rng, 64, 64)
    target = random_image(rng, 64, 64)
    spec = ConditioningSpec(kind="patch_mosaic", patch_size=16, seed=1)
    cond = build_scenario_conditioning(spec, img, [target])
    assert np.array_equal(cond.data[0], img.data)
    assert np.array_equal(cond.data[1], target.data)


def test_average_target_identical_pool():
    rng = np.random.default_rng(8)
    img = random_image(rng, 32, 32)
    target = random_image(rng, 32, 32)
    spec = ConditioningSpec(kind="average_target", pool_k=5, seed=0)
    cond = build_scenario_conditioning(spec, img, [target] * 5)
    np.testing.assert_allclose(cond.data[1], target.data, atol=1e-12)


def test_sample_pdf_degenerate_pool_is_single_spike():
    rng = np.random.default_rng(9)
    img = random_image(rng, 64, 64)
    flat = Image(np.full((64, 64), 0.5))
    spec = ConditioningSpec(kind="sample_pdf", pool_k=3, bins=256, seed=0)
    cond = build_scenario_conditioning(spec, img, [flat] * 3)
    ch1 = cond.data[1]
    assert np.all(ch1[0] == ch1[-1])  # row-broadcast
    cols = (np.arange(64) * 256) // 64
    expected = np.where(cols == 128, 1.0, 0.0)
    np.testing.assert_allclose(ch1[0], expected, atol=1e-12)


def test_random_target_seeded_determinism():
    rng = np.random.default_rng(10)
    img = random_image(rng, 32, 32)
    pool = [random_image(rng, 32, 32) for _ in range(5)]
    spec = ConditioningSpec(kind="random_target", seed=33)
    c1 = build_scenario_conditioning(spec, img, pool)
    c2 = build_scenario_conditioning(spec, img, pool)
    assert np.array_equal(c1.data, c2.data)


def test_unconditional_zero_channels():
    rng = np.random.default_rng(11)
    img = random_image(rng, 32, 32)
    cond = build_scenario_conditioning(
        ConditioningSpec(kind="unconditional"), img, [])
    assert cond.channels == 0
    assert cond.data.shape == (0, 32, 32)


def test_scenario_pool_errors():
    rng = np.random.default_rng(12)
    img = random_image(rng, 32, 32)
    with pytest.raises(ConditioningError):
        build_scenario_conditioning(ConditioningSpec(kind="random_target"), img, [])
    with pytest.raises(ConditioningError):
        build_scenario_conditioning(
            ConditioningSpec(kind="average_target", pool_k=5), img,
            [random_image(rng, 32, 32)] * 3)


# --- downsampling ---------------------------------------------------------------

def test_downsample_identity_constant_and_mean():
    rng = np.random.default_rng(13)
    spec = ConditioningSpec(kind="random_target")
    cond = ConditioningTensor(rng.uniform(0, 1, (2, 8, 8)), spec)
    assert downsample_conditioning(cond, 1) is cond

    const = ConditioningTensor(np.full((2, 8, 8), 0.4), spec)
    for factor in (2, 4):
        np.testing.assert_allclose(
            downsample_conditioning(const, factor).data, 0.4, atol=1e-12)

    blocks = ConditioningTensor(
        np.array([[[0.0, 0.0], [1.0, 1.0]]]), spec)
    np.testing.assert_allclose(
        downsample_conditioning(blocks, 2).data, [[[0.5]]], atol=1e-12)


def test_downsample_rejects_indivisible():
    spec = ConditioningSpec(kind="random_target")
    cond = ConditioningTensor(np.zeros((2, 6, 6)), spec)
    with pytest.raises(ConditioningError):
        downsample_conditioning(cond, 4)
