import numpy as np
import pytest

from xmodal.conditioning import extract_patches, interleave_alternate
from xmodal.dictionary import (DictionaryError, Dictionary, DiLConfig,
                               compute_residue, init_dictionary, infer_residue,
                               reconstruction_error, residue_channel_count,
                               restore_step, select_residue_channels, sparse_code,
                               update_dictionary)
from xmodal.imaging import PhantomSpec, generate_phantom_pair


# --- initialization -----------------------------------------------------------

def test_init_first_atom_is_constant_half():
    d = init_dictionary(4, 4)
    np.testing.assert_allclose(d.atoms[:, 0], 0.5, atol=1e-12)


def test_init_unit_norms_and_determinism():
    d1 = init_dictionary(64, 128)
    d2 = init_dictionary(64, 128)
    norms = np.linalg.norm(d1.atoms, axis=0)
    assert np.max(np.abs(norms - 1.0)) <= 1e-8
    assert np.array_equal(d1.atoms, d2.atoms)


def test_init_rejects_undercomplete_and_nonsquare():
    with pytest.raises(DictionaryError):
        init_dictionary(16, 8)
    with pytest.raises(DictionaryError):
        init_dictionary(10, 20)


def test_dictionary_invariant_enforced():
    bad = np.eye(4, 8)
    bad[0, 0] = 2.0
    with pytest.raises(DictionaryError):
        Dictionary(bad)


# --- OMP -----------------------------------------------------------------------

def test_omp_exact_atom_match():
    d = init_dictionary(4, 8)
    x = 3.0 * d.atoms[:, 2]
    codes = sparse_code(d, x[None, :], sparsity=1)
    row = codes.codes[0]
    assert np.count_nonzero(row) == 1
    assert abs(row[2] - 3.0) < 1e-12
    assert reconstruction_error(d, x[None, :], codes) < 1e-20


def test_omp_zero_signal_zero_code():
    d = init_dictionary(16, 32)
    codes = sparse_code(d, np.zeros((3, 16)), sparsity=4)
    assert np.count_nonzero(codes.codes) == 0


def test_omp_full_sparsity_matches_least_squares():
    rng = np.random.default_rng(0)
    d = init_dictionary(16, 32)
    assert np.linalg.matrix_rank(d.atoms) == 16  # spanning
    x = rng.standard_normal((5, 16))
    codes = sparse_code(d, x, sparsity=16)
    err = reconstruction_error(d, x, codes)
    assert err < 1e-16
    # least-squares oracle: the best possible residual is 0 for a spanning D
    for row in x:
        coef, res, *_ = np.linalg.lstsq(d.atoms, row, rcond=None)
        assert np.linalg.norm(row - d.atoms @ coef) < 1e-10


def test_omp_residual_monotone_in_sparsity():
    rng = np.random.default_rng(1)
    d = init_dictionary(16, 32)
    x = rng.standard_normal((50, 16))
    prev = None
    for t in range(1, 9):
        codes = sparse_code(d, x, sparsity=t)
        residuals = np.linalg.norm(x - codes.codes @ d.atoms.T, axis=1)
        if prev is not None:
            assert np.all(residuals <= prev + 1e-10)
        prev = residuals


def test_omp_rejects_bad_dims():
    d = init_dictionary(16, 32)
    with pytest.raises(DictionaryError):
        sparse_code(d, np.zeros((3, 9)), sparsity=2)
    with pytest.raises(DictionaryError):
        sparse_code(d, np.zeros((3, 16)), sparsity=17)


# --- dictionary update -----------------------------------------------------------

def test_update_fixed_point_on_representable_data():
    rng = np.random.default_rng(2)
    d = init_dictionary(16, 32)
    # single-atom multiples are recovered exactly by OMP at T=1
    idx = rng.integers(0, 32, size=40)
    scale = rng.uniform(0.5, 2.0, size=40)
    x = (d.atoms[:, idx] * scale).T
    codes = sparse_code(d, x, sparsity=1)
    assert reconstruction_error(d, x, codes) < 1e-20
    d2, codes2 = update_dictionary(d, x, codes)
    np.testing.assert_allclose(d2.atoms, d.atoms, atol=1e-9)
    assert reconstruction_error(d2, x, codes2) < 1e-18


def test_update_never_increases_error():
    rng = np.random.default_rng(3)
    d = init_dictionary(16, 32)
    x = rng.standard_normal((300, 16))
    for _ in range(10):
        codes = sparse_code(d, x, sparsity=3)
        before = reconstruction_error(d, x, codes)
        d, codes = update_dictionary(d, x, codes)
        after = reconstruction_error(d, x, codes)
        assert after <= before + 1e-9
        norms = np.linalg.norm(d.atoms, axis=0)
        assert np.max(np.abs(norms - 1.0)) <= 1e-8


def test_update_leaves_unused_atoms_alone():
    d = init_dictionary(16, 32)
    x = (1.7 * d.atoms[:, 5])[None, :]
    codes = sparse_code(d, x, sparsity=1)
    d2, _ = update_dictionary(d, x, codes)
    untouched = [k for k in range(32) if k != 5]
    assert np.array_equal(d2.atoms[:, untouched], d.atoms[:, untouched])


def test_synthetic_atom_recovery():
    # ground-truth dictionary with known sparse data; frozen experiment:
    # d=16, K=32, T=3, 3000 signals, 30 code/update rounds
    rng = np.random.default_rng(0)
    d_dim, num_atoms, sparsity, n = 16, 32, 3, 3000
    true = rng.standard_normal((d_dim, num_atoms))
    true /= np.linalg.norm(true, axis=0)
    coef = np.zeros((n, num_atoms))
    for i in range(n):
        support = rng.choice(num_atoms, size=sparsity, replace=False)
        coef[i, support] = rng.standard_normal(sparsity)
    signals = coef @ true.T
    learned = init_dictionary(d_dim, num_atoms)
    for _ in range(30):
        codes = sparse_code(learned, signals, sparsity)
        learned, codes = update_dictionary(learned, signals, codes)
    best = np.abs(true.T @ learned.atoms).max(axis=1)
    recovered = int((best > 0.9).sum())
    assert recovered >= int(np.ceil(0.9 * num_atoms))


# --- residue ----------------------------------------------------------------------

def test_residue_zero_for_representable_patch():
    d = init_dictionary(16, 32)
    x = (2.0 * d.atoms[:, 7])[None, :]
    codes = sparse_code(d, x, sparsity=1)
    res = compute_residue(x, d, codes)
    assert res.shape == (1, 4, 4)
    assert np.max(np.abs(res)) < 1e-12


def test_residue_equals_patch_for_zero_code():
    from xmodal.dictionary import SparseCodeSet
    rng = np.random.default_rng(4)
    d = init_dictionary(16, 32)
    x = rng.standard_normal((3, 16))
    zero = SparseCodeSet(np.zeros((3, 32)), sparsity=2)
    res = compute_residue(x, d, zero)
    assert np.array_equal(res.reshape(3, 16), x)


def test_residue_norm_not_larger_than_patch_norm():
    rng = np.random.default_rng(5)
    d = init_dictionary(16, 32)
    x = rng.standard_normal((40, 16))
    codes = sparse_code(d, x, sparsity=4)
    res = compute_residue(x, d, codes).reshape(40, 16)
    assert np.all(np.linalg.norm(res, axis=1)
                  <= np.linalg.norm(x, axis=1) + 1e-10)


# --- restore_step ------------------------------------------------------------------

def _phantom_sequence(patch=8, seed=5):
    ct, mri = generate_phantom_pair(
        PhantomSpec(size=64, num_shapes=3, seed=seed, noise_sigma=0.0))
    return interleave_alternate(extract_patches(ct, patch),
                                extract_patches(mri, patch))


def test_restore_step_contract_and_unit_norms():
    seq = _phantom_sequence()
    cfg = DiLConfig(patch_size=8, num_atoms=128, sparsity=5)
    state = init_dictionary(64, 128)
    stack, state = restore_step(seq, cfg, state)
    assert stack.shape == (2, 64, 64)
    norms = np.linalg.norm(state.atoms, axis=0)
    assert np.max(np.abs(norms - 1.0)) <= 1e-8
    with pytest.raises(DictionaryError):
        restore_step(seq, DiLConfig(patch_size=8, num_atoms=128, enabled=False),
                     state)
    with pytest.raises(DictionaryError):
        restore_step(seq, DiLConfig(patch_size=16, num_atoms=512), state)


def test_restore_step_converges_on_noiseless_phantom():
    seq = _phantom_sequence()
    cfg = DiLConfig(patch_size=8, num_atoms=128, sparsity=5)
    state = init_dictionary(64, 128)
    patch_energy = float(np.sum(seq.entries ** 2))
    ratio = np.inf
    for _ in range(5):
        stack, state = restore_step(seq, cfg, state)
        ratio = float(np.sum(stack ** 2)) / patch_energy
    assert ratio < 0.01


def test_infer_residue_leaves_dictionary_alone():
    seq = _phantom_sequence()
    cfg = DiLConfig(patch_size=8, num_atoms=128, sparsity=5)
    state = init_dictionary(64, 128)
    before = state.atoms.copy()
    stack = infer_residue(seq, cfg, state)
    assert stack.shape == (2, 64, 64)
    assert np.array_equal(state.atoms, before)


def test_residue_channel_selection():
    cfg_both = DiLConfig(patch_size=8, num_atoms=128)
    cfg_in = DiLConfig(patch_size=8, num_atoms=128, residue_channels="input")
    cfg_tg = DiLConfig(patch_size=8, num_atoms=128, residue_channels="target")
    stack = np.stack([np.full((4, 4), 1.0), np.full((4, 4), 2.0)])
    assert residue_channel_count(cfg_both) == 2
    assert residue_channel_count(cfg_in) == 1
    assert select_residue_channels(stack, cfg_both).shape == (2, 4, 4)
    assert select_residue_channels(stack, cfg_in)[0, 0, 0] == 1.0
    assert select_residue_channels(stack, cfg_tg)[0, 0, 0] == 2.0


def test_dil_config_validation():
    with pytest.raises(DictionaryError):
        DiLConfig(patch_size=4, num_atoms=8)  # K < d
    with pytest.raises(DictionaryError):
        DiLConfig(patch_size=4, sparsity=17)
    with pytest.raises(DictionaryError):
        DiLConfig(residue_channels="neither")
    assert DiLConfig(patch_size=4).resolved_num_atoms == 32
