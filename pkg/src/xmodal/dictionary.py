"""Adaptive dictionary branch: sparse-codes the interleaved conditioning
patches, refines the dictionary, and emits the reconstruction residue that
the generator fuses at its mid-network injection point.

Sparse coding is greedy orthogonal matching pursuit with a fixed sparsity
budget; the dictionary update is the classic sequential atom-wise rank-1
refit, which also rewrites the coefficients on each atom's support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conditioning import InterleavedPatchSequence


class DictionaryError(ValueError):
    """Invalid dictionary shapes or sparse-coding parameters."""


@dataclass(frozen=True)
class Dictionary:
    """Overcomplete atom matrix, one unit-norm column per atom."""

    atoms: np.ndarray  # (d, K) float64

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        if atoms.ndim != 2:
            raise DictionaryError("atoms must be a (d, K) matrix")
        d, num = atoms.shape
        if num < d:
            raise DictionaryError(f"need K >= d for overcompleteness, got {num} < {d}")
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-8):
            raise DictionaryError("dictionary columns must have unit norm")
        atoms.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)

    @property
    def atom_dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class SparseCodeSet:
    """One K-length coefficient vector per patch, at most T nonzeros each."""

    codes: np.ndarray  # (N, K) float64
    sparsity: int

    def __post_init__(self):
        nnz = np.count_nonzero(self.codes, axis=1)
        if np.any(nnz > self.sparsity):
            raise DictionaryError("a code exceeds the sparsity budget")


@dataclass(frozen=True)
class DiLConfig:
    """Dictionary-restoration settings, including the ablation on/off switch.

    patch_size must match the active conditioning patch size when the
    scenario is a patch mosaic. num_atoms 0 means "2 * atom_dim".
    residue_channels selects which halves of the interleaved sequence feed
    back into the generator.
    """

    patch_size: int = 16
    num_atoms: int = 0
    sparsity: int = 5
    dict_update_iters: int = 1
    enabled: bool = True
    residue_channels: str = "both"  # both | input | target

    def __post_init__(self):
        d = self.patch_size ** 2
        if self.resolved_num_atoms < d:
            raise DictionaryError("num_atoms must be >= patch_size**2")
        if not 1 <= self.sparsity <= d:
            raise DictionaryError("sparsity must be in [1, atom_dim]")
        if self.dict_update_iters < 1:
            raise DictionaryError("dict_update_iters must be >= 1")
        if self.residue_channels not in ("both", "input", "target"):
            raise DictionaryError(f"bad residue_channels {self.residue_channels!r}")

    @property
    def atom_dim(self) -> int:
        return self.patch_size ** 2

    @property
    def resolved_num_atoms(self) -> int:
        return self.num_atoms if self.num_atoms > 0 else 2 * self.atom_dim


def init_dictionary(d: int, num_atoms: int) -> Dictionary:
    """Overcomplete 2-D DCT dictionary: outer products of 1-D DCT bases.

    d must be a perfect square (atoms reshape to p x p patches). Atom pairs
    are ordered by total frequency, so atom 0 is the constant patch.
    """
    if num_atoms < d:
        raise DictionaryError(f"need num_atoms >= d, got {num_atoms} < {d}")
    p = math.isqrt(d)
    if p * p != d:
        raise DictionaryError(f"atom dimension {d} is not a perfect square")
    m = math.ceil(math.sqrt(num_atoms))
    base = np.zeros((p, m))
    base[:, 0] = 1.0 / math.sqrt(p)
    i = np.arange(p)
    for k in range(1, m):
        v = np.cos(np.pi * i * k / m)
        v = v - v.mean()
        base[:, k] = v / np.linalg.norm(v)
    order = sorted(((k1 + k2, k1, k2) for k1 in range(m) for k2 in range(m)))
    atoms = np.empty((d, num_atoms))
    for col, (_, k1, k2) in enumerate(order[:num_atoms]):
        atoms[:, col] = np.outer(base[:, k1], base[:, k2]).ravel()
    return Dictionary(atoms)


def sparse_code(dictionary: Dictionary, patches: np.ndarray,
                sparsity: int) -> SparseCodeSet:
    """Greedy OMP: pick the best-correlated atom, re-solve least squares on
    the support, repeat up to ``sparsity`` times per patch."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 2 or patches.shape[1] != dictionary.atom_dim:
        raise DictionaryError(
            f"patches must be (N, {dictionary.atom_dim}), got {patches.shape}")
    if sparsity > dictionary.atom_dim:
        raise DictionaryError("sparsity cannot exceed the atom dimension")
    atoms = dictionary.atoms
    codes = np.zeros((patches.shape[0], dictionary.num_atoms))
    for n in range(patches.shape[0]):
        x = patches[n]
        residual = x.copy()
        support: list[int] = []
        coef = np.zeros(0)
        for _ in range(sparsity):
            corr = atoms.T @ residual
            corr[support] = 0.0
            j = int(np.argmax(np.abs(corr)))
            if abs(corr[j]) < 1e-12:
                break
            support.append(j)
            sub = atoms[:, support]
            coef, *_ = np.linalg.lstsq(sub, x, rcond=None)
            residual = x - sub @ coef
            if np.dot(residual, residual) < 1e-24:
                break
        if support:
            codes[n, support] = coef
    return SparseCodeSet(codes=codes, sparsity=sparsity)


def reconstruction_error(dictionary: Dictionary, patches: np.ndarray,
                         codes: SparseCodeSet) -> float:
    """Summed squared reconstruction error over the batch."""
    diff = np.asarray(patches, dtype=np.float64) - codes.codes @ dictionary.atoms.T
    return float(np.sum(diff * diff))


def update_dictionary(dictionary: Dictionary, patches: np.ndarray,
                      codes: SparseCodeSet):
    """Sequential atom-wise rank-1 refit against the coding residual.

    Returns (updated dictionary, updated codes): each used atom and its
    coefficient row are replaced by the best rank-1 fit of the residual
    restricted to the patches using that atom, so the batch reconstruction
    error never increases. Unused atoms are left alone. New atoms are
    sign-aligned with their predecessors, making exact representations a
    fixed point.
    """
    patches = np.asarray(patches, dtype=np.float64)
    atoms = dictionary.atoms.copy()
    coef = codes.codes.T.copy()  # (K, N)
    data = patches.T             # (d, N)
    residual = data - atoms @ coef
    for k in range(atoms.shape[1]):
        users = np.nonzero(coef[k])[0]
        if users.size == 0:
            continue
        block = residual[:, users] + np.outer(atoms[:, k], coef[k, users])
        u, s, vt = np.linalg.svd(block, full_matrices=False)
        if s[0] < 1e-12:
            coef[k, users] = 0.0
            residual[:, users] = block
            continue
        atom = u[:, 0]
        row = s[0] * vt[0]
        if float(atom @ atoms[:, k]) < 0.0:
            atom, row = -atom, -row
        atoms[:, k] = atom
        coef[k, users] = row
        residual[:, users] = block - np.outer(atom, row)
    return Dictionary(atoms), SparseCodeSet(coef.T, codes.sparsity)


def compute_residue(patches: np.ndarray, dictionary: Dictionary,
                    codes: SparseCodeSet) -> np.ndarray:
    """Per-patch residue X - D A, reshaped to p x p tiles in raster order."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape[1] != dictionary.atom_dim:
        raise DictionaryError("patch dimension does not match the dictionary")
    if codes.codes.shape != (patches.shape[0], dictionary.num_atoms):
        raise DictionaryError("code set does not match patches and dictionary")
    p = math.isqrt(dictionary.atom_dim)
    res = patches - codes.codes @ dictionary.atoms.T
    return res.reshape(-1, p, p)


def _assemble_channels(seq: InterleavedPatchSequence,
                       residues: np.ndarray) -> np.ndarray:
    gh, gw, p = seq.grid_h, seq.grid_w, seq.patch_size
    stack = np.zeros((2, gh * p, gw * p))
    for parity in (0, 1):
        tiles = residues[parity::2].reshape(gh, gw, p, p)
        stack[parity] = tiles.transpose(0, 2, 1, 3).reshape(gh * p, gw * p)
    return stack


def restore_step(seq: InterleavedPatchSequence, cfg: DiLConfig,
                 state: Dictionary):
    """One training-time pass of the restoration branch.

    Sparse-codes the interleaved patches, refines the dictionary
    (cfg.dict_update_iters rounds), and returns the two-channel residue
    image (channel 0 from input patches, channel 1 from target patches)
    together with the evolved dictionary.
    """
    if not cfg.enabled:
        raise DictionaryError("restore_step called with DiL disabled")
    if seq.patch_size != cfg.patch_size:
        raise DictionaryError(
            f"sequence patch size {seq.patch_size} != DiL patch size {cfg.patch_size}")
    vecs = seq.entries.reshape(seq.entries.shape[0], -1)
    dictionary = state
    codes = sparse_code(dictionary, vecs, cfg.sparsity)
    for round_idx in range(cfg.dict_update_iters):
        dictionary, codes = update_dictionary(dictionary, vecs, codes)
        if round_idx + 1 < cfg.dict_update_iters:
            codes = sparse_code(dictionary, vecs, cfg.sparsity)
    residues = compute_residue(vecs, dictionary, codes)
    return _assemble_channels(seq, residues), dictionary


def infer_residue(seq: InterleavedPatchSequence, cfg: DiLConfig,
                  state: Dictionary) -> np.ndarray:
    """Residue against the current dictionary without evolving it.

    Used for the auxiliary generator passes during training and for
    inference, where the dictionary is frozen state.
    """
    if seq.patch_size != cfg.patch_size:
        raise DictionaryError(
            f"sequence patch size {seq.patch_size} != DiL patch size {cfg.patch_size}")
    vecs = seq.entries.reshape(seq.entries.shape[0], -1)
    codes = sparse_code(state, vecs, cfg.sparsity)
    residues = compute_residue(vecs, state, codes)
    return _assemble_channels(seq, residues)


def select_residue_channels(stack: np.ndarray, cfg: DiLConfig) -> np.ndarray:
    """Pick which residue channels the generator fuses (config switch)."""
    if cfg.residue_channels == "both":
        return stack
    return stack[0:1] if cfg.residue_channels == "input" else stack[1:2]


def residue_channel_count(cfg: DiLConfig) -> int:
    return 2 if cfg.residue_channels == "both" else 1
