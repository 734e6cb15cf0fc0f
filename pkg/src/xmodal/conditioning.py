"""Patch-level conditioning: alternate-patch interleaving and the four
ablation scenarios (random target, average target, sample PDF, unconditional).

The alternating input/target patch sequence is realized spatially as a
two-channel tensor: channel 0 reassembles the even-index (input) patches,
channel 1 the odd-index (target) patches. This is lossless, exactly
invertible, and feeds 2-D convolutions directly, while index parity keeps
the alternation order recoverable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .imaging import Image

VALID_KINDS = ("patch_mosaic", "random_target", "average_target",
               "sample_pdf", "unconditional")
MOSAIC_PATCH_SIZES = (8, 16, 32, 64)


class ConditioningError(ValueError):
    """Invalid patch geometry or scenario parameters."""


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping p x p tiling of a single-channel image, raster order."""

    patch_size: int
    grid_w: int
    grid_h: int
    patches: np.ndarray  # (grid_h * grid_w, p, p)

    def __post_init__(self):
        n, ph, pw = self.patches.shape
        if ph != self.patch_size or pw != self.patch_size:
            raise ConditioningError("patch array does not match patch_size")
        if n != self.grid_w * self.grid_h:
            raise ConditioningError("patch count does not match grid shape")


@dataclass(frozen=True)
class InterleavedPatchSequence:
    """Alternating (input, target, input, ...) patches in raster order."""

    patch_size: int
    grid_w: int
    grid_h: int
    entries: np.ndarray  # (2 * grid_w * grid_h, p, p); even=input, odd=target

    def __post_init__(self):
        if self.entries.shape[0] != 2 * self.grid_w * self.grid_h:
            raise ConditioningError("interleaved sequence has wrong length")
        if self.entries.shape[0] % 2 != 0:
            raise ConditioningError("interleaved sequence must have even length")


@dataclass(frozen=True)
class ConditioningSpec:
    """Tagged choice of conditioning scenario.

    kind          one of patch_mosaic | random_target | average_target |
                  sample_pdf | unconditional
    patch_size    mosaic tile side, from {8, 16, 32, 64}
    pool_k        number of target images pooled (average_target, sample_pdf)
    bins          histogram resolution (sample_pdf)
    seed          drives every random draw a scenario makes
    """

    kind: str = "patch_mosaic"
    patch_size: int = 16
    pool_k: int = 100
    bins: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ConditioningError(f"unknown conditioning kind {self.kind!r}")
        if self.kind == "patch_mosaic" and self.patch_size not in MOSAIC_PATCH_SIZES:
            raise ConditioningError(
                f"patch size {self.patch_size} not in {MOSAIC_PATCH_SIZES}")
        if self.pool_k < 1:
            raise ConditioningError("pool_k must be >= 1")
        if self.bins < 2:
            raise ConditioningError("bins must be >= 2")

    @property
    def channels(self) -> int:
        return 0 if self.kind == "unconditional" else 2

    def with_seed(self, seed: int) -> "ConditioningSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class ConditioningTensor:
    """Channel stack injectable into the generator; 0 channels when unconditional."""

    data: np.ndarray  # (C, H, W)
    provenance: ConditioningSpec

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ConditioningError("conditioning tensor must be (C, H, W)")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def extract_patches(img: Image, p: int) -> PatchGrid:
    """Tile a single-channel image into non-overlapping p x p patches."""
    h, w = img.data.shape
    if h % p != 0 or w % p != 0:
        raise ConditioningError(f"image {h}x{w} not divisible by patch size {p}")
    gh, gw = h // p, w // p
    patches = (img.data.reshape(gh, p, gw, p)
               .transpose(0, 2, 1, 3)
               .reshape(gh * gw, p, p))
    return PatchGrid(patch_size=p, grid_w=gw, grid_h=gh, patches=patches)


def reassemble_patches(grid: PatchGrid) -> np.ndarray:
    """Inverse of extract_patches; returns the (H, W) array."""
    gh, gw, p = grid.grid_h, grid.grid_w, grid.patch_size
    return (grid.patches.reshape(gh, gw, p, p)
            .transpose(0, 2, 1, 3)
            .reshape(gh * p, gw * p))


def interleave_alternate(input_grid: PatchGrid,
                         target_grid: PatchGrid) -> InterleavedPatchSequence:
    """Alternate input and target patches: in1, tgt1, in2, tgt2, ..."""
    if (input_grid.patch_size != target_grid.patch_size
            or input_grid.grid_w != target_grid.grid_w
            or input_grid.grid_h != target_grid.grid_h):
        raise ConditioningError("patch grids must have equal size and shape")
    n, p = input_grid.patches.shape[0], input_grid.patch_size
    entries = np.empty((2 * n, p, p), dtype=np.float64)
    entries[0::2] = input_grid.patches
    entries[1::2] = target_grid.patches
    return InterleavedPatchSequence(patch_size=p, grid_w=input_grid.grid_w,
                                    grid_h=input_grid.grid_h, entries=entries)


def deinterleave(seq: InterleavedPatchSequence):
    """Exact inverse of interleave_alternate."""
    a = PatchGrid(seq.patch_size, seq.grid_w, seq.grid_h, seq.entries[0::2].copy())
    b = PatchGrid(seq.patch_size, seq.grid_w, seq.grid_h, seq.entries[1::2].copy())
    return a, b


def sequence_to_conditioning(seq: InterleavedPatchSequence,
                             spec: ConditioningSpec | None = None) -> ConditioningTensor:
    """Render the alternating sequence as a two-channel full-resolution tensor."""
    input_grid, target_grid = deinterleave(seq)
    ch0 = reassemble_patches(input_grid)
    ch1 = reassemble_patches(target_grid)
    if spec is None:
        spec = ConditioningSpec(kind="patch_mosaic", patch_size=seq.patch_size)
    return ConditioningTensor(data=np.stack([ch0, ch1]), provenance=spec)


def conditioning_to_sequence(cond: ConditioningTensor,
                             patch_size: int) -> InterleavedPatchSequence:
    """Recover the alternating patch sequence from a two-channel tensor.

    Also used to feed the dictionary-restoration branch, which consumes the
    sequence itself rather than the spatial tensor. Channel values are taken
    as-is, so this works in either intensity convention.
    """
    if cond.channels != 2:
        raise ConditioningError("need a two-channel conditioning tensor")
    h, w = cond.data.shape[1:]
    if h % patch_size != 0 or w % patch_size != 0:
        raise ConditioningError(f"tensor {h}x{w} not divisible by {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    a = PatchGrid(patch_size, gw, gh, _tile(cond.data[0], patch_size))
    b = PatchGrid(patch_size, gw, gh, _tile(cond.data[1], patch_size))
    return interleave_alternate(a, b)


def _tile(arr: np.ndarray, p: int) -> np.ndarray:
    h, w = arr.shape
    gh, gw = h // p, w // p
    return arr.reshape(gh, p, gw, p).transpose(0, 2, 1, 3).reshape(gh * gw, p, p)


def build_scenario_conditioning(spec: ConditioningSpec, input_img: Image,
                                target_pool) -> ConditioningTensor:
    """Build the conditioning tensor for one scenario.

    target_pool is a list of target-modality Images. Every random choice is
    drawn from a generator seeded with spec.seed, so the builder is a pure
    function of its arguments.
    """
    h, w = input_img.data.shape
    if spec.kind == "unconditional":
        return ConditioningTensor(np.zeros((0, h, w)), spec)
    if not target_pool:
        raise ConditioningError(f"{spec.kind} needs a non-empty target pool")
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "patch_mosaic":
        target = target_pool[int(rng.integers(len(target_pool)))]
        seq = interleave_alternate(extract_patches(input_img, spec.patch_size),
                                   extract_patches(target, spec.patch_size))
        return sequence_to_conditioning(seq, spec)
    if spec.kind == "random_target":
        target = target_pool[int(rng.integers(len(target_pool)))]
        ch1 = target.data
    elif spec.kind == "average_target":
        if len(target_pool) < spec.pool_k:
            raise ConditioningError(
                f"pool of {len(target_pool)} smaller than k={spec.pool_k}")
        idx = rng.choice(len(target_pool), size=spec.pool_k, replace=False)
        ch1 = np.mean([target_pool[int(i)].data for i in idx], axis=0)
    elif spec.kind == "sample_pdf":
        if len(target_pool) < spec.pool_k:
            raise ConditioningError(
                f"pool of {len(target_pool)} smaller than k={spec.pool_k}")
        idx = rng.choice(len(target_pool), size=spec.pool_k, replace=False)
        values = np.concatenate([target_pool[int(i)].data.ravel() for i in idx])
        hist, _ = np.histogram(values, bins=spec.bins, range=(0.0, 1.0))
        pdf = hist.astype(np.float64) / hist.sum()
        # broadcast the histogram row-wise: column x shows the bin at x
        cols = (np.arange(w) * spec.bins) // w
        ch1 = np.tile(pdf[cols], (h, 1))
    else:  # pragma: no cover - guarded by the spec validator
        raise ConditioningError(spec.kind)
    return ConditioningTensor(np.stack([input_img.data, ch1]), spec)


def downsample_conditioning(cond: ConditioningTensor, factor: int) -> ConditioningTensor:
    """Per-channel average pooling; factor 1 is the identity."""
    if factor == 1:
        return cond
    c, h, w = cond.data.shape
    if h % factor != 0 or w % factor != 0:
        raise ConditioningError(f"factor {factor} does not divide {h}x{w}")
    pooled = cond.data.reshape(c, h // factor, factor, w // factor, factor).mean(axis=(2, 4))
    return ConditioningTensor(pooled, cond.provenance)
