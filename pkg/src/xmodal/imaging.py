"""Image container, grayscale I/O, quality metrics, and synthetic phantom data.

Intensities live in [0, 1] at the I/O boundary and in [-1, 1] inside the
network pipeline; every Image records which convention it is using.
Metrics are computed on the 8-bit display scale [0, 255] so their
magnitudes line up with the usual reporting convention for medical
image translation results.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

UNIT = "unit"      # [0, 1], I/O boundary
SIGNED = "signed"  # [-1, 1], network pipeline

DISPLAY_MAX = 255.0

# Gaussian-window SSIM configuration (the standard one).
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * DISPLAY_MAX) ** 2
SSIM_C2 = (0.03 * DISPLAY_MAX) ** 2

# Pseudo-MRI construction: fixed monotone intensity remap plus a band-limited
# texture field of this peak amplitude. Documented here so tests can undo it.
TEXTURE_AMPLITUDE = 0.02


class ImagingError(ValueError):
    """Invalid image data, shape mismatch, or unsupported file content."""


@dataclass(frozen=True)
class Image:
    """Single-channel 2-D raster of float intensities, row-major.

    ``convention`` is either ``"unit"`` ([0, 1]) or ``"signed"`` ([-1, 1]).
    """

    data: np.ndarray
    convention: str = UNIT

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ImagingError(f"image data must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ImagingError("image contains NaN or Inf")
        if self.convention == UNIT:
            lo, hi = 0.0, 1.0
        elif self.convention == SIGNED:
            lo, hi = -1.0, 1.0
        else:
            raise ImagingError(f"unknown intensity convention {self.convention!r}")
        if arr.min() < lo - 1e-9 or arr.max() > hi + 1e-9:
            raise ImagingError(
                f"intensities [{arr.min():.4g}, {arr.max():.4g}] outside "
                f"{self.convention} range [{lo}, {hi}]"
            )
        arr = np.clip(arr, lo, hi)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 1

    def to_signed(self) -> "Image":
        if self.convention == SIGNED:
            return self
        return Image(self.data * 2.0 - 1.0, SIGNED)

    def to_unit(self) -> "Image":
        if self.convention == UNIT:
            return self
        return Image((self.data + 1.0) / 2.0, UNIT)


@dataclass(frozen=True)
class MetricReport:
    """RMSE (display-scale intensity units), PSNR (dB), SSIM (dimensionless)."""

    rmse: float
    psnr: float
    ssim: float

    def __post_init__(self):
        if self.rmse < 0:
            raise ImagingError("rmse must be nonnegative")
        if not -1.0 - 1e-9 <= self.ssim <= 1.0 + 1e-9:
            raise ImagingError("ssim out of [-1, 1]")
        if (self.rmse == 0) != math.isinf(self.psnr):
            raise ImagingError("psnr must be +inf exactly when rmse is 0")


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and noise parameters for one synthetic cross-modal pair."""

    size: int = 64
    num_shapes: int = 4
    seed: int = 0
    noise_sigma: float = 0.01

    def __post_init__(self):
        if self.size % 64 != 0:
            raise ImagingError(f"phantom size {self.size} not divisible by 64")
        if self.num_shapes < 1:
            raise ImagingError("need at least one shape")
        if self.noise_sigma < 0:
            raise ImagingError("noise_sigma must be nonnegative")


# ---------------------------------------------------------------------------
# I/O: grayscale PNG (8/16-bit) and raw float32 with a JSON header sidecar.
# ---------------------------------------------------------------------------

def _sidecar_path(path: str) -> str:
    return path + ".json"


def save_image(img: Image, path: str, bit_depth: int = 16) -> None:
    """Write an image in [0,1] convention to disk.

    ``.png`` paths are quantized to the requested bit depth; any other
    extension is written as raw little-endian float32 with a JSON sidecar
    recording width, height, and convention (bit-exact round trip).
    """
    if img.convention != UNIT:
        raise ImagingError("save_image expects the [0,1] convention")
    if path.lower().endswith(".png"):
        if bit_depth == 8:
            arr = np.round(img.data * 255.0).astype(np.uint8)
            PILImage.fromarray(arr, mode="L").save(path)
        elif bit_depth == 16:
            arr = np.round(img.data * 65535.0).astype(np.uint16)
            PILImage.fromarray(arr).save(path)
        else:
            raise ImagingError(f"unsupported PNG bit depth {bit_depth}")
    else:
        payload = img.data.astype("<f4")
        with open(path, "wb") as fh:
            fh.write(payload.tobytes())
        header = {
            "width": img.width,
            "height": img.height,
            "dtype": "float32",
            "byteorder": "little",
            "convention": img.convention,
        }
        with open(_sidecar_path(path), "w") as fh:
            json.dump(header, fh, indent=1)


def load_image(path: str) -> Image:
    """Load an 8/16-bit grayscale PNG or a raw float32 file into [0,1]."""
    if not os.path.exists(path):
        raise ImagingError(f"no such image file: {path}")
    if path.lower().endswith(".png"):
        with PILImage.open(path) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64)
                if arr.max() > 65535:
                    raise ImagingError(f"unsupported bit depth in {path}")
                arr = arr / 65535.0
            else:
                raise ImagingError(f"unsupported PNG mode {im.mode!r} in {path}")
        return Image(arr, UNIT)
    sidecar = _sidecar_path(path)
    if not os.path.exists(sidecar):
        raise ImagingError(f"raw image {path} is missing its header sidecar")
    with open(sidecar) as fh:
        header = json.load(fh)
    raw = np.fromfile(path, dtype="<f4")
    w, h = int(header["width"]), int(header["height"])
    if raw.size != w * h:
        raise ImagingError(f"raw payload size {raw.size} does not match {w}x{h}")
    return Image(raw.astype(np.float64).reshape(h, w), header.get("convention", UNIT))


# ---------------------------------------------------------------------------
# Quality metrics, display scale [0, 255].
# ---------------------------------------------------------------------------

def _display_pair(a: Image, b: Image):
    if a.data.shape != b.data.shape:
        raise ImagingError(f"shape mismatch {a.data.shape} vs {b.data.shape}")
    return a.to_unit().data * DISPLAY_MAX, b.to_unit().data * DISPLAY_MAX


def rmse(a: Image, b: Image) -> float:
    """Root mean squared error on the display scale."""
    x, y = _display_pair(a, b)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB with MAX=255; +inf when MSE is 0."""
    x, y = _display_pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(DISPLAY_MAX ** 2 / mse))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _windowed_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # valid-mode weighted local mean via an explicit window view
    win = np.lib.stride_tricks.sliding_window_view(x, kernel.shape)
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def ssim(a: Image, b: Image) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window."""
    x, y = _display_pair(a, b)
    if min(x.shape) < SSIM_WINDOW:
        raise ImagingError(
            f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _windowed_mean(x, kernel)
    mu_y = _windowed_mean(y, kernel)
    var_x = _windowed_mean(x * x, kernel) - mu_x ** 2
    var_y = _windowed_mean(y * y, kernel) - mu_y ** 2
    cov = _windowed_mean(x * y, kernel) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def metric_report(a: Image, b: Image) -> MetricReport:
    return MetricReport(rmse=rmse(a, b), psnr=psnr(a, b), ssim=ssim(a, b))


# ---------------------------------------------------------------------------
# Synthetic phantoms: paired pseudo-CT / pseudo-MRI with shared geometry.
# ---------------------------------------------------------------------------

def ct_to_mri_intensity(v):
    """Fixed invertible nonlinear remap carrying pseudo-CT levels to pseudo-MRI.

    Monotone decreasing on [0, 1] with range [0.05, 0.95], mimicking the
    contrast inversion between the two modalities.
    """
    return 0.05 + 0.9 * (1.0 - np.asarray(v, dtype=np.float64)) ** 1.7


def mri_to_ct_intensity(v):
    """Inverse of :func:`ct_to_mri_intensity`."""
    u = (np.asarray(v, dtype=np.float64) - 0.05) / 0.9
    return 1.0 - np.clip(u, 0.0, 1.0) ** (1.0 / 1.7)


def _ellipse_mask(size: int, cx, cy, rx, ry, theta) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    xr = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    yr = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
    return (xr / rx) ** 2 + (yr / ry) ** 2 <= 1.0


def _bandlimited_texture(size: int, rng: np.random.Generator) -> np.ndarray:
    # white noise low-passed in Fourier space, scaled to TEXTURE_AMPLITUDE peak
    noise = rng.standard_normal((size, size))
    spectrum = np.fft.fft2(noise)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    keep = np.sqrt(fx ** 2 + fy ** 2) <= 1.0 / 8.0
    tex = np.real(np.fft.ifft2(spectrum * keep))
    peak = np.max(np.abs(tex))
    if peak > 0:
        tex = tex / peak * TEXTURE_AMPLITUDE
    return tex


def generate_phantom_pair(spec: PhantomSpec):
    """Build one (pseudo-CT, pseudo-MRI) pair with shared anatomy.

    The pseudo-CT is a piecewise-constant ellipse phantom. The pseudo-MRI is
    ``ct_to_mri_intensity`` applied to the same geometry, plus a band-limited
    texture of peak amplitude ``TEXTURE_AMPLITUDE`` and optional Gaussian
    noise; both are clipped to [0, 1] only as a safety net since the level
    ranges keep values interior by construction.
    """
    rng = np.random.default_rng(spec.seed)
    s = spec.size
    ct = np.full((s, s), 0.12, dtype=np.float64)
    levels = rng.uniform(0.3, 0.95, size=spec.num_shapes)
    for i in range(spec.num_shapes):
        cx, cy = rng.uniform(0.25 * s, 0.75 * s, size=2)
        rx, ry = rng.uniform(0.08 * s, 0.3 * s, size=2)
        theta = rng.uniform(0.0, np.pi)
        ct[_ellipse_mask(s, cx, cy, rx, ry, theta)] = levels[i]
    mri = ct_to_mri_intensity(ct) + _bandlimited_texture(s, rng)
    if spec.noise_sigma > 0:
        mri = mri + rng.normal(0.0, spec.noise_sigma, size=(s, s))
    return Image(np.clip(ct, 0.0, 1.0)), Image(np.clip(mri, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Unpaired dataset generation and loading.
# ---------------------------------------------------------------------------

PAIRS_FILENAME = "pairs.eval.tsv"


@dataclass(frozen=True)
class DatasetManifest:
    """Evaluation-only record of the hidden ground-truth pairing."""

    root: str
    pairs: tuple = field(default_factory=tuple)  # (ct filename, mri filename)

    def save(self) -> str:
        path = os.path.join(self.root, PAIRS_FILENAME)
        with open(path, "w") as fh:
            for ct_name, mri_name in self.pairs:
                fh.write(f"{ct_name}\t{mri_name}\n")
        return path

    @classmethod
    def load(cls, root: str) -> "DatasetManifest":
        path = os.path.join(root, PAIRS_FILENAME)
        if not os.path.exists(path):
            raise ImagingError(f"evaluation manifest missing: {path}")
        pairs = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    ct_name, mri_name = line.split("\t")
                    pairs.append((ct_name, mri_name))
        return cls(root=root, pairs=tuple(pairs))


def generate_unpaired_dataset(n: int, seed: int, out_dir: str,
                              size: int = 64, num_shapes: int = 4,
                              noise_sigma: float = 0.01) -> DatasetManifest:
    """Generate n phantom pairs, then hide the correspondence.

    Files land in ``out_dir/ct`` and ``out_dir/mri`` with independently
    shuffled numbering so directory order carries no pairing information;
    the true pairing is kept in ``pairs.eval.tsv`` for evaluation only.
    """
    if n < 2:
        raise ImagingError("need n >= 2 to hide the pairing by shuffling")
    rng = np.random.default_rng(seed)
    ct_dir = os.path.join(out_dir, "ct")
    mri_dir = os.path.join(out_dir, "mri")
    os.makedirs(ct_dir, exist_ok=True)
    os.makedirs(mri_dir, exist_ok=True)
    ct_order = rng.permutation(n)
    mri_order = rng.permutation(n)
    pair_seeds = rng.integers(0, 2 ** 31 - 1, size=n)
    pairs = []
    for i in range(n):
        spec = PhantomSpec(size=size, num_shapes=num_shapes,
                           seed=int(pair_seeds[i]), noise_sigma=noise_sigma)
        ct, mri = generate_phantom_pair(spec)
        ct_name = f"ct_{ct_order[i]:04d}.png"
        mri_name = f"mri_{mri_order[i]:04d}.png"
        save_image(ct, os.path.join(ct_dir, ct_name))
        save_image(mri, os.path.join(mri_dir, mri_name))
        pairs.append((ct_name, mri_name))
    manifest = DatasetManifest(root=out_dir, pairs=tuple(sorted(pairs)))
    manifest.save()
    return manifest


class UnpairedDataset:
    """Training-side view of a dataset directory: two pools, no pairing.

    Deliberately never reads ``pairs.eval.tsv``; it only lists the two
    modality directories.
    """

    def __init__(self, root: str):
        ct_dir = os.path.join(root, "ct")
        mri_dir = os.path.join(root, "mri")
        if not (os.path.isdir(ct_dir) and os.path.isdir(mri_dir)):
            raise ImagingError(f"{root} does not contain ct/ and mri/ directories")
        self.root = root
        self.ct_files = sorted(
            os.path.join(ct_dir, f) for f in os.listdir(ct_dir) if f.endswith(".png")
        )
        self.mri_files = sorted(
            os.path.join(mri_dir, f) for f in os.listdir(mri_dir) if f.endswith(".png")
        )
        if not self.ct_files or not self.mri_files:
            raise ImagingError(f"{root} has an empty modality pool")

    def load_ct(self, i: int) -> Image:
        return load_image(self.ct_files[i])

    def load_mri(self, i: int) -> Image:
        return load_image(self.mri_files[i])

    def load_all(self):
        return ([load_image(p) for p in self.ct_files],
                [load_image(p) for p in self.mri_files])
