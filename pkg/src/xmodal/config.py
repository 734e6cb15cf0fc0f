"""Plain-text run configuration: one `key = value` per line.

Unknown keys are rejected by name, every key has a documented default, and
the hash is computed over canonical typed values so whitespace or key order
never changes it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .conditioning import ConditioningSpec
from .dictionary import DiLConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Malformed config text or an unknown/invalid key."""


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


# key -> (default, parser, help)
SCHEMA = {
    "dataset_dir": ("", str, "unpaired dataset root (ct/ and mri/ subdirs)"),
    "out_dir": ("runs/out", str, "where checkpoints, stats, and reports land"),
    "seed": (0, int, "master seed for init, data order, and scenarios"),
    "epochs": (50, int, "passes over the smaller modality pool"),
    "batch_size": (4, int, "unpaired images per modality per step"),
    "learning_rate": (3e-4, float, "Adam step size (constant)"),
    "gamma": (1.5, float, "weight on the two adversarial terms"),
    "width_scale": (0.25, float, "uniform filter-count multiplier"),
    "cycle_norm": ("l1", str, "cycle/identity deviation norm: l1 or l2"),
    "checkpoint_every": (0, int, "epochs between checkpoints (0 = final only)"),
    "cond_kind": ("patch_mosaic", str,
                  "patch_mosaic | random_target | average_target | sample_pdf | unconditional"),
    "cond_patch_size": (16, int, "mosaic tile side (8, 16, 32, or 64)"),
    "cond_pool_k": (0, int, "targets pooled for average/pdf (0 = min(100, pool))"),
    "cond_bins": (256, int, "histogram bins for sample_pdf"),
    "dil_enabled": (True, _parse_bool, "dictionary restoration branch on/off"),
    "dil_patch_size": (0, int, "DiL tile side (0 = follow the conditioning)"),
    "dil_num_atoms": (0, int, "dictionary atoms (0 = 2 * patch_size^2)"),
    "dil_sparsity": (5, int, "nonzeros per sparse code"),
    "dil_update_iters": (1, int, "dictionary refit rounds per step"),
    "dil_residue": ("both", str, "residue channels fused: both | input | target"),
}

_PARSERS = {key: spec[1] for key, spec in SCHEMA.items()}
DEFAULTS = {key: spec[0] for key, spec in SCHEMA.items()}


@dataclass(frozen=True)
class RunConfig:
    """Typed view of one parsed config file."""

    values: tuple  # sorted (key, value) pairs

    def __getitem__(self, key):
        for k, v in self.values:
            if k == key:
                return v
        raise KeyError(key)

    def as_dict(self) -> dict:
        return dict(self.values)

    def override(self, **changes) -> "RunConfig":
        merged = self.as_dict()
        for key, value in changes.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key: {key}")
            merged[key] = _PARSERS[key](str(value)) if isinstance(value, str) else value
        return RunConfig(tuple(sorted(merged.items())))


def parse_config(text: str) -> RunConfig:
    """Parse config text; '#' starts a comment, blank lines are ignored."""
    merged = dict(DEFAULTS)
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        try:
            merged[key] = _PARSERS[key](raw_value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw_value!r} ({exc})")
    return RunConfig(tuple(sorted(merged.items())))


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def run_config_hash(cfg: RunConfig) -> str:
    canonical = "\n".join(f"{k}={v!r}" for k, v in cfg.values)
    return hashlib.sha256(canonical.encode()).hexdigest()


def default_config_text() -> str:
    """A fully documented template with every key at its default."""
    lines = ["# xmodal run configuration (key = value, '#' comments)"]
    for key, (default, _, help_text) in SCHEMA.items():
        lines.append(f"{key} = {default}  # {help_text}")
    return "\n".join(lines) + "\n"


def changed_keys(base: RunConfig, other: RunConfig):
    """Keys whose values differ; used by the ablation audit."""
    a, b = base.as_dict(), other.as_dict()
    return tuple(sorted(k for k in a if a[k] != b[k]))


def to_train_config(cfg: RunConfig, pool_size: int) -> TrainConfig:
    """Resolve the flat keys into the training module's nested config.

    pool_size is the smaller modality pool; it resolves the automatic
    pool_k and validates that pooled scenarios fit the data.
    """
    kind = cfg["cond_kind"]
    pool_k = cfg["cond_pool_k"]
    if pool_k == 0:
        pool_k = min(100, pool_size)
    if kind in ("average_target", "sample_pdf") and pool_k > pool_size:
        raise ConfigError(
            f"cond_pool_k={pool_k} exceeds the available pool of {pool_size}")
    conditioning = ConditioningSpec(
        kind=kind,
        patch_size=cfg["cond_patch_size"] if kind == "patch_mosaic" else 16,
        pool_k=pool_k,
        bins=cfg["cond_bins"],
        seed=cfg["seed"],
    )
    dil_patch = cfg["dil_patch_size"]
    if dil_patch == 0:
        dil_patch = cfg["cond_patch_size"] if kind == "patch_mosaic" else 16
    dil = DiLConfig(
        patch_size=dil_patch,
        num_atoms=cfg["dil_num_atoms"],
        sparsity=cfg["dil_sparsity"],
        dict_update_iters=cfg["dil_update_iters"],
        enabled=cfg["dil_enabled"],
        residue_channels=cfg["dil_residue"],
    )
    return TrainConfig(
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        conditioning=conditioning,
        dil=dil,
        width_scale=cfg["width_scale"],
        seed=cfg["seed"],
        gamma=cfg["gamma"],
        cycle_norm=cfg["cycle_norm"],
        checkpoint_every=cfg["checkpoint_every"],
    )
