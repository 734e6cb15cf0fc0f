"""Generator and discriminator construction.

The generator is a 32-layer stride-1 CNN (first 15 layers wide 5x5 kernels,
last 17 narrower 3x3 kernels) with conditioning channels concatenated at the
inputs of layers 3, 15, and 25, batch norm + leaky ReLU after every
convolution except the last, dropout after a few fixed layers, and additive
skip connections between equal-channel points. The discriminator is a
15-layer CNN reduced by global average pooling to one unbounded scalar score
per image, suiting the least-squares adversarial objective.

Resolution is preserved end-to-end (same padding everywhere); a width-scale
knob shrinks filter counts uniformly for desk-scale training while keeping
the full-size schedule constructible for audits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F


class NetworkError(ValueError):
    """Inconsistent layer schedule, channel mismatch, or bad spec."""


def scaled_filters(base: int, width_scale: float) -> int:
    """Uniform filter scaling, rounded half-up, floored at one filter."""
    return max(1, int(base * width_scale + 0.5))


@dataclass(frozen=True)
class GeneratorSpec:
    total_layers: int = 32
    stage1_layers: int = 15
    stage1_filters: int = 128
    stage1_kernel: int = 5
    stage2_filters: int = 256
    stage2_kernel: int = 3
    injection_layers: tuple = (3, 15, 25)
    width_scale: float = 1.0
    dropout_rate: float = 0.2
    dropout_layers: tuple = (7, 14, 24)
    leaky_slope: float = 0.2
    skip_pairs: tuple = ((3, 7), (8, 12), (16, 20), (21, 25), (26, 30))

    def __post_init__(self):
        if self.stage1_layers >= self.total_layers:
            raise NetworkError("stage1 must end before the final layer")
        for lay in self.injection_layers:
            if not 1 <= lay <= self.total_layers:
                raise NetworkError(f"injection layer {lay} out of range")
        if self.width_scale <= 0:
            raise NetworkError("width_scale must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise NetworkError("dropout_rate must be in [0, 1)")
        targets = [dst for _, dst in self.skip_pairs]
        if len(set(targets)) != len(targets):
            raise NetworkError("at most one skip connection may land per layer")
        for src, dst in self.skip_pairs:
            if not 1 <= src < dst <= self.total_layers:
                raise NetworkError(f"bad skip pair ({src}, {dst})")

    def out_channels(self, layer: int) -> int:
        if layer == self.total_layers:
            return 1
        base = self.stage1_filters if layer <= self.stage1_layers else self.stage2_filters
        return scaled_filters(base, self.width_scale)

    def kernel(self, layer: int) -> int:
        return self.stage1_kernel if layer <= self.stage1_layers else self.stage2_kernel


@dataclass(frozen=True)
class DiscriminatorSpec:
    total_layers: int = 15
    stage1_layers: int = 10
    stage1_filters: int = 84
    stage1_kernel: int = 5
    stage2_filters: int = 128
    stage2_kernel: int = 3
    width_scale: float = 1.0
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.stage1_layers >= self.total_layers:
            raise NetworkError("stage1 must end before the final layer")
        if self.width_scale <= 0:
            raise NetworkError("width_scale must be positive")

    def out_channels(self, layer: int) -> int:
        base = self.stage1_filters if layer <= self.stage1_layers else self.stage2_filters
        return scaled_filters(base, self.width_scale)

    def kernel(self, layer: int) -> int:
        return self.stage1_kernel if layer <= self.stage1_layers else self.stage2_kernel


@dataclass(frozen=True)
class LayerAudit:
    """One convolution layer as actually built."""

    index: int
    in_channels: int
    out_channels: int
    kernel: int
    has_bn: bool
    activation: str  # "leaky_relu" | "tanh" | "none"
    dropout_after: bool = False
    injected_channels: int = 0
    skip_source: Optional[int] = None

    @property
    def conv_params(self) -> int:
        return self.in_channels * self.out_channels * self.kernel ** 2 + self.out_channels

    @property
    def bn_params(self) -> int:
        return 2 * self.out_channels if self.has_bn else 0


def generator_schedule(spec: GeneratorSpec,
                       injection_channels: Mapping[int, int] | None = None):
    """Full layer-by-layer audit for a generator, before any instantiation."""
    injection_channels = dict(injection_channels or {})
    for lay in injection_channels:
        if lay not in spec.injection_layers:
            raise NetworkError(f"channels supplied for non-injection layer {lay}")
    skip_into = {dst: src for src, dst in spec.skip_pairs}
    rows = []
    prev_out = 1
    for lay in range(1, spec.total_layers + 1):
        injected = injection_channels.get(lay, 0) if lay in spec.injection_layers else 0
        last = lay == spec.total_layers
        rows.append(LayerAudit(
            index=lay,
            in_channels=prev_out + injected,
            out_channels=spec.out_channels(lay),
            kernel=spec.kernel(lay),
            has_bn=not last,
            activation="tanh" if last else "leaky_relu",
            dropout_after=lay in spec.dropout_layers and not last,
            injected_channels=injected,
            skip_source=skip_into.get(lay),
        ))
        prev_out = spec.out_channels(lay)
    for src, dst in spec.skip_pairs:
        if spec.out_channels(src) != spec.out_channels(dst):
            raise NetworkError(
                f"skip {src}->{dst} joins unequal channel counts "
                f"({spec.out_channels(src)} vs {spec.out_channels(dst)})")
    return tuple(rows)


def discriminator_schedule(spec: DiscriminatorSpec):
    rows = []
    prev_out = 1
    for lay in range(1, spec.total_layers + 1):
        rows.append(LayerAudit(
            index=lay,
            in_channels=prev_out,
            out_channels=spec.out_channels(lay),
            kernel=spec.kernel(lay),
            has_bn=True,
            activation="leaky_relu",
        ))
        prev_out = spec.out_channels(lay)
    return tuple(rows)


def generator_parameter_count(spec: GeneratorSpec,
                              injection_channels: Mapping[int, int] | None = None) -> int:
    """Closed-form learnable parameter count (convs + batch-norm affines)."""
    return sum(r.conv_params + r.bn_params
               for r in generator_schedule(spec, injection_channels))


def discriminator_parameter_count(spec: DiscriminatorSpec) -> int:
    rows = discriminator_schedule(spec)
    head = rows[-1].out_channels + 1  # linear score on pooled features
    return sum(r.conv_params + r.bn_params for r in rows) + head


def audit_to_tsv(rows) -> str:
    """Tab-separated audit listing for documentation and golden tests."""
    header = ("layer\tin\tout\tkernel\tbn\tactivation\tdropout\tinjected\tskip_from")
    lines = [header]
    for r in rows:
        lines.append("\t".join(str(v) for v in (
            r.index, r.in_channels, r.out_channels, r.kernel,
            int(r.has_bn), r.activation, int(r.dropout_after),
            r.injected_channels, r.skip_source if r.skip_source is not None else "-",
        )))
    return "\n".join(lines) + "\n"


class _ConvBlock(nn.Module):
    def __init__(self, row: LayerAudit, leaky_slope: float, dropout_rate: float):
        super().__init__()
        self.row = row
        self.leaky_slope = leaky_slope
        self.conv = nn.Conv2d(row.in_channels, row.out_channels,
                              row.kernel, padding=row.kernel // 2)
        self.bn = nn.BatchNorm2d(row.out_channels) if row.has_bn else None
        self.dropout = nn.Dropout2d(dropout_rate) if row.dropout_after else None

    def forward(self, h):
        h = self.conv(h)
        if self.bn is not None:
            h = self.bn(h)
        if self.row.activation == "leaky_relu":
            h = F.leaky_relu(h, self.leaky_slope)
        elif self.row.activation == "tanh":
            h = torch.tanh(h)
        if self.dropout is not None:
            h = self.dropout(h)
        return h


class Generator(nn.Module):
    """Resolution-preserving conditional generator; output bounded in (-1, 1)."""

    def __init__(self, spec: GeneratorSpec,
                 injection_channels: Mapping[int, int] | None = None):
        super().__init__()
        self.spec = spec
        self.injection_channels = dict(injection_channels or {})
        self.audit = generator_schedule(spec, injection_channels)
        self.blocks = nn.ModuleList(
            _ConvBlock(row, spec.leaky_slope, spec.dropout_rate) for row in self.audit)
        self._skip_sources = {src for src, _ in spec.skip_pairs}

    def forward(self, x, injections: Mapping[int, torch.Tensor] | None = None):
        injections = injections or {}
        saved = {}
        h = x
        for row, block in zip(self.audit, self.blocks):
            if row.injected_channels:
                extra = injections.get(row.index)
                if extra is None:
                    raise NetworkError(f"missing injection at layer {row.index}")
                if extra.shape[1] != row.injected_channels:
                    raise NetworkError(
                        f"layer {row.index} expects {row.injected_channels} injected "
                        f"channels, got {extra.shape[1]}")
                if extra.shape[2:] != h.shape[2:]:
                    raise NetworkError(
                        f"injection at layer {row.index} has spatial size "
                        f"{tuple(extra.shape[2:])}, feature map is {tuple(h.shape[2:])}")
                h = torch.cat([h, extra], dim=1)
            h = block(h)
            if row.skip_source is not None:
                h = h + saved[row.skip_source]
            if row.index in self._skip_sources:
                saved[row.index] = h
        return h

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


class Discriminator(nn.Module):
    """15-layer CNN pooled to a single unbounded score per image."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        self.audit = discriminator_schedule(spec)
        self.blocks = nn.ModuleList(
            _ConvBlock(row, spec.leaky_slope, 0.0) for row in self.audit)
        self.head = nn.Linear(self.audit[-1].out_channels, 1)

    def forward(self, x):
        h = x
        for block in self.blocks:
            h = block(h)
        pooled = h.mean(dim=(2, 3))
        return self.head(pooled).squeeze(1)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_generator(spec: GeneratorSpec,
                    injection_channels: Mapping[int, int] | None = None) -> Generator:
    return Generator(spec, injection_channels)


def build_discriminator(spec: DiscriminatorSpec) -> Discriminator:
    return Discriminator(spec)
