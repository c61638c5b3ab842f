"""Closed-form MAC, parameter, and storage accounting.

MACs count multiply-accumulates only: pooling comparisons and upsample copies
cost zero MACs here and are charged as data movement by the simulator. Bias
additions are excluded from MACs. One word = one 32-bit value.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .fuselink import Deployment, FuseLink
from .netspec import DualNetwork, LayerKind, LayerSpec, output_shape


@dataclass(frozen=True)
class CostReport:
    macs: int
    params: int
    activation_words: int
    weight_words: int

    def __post_init__(self) -> None:
        for name in ("macs", "params", "activation_words", "weight_words"):
            if getattr(self, name) < 0:
                raise ValidationError(f"cost report: {name} must be non-negative")

    def __add__(self, other: "CostReport") -> "CostReport":
        return CostReport(
            macs=self.macs + other.macs,
            params=self.params + other.params,
            activation_words=self.activation_words + other.activation_words,
            weight_words=self.weight_words + other.weight_words,
        )

    def to_doc(self) -> dict:
        return {"macs": self.macs, "params": self.params,
                "activation_words": self.activation_words,
                "weight_words": self.weight_words}


_ZERO_COST = CostReport(0, 0, 0, 0)


def layer_cost(layer: LayerSpec) -> CostReport:
    out_c, out_h, out_w = output_shape(layer)
    activation_words = out_c * out_h * out_w
    if layer.kind is LayerKind.CONV:
        macs = out_c * out_h * out_w * layer.in_channels * layer.kernel_h * layer.kernel_w
        params = layer.in_channels * out_c * layer.kernel_h * layer.kernel_w + out_c
    elif layer.kind is LayerKind.FC:
        macs = layer.in_channels * out_c
        params = layer.in_channels * out_c + out_c
    else:  # pool / upsample: movement only
        macs = 0
        params = 0
    return CostReport(macs=macs, params=params,
                      activation_words=activation_words, weight_words=params)


def link_cost(link: FuseLink, nets: DualNetwork) -> CostReport:
    """The filter runs as a conv over the passive layer's input extent; its
    output is the partial-sum tensor crossing the fuseLink buffer."""
    passive_net = nets.net(link.passive.modality)
    if not (0 <= link.passive.level < passive_net.block_count):
        raise ValidationError(f"link {link.id!r}: passive level out of range")
    passive_layer = passive_net.passive_layer(link.passive.level)
    if passive_layer.id != link.passive.layer_id:
        raise ValidationError(f"link {link.id!r}: passive endpoint does not resolve")
    f = link.filter
    p_h, p_w = passive_layer.in_height, passive_layer.in_width
    macs = f.c_output * p_h * p_w * f.c_input * f.w * f.h
    return CostReport(macs=macs, params=f.param_count,
                      activation_words=f.c_output * p_h * p_w,
                      weight_words=f.param_count)


def deployment_cost(nets: DualNetwork, dep: Deployment) -> CostReport:
    total = _ZERO_COST
    for net in (nets.rgb, nets.depth):
        for layer in net.flattened():
            total = total + layer_cost(layer)
    for link in dep.links:
        total = total + link_cost(link, nets)
    return total


@dataclass(frozen=True)
class StorageReport:
    mode: str
    arrays: int
    input_buffer_words: int   # per array
    weight_buffer_words: int  # per array
    output_buffer_words: int  # per array
    fuselink_buffer_words: int  # per array, 0 in baseline mode
    total_words: int
    overhead_vs_baseline: float

    def __post_init__(self) -> None:
        parts = (self.input_buffer_words + self.weight_buffer_words
                 + self.output_buffer_words + self.fuselink_buffer_words)
        if self.total_words != self.arrays * parts:
            raise ValidationError("storage report: total is not the sum of its parts")

    def to_doc(self) -> dict:
        return {
            "mode": self.mode,
            "arrays": self.arrays,
            "input_buffer_words": self.input_buffer_words,
            "weight_buffer_words": self.weight_buffer_words,
            "output_buffer_words": self.output_buffer_words,
            "fuselink_buffer_words": self.fuselink_buffer_words,
            "total_words": self.total_words,
            "overhead_vs_baseline": self.overhead_vs_baseline,
        }


def storage_footprint(arch, nets: DualNetwork, dep: Deployment) -> StorageReport:
    """Buffer word totals for the arch's mode, plus the split-vs-baseline
    overhead fraction (both totals come from the same arch config)."""
    from .simulator import ArchMode  # local import: costmodel stays load-order neutral

    for name in ("input_buffer_words", "weight_buffer_words", "output_buffer_words",
                 "half_input_buffer_words", "half_weight_buffer_words",
                 "half_output_buffer_words"):
        if getattr(arch, name) < 1:
            raise ValidationError(f"storage footprint: {name} must be positive")
    baseline_total = (arch.input_buffer_words + arch.weight_buffer_words
                      + arch.output_buffer_words)
    split_total = 2 * (arch.half_input_buffer_words + arch.half_weight_buffer_words
                       + arch.half_output_buffer_words + arch.fuselink_buffer_words)
    overhead = (split_total - baseline_total) / baseline_total
    if arch.mode is ArchMode.BASELINE:
        return StorageReport(
            mode=arch.mode.value, arrays=1,
            input_buffer_words=arch.input_buffer_words,
            weight_buffer_words=arch.weight_buffer_words,
            output_buffer_words=arch.output_buffer_words,
            fuselink_buffer_words=0,
            total_words=baseline_total,
            overhead_vs_baseline=overhead,
        )
    return StorageReport(
        mode=arch.mode.value, arrays=2,
        input_buffer_words=arch.half_input_buffer_words,
        weight_buffer_words=arch.half_weight_buffer_words,
        output_buffer_words=arch.half_output_buffer_words,
        fuselink_buffer_words=arch.fuselink_buffer_words,
        total_words=split_total,
        overhead_vs_baseline=overhead,
    )
