"""Dual-network intermediate representation.

Two convolutional networks (one per sensing modality) are described purely by
layer shapes: no weights, no tensors. Networks are split into ordered blocks;
the block index is the "level" used to place cross-modality connections.

The on-disk format is strict JSON: a top-level object with "rgb" and "depth"
keys, each holding {"blocks": [[layer, ...], ...]}. Unknown keys are rejected
to catch typos early.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

from .errors import ConfigFormatError, ValidationError


class Modality(str, Enum):
    RGB = "RGB"
    DEPTH = "Depth"


class LayerKind(str, Enum):
    CONV = "conv"
    POOL = "pool"
    UPSAMPLE = "upsample"
    FC = "fc"


_LAYER_FIELDS = (
    "id", "kind", "in_channels", "out_channels", "in_height", "in_width",
    "kernel_h", "kernel_w", "stride", "padding",
)
_LAYER_REQUIRED = _LAYER_FIELDS[:6]
_LAYER_DEFAULTS = {"kernel_h": 1, "kernel_w": 1, "stride": 1, "padding": 0}


@dataclass(frozen=True)
class LayerSpec:
    """Shape description of one layer."""

    id: str
    kind: LayerKind
    in_channels: int
    out_channels: int
    in_height: int
    in_width: int
    kernel_h: int = 1
    kernel_w: int = 1
    stride: int = 1
    padding: int = 0

    def __post_init__(self) -> None:
        for name in ("in_channels", "out_channels", "in_height", "in_width",
                     "kernel_h", "kernel_w", "stride"):
            if getattr(self, name) < 1:
                raise ValidationError(
                    f"layer {self.id!r}: {name} must be positive, got {getattr(self, name)}")
        if self.padding < 0:
            raise ValidationError(f"layer {self.id!r}: padding must be non-negative")
        if self.kind in (LayerKind.POOL, LayerKind.UPSAMPLE):
            if self.in_channels != self.out_channels:
                raise ValidationError(
                    f"layer {self.id!r}: {self.kind.value} requires in_channels == out_channels "
                    f"({self.in_channels} != {self.out_channels})")
        if self.kind is LayerKind.FC and (self.kernel_h != 1 or self.kernel_w != 1):
            raise ValidationError(f"layer {self.id!r}: fc layers use a 1x1 kernel")
        if self.kind in (LayerKind.CONV, LayerKind.POOL):
            for dim, kern in ((self.in_height, self.kernel_h), (self.in_width, self.kernel_w)):
                out = (dim + 2 * self.padding - kern) // self.stride + 1
                if out < 1:
                    raise ValidationError(
                        f"layer {self.id!r}: kernel {self.kernel_h}x{self.kernel_w} does not fit "
                        f"the {self.in_height}x{self.in_width} input (output dim {out} < 1)")


def output_shape(layer: LayerSpec) -> tuple[int, int, int]:
    """(channels, height, width) produced by a valid layer."""
    if layer.kind in (LayerKind.CONV, LayerKind.POOL):
        out_h = (layer.in_height + 2 * layer.padding - layer.kernel_h) // layer.stride + 1
        out_w = (layer.in_width + 2 * layer.padding - layer.kernel_w) // layer.stride + 1
        return (layer.out_channels, out_h, out_w)
    if layer.kind is LayerKind.UPSAMPLE:
        return (layer.out_channels, layer.in_height * 2, layer.in_width * 2)
    return (layer.out_channels, 1, 1)  # fc collapses spatial dims


@dataclass(frozen=True)
class NetworkSpec:
    """One modality's network: ordered blocks of layers; block index = level."""

    modality: Modality
    blocks: tuple[tuple[LayerSpec, ...], ...]

    def __post_init__(self) -> None:
        if len(self.blocks) < 1:
            raise ValidationError(f"{self.modality.value} network: at least one block required")
        seen: set[str] = set()
        for bi, block in enumerate(self.blocks):
            if len(block) == 0:
                raise ValidationError(f"{self.modality.value} network: block {bi} is empty")
            for layer in block:
                if layer.id in seen:
                    raise ValidationError(
                        f"layer {layer.id!r}: duplicate id in {self.modality.value} network")
                seen.add(layer.id)
        prev: LayerSpec | None = None
        for layer in self.flattened():
            if prev is not None:
                c, h, w = output_shape(prev)
                if c != layer.in_channels:
                    raise ValidationError(
                        f"layer {layer.id!r}: channel mismatch, predecessor {prev.id!r} "
                        f"emits {c} channels but in_channels is {layer.in_channels}")
                if (h, w) != (layer.in_height, layer.in_width):
                    raise ValidationError(
                        f"layer {layer.id!r}: spatial mismatch, predecessor {prev.id!r} "
                        f"emits {h}x{w} but input is {layer.in_height}x{layer.in_width}")
            prev = layer

    def flattened(self) -> Iterator[LayerSpec]:
        for block in self.blocks:
            yield from block

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    def active_layer(self, level: int) -> LayerSpec:
        """Producer endpoint of a block: its last layer."""
        return self.blocks[level][-1]

    def passive_layer(self, level: int) -> LayerSpec:
        """Consumer endpoint of a block: its first layer."""
        return self.blocks[level][0]

    def layer_by_id(self, layer_id: str) -> LayerSpec:
        for layer in self.flattened():
            if layer.id == layer_id:
                return layer
        raise ValidationError(f"layer {layer_id!r}: not found in {self.modality.value} network")


@dataclass(frozen=True)
class DualNetwork:
    rgb: NetworkSpec
    depth: NetworkSpec

    def __post_init__(self) -> None:
        if self.rgb.modality is not Modality.RGB:
            raise ValidationError("rgb network must have modality RGB")
        if self.depth.modality is not Modality.DEPTH:
            raise ValidationError("depth network must have modality Depth")
        if self.rgb.block_count != self.depth.block_count:
            raise ValidationError(
                f"block count mismatch: rgb has {self.rgb.block_count}, "
                f"depth has {self.depth.block_count}")

    @property
    def block_count(self) -> int:
        return self.rgb.block_count

    def net(self, modality: Modality) -> NetworkSpec:
        return self.rgb if modality is Modality.RGB else self.depth


def _layer_from_doc(obj: object) -> LayerSpec:
    if not isinstance(obj, dict):
        raise ValidationError(f"layer entry must be an object, got {type(obj).__name__}")
    unknown = set(obj) - set(_LAYER_FIELDS)
    if unknown:
        raise ValidationError(
            f"layer {obj.get('id', '?')!r}: unknown keys {sorted(unknown)}")
    missing = [k for k in _LAYER_REQUIRED if k not in obj]
    if missing:
        raise ValidationError(f"layer {obj.get('id', '?')!r}: missing keys {missing}")
    try:
        kind = LayerKind(obj["kind"])
    except ValueError:
        raise ValidationError(
            f"layer {obj['id']!r}: unknown kind {obj['kind']!r}") from None
    fields = {k: obj.get(k, _LAYER_DEFAULTS.get(k)) for k in _LAYER_FIELDS if k != "kind"}
    for k, v in fields.items():
        if k != "id" and not isinstance(v, int):
            raise ValidationError(f"layer {obj['id']!r}: {k} must be an integer")
    return LayerSpec(kind=kind, **fields)


def _network_from_doc(obj: object, modality: Modality) -> NetworkSpec:
    key = "rgb" if modality is Modality.RGB else "depth"
    if not isinstance(obj, dict):
        raise ValidationError(f"{key!r} must be an object")
    unknown = set(obj) - {"blocks"}
    if unknown:
        raise ValidationError(f"{key!r}: unknown keys {sorted(unknown)}")
    blocks = obj.get("blocks")
    if not isinstance(blocks, list):
        raise ValidationError(f"{key!r}: 'blocks' must be a list of layer lists")
    parsed = []
    for block in blocks:
        if not isinstance(block, list):
            raise ValidationError(f"{key!r}: each block must be a list of layers")
        parsed.append(tuple(_layer_from_doc(layer) for layer in block))
    return NetworkSpec(modality=modality, blocks=tuple(parsed))


def dual_network_from_doc(doc: object) -> DualNetwork:
    if not isinstance(doc, dict):
        raise ValidationError("top level must be an object with 'rgb' and 'depth' keys")
    unknown = set(doc) - {"rgb", "depth"}
    if unknown:
        raise ValidationError(f"top level: unknown keys {sorted(unknown)}")
    for key in ("rgb", "depth"):
        if key not in doc:
            raise ValidationError(f"top level: missing {key!r} network")
    return DualNetwork(
        rgb=_network_from_doc(doc["rgb"], Modality.RGB),
        depth=_network_from_doc(doc["depth"], Modality.DEPTH),
    )


def parse_dual_network(text: str) -> DualNetwork:
    """Parse and fully validate a dual-network JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFormatError(
            f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return dual_network_from_doc(doc)


def layer_to_doc(layer: LayerSpec) -> dict:
    return {
        "id": layer.id,
        "kind": layer.kind.value,
        "in_channels": layer.in_channels,
        "out_channels": layer.out_channels,
        "in_height": layer.in_height,
        "in_width": layer.in_width,
        "kernel_h": layer.kernel_h,
        "kernel_w": layer.kernel_w,
        "stride": layer.stride,
        "padding": layer.padding,
    }


def dual_network_to_doc(nets: DualNetwork) -> dict:
    return {
        "rgb": {"blocks": [[layer_to_doc(l) for l in b] for b in nets.rgb.blocks]},
        "depth": {"blocks": [[layer_to_doc(l) for l in b] for b in nets.depth.blocks]},
    }


def serialize_dual_network(nets: DualNetwork) -> str:
    return json.dumps(dual_network_to_doc(nets), indent=2)


# ---------------------------------------------------------------------------
# Built-in presets
# ---------------------------------------------------------------------------

def _conv(lid: str, cin: int, cout: int, size: int) -> LayerSpec:
    return LayerSpec(id=lid, kind=LayerKind.CONV, in_channels=cin, out_channels=cout,
                     in_height=size, in_width=size, kernel_h=3, kernel_w=3,
                     stride=1, padding=1)


def _pool(lid: str, ch: int, size: int) -> LayerSpec:
    return LayerSpec(id=lid, kind=LayerKind.POOL, in_channels=ch, out_channels=ch,
                     in_height=size, in_width=size, kernel_h=2, kernel_w=2,
                     stride=2, padding=0)


def _up(lid: str, ch: int, size: int) -> LayerSpec:
    return LayerSpec(id=lid, kind=LayerKind.UPSAMPLE, in_channels=ch, out_channels=ch,
                     in_height=size, in_width=size)


def _vgg_net(modality: Modality, in_channels: int) -> NetworkSpec:
    tag = "rgb" if modality is Modality.RGB else "d"
    enc_plan = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)]
    blocks: list[tuple[LayerSpec, ...]] = []
    size, cin = 224, in_channels
    for bi, (n_convs, cout) in enumerate(enc_plan, start=1):
        block = []
        for ci in range(1, n_convs + 1):
            block.append(_conv(f"{tag}_conv{bi}_{ci}", cin, cout, size))
            cin = cout
        block.append(_pool(f"{tag}_pool{bi}", cout, size))
        size //= 2
        blocks.append(tuple(block))
    # Decoder mirrors the encoder with one upsample + conv pair per block.
    dec_plan = [512, 256, 128, 64, 64]
    for bi, cout in enumerate(dec_plan, start=1):
        up = _up(f"{tag}_up{bi}", cin, size)
        size *= 2
        conv = _conv(f"{tag}_deconv{bi}", cin, cout, size)
        cin = cout
        blocks.append((up, conv))
    return NetworkSpec(modality=modality, blocks=tuple(blocks))


def _tiny2_net(modality: Modality, in_channels: int) -> NetworkSpec:
    tag = "rgb" if modality is Modality.RGB else "d"
    return NetworkSpec(modality=modality, blocks=(
        (_conv(f"{tag}_b0", in_channels, 4, 8),),
        (_conv(f"{tag}_b1", 4, 8, 8),),
    ))


def builtin_preset(name: str) -> DualNetwork:
    """Shipped network configurations.

    "fusenet_vgg16": symmetric VGG16-style 5-block encoders (64/128/256/512/512
    channels) plus mirrored 5-block decoders, 224x224 input, RGB 3 channels and
    depth 1 channel. "tiny2": two single-conv blocks per modality on an 8x8
    input, small enough to check every number by hand.
    """
    if name == "fusenet_vgg16":
        return DualNetwork(rgb=_vgg_net(Modality.RGB, 3), depth=_vgg_net(Modality.DEPTH, 1))
    if name == "tiny2":
        return DualNetwork(rgb=_tiny2_net(Modality.RGB, 3), depth=_tiny2_net(Modality.DEPTH, 1))
    raise ValidationError(f"unknown preset {name!r} (expected 'fusenet_vgg16' or 'tiny2')")


PRESET_NAMES = ("fusenet_vgg16", "tiny2")
