"""Gating network inference and threshold pruning.

A small fixed network (3x3 conv, ReLU, global average pool, flatten, one FC
layer, sigmoid) scores every link of a deployment from a single input frame.
Links whose score falls below the threshold are dropped for that input; kept
links contribute fully (no soft scaling). Training is out of scope: weights
are either seeded pseudo-randomly or loaded from a weight file.

Weight file layout: 32-byte header (magic b"A3HN", then version, k_in, k_out,
H, W, L as little-endian u32, 4 zero pad bytes) followed by little-endian
float64 arrays in order conv_weights, conv_bias, fc_weights, fc_bias.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigFormatError, ValidationError
from .fuselink import Deployment

_MAGIC = b"A3HN"
_VERSION = 1
_HEADER = struct.Struct("<4s6I4x")  # 32 bytes

# Largest float64 strictly below 1.0; keeps scores inside the open interval
# even when the sigmoid saturates.
_ONE_BELOW = np.nextafter(1.0, 0.0)
_ZERO_ABOVE = np.nextafter(0.0, 1.0)


@dataclass(frozen=True)
class HyperNet:
    conv_weights: np.ndarray  # [k_out, k_in, 3, 3]
    conv_bias: np.ndarray     # [k_out]
    fc_weights: np.ndarray    # [L, k_out]
    fc_bias: np.ndarray       # [L]
    input_spec: tuple[int, int, int]  # (k_in, height, width)

    def __post_init__(self) -> None:
        k_in, h, w = self.input_spec
        if min(k_in, h, w) < 1:
            raise ValidationError("hypernet: input_spec dims must be positive")
        if self.conv_weights.shape != (self.k_out, k_in, 3, 3):
            raise ValidationError(
                f"hypernet: conv weights shape {self.conv_weights.shape} does not match "
                f"[k_out, {k_in}, 3, 3]")
        if self.conv_bias.shape != (self.k_out,):
            raise ValidationError("hypernet: conv bias shape mismatch")
        if self.fc_weights.shape != (self.num_links, self.k_out):
            raise ValidationError("hypernet: fc weights shape mismatch")
        if self.num_links < 1:
            raise ValidationError("hypernet: at least one link output required")
        for name, arr in (("conv_weights", self.conv_weights),
                          ("conv_bias", self.conv_bias),
                          ("fc_weights", self.fc_weights),
                          ("fc_bias", self.fc_bias)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"hypernet: {name} contains non-finite values")
        for arr in (self.conv_weights, self.conv_bias, self.fc_weights, self.fc_bias):
            arr.flags.writeable = False

    @property
    def k_out(self) -> int:
        return self.conv_weights.shape[0]

    @property
    def num_links(self) -> int:
        return self.fc_weights.shape[0]


@dataclass(frozen=True)
class GateVector:
    scores: tuple[float, ...]
    link_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.scores) != len(self.link_ids):
            raise ValidationError("gate vector: scores and link ids differ in length")
        for lid, s in zip(self.link_ids, self.scores):
            if not (0.0 < s < 1.0):
                raise ValidationError(f"gate vector: score for {lid!r} not in open (0,1): {s}")


@dataclass(frozen=True)
class Threshold:
    th: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.th <= 1.0):
            raise ValidationError(f"threshold {self.th} outside [0, 1]")


def _as_th(value: Threshold | float) -> float:
    if isinstance(value, Threshold):
        return value.th
    return Threshold(float(value)).th


def hypernet_init(seed: int, num_links: int,
                  input_spec: tuple[int, int, int] = (4, 32, 32),
                  k_out: int = 8) -> HyperNet:
    """Deterministic weights, uniform in [-0.5, 0.5], drawn from
    numpy's default_rng(seed) in the order conv, conv bias, fc, fc bias."""
    if num_links < 1:
        raise ValidationError("hypernet_init: num_links must be >= 1")
    k_in, h, w = input_spec
    if min(k_in, h, w, k_out) < 1:
        raise ValidationError("hypernet_init: zero-sized dims")
    rng = np.random.default_rng(seed)
    return HyperNet(
        conv_weights=rng.uniform(-0.5, 0.5, size=(k_out, k_in, 3, 3)),
        conv_bias=rng.uniform(-0.5, 0.5, size=(k_out,)),
        fc_weights=rng.uniform(-0.5, 0.5, size=(num_links, k_out)),
        fc_bias=rng.uniform(-0.5, 0.5, size=(num_links,)),
        input_spec=(k_in, h, w),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def hypernet_forward(hn: HyperNet, frame: np.ndarray,
                     link_ids: Sequence[str] | None = None) -> GateVector:
    """Score every link from one input frame.

    conv3x3 (stride 1, pad 1) -> ReLU -> global average pool -> FC -> sigmoid.
    Scores land strictly inside (0, 1).
    """
    k_in, h, w = hn.input_spec
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (k_in, h, w):
        raise ValidationError(
            f"hypernet_forward: input shape {frame.shape} does not match "
            f"input_spec {(k_in, h, w)}")
    if link_ids is None:
        link_ids = tuple(f"l{i}" for i in range(hn.num_links))
    if len(link_ids) != hn.num_links:
        raise ValidationError(
            f"hypernet_forward: {len(link_ids)} link ids for {hn.num_links} outputs")
    padded = np.pad(frame, ((0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    conv = np.einsum("cijuv,ocuv->oij", windows, hn.conv_weights) \
        + hn.conv_bias[:, None, None]
    pooled = np.maximum(conv, 0.0).mean(axis=(1, 2))
    logits = hn.fc_weights @ pooled + hn.fc_bias
    scores = np.clip(_sigmoid(logits), _ZERO_ABOVE, _ONE_BELOW)
    return GateVector(scores=tuple(float(s) for s in scores), link_ids=tuple(link_ids))


def prune(dep: Deployment, gates: GateVector, th: Threshold | float) -> Deployment:
    """Sub-deployment keeping exactly the links with score >= th."""
    if gates.link_ids != tuple(link.id for link in dep.links):
        raise ValidationError(
            f"prune: gate link ids {list(gates.link_ids)} do not match deployment "
            f"{[link.id for link in dep.links]}")
    cutoff = _as_th(th)
    kept = tuple(link for link, s in zip(dep.links, gates.scores) if s >= cutoff)
    return Deployment(name=dep.name, links=kept)


def threshold_sweep(dep: Deployment, gates: GateVector,
                    ths: Sequence[Threshold | float]) -> list[tuple[float, int, tuple[str, ...]]]:
    """One (th, kept_count, kept_link_ids) row per threshold; ths ascending."""
    values = [_as_th(t) for t in ths]
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValidationError("threshold_sweep: thresholds must be ascending")
    rows = []
    for th in values:
        kept = prune(dep, gates, th)
        rows.append((th, len(kept.links), tuple(link.id for link in kept.links)))
    return rows


def save_hypernet(hn: HyperNet, path: str) -> None:
    k_in, h, w = hn.input_spec
    header = _HEADER.pack(_MAGIC, _VERSION, k_in, hn.k_out, h, w, hn.num_links)
    payload = np.concatenate([
        hn.conv_weights.ravel(), hn.conv_bias.ravel(),
        hn.fc_weights.ravel(), hn.fc_bias.ravel(),
    ]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_hypernet(path: str) -> HyperNet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ConfigFormatError(f"{path}: truncated weight file")
    magic, version, k_in, k_out, h, w, num_links = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ConfigFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ConfigFormatError(f"{path}: unsupported version {version}")
    counts = (k_out * k_in * 9, k_out, num_links * k_out, num_links)
    expected = _HEADER.size + 8 * sum(counts)
    if len(raw) != expected:
        raise ConfigFormatError(
            f"{path}: payload is {len(raw)} bytes, header implies {expected}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    splits = np.cumsum(counts)[:-1]
    conv_w, conv_b, fc_w, fc_b = np.split(flat, splits)
    return HyperNet(
        conv_weights=conv_w.reshape(k_out, k_in, 3, 3),
        conv_bias=conv_b.copy(),
        fc_weights=fc_w.reshape(num_links, k_out),
        fc_bias=fc_b.copy(),
        input_spec=(k_in, h, w),
    )


def gates_to_csv(gates: GateVector) -> str:
    lines = ["link_id,score"]
    lines += [f"{lid},{score!r}" for lid, score in zip(gates.link_ids, gates.scores)]
    return "\n".join(lines) + "\n"


def synthetic_frame(seed: int, input_spec: tuple[int, int, int] = (4, 32, 32)) -> np.ndarray:
    """Seeded stand-in for a downsampled camera/depth frame, uniform [0, 1)."""
    rng = np.random.default_rng(seed)
    return rng.random(size=input_spec)
