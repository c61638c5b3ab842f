"""Cross-modality connections and their deployment.

A link runs from an "active" producer block in one modality to a "passive"
consumer block in the other, carrying a channel-adapting filter whose shape is
c_input x c_output x w x h (active output channels -> passive input channels).
The filtered feature is added element-wise at the passive input; when spatial
dims differ the filter absorbs the stride or a zero-cost nearest resize, so
only the channel fields ever depend on the endpoints.

Distance = passive level - active level and must be >= 1, which keeps the
fused task graph acyclic even for mirrored bidirectional pairs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError
from .netspec import DualNetwork, LayerSpec, Modality


@dataclass(frozen=True)
class FilterDims:
    c_input: int
    c_output: int
    w: int
    h: int

    def __post_init__(self) -> None:
        for name in ("c_input", "c_output", "w", "h"):
            if getattr(self, name) < 1:
                raise ValidationError(f"filter dims: {name} must be positive")

    @property
    def param_count(self) -> int:
        return self.c_input * self.c_output * self.w * self.h


@dataclass(frozen=True)
class LinkEndpoint:
    modality: Modality
    level: int
    layer_id: str


@dataclass(frozen=True)
class FuseLink:
    id: str
    active: LinkEndpoint
    passive: LinkEndpoint
    distance: int
    filter: FilterDims


@dataclass(frozen=True)
class Deployment:
    name: str
    links: tuple[FuseLink, ...]


def derive_fusefilter(active_layer: LayerSpec, passive_layer: LayerSpec,
                      kernel: tuple[int, int] = (1, 1)) -> FilterDims:
    """Filter shape adapting the active layer's output channels to the
    passive layer's input channels, with the given (w, h) kernel."""
    w, h = kernel
    return FilterDims(c_input=active_layer.out_channels,
                      c_output=passive_layer.in_channels, w=w, h=h)


def _opposite(modality: Modality) -> Modality:
    return Modality.DEPTH if modality is Modality.RGB else Modality.RGB


def link_id_for(active_modality: Modality, active_level: int,
                passive_modality: Modality, passive_level: int) -> str:
    return f"{active_modality.value}{active_level}->{passive_modality.value}{passive_level}"


def make_link(active: LinkEndpoint, passive: LinkEndpoint, nets: DualNetwork,
              kernel: tuple[int, int] = (1, 1), link_id: str | None = None) -> FuseLink:
    """Build a validated link between two endpoints of a dual network."""
    if active.modality is passive.modality:
        raise ValidationError(
            f"link {active.modality.value}{active.level}->{passive.modality.value}"
            f"{passive.level}: same modality on both endpoints")
    distance = passive.level - active.level
    if distance < 1:
        raise ValidationError(
            f"link {active.modality.value}{active.level}->{passive.modality.value}"
            f"{passive.level}: distance < 1 ({distance})")
    for ep, role in ((active, "active"), (passive, "passive")):
        net = nets.net(ep.modality)
        if not (0 <= ep.level < net.block_count):
            raise ValidationError(
                f"{role} endpoint {ep.modality.value} level {ep.level}: "
                f"out of range (block count {net.block_count})")
        expected = net.active_layer(ep.level) if role == "active" else net.passive_layer(ep.level)
        if ep.layer_id != expected.id:
            raise ValidationError(
                f"{role} endpoint {ep.modality.value} level {ep.level}: "
                f"layer {ep.layer_id!r} does not resolve (expected {expected.id!r})")
    active_layer = nets.net(active.modality).active_layer(active.level)
    passive_layer = nets.net(passive.modality).passive_layer(passive.level)
    lid = link_id or link_id_for(active.modality, active.level, passive.modality, passive.level)
    return FuseLink(id=lid, active=active, passive=passive, distance=distance,
                    filter=derive_fusefilter(active_layer, passive_layer, kernel))


def link_between(nets: DualNetwork, active_modality: Modality, active_level: int,
                 passive_level: int, kernel: tuple[int, int] = (1, 1)) -> FuseLink:
    """Convenience constructor resolving endpoint layer ids from levels."""
    passive_modality = _opposite(active_modality)
    active_net = nets.net(active_modality)
    passive_net = nets.net(passive_modality)
    if not (0 <= active_level < active_net.block_count):
        raise ValidationError(
            f"active level {active_level} out of range (block count {active_net.block_count})")
    if not (0 <= passive_level < passive_net.block_count):
        raise ValidationError(
            f"passive level {passive_level} out of range (block count {passive_net.block_count})")
    active = LinkEndpoint(active_modality, active_level,
                          active_net.active_layer(active_level).id)
    passive = LinkEndpoint(passive_modality, passive_level,
                           passive_net.passive_layer(passive_level).id)
    return make_link(active, passive, nets, kernel)


def validate_deployment(dep: Deployment, nets: DualNetwork) -> list[dict[str, str]]:
    """Collect every invariant violation as data; empty list means valid."""
    report: list[dict[str, str]] = []

    def flag(link_id: str, rule: str) -> None:
        report.append({"link_id": link_id, "rule": rule})

    seen_pairs: set[tuple[Modality, int, Modality, int]] = set()
    for link in dep.links:
        pair = (link.active.modality, link.active.level,
                link.passive.modality, link.passive.level)
        if pair in seen_pairs:
            flag(link.id, "duplicate endpoint pair")
        seen_pairs.add(pair)
        if link.active.modality is link.passive.modality:
            flag(link.id, "same modality on both endpoints")
            continue
        resolvable = True
        for ep, role in ((link.active, "active"), (link.passive, "passive")):
            net = nets.net(ep.modality)
            if not (0 <= ep.level < net.block_count):
                flag(link.id, f"{role} level {ep.level} out of range")
                resolvable = False
        if not resolvable:
            continue
        if link.distance != link.passive.level - link.active.level:
            flag(link.id, f"stored distance {link.distance} does not match levels")
        if link.passive.level - link.active.level < 1:
            flag(link.id, "distance < 1")
        active_layer = nets.net(link.active.modality).active_layer(link.active.level)
        passive_layer = nets.net(link.passive.modality).passive_layer(link.passive.level)
        if link.active.layer_id != active_layer.id:
            flag(link.id, f"active layer {link.active.layer_id!r} does not resolve")
        if link.passive.layer_id != passive_layer.id:
            flag(link.id, f"passive layer {link.passive.layer_id!r} does not resolve")
        if link.filter.c_input != active_layer.out_channels:
            flag(link.id, "filter/channel mismatch: c_input != active out_channels")
        if link.filter.c_output != passive_layer.in_channels:
            flag(link.id, "filter/channel mismatch: c_output != passive in_channels")
    return report


class Direction(str, Enum):
    RGB_TO_DEPTH = "unidirectional_rgb_to_depth"
    DEPTH_TO_RGB = "unidirectional_depth_to_rgb"
    BIDIRECTIONAL = "bidirectional"


_DIRECTION_TAGS = {
    Direction.RGB_TO_DEPTH: "r2d",
    Direction.DEPTH_TO_RGB: "d2r",
    Direction.BIDIRECTIONAL: "bi",
}


@dataclass(frozen=True)
class EnumerationPolicy:
    direction: Direction
    distances: frozenset[int]
    levels: frozenset[int]
    max_links: int
    kernel: tuple[int, int] = (1, 1)

    def __post_init__(self) -> None:
        if not self.distances:
            raise ValidationError("enumeration policy: empty distance set")
        if not self.levels:
            raise ValidationError("enumeration policy: empty level set")
        if self.max_links < 1:
            raise ValidationError("enumeration policy: max_links must be >= 1")


def enumerate_deployments(nets: DualNetwork, policy: EnumerationPolicy) -> list[Deployment]:
    """All deployments formable from the policy's (level, distance) slots.

    Each slot yields one link in the chosen direction (two mirrored links when
    bidirectional); every non-empty slot subset with at most max_links links
    becomes one deployment, ordered by slot count then slot indices.
    """
    slots = [(level, dist)
             for level in sorted(policy.levels)
             for dist in sorted(policy.distances)
             if 0 <= level and level + dist <= nets.block_count - 1 and dist >= 1]
    tag = _DIRECTION_TAGS[policy.direction]
    links_per_slot = 2 if policy.direction is Direction.BIDIRECTIONAL else 1
    max_slots = min(len(slots), policy.max_links // links_per_slot)
    deployments: list[Deployment] = []
    for k in range(1, max_slots + 1):
        for combo in itertools.combinations(slots, k):
            links: list[FuseLink] = []
            for level, dist in combo:
                if policy.direction in (Direction.RGB_TO_DEPTH, Direction.BIDIRECTIONAL):
                    links.append(link_between(nets, Modality.RGB, level, level + dist,
                                              policy.kernel))
                if policy.direction in (Direction.DEPTH_TO_RGB, Direction.BIDIRECTIONAL):
                    links.append(link_between(nets, Modality.DEPTH, level, level + dist,
                                              policy.kernel))
            name = tag + "_" + "-".join(f"L{lv}D{d}" for lv, d in combo)
            deployments.append(Deployment(name=name, links=tuple(links)))
    return deployments


def _has_mirror(link: FuseLink, dep: Deployment) -> bool:
    return any(other.active.modality is link.passive.modality
               and other.active.level == link.active.level
               and other.distance == link.distance
               for other in dep.links if other is not link)


def deployment_score(dep: Deployment, nets: DualNetwork) -> int:
    """Exploration-ordering heuristic: low levels and distance 1 score high,
    mirrored pairs get a bonus. Not a predicted accuracy."""
    b = nets.block_count
    score = 0
    for link in dep.links:
        dist_weight = 2 if link.distance == 1 else 1
        score += (b - link.active.level) * dist_weight
        if _has_mirror(link, dep):
            score += 1
    return score


def rank_deployments(deps: list[Deployment], nets: DualNetwork) -> list[Deployment]:
    """Stable descending order by deployment_score; ties break toward fewer
    links, then by name. Every deployment must validate against nets."""
    for dep in deps:
        violations = validate_deployment(dep, nets)
        if violations:
            first = violations[0]
            raise ValidationError(
                f"deployment {dep.name!r} does not validate against this network: "
                f"link {first['link_id']!r}: {first['rule']}")
    return sorted(deps, key=lambda d: (-deployment_score(d, nets), len(d.links), d.name))


# ---------------------------------------------------------------------------
# Serialization: filter dims are derived on load so files cannot go stale.
# ---------------------------------------------------------------------------

def deployment_to_doc(dep: Deployment) -> dict:
    return {
        "name": dep.name,
        "links": [
            {
                "id": link.id,
                "active": {"modality": link.active.modality.value,
                           "level": link.active.level},
                "passive": {"modality": link.passive.modality.value,
                            "level": link.passive.level},
                "kernel": [link.filter.w, link.filter.h],
            }
            for link in dep.links
        ],
    }


def _endpoint_from_doc(obj: object, link_label: str, key: str) -> tuple[Modality, int]:
    if not isinstance(obj, dict):
        raise ValidationError(f"link {link_label!r}: {key} must be an object")
    unknown = set(obj) - {"modality", "level"}
    if unknown:
        raise ValidationError(f"link {link_label!r}: {key} has unknown keys {sorted(unknown)}")
    try:
        modality = Modality(obj["modality"])
    except (KeyError, ValueError):
        raise ValidationError(
            f"link {link_label!r}: {key} has invalid modality {obj.get('modality')!r}") from None
    level = obj.get("level")
    if not isinstance(level, int):
        raise ValidationError(f"link {link_label!r}: {key} level must be an integer")
    return modality, level


def deployment_from_doc(doc: object, nets: DualNetwork) -> Deployment:
    if not isinstance(doc, dict):
        raise ValidationError("deployment document must be an object")
    unknown = set(doc) - {"name", "links"}
    if unknown:
        raise ValidationError(f"deployment: unknown keys {sorted(unknown)}")
    name = doc.get("name")
    if not isinstance(name, str):
        raise ValidationError("deployment: 'name' must be a string")
    raw_links = doc.get("links", [])
    if not isinstance(raw_links, list):
        raise ValidationError(f"deployment {name!r}: 'links' must be a list")
    links: list[FuseLink] = []
    for entry in raw_links:
        if not isinstance(entry, dict):
            raise ValidationError(f"deployment {name!r}: each link must be an object")
        unknown = set(entry) - {"id", "active", "passive", "kernel"}
        if unknown:
            raise ValidationError(
                f"link {entry.get('id', '?')!r}: unknown keys {sorted(unknown)}")
        label = entry.get("id", "?")
        a_mod, a_level = _endpoint_from_doc(entry.get("active"), label, "active")
        p_mod, p_level = _endpoint_from_doc(entry.get("passive"), label, "passive")
        kernel = entry.get("kernel", [1, 1])
        if (not isinstance(kernel, list) or len(kernel) != 2
                or not all(isinstance(v, int) for v in kernel)):
            raise ValidationError(f"link {label!r}: kernel must be [w, h] integers")
        if a_mod is p_mod:
            raise ValidationError(f"link {label!r}: same modality on both endpoints")
        active_net = nets.net(a_mod)
        passive_net = nets.net(p_mod)
        for mod_net, level, role in ((active_net, a_level, "active"),
                                     (passive_net, p_level, "passive")):
            if not (0 <= level < mod_net.block_count):
                raise ValidationError(f"link {label!r}: {role} level {level} out of range")
        link = make_link(
            LinkEndpoint(a_mod, a_level, active_net.active_layer(a_level).id),
            LinkEndpoint(p_mod, p_level, passive_net.passive_layer(p_level).id),
            nets, kernel=(kernel[0], kernel[1]),
            link_id=entry.get("id") or None)
        links.append(link)
    dep = Deployment(name=name, links=tuple(links))
    violations = validate_deployment(dep, nets)
    if violations:
        first = violations[0]
        raise ValidationError(f"link {first['link_id']!r}: {first['rule']}")
    return dep
