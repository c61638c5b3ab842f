"""Command-line front end.

One JSON config file describes an experiment (network, deployment, arch
overrides, gating setup, thresholds); flags override the file. stdout carries
only machine-readable JSON; logging goes to stderr, controlled by the
A3SIM_LOG environment variable (error, info, debug).

Exit codes: 0 success, 1 domain/validation error, 2 I/O or config-syntax
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigFormatError, ValidationError
from .fuselink import (
    Deployment, Direction, EnumerationPolicy, deployment_from_doc,
    deployment_score, deployment_to_doc, enumerate_deployments,
    rank_deployments, validate_deployment,
)
from .hypergate import (
    hypernet_forward, hypernet_init, load_hypernet, synthetic_frame,
)
from .netspec import DualNetwork, builtin_preset, parse_dual_network
from .simulator import (
    ArchConfig, ArchMode, arch_from_overrides, build_taskgraph, compare,
    run_experiment, sim_result_from_doc, simulate, trace_to_csv,
)

log = logging.getLogger("a3sim")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("A3SIM_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_json_file(path: str) -> object:
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFormatError(
            f"{path}: JSON syntax error at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from None


def _load_config(args: argparse.Namespace) -> dict:
    if not args.config:
        return {}
    doc = _load_json_file(args.config)
    if not isinstance(doc, dict):
        raise ValidationError(f"{args.config}: config must be a JSON object")
    return doc


def _resolve_network(cfg: dict) -> DualNetwork:
    section = cfg.get("network")
    if not isinstance(section, dict):
        raise ValidationError("config: 'network' section required "
                              "({'preset': name} or {'path': file})")
    has_preset = "preset" in section
    has_path = "path" in section
    if has_preset == has_path:
        raise ValidationError("config: network needs exactly one of 'preset' or 'path'")
    if has_preset:
        return builtin_preset(section["preset"])
    return parse_dual_network(_read_text(section["path"]))


def _resolve_deployment(cfg: dict, nets: DualNetwork) -> Deployment:
    section = cfg.get("deployment")
    if section is None:
        return Deployment(name="empty", links=())
    if not isinstance(section, dict):
        raise ValidationError("config: 'deployment' must be an object")
    if "path" in section:
        return deployment_from_doc(_load_json_file(section["path"]), nets)
    if "links" in section or "name" in section:
        return deployment_from_doc(section, nets)
    if "policy" in section:
        raise ValidationError(
            "config: an enumeration policy only drives the 'enumerate' command; "
            "this command needs a concrete deployment ('path' or 'links')")
    raise ValidationError("config: deployment needs 'path', inline 'links', or 'policy'")


def _resolve_policy(cfg: dict) -> EnumerationPolicy:
    section = cfg.get("deployment", {})
    policy = section.get("policy") if isinstance(section, dict) else None
    if not isinstance(policy, dict):
        raise ValidationError("config: enumerate needs deployment.policy")
    unknown = set(policy) - {"direction", "distances", "levels", "max_links", "kernel"}
    if unknown:
        raise ValidationError(f"config: policy has unknown keys {sorted(unknown)}")
    try:
        direction = Direction(policy.get("direction", ""))
    except ValueError:
        raise ValidationError(
            f"config: unknown direction {policy.get('direction')!r}") from None
    kernel = policy.get("kernel", [1, 1])
    if not (isinstance(kernel, list) and len(kernel) == 2
            and all(isinstance(v, int) for v in kernel)):
        raise ValidationError("config: policy kernel must be [w, h] integers")
    return EnumerationPolicy(
        direction=direction,
        distances=frozenset(policy.get("distances", [])),
        levels=frozenset(policy.get("levels", [])),
        max_links=policy.get("max_links", 0),
        kernel=(kernel[0], kernel[1]),
    )


def _resolve_arch(cfg: dict) -> ArchConfig:
    overrides = cfg.get("arch", {})
    if not isinstance(overrides, dict):
        raise ValidationError("config: 'arch' must be an object of overrides")
    return arch_from_overrides(overrides)


def _resolve_modes(args: argparse.Namespace, cfg: dict) -> list[ArchMode]:
    """Explicit flag wins, then a mode pinned in the config's arch section,
    then both architectures."""
    pinned = args.arch_mode
    if pinned is None:
        arch_section = cfg.get("arch")
        if isinstance(arch_section, dict):
            pinned = arch_section.get("mode")
    if pinned is None or pinned == "both":
        return [ArchMode.BASELINE, ArchMode.FUSE_MULTITASKING]
    try:
        return [ArchMode(pinned)]
    except ValueError:
        raise ValidationError(f"unknown arch mode {pinned!r}") from None


def _resolve_gates(cfg: dict, args: argparse.Namespace, dep: Deployment):
    section = cfg.get("hypernet")
    if section is None:
        raise ValidationError("config: sweep needs a 'hypernet' section")
    if not isinstance(section, dict):
        raise ValidationError("config: 'hypernet' must be an object")
    unknown = set(section) - {"seed", "weights", "input", "synthetic", "input_spec", "k_out"}
    if unknown:
        raise ValidationError(f"config: hypernet has unknown keys {sorted(unknown)}")
    if not dep.links:
        raise ValidationError("config: sweep needs a deployment with at least one link")
    seed = args.seed if args.seed is not None else section.get("seed", 0)
    spec = section.get("input_spec", [4, 32, 32])
    if not (isinstance(spec, list) and len(spec) == 3
            and all(isinstance(v, int) for v in spec)):
        raise ValidationError("config: hypernet input_spec must be [channels, h, w]")
    input_spec = (spec[0], spec[1], spec[2])
    if "weights" in section:
        hn = load_hypernet(section["weights"])
        if hn.num_links != len(dep.links):
            raise ValidationError(
                f"hypernet weights score {hn.num_links} links but the deployment "
                f"has {len(dep.links)}")
    else:
        hn = hypernet_init(seed, num_links=len(dep.links), input_spec=input_spec,
                           k_out=section.get("k_out", 8))
    if "input" in section:
        frame = np.load(section["input"])
    else:
        frame = synthetic_frame(seed, hn.input_spec)
    return hypernet_forward(hn, frame, link_ids=[link.id for link in dep.links])


def _out_dir(cfg: dict, args: argparse.Namespace) -> Path:
    out = args.out or cfg.get("output") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    try:
        nets = _resolve_network(cfg)
        dep = _resolve_deployment(cfg, nets)
    except ValidationError as exc:
        _emit({"status": "invalid", "violations": [{"rule": str(exc)}]})
        return 1
    violations = validate_deployment(dep, nets)
    if violations:
        _emit({"status": "invalid", "violations": violations})
        return 1
    _emit({
        "status": "ok",
        "network": {"blocks": nets.block_count,
                    "rgb_layers": sum(len(b) for b in nets.rgb.blocks),
                    "depth_layers": sum(len(b) for b in nets.depth.blocks)},
        "deployment": {"name": dep.name, "links": len(dep.links)},
        "violations": [],
    })
    return 0


def cmd_enumerate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    nets = _resolve_network(cfg)
    policy = _resolve_policy(cfg)
    deps = enumerate_deployments(nets, policy)
    if not deps:
        raise ValidationError("enumeration produced no deployments "
                              "(no (level, distance) slot fits this network)")
    ranked = rank_deployments(deps, nets)
    out = _out_dir(cfg, args)
    index_rows = ["rank,name,score,num_links,file"]
    for rank, dep in enumerate(ranked, start=1):
        fname = f"dep_{dep.name}.json"
        (out / fname).write_text(json.dumps(deployment_to_doc(dep), indent=2) + "\n",
                                 encoding="utf-8")
        index_rows.append(
            f"{rank},{dep.name},{deployment_score(dep, nets)},{len(dep.links)},{fname}")
        log.info("wrote %s", fname)
    (out / "index.csv").write_text("\n".join(index_rows) + "\n", encoding="utf-8")
    _emit({"status": "ok", "deployments": len(ranked), "out": str(out),
           "index": str(out / "index.csv")})
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    nets = _resolve_network(cfg)
    dep = _resolve_deployment(cfg, nets)
    base_arch = _resolve_arch(cfg)
    results = []
    for mode in _resolve_modes(args, cfg):
        arch = base_arch.with_mode(mode)
        graph = build_taskgraph(nets, dep)
        res = simulate(graph, nets, arch)
        results.append((mode.value, res))
        log.info("%s: %d cycles", mode.value, res.total_cycles)
    doc = {
        "status": "ok",
        "deployment": {"name": dep.name, "links": len(dep.links)},
        "arch": base_arch.to_doc(),
        "results": {label: res.to_doc() for label, res in results},
    }
    if len(results) >= 2:
        doc["compare"] = compare(results)
    if args.trace:
        out = _out_dir(cfg, args)
        doc["traces"] = {}
        for label, res in results:
            tpath = out / f"trace_{label}.csv"
            tpath.write_text(trace_to_csv(res.events), encoding="utf-8")
            doc["traces"][label] = str(tpath)
    _emit(doc)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    nets = _resolve_network(cfg)
    dep = _resolve_deployment(cfg, nets)
    base_arch = _resolve_arch(cfg)
    thresholds = cfg.get("thresholds")
    if not isinstance(thresholds, list) or not thresholds:
        raise ValidationError("config: sweep needs a non-empty 'thresholds' list")
    values = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValidationError("config: thresholds must be ascending")
    gates = _resolve_gates(cfg, args, dep)
    rows = ["th,kept_links,total_macs,baseline_cycles,fuse_multitasking_cycles,"
            "latency_ms,delta_pct"]
    for th in values:
        base = run_experiment(nets, dep, base_arch.with_mode(ArchMode.BASELINE),
                              gates=gates, th=th)
        fused = run_experiment(nets, dep,
                               base_arch.with_mode(ArchMode.FUSE_MULTITASKING),
                               gates=gates, th=th)
        kept = sum(1 for s in gates.scores if s >= th)
        macs = base.total_macs
        delta = (100.0 * (fused.total_cycles - base.total_cycles) / base.total_cycles
                 if base.total_cycles else 0.0)
        rows.append(f"{th!r},{kept},{macs},{base.total_cycles},{fused.total_cycles},"
                    f"{fused.latency_ms!r},{delta!r}")
    out = _out_dir(cfg, args)
    csv_path = out / "sweep.csv"
    csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    _emit({"status": "ok", "rows": len(values), "csv": str(csv_path)})
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    results = []
    for path in args.results:
        doc = _load_json_file(path)
        if not isinstance(doc, dict):
            raise ValidationError(f"{path}: not a simulation result document")
        results.append((Path(path).stem, sim_result_from_doc(doc)))
    _emit({"status": "ok", "compare": compare(results)})
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON file")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--seed", type=int, default=None,
                        help="seed override for hypernet weights and synthetic input")
    common.add_argument("--arch-mode", default=None,
                        choices=[ArchMode.BASELINE.value,
                                 ArchMode.FUSE_MULTITASKING.value, "both"],
                        help="pin one architecture or run both (default: both, "
                             "unless the config pins a mode)")
    common.add_argument("--trace", action="store_true",
                        help="write per-task event traces as CSV")

    parser = argparse.ArgumentParser(
        prog="a3sim",
        description="Dual-modality CNN fusion latency and cost modeling")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common],
                       help="check a network + deployment config")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("enumerate", parents=[common],
                       help="enumerate and rank deployments from a policy")
    p.set_defaults(func=cmd_enumerate)
    p = sub.add_parser("simulate", parents=[common],
                       help="simulate a deployment on one or both architectures")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("sweep", parents=[common],
                       help="threshold sweep: prune, simulate, write sweep.csv")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("compare", parents=[common],
                       help="compare saved simulation result JSON files")
    p.add_argument("results", nargs="+", help="SimResult JSON files (first = baseline)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        log.error("%s", exc)
        _emit({"status": "error", "kind": "validation", "detail": str(exc)})
        return 1
    except ConfigFormatError as exc:
        log.error("%s", exc)
        _emit({"status": "error", "kind": "config_syntax", "detail": str(exc)})
        return 2
    except OSError as exc:
        log.error("%s", exc)
        _emit({"status": "error", "kind": "io", "detail": str(exc)})
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
