"""Dual-modality CNN fusion cost and latency modeling toolkit."""

from .errors import A3SimError, ConfigFormatError, ValidationError
from .netspec import (
    DualNetwork, LayerKind, LayerSpec, Modality, NetworkSpec,
    builtin_preset, dual_network_from_doc, dual_network_to_doc, output_shape,
    parse_dual_network, serialize_dual_network,
)
from .fuselink import (
    Deployment, Direction, EnumerationPolicy, FilterDims, FuseLink,
    LinkEndpoint, deployment_from_doc, deployment_score, deployment_to_doc,
    derive_fusefilter, enumerate_deployments, link_between, make_link,
    rank_deployments, validate_deployment,
)
from .hypergate import (
    GateVector, HyperNet, Threshold, gates_to_csv, hypernet_forward,
    hypernet_init, load_hypernet, prune, save_hypernet, synthetic_frame,
    threshold_sweep,
)
from .costmodel import (
    CostReport, StorageReport, deployment_cost, layer_cost, link_cost,
    storage_footprint,
)
from .simulator import (
    ArchConfig, ArchMode, ArrayStats, SimResult, Task, TaskGraph, TaskKind,
    TraceEvent, arch_from_overrides, build_taskgraph, compare, replay_verify,
    run_experiment, sim_result_from_doc, simulate, topological_order,
    trace_from_csv, trace_to_csv,
)

__version__ = "0.1.0"
