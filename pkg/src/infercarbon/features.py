"""Fixed-width numeric features for costed kernel graphs, and graph export.

Each node carries a one-hot kernel-type block, its dimension vector and two
cost/performance sets (prefill and decode).  The type and dimension slots are
the same for both phases, so they are stored once; the phase-specific slots
are operation count, memory bytes, network bytes and Roofline performance.
Numeric slots span many orders of magnitude, so they are log1p-transformed
and standardized with statistics fitted on the training split only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .arch import KIND_ORDER, InferenceConfig, KernelGraph, KernelKind, KernelNode, LlmArchitecture
from .costmodel import CostTriple, LayerTotals, Phase, kernel_cost, layer_totals, model_totals
from .roofline import GpuSpec, node_performance

NUM_KINDS = len(KIND_ORDER)
_KIND_INDEX = {kind: i for i, kind in enumerate(KIND_ORDER)}

NODE_NUMERIC_SLOTS = 6 + 8  # dims, then (ops, mem, net, perf) per phase
NODE_FEATURE_WIDTH = NUM_KINDS + NODE_NUMERIC_SLOTS
GLOBAL_FEATURE_WIDTH = 11

GLOBAL_SLOT_NAMES = (
    "quant_bitwidth",
    "hidden_size",
    "intermediate_size",
    "head_count",
    "layer_count",
    "batch_size",
    "prompt_length",
    "generated_tokens",
    "total_flops",
    "total_mem_bytes",
    "total_net_bytes",
)


class NonFiniteFeature(ValueError):
    """A feature slot came out NaN or infinite."""


class UnknownFormat(ValueError):
    """Unsupported graph export format."""


@dataclass(frozen=True)
class FeatureStats:
    """log1p-space mean/std per numeric slot, fitted on the training split."""

    node_mean: np.ndarray
    node_std: np.ndarray
    global_mean: np.ndarray
    global_std: np.ndarray

    def to_dict(self) -> dict:
        return {
            "node_mean": self.node_mean.tolist(),
            "node_std": self.node_std.tolist(),
            "global_mean": self.global_mean.tolist(),
            "global_std": self.global_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(
            node_mean=np.asarray(d["node_mean"], dtype=np.float64),
            node_std=np.asarray(d["node_std"], dtype=np.float64),
            global_mean=np.asarray(d["global_mean"], dtype=np.float64),
            global_std=np.asarray(d["global_std"], dtype=np.float64),
        )


def identity_stats() -> FeatureStats:
    """Zero-mean / unit-std stats: features stay plain log1p values."""
    return FeatureStats(
        node_mean=np.zeros(NODE_NUMERIC_SLOTS),
        node_std=np.ones(NODE_NUMERIC_SLOTS),
        global_mean=np.zeros(GLOBAL_FEATURE_WIDTH),
        global_std=np.ones(GLOBAL_FEATURE_WIDTH),
    )


@dataclass(frozen=True)
class RawGraphFeatures:
    """Pre-transform per-node and global numbers of one costed graph."""

    kinds: tuple[KernelKind, ...]
    dims: tuple[tuple[int, ...], ...]
    node_numeric: np.ndarray  # (n, NODE_NUMERIC_SLOTS), raw magnitudes
    edges: tuple[tuple[int, int], ...]
    global_numeric: np.ndarray  # (GLOBAL_FEATURE_WIDTH,), raw magnitudes


@dataclass(frozen=True)
class FeaturizedGraph:
    """Standardized node features, neighbor-averaging matrix and global vector."""

    features: np.ndarray  # (n, NODE_FEATURE_WIDTH)
    agg: np.ndarray  # (n, n) row-normalized undirected adjacency
    global_features: np.ndarray  # (GLOBAL_FEATURE_WIDTH,)
    raw: RawGraphFeatures

    @property
    def node_count(self) -> int:
        return self.features.shape[0]


def _standardize(raw: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    transformed = np.log1p(raw.astype(np.float64))
    out = np.zeros_like(transformed)
    nonzero = std != 0
    out[..., nonzero] = (transformed[..., nonzero] - mean[nonzero]) / std[nonzero]
    if not np.all(np.isfinite(out)):
        raise NonFiniteFeature("standardized feature has a non-finite entry")
    return out


def _node_numeric_row(
    node: KernelNode,
    cost_pre: CostTriple,
    cost_dec: CostTriple,
    p_pre: float,
    p_dec: float,
) -> np.ndarray:
    return np.array(
        list(node.dims)
        + [cost_pre.ops, cost_pre.mem_bytes, cost_pre.net_bytes, p_pre]
        + [cost_dec.ops, cost_dec.mem_bytes, cost_dec.net_bytes, p_dec],
        dtype=np.float64,
    )


def encode_node(
    node: KernelNode,
    cost_pre: CostTriple,
    cost_dec: CostTriple,
    p_pre: float,
    p_dec: float,
    stats: FeatureStats,
) -> np.ndarray:
    """One node's feature vector: one-hot kind, then standardized numerics."""
    onehot = np.zeros(NUM_KINDS)
    onehot[_KIND_INDEX[node.kind]] = 1.0
    numeric = _standardize(
        _node_numeric_row(node, cost_pre, cost_dec, p_pre, p_dec),
        stats.node_mean,
        stats.node_std,
    )
    return np.concatenate([onehot, numeric])


def _global_numeric_row(
    arch: LlmArchitecture, cfg: InferenceConfig, totals: LayerTotals
) -> np.ndarray:
    flops = totals.prefill.ops + totals.decode.ops
    mem = totals.prefill.mem_bytes + totals.decode.mem_bytes
    net = totals.prefill.net_bytes + totals.decode.net_bytes
    return np.array(
        [
            arch.weight_dtype.bitwidth,
            arch.hidden_size,
            arch.intermediate_size,
            arch.head_count,
            arch.layer_count,
            cfg.batch_size,
            cfg.prompt_length,
            cfg.generated_tokens,
            flops,
            mem,
            net,
        ],
        dtype=np.float64,
    )


def encode_global(
    arch: LlmArchitecture, cfg: InferenceConfig, totals: LayerTotals, stats: FeatureStats
) -> np.ndarray:
    """Whole-request feature vector from architecture, request and model totals."""
    return _standardize(_global_numeric_row(arch, cfg, totals), stats.global_mean, stats.global_std)


def _aggregation_matrix(n: int, edges) -> np.ndarray:
    neighbors: list[set[int]] = [set() for _ in range(n)]
    for src, dst in edges:
        neighbors[src].add(dst)
        neighbors[dst].add(src)
    agg = np.zeros((n, n))
    for v, nset in enumerate(neighbors):
        if nset:
            weight = 1.0 / len(nset)
            for u in sorted(nset):
                agg[v, u] = weight
    return agg


def raw_featurize(
    graph: KernelGraph,
    arch: LlmArchitecture,
    cfg: InferenceConfig,
    gpu: GpuSpec,
    corrected: bool = False,
) -> RawGraphFeatures:
    """Cost every node for both phases and collect the raw feature numbers.

    Roofline performance uses the activation data type's peak throughput.
    """
    dtype = arch.activation_dtype
    rows = []
    for node in graph.nodes:
        is_ar = node.kind is KernelKind.ALL_REDUCE
        cost_pre = kernel_cost(node, arch, cfg, gpu.s_block, Phase.PREFILL, corrected=corrected)
        cost_dec = kernel_cost(node, arch, cfg, gpu.s_block, Phase.DECODE, corrected=corrected)
        p_pre = node_performance(cost_pre, gpu, dtype, is_ar)
        p_dec = node_performance(cost_dec, gpu, dtype, is_ar)
        rows.append(_node_numeric_row(node, cost_pre, cost_dec, p_pre, p_dec))
    totals = model_totals(
        layer_totals(graph, arch, cfg, gpu.s_block, corrected=corrected), arch.layer_count
    )
    return RawGraphFeatures(
        kinds=tuple(node.kind for node in graph.nodes),
        dims=tuple(node.dims for node in graph.nodes),
        node_numeric=np.vstack(rows),
        edges=graph.edges,
        global_numeric=_global_numeric_row(arch, cfg, totals),
    )


def featurize_raw(raw: RawGraphFeatures, stats: FeatureStats) -> FeaturizedGraph:
    """Standardize an already-costed graph with the given statistics."""
    n = len(raw.kinds)
    onehot = np.zeros((n, NUM_KINDS))
    for i, kind in enumerate(raw.kinds):
        onehot[i, _KIND_INDEX[kind]] = 1.0
    numeric = _standardize(raw.node_numeric, stats.node_mean, stats.node_std)
    features = np.hstack([onehot, numeric])
    global_features = _standardize(raw.global_numeric, stats.global_mean, stats.global_std)
    return FeaturizedGraph(
        features=features,
        agg=_aggregation_matrix(n, raw.edges),
        global_features=global_features,
        raw=raw,
    )


def featurize(
    graph: KernelGraph,
    arch: LlmArchitecture,
    cfg: InferenceConfig,
    gpu: GpuSpec,
    stats: FeatureStats,
    corrected: bool = False,
) -> FeaturizedGraph:
    """Full pipeline: cost model + Roofline + encoding, deterministic."""
    return featurize_raw(raw_featurize(graph, arch, cfg, gpu, corrected=corrected), stats)


def fit_stats(raws: list[RawGraphFeatures]) -> FeatureStats:
    """Fit per-slot log1p mean/std over a training split."""
    if not raws:
        raise ValueError("cannot fit feature statistics on an empty split")
    node_rows = np.log1p(np.vstack([r.node_numeric for r in raws]))
    global_rows = np.log1p(np.vstack([r.global_numeric for r in raws]))
    return FeatureStats(
        node_mean=node_rows.mean(axis=0),
        node_std=node_rows.std(axis=0),
        global_mean=global_rows.mean(axis=0),
        global_std=global_rows.std(axis=0),
    )


def _graph_json_obj(raw: RawGraphFeatures) -> dict:
    nodes = []
    for i, kind in enumerate(raw.kinds):
        row = raw.node_numeric[i]
        nodes.append(
            {
                "id": i,
                "kind": kind.value,
                "dims": [int(x) for x in raw.dims[i]],
                "prefill": {
                    "ops": int(row[6]),
                    "mem_bytes": int(row[7]),
                    "net_bytes": int(row[8]),
                    "performance": float(row[9]),
                },
                "decode": {
                    "ops": int(row[10]),
                    "mem_bytes": int(row[11]),
                    "net_bytes": int(row[12]),
                    "performance": float(row[13]),
                },
            }
        )
    global_fields = {
        name: (float(v) if name.startswith("total") else int(v))
        for name, v in zip(GLOBAL_SLOT_NAMES, raw.global_numeric)
    }
    return {
        "format": "infercarbon-graph",
        "version": 1,
        "nodes": nodes,
        "edges": [[int(s), int(d)] for s, d in raw.edges],
        "global": global_fields,
    }


def export_graph(fg: FeaturizedGraph, format: str = "json") -> str:
    """Serialize a featurized graph: 'json' with raw features, or 'dot'."""
    if format == "json":
        return json.dumps(_graph_json_obj(fg.raw), indent=2)
    if format == "dot":
        lines = ["digraph layer {"]
        for i, kind in enumerate(fg.raw.kinds):
            lines.append(f'  n{i} [label="{kind.value}"];')
        for src, dst in fg.raw.edges:
            lines.append(f"  n{src} -> n{dst};")
        lines.append("}")
        return "\n".join(lines)
    raise UnknownFormat(f"unknown graph format '{format}' (expected 'json' or 'dot')")
