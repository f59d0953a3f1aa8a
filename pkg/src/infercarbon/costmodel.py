"""Per-kernel operation counts, memory traffic and network traffic.

Every cost is evaluated for the prefill phase (all prompt tokens at once) and
the decode phase (token-by-token generation against the KV cache).  Counts
and byte totals are computed as exact rationals — products of integer factors
divided by the GPU count (and the /2 factors in the attention terms) — and
floored exactly once when the final quantity is assembled.  This keeps the
equality tests against the brute-force counting oracle free of float drift.

Two deliberate quirks of the cost equations are preserved in the default
("faithful") mode rather than silently repaired:

* the fused-attention memory total counts the KV-cache load twice and omits
  the activation store; ``corrected=True`` swaps the duplicated KV term for
  the activation-store term instead,
* linear kernels reload their weights once per generated token during decode,
  while prefill loads them a single time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

from .arch import (
    ATTN_MATMUL_KINDS,
    ELEMENTWISE_KINDS,
    LINEAR_KINDS,
    DataType,
    InferenceConfig,
    KernelGraph,
    KernelKind,
    KernelNode,
    LlmArchitecture,
    RangeError,
)


class UnsupportedKind(ValueError):
    """Kernel kind is not handled by the requested cost equation."""


class PartitionError(ValueError):
    """All-reduce partition dimension does not divide across the GPUs."""


class Phase(enum.Enum):
    PREFILL = "prefill"
    DECODE = "decode"


@dataclass(frozen=True)
class CostTriple:
    """Operation count, memory bytes and network bytes of one kernel."""

    ops: int
    mem_bytes: int
    net_bytes: int

    def __add__(self, other: "CostTriple") -> "CostTriple":
        return CostTriple(
            self.ops + other.ops,
            self.mem_bytes + other.mem_bytes,
            self.net_bytes + other.net_bytes,
        )

    def scaled(self, factor: int) -> "CostTriple":
        return CostTriple(self.ops * factor, self.mem_bytes * factor, self.net_bytes * factor)

    def is_zero(self) -> bool:
        return self.ops == 0 and self.mem_bytes == 0 and self.net_bytes == 0


ZERO_COST = CostTriple(0, 0, 0)


@dataclass(frozen=True)
class LayerTotals:
    """Component-wise cost sums over every kernel of one layer, per phase."""

    prefill: CostTriple
    decode: CostTriple


def _floor(x: Fraction) -> int:
    return math.floor(x)


def _token_factor(cfg: InferenceConfig, phase: Phase) -> int:
    # decode iterates over the generated tokens after the first; prefill over
    # the whole prompt
    if phase is Phase.DECODE:
        return cfg.generated_tokens - 1
    return cfg.prompt_length


def linear_dims(kind: KernelKind, arch: LlmArchitecture) -> tuple[int, int]:
    """(input, output) dimensions of a linear kernel's weight matrix."""
    h = arch.hidden_size
    d_h = arch.hidden_size // arch.head_count
    if kind in (KernelKind.Q_PROJ, KernelKind.OUT_PROJ):
        return (h, h)
    if kind in (KernelKind.K_PROJ, KernelKind.V_PROJ):
        return (h, d_h * arch.kv_head_count)
    if kind in (KernelKind.GATE_PROJ, KernelKind.UP_PROJ):
        return (h, arch.intermediate_size)
    if kind is KernelKind.DOWN_PROJ:
        return (arch.intermediate_size, h)
    raise UnsupportedKind(f"{kind.name} is not a linear kernel")


def linear_cost(
    kind: KernelKind, arch: LlmArchitecture, cfg: InferenceConfig, phase: Phase
) -> CostTriple:
    """Projection / MLP GEMM cost.

    Memory is weight load + activation load + one store stream.  Only K and V
    projections store plain activations; every other linear kernel stores into
    the KV cache instead (the roles differ only when the activation and
    KV-cache data types differ).
    """
    if kind not in LINEAR_KINDS:
        raise UnsupportedKind(f"{kind.name} is not a linear kernel")
    d_in, d_out = linear_dims(kind, arch)
    b = cfg.batch_size
    g = cfg.gpu_count
    d_w = arch.weight_dtype.width
    d_a = arch.activation_dtype.width
    d_kv = arch.kv_dtype.width
    t = _token_factor(cfg, phase)

    ops = Fraction(2 * b * d_in * d_out * t, g)
    if phase is Phase.DECODE:
        m_weight = Fraction(d_in * d_out * d_w * t, g)
    else:
        m_weight = Fraction(d_in * d_out * d_w, g)
    m_act_load = Fraction(d_in * b * d_a * t, g)
    if kind in (KernelKind.K_PROJ, KernelKind.V_PROJ):
        m_store = Fraction(d_out * b * d_a * t, g)
    else:
        m_store = Fraction(d_out * b * d_kv * t, g)
    mem = m_weight + m_act_load + m_store
    return CostTriple(_floor(ops), _floor(mem), 0)


def attention_matmul_cost(
    kind: KernelKind, arch: LlmArchitecture, cfg: InferenceConfig, phase: Phase
) -> CostTriple:
    """Score (QK) or value (SV) matmul of the unfused attention variant."""
    if kind not in ATTN_MATMUL_KINDS:
        raise UnsupportedKind(f"{kind.name} is not an attention matmul kernel")
    b = cfg.batch_size
    g = cfg.gpu_count
    n_h = arch.head_count
    n_kv = arch.kv_head_count
    d_h = arch.hidden_size // arch.head_count
    d_a = arch.activation_dtype.width
    d_kv = arch.kv_dtype.width
    seq = cfg.prompt_length
    gen = cfg.generated_tokens

    if phase is Phase.DECODE:
        window = (2 * seq + gen) * gen
        ops = Fraction(b * d_h * n_h * window, g)
        m_act = Fraction(b * n_h * d_a * window, 2 * g)
        m_kv = Fraction(b * d_h * n_kv * d_kv * window, 2 * g)
    else:
        ops = Fraction(2 * b * d_h * n_h * seq, g)
        m_act = Fraction(b * n_h * d_a * seq, g)
        m_kv = Fraction(b * d_h * n_kv * d_kv * seq, g)
    mem = 2 * m_act + m_kv  # activation load + store, plus the KV-cache load
    return CostTriple(_floor(ops), _floor(mem), 0)


def softmax_cost(arch: LlmArchitecture, cfg: InferenceConfig, phase: Phase) -> CostTriple:
    """Softmax over attention scores (unfused variant only)."""
    b = cfg.batch_size
    g = cfg.gpu_count
    n_h = arch.head_count
    d_a = arch.activation_dtype.width
    seq = cfg.prompt_length
    gen = cfg.generated_tokens

    if phase is Phase.DECODE:
        window = (2 * seq + gen) * gen
        ops = Fraction(5 * b * n_h * window, 2 * g)
        m_act = Fraction(b * n_h * d_a * window, 2 * g)
    else:
        ops = Fraction(5 * b * n_h * seq, g)
        m_act = Fraction(b * n_h * d_a * seq, g)
    return CostTriple(_floor(ops), _floor(2 * m_act), 0)


def fused_attention_cost(
    arch: LlmArchitecture,
    cfg: InferenceConfig,
    gpu_s_block: int,
    phase: Phase,
    corrected: bool = False,
) -> CostTriple:
    """Fused (flash) attention kernel cost.

    Operation count is the unfused matmul+softmax total (times the prompt
    length in prefill).  The memory total follows the faithful accounting by
    default: activation load plus the KV-cache load counted twice, with no
    activation-store term; ``corrected=True`` replaces the duplicate KV term
    with the activation store.
    """
    if gpu_s_block < 1:
        raise RangeError(f"gpu_s_block must be >= 1, got {gpu_s_block}")
    b = cfg.batch_size
    g = cfg.gpu_count
    n_h = arch.head_count
    n_kv = arch.kv_head_count
    d_h = arch.hidden_size // arch.head_count
    d_a = arch.activation_dtype.width
    d_kv = arch.kv_dtype.width
    seq = cfg.prompt_length
    gen = cfg.generated_tokens

    if phase is Phase.DECODE:
        window = (2 * seq + gen) * gen
        o_matmul = Fraction(b * d_h * n_h * window, g)
        o_softmax = Fraction(5 * b * n_h * window, 2 * g)
        ops = 2 * o_matmul + o_softmax
        m_act_load = Fraction(d_h * b * n_h * d_a * (gen - 1), g)
        m_act_store = Fraction(2 * d_h * b * n_h * d_a * (gen - 1), g)
        m_kv_load = Fraction(2 * b * gpu_s_block * d_h * n_kv * d_kv * window, 2 * g)
    else:
        o_matmul = Fraction(2 * b * d_h * n_h * seq, g)
        o_softmax = Fraction(5 * b * n_h * seq, g)
        ops = (2 * o_matmul + o_softmax) * seq
        m_act_load = Fraction(d_h * b * n_h * d_a * seq, g)
        m_act_store = Fraction(2 * d_h * b * n_h * d_a * seq, g)
        m_kv_load = Fraction(2 * b * gpu_s_block * d_h * n_kv * d_kv * seq, g)
    if corrected:
        mem = m_act_load + m_act_store + m_kv_load
    else:
        mem = m_act_load + 2 * m_kv_load
    return CostTriple(_floor(ops), _floor(mem), 0)


def elementwise_cost(
    kind: KernelKind, arch: LlmArchitecture, cfg: InferenceConfig, phase: Phase
) -> CostTriple:
    """Normalization, residual-add and MLP-activation kernels."""
    if kind not in ELEMENTWISE_KINDS:
        raise UnsupportedKind(f"{kind.name} is not an elementwise kernel")
    b = cfg.batch_size
    g = cfg.gpu_count
    h = arch.hidden_size
    d_a = arch.activation_dtype.width
    t = _token_factor(cfg, phase)

    base = Fraction(b * h * t, g)
    stream = base * d_a
    if kind in (KernelKind.NORM_ATTN, KernelKind.NORM_MLP):
        ops = 7 * base
        mem = 2 * stream
    elif kind in (KernelKind.ADD_ATTN, KernelKind.ADD_MLP):
        ops = base
        mem = 2 * stream
    else:  # ACT_MLP; decode totals triple the (doubled) load stream, prefill
        # sums the load and store streams as written
        ops = 2 * base
        mem = 6 * stream if phase is Phase.DECODE else 3 * stream
    return CostTriple(_floor(ops), _floor(mem), 0)


def allreduce_cost(
    n: int, m: int, l: int, cfg: InferenceConfig, d_a: DataType, phase: Phase
) -> CostTriple:
    """All-reduce of an n x m matrix partitioned row-wise across l GPUs.

    Operations happen in the reduce-scatter step; network bytes cover the
    ring exchange of the partitions, per token processed in the phase.
    """
    if l < 2:
        raise RangeError(f"all-reduce needs at least 2 GPUs, got {l}")
    if n % l != 0:
        raise PartitionError(f"partition dim {n} is not divisible by gpu count {l}")
    t = _token_factor(cfg, phase)
    width = d_a.width
    ops = Fraction(n * m * t, l)
    mem = 2 * ops * width
    net = Fraction(n, l) * m * (l - 1) * width * t
    return CostTriple(_floor(ops), _floor(mem), _floor(net))


def kernel_cost(
    node: KernelNode,
    arch: LlmArchitecture,
    cfg: InferenceConfig,
    gpu_s_block: int,
    phase: Phase,
    corrected: bool = False,
) -> CostTriple:
    """Dispatch a kernel node to its cost equation."""
    kind = node.kind
    if kind is KernelKind.FUSE_ATTN and not arch.flash_attention:
        raise UnsupportedKind("fuse_attn kernel in a non-flash-attention architecture")
    if kind in (KernelKind.MATMUL_QK, KernelKind.SOFTMAX, KernelKind.MATMUL_SV):
        if arch.flash_attention:
            raise UnsupportedKind(f"{kind.name} kernel in a flash-attention architecture")
    if kind in LINEAR_KINDS:
        return linear_cost(kind, arch, cfg, phase)
    if kind in ATTN_MATMUL_KINDS:
        return attention_matmul_cost(kind, arch, cfg, phase)
    if kind is KernelKind.SOFTMAX:
        return softmax_cost(arch, cfg, phase)
    if kind is KernelKind.FUSE_ATTN:
        return fused_attention_cost(arch, cfg, gpu_s_block, phase, corrected=corrected)
    if kind in ELEMENTWISE_KINDS:
        return elementwise_cost(kind, arch, cfg, phase)
    if kind is KernelKind.ALL_REDUCE:
        # reduced matrix is the per-token activation block: hidden x batch
        return allreduce_cost(
            arch.hidden_size, cfg.batch_size, cfg.gpu_count, cfg, arch.activation_dtype, phase
        )
    raise UnsupportedKind(f"no cost equation for kernel kind {kind.name}")


def layer_totals(
    graph: KernelGraph,
    arch: LlmArchitecture,
    cfg: InferenceConfig,
    gpu_s_block: int,
    corrected: bool = False,
) -> LayerTotals:
    """Component-wise per-phase sums over all kernels of one layer."""
    if not graph.nodes:
        raise ValueError("layer graph has no kernels")
    totals = {}
    for phase in Phase:
        acc = ZERO_COST
        for node in graph.nodes:
            acc = acc + kernel_cost(node, arch, cfg, gpu_s_block, phase, corrected=corrected)
        totals[phase] = acc
    return LayerTotals(prefill=totals[Phase.PREFILL], decode=totals[Phase.DECODE])


def model_totals(totals: LayerTotals, layer_count: int) -> LayerTotals:
    """Whole-model totals: the per-layer sums scaled by the layer count."""
    if layer_count < 1:
        raise RangeError(f"layer_count must be >= 1, got {layer_count}")
    return LayerTotals(
        prefill=totals.prefill.scaled(layer_count),
        decode=totals.decode.scaled(layer_count),
    )
