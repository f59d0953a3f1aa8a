import dataclasses

import numpy as np
import pytest

from infercarbon.arch import (
    DataType,
    DivisibilityError,
    InferenceConfig,
    KernelKind,
    LlmArchitecture,
    RangeError,
    derive_head_dim,
    enumerate_layer_kernels,
    parse_arch_catalog,
    validate_architecture,
    validate_inference,
)
from infercarbon.kvfile import ConfigError

from conftest import random_small_arch


def make_arch(**overrides):
    base = dict(
        hidden_size=4096, intermediate_size=11008, head_count=32, kv_head_count=8, layer_count=32
    )
    base.update(overrides)
    return LlmArchitecture(**base)


class TestValidation:
    def test_valid_architecture_roundtrips(self):
        arch = make_arch()
        assert validate_architecture(arch) is arch
        assert derive_head_dim(arch) == 128

    def test_indivisible_heads_rejected(self):
        with pytest.raises(DivisibilityError):
            validate_architecture(make_arch(hidden_size=100))

    def test_zero_layer_count_rejected(self):
        with pytest.raises(RangeError):
            validate_architecture(make_arch(layer_count=0))

    def test_kv_heads_must_divide_heads(self):
        with pytest.raises(DivisibilityError):
            validate_architecture(make_arch(kv_head_count=3))

    def test_kv_heads_cannot_exceed_heads(self):
        with pytest.raises(RangeError):
            validate_architecture(make_arch(kv_head_count=64))

    def test_inference_config_bounds(self):
        validate_inference(InferenceConfig(1, 1, 1, 1))
        with pytest.raises(RangeError):
            validate_inference(InferenceConfig(0, 1, 1, 1))
        with pytest.raises(RangeError):
            validate_inference(InferenceConfig(1, 1, 0, 1))

    def test_head_dim_examples(self):
        assert derive_head_dim(make_arch(hidden_size=8, head_count=2, kv_head_count=2)) == 4
        assert derive_head_dim(make_arch(hidden_size=32, head_count=32, kv_head_count=32)) == 1

    def test_dtype_widths(self):
        assert DataType.FP32.width == 4
        assert DataType.FP16.width == 2
        assert DataType.INT8.width == 1
        assert DataType.INT8.bitwidth == 8


class TestLayerGraph:
    def test_flash_gated_tensor_parallel(self, tiny_arch):
        graph = enumerate_layer_kernels(tiny_arch, 4)
        kinds = [n.kind for n in graph.nodes]
        assert len(graph.nodes) == 15
        assert kinds.count(KernelKind.ALL_REDUCE) == 2
        assert KernelKind.FUSE_ATTN in kinds
        assert KernelKind.MATMUL_QK not in kinds

    def test_nonflash_single_gpu(self, tiny_arch):
        arch = dataclasses.replace(tiny_arch, flash_attention=False)
        graph = enumerate_layer_kernels(arch, 1)
        kinds = [n.kind for n in graph.nodes]
        assert len(graph.nodes) == 15
        assert kinds.count(KernelKind.ALL_REDUCE) == 0
        for kind in (KernelKind.MATMUL_QK, KernelKind.SOFTMAX, KernelKind.MATMUL_SV):
            assert kind in kinds
        assert KernelKind.FUSE_ATTN not in kinds

    def test_flash_ungated_single_gpu(self, tiny_arch):
        arch = dataclasses.replace(tiny_arch, gated_mlp=False)
        graph = enumerate_layer_kernels(arch, 1)
        kinds = [n.kind for n in graph.nodes]
        assert len(graph.nodes) == 12
        assert KernelKind.GATE_PROJ not in kinds
        assert KernelKind.ALL_REDUCE not in kinds

    @pytest.mark.parametrize("flash", [True, False])
    @pytest.mark.parametrize("gated", [True, False])
    @pytest.mark.parametrize("n_gpu", [1, 2, 4])
    def test_every_variant_is_acyclic(self, tiny_arch, flash, gated, n_gpu):
        arch = dataclasses.replace(tiny_arch, flash_attention=flash, gated_mlp=gated)
        graph = enumerate_layer_kernels(arch, n_gpu)
        order = graph.topological_order()
        assert len(order) == len(graph.nodes)
        allreduce = sum(1 for n in graph.nodes if n.kind is KernelKind.ALL_REDUCE)
        assert allreduce == (2 if n_gpu >= 2 else 0)

    def test_every_nonsource_node_has_an_input(self, tiny_arch):
        graph = enumerate_layer_kernels(tiny_arch, 2)
        targets = {dst for _, dst in graph.edges}
        for node in graph.nodes:
            if node.id != 0:
                assert node.id in targets

    def test_kind_vocabulary_covered_across_variants(self, tiny_arch):
        seen = set()
        for flash in (True, False):
            arch = dataclasses.replace(
                tiny_arch,
                flash_attention=flash,
                gated_mlp=True,
            )
            seen |= {n.kind for n in enumerate_layer_kernels(arch, 2).nodes}
        assert seen == set(KernelKind)

    def test_enumeration_is_deterministic(self, tiny_arch):
        first = enumerate_layer_kernels(tiny_arch, 4)
        second = enumerate_layer_kernels(tiny_arch, 4)
        assert first == second

    def test_residual_edges_present(self, tiny_arch):
        graph = enumerate_layer_kernels(tiny_arch, 1)
        by_kind = {n.kind: n.id for n in graph.nodes}
        assert (by_kind[KernelKind.NORM_ATTN], by_kind[KernelKind.ADD_ATTN]) in graph.edges
        assert (by_kind[KernelKind.ADD_ATTN], by_kind[KernelKind.ADD_MLP]) in graph.edges

    def test_dims_are_six_slots_nonnegative(self):
        rng = np.random.Generator(np.random.PCG64(7))
        for _ in range(50):
            arch = random_small_arch(rng)
            for node in enumerate_layer_kernels(arch, 2).nodes:
                assert len(node.dims) == 6
                assert all(d >= 0 for d in node.dims)

    def test_rejects_bad_gpu_count(self, tiny_arch):
        with pytest.raises(RangeError):
            enumerate_layer_kernels(tiny_arch, 0)


class TestArchCatalog:
    def test_parse_catalog(self):
        text = """
        [demo]
        hidden_size = 64
        intermediate_size = 128
        head_count = 4
        kv_head_count = 2
        layer_count = 2
        weight_dtype = INT8
        flash_attention = false
        """
        catalog = parse_arch_catalog(text)
        assert catalog["demo"].weight_dtype is DataType.INT8
        assert catalog["demo"].flash_attention is False
        assert catalog["demo"].activation_dtype is DataType.FP16  # default

    def test_unknown_field_reports_name_and_line(self):
        text = "[x]\nhidden_size = 64\nintermediate_size = 1\nhead_count = 4\n" \
               "kv_head_count = 2\nlayer_count = 1\nbogus_field = 3\n"
        with pytest.raises(ConfigError) as err:
            parse_arch_catalog(text, source="t.cfg")
        assert "bogus_field" in str(err.value)
        assert "t.cfg:7" in str(err.value)

    def test_bad_value_reports_line(self):
        text = "[x]\nhidden_size = sixty-four\n"
        with pytest.raises(ConfigError) as err:
            parse_arch_catalog(text, source="t.cfg")
        assert "t.cfg:2" in str(err.value)
        assert "hidden_size" in str(err.value)

    def test_invalid_architecture_rejected(self):
        text = "[x]\nhidden_size = 100\nintermediate_size = 8\nhead_count = 32\n" \
               "kv_head_count = 32\nlayer_count = 1\n"
        with pytest.raises(ConfigError):
            parse_arch_catalog(text)
