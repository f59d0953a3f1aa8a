"""
From a request to a carbon report
=================================

Energy comes from a predictor (here the deterministic synthetic oracle);
operational carbon is energy x PUE x grid intensity, and embodied carbon
amortizes the die's manufacturing footprint over the request's Roofline
execution time.  More GPUs always burn more total energy on a small request;
whether the per-device footprint also rises depends on how slow the
interconnect is relative to compute.
"""

import dataclasses

from infercarbon import (
    DatacenterParams,
    EmbodiedParams,
    InferenceConfig,
    LlmArchitecture,
    estimate_request,
)
from infercarbon.roofline import builtin_gpu_catalog
from infercarbon.sampler import SyntheticEnergyOracle

catalog = builtin_gpu_catalog()
oracle = SyntheticEnergyOracle()

arch = LlmArchitecture(
    hidden_size=2560, intermediate_size=10240, head_count=32, kv_head_count=32,
    layer_count=30, flash_attention=False, gated_mlp=False,
)
cfg = InferenceConfig(batch_size=1, prompt_length=1024, generated_tokens=128, gpu_count=1)
dc = DatacenterParams(pue=1.2, carbon_intensity=400.0)
ep = EmbodiedParams(cpa_g_per_mm2=1.5, lifetime_seconds=1.5768e8)

report = estimate_request(oracle, arch, cfg, catalog["a100"], dc, ep)
print(report.format_text())
print()

# machine-readable form of the same report
print(report.to_json())

# scaling out a tiny request: total operational carbon rises with GPU count
print("\nbatch-1, 64-token prompt across GPU counts (A100):")
small = dataclasses.replace(cfg, prompt_length=64, generated_tokens=8)
for n in (1, 2, 4):
    r = estimate_request(
        oracle, arch, dataclasses.replace(small, gpu_count=n), catalog["a100"], dc, ep
    )
    print(f"  {n} GPU(s): total {r.operational_g:.3e} g, per GPU {r.per_gpu_operational_g:.3e} g")
