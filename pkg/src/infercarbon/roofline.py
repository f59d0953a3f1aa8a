"""GPU hardware specifications and Roofline kernel performance.

A kernel's attainable throughput is the bandwidth-limited ceiling below the
ridge point and the compute ceiling above it.  Ordinary kernels roof against
memory bandwidth (intensity = ops per memory byte); all-reduce kernels roof
against the interconnect (intensity = ops per network byte).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .arch import DataType, RangeError
from .costmodel import CostTriple
from .kvfile import ConfigError, SectionReader, parse_sections


class MissingThroughput(ValueError):
    """GPU spec has no peak-throughput entry for the requested data type."""


class ZeroTraffic(ValueError):
    """Arithmetic intensity is undefined: the traffic denominator is zero."""


@dataclass(frozen=True)
class GpuSpec:
    """One GPU model: peak rates, power and physical parameters.

    th_max maps each supported data type to peak throughput in OPs/s;
    bw_max and net_max are bytes/s.  s_block is the number of KV heads the
    fused attention kernel can keep resident on chip.
    """

    name: str
    th_max: dict[DataType, float]
    bw_max: float
    net_max: float
    power_w: float
    node_size: int = 4
    area_mm2: float = 0.0
    tech_nm: int = 0
    s_block: int = 1

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "th_max": {dt.name: rate for dt, rate in self.th_max.items()},
            "bw_max": self.bw_max,
            "net_max": self.net_max,
            "power_w": self.power_w,
            "node_size": self.node_size,
            "area_mm2": self.area_mm2,
            "tech_nm": self.tech_nm,
            "s_block": self.s_block,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GpuSpec":
        return cls(
            name=str(d["name"]),
            th_max={DataType[k]: float(v) for k, v in d["th_max"].items()},
            bw_max=float(d["bw_max"]),
            net_max=float(d["net_max"]),
            power_w=float(d["power_w"]),
            node_size=int(d.get("node_size", 4)),
            area_mm2=float(d.get("area_mm2", 0.0)),
            tech_nm=int(d.get("tech_nm", 0)),
            s_block=int(d.get("s_block", 1)),
        )


@dataclass(frozen=True)
class RidgePoints:
    """Memory and network ridge points of a GPU at one data type, in OPs/byte."""

    mrp: float
    nrp: float


def validate_gpu(gpu: GpuSpec) -> GpuSpec:
    if gpu.bw_max <= 0 or gpu.net_max <= 0 or gpu.power_w <= 0:
        raise RangeError(f"GPU '{gpu.name}' rates and power must be positive")
    for dtype, rate in gpu.th_max.items():
        if rate <= 0:
            raise RangeError(f"GPU '{gpu.name}' {dtype.name} throughput must be positive")
    if gpu.s_block < 1:
        raise RangeError(f"GPU '{gpu.name}' s_block must be >= 1")
    return gpu


def ridge_points(gpu: GpuSpec, dtype: DataType) -> RidgePoints:
    """Compute-vs-memory and compute-vs-network balance points."""
    try:
        th = gpu.th_max[dtype]
    except KeyError:
        raise MissingThroughput(
            f"GPU '{gpu.name}' has no peak throughput for {dtype.name}"
        ) from None
    return RidgePoints(mrp=th / gpu.bw_max, nrp=th / gpu.net_max)


def arithmetic_intensity(cost: CostTriple, kind_is_allreduce: bool) -> float:
    """Ops per byte moved: memory bytes normally, network bytes for all-reduce."""
    denom = cost.net_bytes if kind_is_allreduce else cost.mem_bytes
    if denom == 0:
        raise ZeroTraffic("arithmetic intensity undefined for zero traffic")
    return cost.ops / denom


def roofline_performance(
    cost: CostTriple, gpu: GpuSpec, dtype: DataType, kind_is_allreduce: bool
) -> float:
    """Attainable throughput in OPs/s under the Roofline ceilings."""
    points = ridge_points(gpu, dtype)
    intensity = arithmetic_intensity(cost, kind_is_allreduce)
    th = gpu.th_max[dtype]
    if kind_is_allreduce:
        if intensity < points.nrp:
            return gpu.net_max * intensity
        return th
    if intensity < points.mrp:
        return gpu.bw_max * intensity
    return th


def node_performance(
    cost: CostTriple, gpu: GpuSpec, dtype: DataType, kind_is_allreduce: bool
) -> float:
    """Roofline performance with the zero-cost convention.

    A kernel whose cost triple is all zero (for example any token-factored
    decode kernel of a request that generates a single token) is assigned
    performance 0 so that every node still has a finite feature value.
    """
    if cost.is_zero():
        return 0.0
    return roofline_performance(cost, gpu, dtype, kind_is_allreduce)


_GPU_FIELDS = {
    "fp32_tops": DataType.FP32,
    "fp16_tops": DataType.FP16,
    "int8_tops": DataType.INT8,
}


def parse_gpu_catalog(text: str, source: str = "<gpu catalog>") -> dict[str, GpuSpec]:
    """Parse a GPU catalog file: one [section] per GPU, rates in TOPs/s and GB/s."""
    catalog: dict[str, GpuSpec] = {}
    for name, fields in parse_sections(text, source).items():
        reader = SectionReader(name, fields, source)
        th_max = {}
        for key, dtype in _GPU_FIELDS.items():
            tops = reader.get_float(key, None)
            if tops is not None:
                th_max[dtype] = tops * 1e12
        if not th_max:
            raise ConfigError(f"{source}: section '{name}' defines no peak throughput")
        gpu = GpuSpec(
            name=name,
            th_max=th_max,
            bw_max=reader.get_float("memory_gbs") * 1e9,
            net_max=reader.get_float("network_gbs") * 1e9,
            power_w=reader.get_float("power_w"),
            node_size=reader.get_int("node_size", 4),
            area_mm2=reader.get_float("area_mm2", 0.0),
            tech_nm=reader.get_int("tech_nm", 0),
            s_block=reader.get_int("s_block", 1),
        )
        reader.reject_unknown()
        try:
            validate_gpu(gpu)
        except RangeError as exc:
            raise ConfigError(f"{source}: section '{name}': {exc}") from exc
        catalog[name] = gpu
    return catalog


def load_gpu_catalog(path) -> dict[str, GpuSpec]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_gpu_catalog(handle.read(), source=str(path))


def builtin_gpu_catalog() -> dict[str, GpuSpec]:
    """The packaged reference catalog of datacenter GPUs."""
    text = resources.files("infercarbon").joinpath("data/gpus.cfg").read_text(encoding="utf-8")
    return parse_gpu_catalog(text, source="builtin:gpus.cfg")
