"""Command-line front end.

Subcommands: estimate (carbon report for one request), graph (export a layer
kernel graph), sample (run the focused sampling loop against the synthetic
oracle), train, eval, trace-stats.  Exit codes: 0 success, 2 configuration or
validation error, 3 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from . import arch as arch_mod
from . import carbon as carbon_mod
from . import gnn as gnn_mod
from . import sampler as sampler_mod
from . import traces as traces_mod
from .arch import enumerate_layer_kernels
from .features import export_graph, featurize, featurize_raw, fit_stats, identity_stats
from .kvfile import ConfigError
from .roofline import builtin_gpu_catalog, load_gpu_catalog

GPU_CATALOG_ENV = "INFERCARBON_GPU_CATALOG"
ARCH_CATALOG_ENV = "INFERCARBON_ARCH_CATALOG"

CONFIG_ERRORS = (
    ConfigError,
    arch_mod.RangeError,
    arch_mod.DivisibilityError,
    FileNotFoundError,
    KeyError,
    ValueError,
)

RUNTIME_ERRORS = (
    gnn_mod.NonFiniteLoss,
    sampler_mod.OracleFailure,
    ArithmeticError,
)


class CliError(Exception):
    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


def load_gpus(path: str | None):
    path = path or os.environ.get(GPU_CATALOG_ENV)
    if path:
        return load_gpu_catalog(path)
    return builtin_gpu_catalog()


def load_archs(path: str | None):
    path = path or os.environ.get(ARCH_CATALOG_ENV)
    if path:
        return arch_mod.load_arch_catalog(path)
    text = resources.files("infercarbon").joinpath("data/archs.cfg").read_text(encoding="utf-8")
    return arch_mod.parse_arch_catalog(text, source="builtin:archs.cfg")


def _pick(catalog: dict, key: str, what: str):
    if key not in catalog:
        known = ", ".join(sorted(catalog))
        raise CliError(f"unknown {what} '{key}' (known: {known})")
    return catalog[key]


def cmd_estimate(args) -> int:
    gpus = load_gpus(args.gpu_catalog)
    archs = load_archs(args.arch_catalog)
    llm = _pick(archs, args.arch, "architecture")
    gpu = _pick(gpus, args.gpu, "GPU")
    cfg = arch_mod.validate_inference(
        arch_mod.InferenceConfig(
            batch_size=args.batch,
            prompt_length=args.prompt,
            generated_tokens=args.gen,
            gpu_count=args.n_gpu,
        )
    )
    if args.oracle:
        predictor = sampler_mod.SyntheticEnergyOracle()
    elif args.checkpoint:
        params, stats, _ = gnn_mod.load_checkpoint(args.checkpoint)
        predictor = carbon_mod.ModelEnergyPredictor(params, stats)
    else:
        raise CliError("estimate needs either --oracle or --checkpoint PATH")
    dc = carbon_mod.DatacenterParams(pue=args.pue, carbon_intensity=args.intensity)
    ep = carbon_mod.EmbodiedParams(
        cpa_g_per_mm2=args.cpa, lifetime_seconds=args.lifetime, packaging_g=args.packaging
    )
    report = carbon_mod.estimate_request(predictor, llm, cfg, gpu, dc, ep)
    print(report.to_json() if args.json else report.format_text())
    return 0


def cmd_graph(args) -> int:
    gpus = load_gpus(args.gpu_catalog)
    archs = load_archs(args.arch_catalog)
    llm = _pick(archs, args.arch, "architecture")
    gpu = _pick(gpus, args.gpu, "GPU")
    cfg = arch_mod.validate_inference(
        arch_mod.InferenceConfig(
            batch_size=args.batch,
            prompt_length=args.prompt,
            generated_tokens=args.gen,
            gpu_count=args.n_gpu,
        )
    )
    if args.format not in ("json", "dot"):
        raise CliError(f"unknown graph format '{args.format}' (expected 'json' or 'dot')")
    graph = enumerate_layer_kernels(llm, args.n_gpu)
    fg = featurize(graph, llm, cfg, gpu, identity_stats())
    print(export_graph(fg, args.format))
    return 0


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def cmd_sample(args) -> int:
    gpus = load_gpus(args.gpu_catalog)
    if args.trace:
        records = traces_mod.parse_trace(args.trace)
        prior = traces_mod.empirical_prior(records)
    else:
        prior = None
    space = sampler_mod.desk_prior_space(gpus, inference_prior=prior)
    hyper = sampler_mod.LoopHyper(
        initial_points=args.a,
        refine_per_center=args.b,
        worst_count=args.k,
        max_iterations=args.max_iterations,
        seed=args.seed,
        train=gnn_mod.TrainHyper(epochs=args.epochs, seed=args.seed,
                                 learning_rate=args.lr, batch_size=args.batch_size),
        update_epochs=args.update_epochs,
    )
    oracle = sampler_mod.SyntheticEnergyOracle()
    result = sampler_mod.focused_sampling_loop(space, oracle, args.threshold, hyper)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sampler_mod.save_dataset(out / "train.jsonl", result.train_set)
    sampler_mod.save_dataset(out / "test.jsonl", result.test_set)
    gnn_mod.save_checkpoint(
        out / "checkpoint.json", result.params, result.stats, seed=args.seed,
        extra={
            "termination": result.termination,
            "config_hash": sampler_mod.config_hash(hyper.to_dict()),
        },
    )
    manifest = sampler_mod.build_manifest(
        hyper, oracle, args.threshold,
        extra={
            "termination": result.termination,
            "iterations": result.iterations,
            "error_log_mape_percent": result.error_log,
            "train_count": len(result.train_set),
            "test_count": len(result.test_set),
        },
    )
    _write_json(out / "manifest.json", manifest)
    print(
        f"sampling finished: {result.termination} after {result.iterations} refinement "
        f"iteration(s); final MAPE {result.error_log[-1]:.2f}% "
        f"({len(result.train_set)} train / {len(result.test_set)} test samples) -> {out}"
    )
    return 0


def cmd_train(args) -> int:
    samples = sampler_mod.load_dataset(args.dataset)
    if not samples:
        raise CliError(f"dataset {args.dataset} is empty")
    raws = [sampler_mod.raw_featurize_point(s.point) for s in samples]
    stats = fit_stats(raws)
    pairs = [(featurize_raw(r, stats), s.energy_joules) for r, s in zip(raws, samples)]
    hyper = gnn_mod.TrainHyper(
        epochs=args.epochs, seed=args.seed, learning_rate=args.lr, batch_size=args.batch_size
    )
    params, history = gnn_mod.train(pairs, hyper)
    gnn_mod.save_checkpoint(
        args.out, params, stats, seed=args.seed,
        extra={
            "dataset": str(args.dataset),
            "epochs": args.epochs,
            "final_train_loss": history[-1],
            "config_hash": sampler_mod.config_hash(
                {"dataset": str(args.dataset), "epochs": args.epochs, "seed": args.seed}
            ),
        },
    )
    print(f"trained {args.epochs} epochs; loss {history[0]:.4f} -> {history[-1]:.4f}; "
          f"checkpoint -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    params, stats, meta = gnn_mod.load_checkpoint(args.checkpoint)
    samples = sampler_mod.load_dataset(args.dataset)
    if not samples:
        raise CliError(f"dataset {args.dataset} is empty")
    report = sampler_mod.evaluate_model(params, stats, samples)
    payload = report.to_dict()
    payload["manifest"] = {
        "checkpoint": str(args.checkpoint),
        "dataset": str(args.dataset),
        "checkpoint_seed": meta.get("seed"),
        "config_hash": sampler_mod.config_hash(
            {"checkpoint": str(args.checkpoint), "dataset": str(args.dataset)}
        ),
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return 0


def cmd_trace_stats(args) -> int:
    columns = traces_mod.ColumnMap(
        timestamp=args.timestamp_col, prompt=args.prompt_col, generated=args.generated_col
    )
    records = traces_mod.parse_trace(args.trace, columns)
    stats = traces_mod.trace_stats(records)
    if args.json:
        print(json.dumps(stats.to_dict(), indent=2))
    else:
        print(stats.format_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infercarbon",
        description="Estimate the energy and carbon footprint of LLM inference requests "
        "before running them.",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="cap on worker threads (evaluation is single-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_catalogs(p):
        p.add_argument("--gpu-catalog", help=f"GPU catalog file (default: builtin or ${GPU_CATALOG_ENV})")
        p.add_argument("--arch-catalog", help=f"architecture catalog file (default: builtin or ${ARCH_CATALOG_ENV})")

    def common_request(p):
        p.add_argument("--batch", type=int, default=1, help="batch size")
        p.add_argument("--prompt", type=int, default=64, help="prompt length in tokens")
        p.add_argument("--gen", type=int, default=8, help="generated token count")
        p.add_argument("--n-gpu", type=int, default=1, help="tensor-parallel GPU count")

    p = sub.add_parser("estimate", help="carbon report for one inference request")
    common_catalogs(p)
    p.add_argument("arch", help="architecture id from the catalog")
    p.add_argument("gpu", help="GPU id from the catalog")
    common_request(p)
    p.add_argument("--oracle", action="store_true", help="use the synthetic energy oracle")
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--pue", type=float, default=1.2)
    p.add_argument("--intensity", type=float, default=400.0, help="gCO2eq per kWh")
    p.add_argument("--cpa", type=float, default=1.0, help="embodied g per mm2 of die")
    p.add_argument("--lifetime", type=float, default=1.5768e8, help="amortization horizon, seconds")
    p.add_argument("--packaging", type=float, default=0.0, help="fixed per-device embodied grams")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("graph", help="export the kernel graph of one transformer layer")
    common_catalogs(p)
    p.add_argument("arch")
    p.add_argument("gpu", nargs="?", default="a100", help="GPU id for costs/Roofline (default a100)")
    common_request(p)
    p.add_argument("--format", default="dot", help="dot or json")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("sample", help="run the focused sampling loop with the synthetic oracle")
    common_catalogs(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--a", type=int, default=2000, help="initial sample count")
    p.add_argument("--b", type=int, default=50, help="refinements per high-error center")
    p.add_argument("--k", type=int, default=50, help="high-error centers per iteration")
    p.add_argument("--threshold", type=float, default=15.0, help="target MAPE percent")
    p.add_argument("--max-iterations", type=int, default=10)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--update-epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="trace file for the empirical inference prior")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train the regressor on a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="MAPE / error-bound accuracy of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace-stats", help="distribution statistics of a trace file")
    p.add_argument("trace")
    p.add_argument("--timestamp-col", default="TIMESTAMP")
    p.add_argument("--prompt-col", default="ContextTokens")
    p.add_argument("--generated-col", default="GeneratedTokens")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_trace_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
