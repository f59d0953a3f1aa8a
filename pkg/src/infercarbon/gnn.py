"""Graph regressor for inference energy, written directly on numpy.

Architecture: two mean-aggregation graph convolutions (each node is updated
from the concatenation of itself and the mean of its neighbors), mean pooling
over nodes, concatenation with the global feature vector, then two linear
layers down to a scalar.  The scalar lives in log-energy space: targets are
log1p(joules) and predictions are expm1-ed back at the reporting boundary.

Gradients are reverse-mode by hand and checked against central finite
differences.  Training is deterministic for a fixed seed: shuffling comes
from a seeded generator and per-sample gradients are summed in index order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureStats, FeaturizedGraph

HIDDEN_WIDTH = 64

PARAM_NAMES = (
    "conv1_w",
    "conv1_b",
    "conv2_w",
    "conv2_b",
    "head1_w",
    "head1_b",
    "head2_w",
    "head2_b",
)


class ShapeError(ValueError):
    """Feature or parameter shapes do not line up."""


class NonFiniteLoss(ArithmeticError):
    """Training loss became NaN or infinite."""


class ZeroTruth(ValueError):
    """Percentage metrics need strictly positive ground-truth values."""


@dataclass
class GnnParams:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    head1_w: np.ndarray
    head1_b: np.ndarray
    head2_w: np.ndarray
    head2_b: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    @classmethod
    def from_list(cls, arrays: list[np.ndarray]) -> "GnnParams":
        return cls(**dict(zip(PARAM_NAMES, arrays)))

    @property
    def node_width(self) -> int:
        return self.conv1_w.shape[0] // 2

    @property
    def hidden_width(self) -> int:
        return self.conv1_w.shape[1]

    @property
    def global_width(self) -> int:
        return self.head1_w.shape[0] - self.hidden_width

    def validate(self) -> "GnnParams":
        h = self.hidden_width
        checks = [
            (self.conv1_w.shape[0] % 2 == 0, "conv1 input must be 2 x node width"),
            (self.conv1_b.shape == (h,), "conv1 bias width"),
            (self.conv2_w.shape == (2 * h, h), "conv2 maps 2H -> H"),
            (self.conv2_b.shape == (h,), "conv2 bias width"),
            (self.head1_w.shape[1] == h, "head1 output width"),
            (self.head1_b.shape == (h,), "head1 bias width"),
            (self.head2_w.shape == (h, 1), "head2 maps H -> 1"),
            (self.head2_b.shape == (1,), "head2 bias width"),
        ]
        for ok, message in checks:
            if not ok:
                raise ShapeError(message)
        for arr in self.as_list():
            if not np.all(np.isfinite(arr)):
                raise ShapeError("parameter contains a non-finite value")
        return self


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(
    node_width: int, global_width: int, hidden: int = HIDDEN_WIDTH, seed: int = 0
) -> GnnParams:
    rng = np.random.Generator(np.random.PCG64(seed))
    return GnnParams(
        conv1_w=_xavier(rng, 2 * node_width, hidden),
        conv1_b=np.zeros(hidden),
        conv2_w=_xavier(rng, 2 * hidden, hidden),
        conv2_b=np.zeros(hidden),
        head1_w=_xavier(rng, hidden + global_width, hidden),
        head1_b=np.zeros(hidden),
        head2_w=_xavier(rng, hidden, 1),
        head2_b=np.zeros(1),
    ).validate()


def sage_forward(features: np.ndarray, agg: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One graph convolution: relu(W . concat(self, neighbor mean) + b) per node."""
    if features.ndim != 2 or features.shape[0] == 0:
        raise ShapeError("feature matrix must be non-empty and 2-D")
    if 2 * features.shape[1] != w.shape[0]:
        raise ShapeError(
            f"conv weight expects input width {w.shape[0]}, features give {2 * features.shape[1]}"
        )
    neighbor = agg @ features
    pre = np.hstack([features, neighbor]) @ w + b
    return np.maximum(pre, 0.0)


def _forward_cache(fg: FeaturizedGraph, params: GnnParams) -> dict:
    x = fg.features
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError("feature matrix must be non-empty and 2-D")
    if 2 * x.shape[1] != params.conv1_w.shape[0]:
        raise ShapeError(
            f"model expects node width {params.node_width}, graph has {x.shape[1]}"
        )
    if fg.global_features.shape[0] != params.global_width:
        raise ShapeError(
            f"model expects global width {params.global_width}, "
            f"graph has {fg.global_features.shape[0]}"
        )
    a = fg.agg
    z1 = np.hstack([x, a @ x])
    s1 = z1 @ params.conv1_w + params.conv1_b
    h1 = np.maximum(s1, 0.0)
    z2 = np.hstack([h1, a @ h1])
    s2 = z2 @ params.conv2_w + params.conv2_b
    h2 = np.maximum(s2, 0.0)
    pooled = h2.mean(axis=0)
    q = np.concatenate([pooled, fg.global_features])
    s3 = q @ params.head1_w + params.head1_b
    h3 = np.maximum(s3, 0.0)
    y = float(h3 @ params.head2_w[:, 0] + params.head2_b[0])
    return {"a": a, "z1": z1, "s1": s1, "h1": h1, "z2": z2, "s2": s2, "h2": h2, "q": q,
            "s3": s3, "h3": h3, "y": y}


def model_forward(fg: FeaturizedGraph, params: GnnParams) -> float:
    """Predicted energy in model (log) space."""
    return _forward_cache(fg, params)["y"]


def predict_energy(fg: FeaturizedGraph, params: GnnParams) -> float:
    """Predicted energy in joules."""
    return float(np.expm1(model_forward(fg, params)))


def _backward(cache: dict, params: GnnParams, dy: float) -> list[np.ndarray]:
    h3, s3, q = cache["h3"], cache["s3"], cache["q"]
    h2, s2, z2 = cache["h2"], cache["s2"], cache["z2"]
    s1, z1, a = cache["s1"], cache["z1"], cache["a"]
    n = h2.shape[0]
    hidden = params.hidden_width

    d_head2_w = (h3 * dy)[:, None]
    d_head2_b = np.array([dy])
    dh3 = params.head2_w[:, 0] * dy
    ds3 = dh3 * (s3 > 0)
    d_head1_w = np.outer(q, ds3)
    d_head1_b = ds3
    dq = params.head1_w @ ds3
    dpooled = dq[:hidden]

    dh2 = np.tile(dpooled / n, (n, 1))
    ds2 = dh2 * (s2 > 0)
    d_conv2_w = z2.T @ ds2
    d_conv2_b = ds2.sum(axis=0)
    dz2 = ds2 @ params.conv2_w.T
    dh1 = dz2[:, :hidden] + a.T @ dz2[:, hidden:]
    ds1 = dh1 * (s1 > 0)
    d_conv1_w = z1.T @ ds1
    d_conv1_b = ds1.sum(axis=0)

    return [d_conv1_w, d_conv1_b, d_conv2_w, d_conv2_b,
            d_head1_w, d_head1_b, d_head2_w, d_head2_b]


def target_transform(energy_joules: float) -> float:
    return math.log1p(energy_joules)


def loss_and_gradients(
    batch: list[tuple[FeaturizedGraph, float]], params: GnnParams
) -> tuple[float, list[np.ndarray]]:
    """Mean squared error in log space, with summed-in-order sample gradients."""
    if not batch:
        raise ValueError("batch must not be empty")
    grads = [np.zeros_like(arr) for arr in params.as_list()]
    total = 0.0
    inv = 1.0 / len(batch)
    for fg, energy in batch:
        cache = _forward_cache(fg, params)
        residual = cache["y"] - target_transform(energy)
        total += residual * residual
        sample_grads = _backward(cache, params, 2.0 * residual * inv)
        for acc, g in zip(grads, sample_grads):
            acc += g
    loss = total * inv
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss is not finite: {loss}")
    return loss, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


@dataclass
class TrainHyper:
    learning_rate: float = 1e-3
    batch_size: int = 512
    epochs: int = 200
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def init_adam_state(params: GnnParams) -> AdamState:
    return AdamState(
        m=[np.zeros_like(arr) for arr in params.as_list()],
        v=[np.zeros_like(arr) for arr in params.as_list()],
        step=0,
    )


def adam_step(
    params: GnnParams, grads: list[np.ndarray], state: AdamState, hyper: TrainHyper
) -> tuple[GnnParams, AdamState]:
    """One bias-corrected Adam update; inputs are not mutated."""
    t = state.step + 1
    new_params = []
    new_m = []
    new_v = []
    for value, grad, m, v in zip(params.as_list(), grads, state.m, state.v):
        m_next = hyper.beta1 * m + (1.0 - hyper.beta1) * grad
        v_next = hyper.beta2 * v + (1.0 - hyper.beta2) * grad * grad
        m_hat = m_next / (1.0 - hyper.beta1**t)
        v_hat = v_next / (1.0 - hyper.beta2**t)
        new_params.append(value - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.epsilon))
        new_m.append(m_next)
        new_v.append(v_next)
    return GnnParams.from_list(new_params), AdamState(m=new_m, v=new_v, step=t)


def train(
    samples: list[tuple[FeaturizedGraph, float]],
    hyper: TrainHyper,
    params: GnnParams | None = None,
    state: AdamState | None = None,
) -> tuple[GnnParams, list[float]]:
    """Mini-batch Adam training; returns final parameters and per-epoch mean loss.

    Passing existing params/state continues training (used by the sampling
    loop's model updates); otherwise parameters are freshly initialized from
    the first sample's feature widths with the run seed.
    """
    if not samples:
        raise ValueError("training set must not be empty")
    first = samples[0][0]
    if params is None:
        params = init_params(
            node_width=first.features.shape[1],
            global_width=first.global_features.shape[0],
            seed=hyper.seed,
        )
    if state is None:
        state = init_adam_state(params)
    rng = np.random.Generator(np.random.PCG64(hyper.seed + 1))
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(samples))
        epoch_loss = 0.0
        for start in range(0, len(samples), hyper.batch_size):
            batch = [samples[i] for i in order[start : start + hyper.batch_size]]
            try:
                loss, grads = loss_and_gradients(batch, params)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(f"epoch {epoch}: {exc}") from exc
            params, state = adam_step(params, grads, state, hyper)
            epoch_loss += loss * len(batch)
        history.append(epoch_loss / len(samples))
    return params, history


def mape(preds, truths) -> float:
    """Mean absolute percentage error, in percent."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape:
        raise ShapeError("predictions and truths must have the same length")
    if preds.size == 0:
        raise ValueError("empty prediction set")
    if np.any(truths <= 0):
        raise ZeroTruth("ground-truth values must be strictly positive")
    return float(np.mean(np.abs(preds - truths) / truths) * 100.0)


def eba(preds, truths, delta: float) -> float:
    """Share of predictions within relative error delta, in percent."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape:
        raise ShapeError("predictions and truths must have the same length")
    if preds.size == 0:
        raise ValueError("empty prediction set")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if np.any(truths <= 0):
        raise ZeroTruth("ground-truth values must be strictly positive")
    within = np.abs(preds - truths) / truths <= delta
    return float(within.mean() * 100.0)


@dataclass
class EvalReport:
    mape: float
    eba: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"mape_percent": self.mape,
                "eba_percent": {f"{delta:g}": value for delta, value in self.eba.items()}}


def evaluate(preds, truths, deltas=(0.05, 0.10, 0.30)) -> EvalReport:
    return EvalReport(mape=mape(preds, truths), eba={d: eba(preds, truths, d) for d in deltas})


def _relu_masks(fg: FeaturizedGraph, params: GnnParams) -> tuple:
    cache = _forward_cache(fg, params)
    return (cache["s1"] > 0, cache["s2"] > 0, cache["s3"] > 0)


def _loss_only(sample, params: GnnParams) -> float:
    fg, energy = sample
    residual = _forward_cache(fg, params)["y"] - target_transform(energy)
    return residual * residual


def gradient_check(
    params: GnnParams,
    sample: tuple[FeaturizedGraph, float],
    eps: float = 1e-5,
    coords: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Coordinates whose perturbation flips any relu activation sign are skipped:
    the loss is not differentiable across the kink, so finite differences are
    meaningless there.  Relative error uses an absolute floor of 1e-8 so that
    near-zero gradient pairs compare cleanly.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    _, grads = loss_and_gradients([sample], params)
    flat_grads = np.concatenate([g.ravel() for g in grads])
    arrays = params.as_list()
    sizes = [arr.size for arr in arrays]
    offsets = np.cumsum([0] + sizes)
    total = offsets[-1]

    rng = np.random.Generator(np.random.PCG64(seed))
    picked = rng.choice(total, size=min(coords, total), replace=False)
    worst = 0.0
    for flat_index in sorted(int(i) for i in picked):
        slot = int(np.searchsorted(offsets, flat_index, side="right") - 1)
        inner = flat_index - offsets[slot]
        bumped = [arr.copy() for arr in arrays]
        bumped[slot].ravel()[inner] += eps
        plus = GnnParams.from_list(bumped)
        bumped = [arr.copy() for arr in arrays]
        bumped[slot].ravel()[inner] -= eps
        minus = GnnParams.from_list(bumped)
        masks_p = _relu_masks(sample[0], plus)
        masks_m = _relu_masks(sample[0], minus)
        if not all(np.array_equal(a, b) for a, b in zip(masks_p, masks_m)):
            continue
        fd = (_loss_only(sample, plus) - _loss_only(sample, minus)) / (2.0 * eps)
        analytic = flat_grads[flat_index]
        denom = max(abs(analytic), abs(fd), 1e-8)
        worst = max(worst, abs(analytic - fd) / denom)
    return worst


def save_checkpoint(path, params: GnnParams, stats: FeatureStats, seed: int, extra: dict | None = None) -> None:
    """Write a versioned JSON checkpoint with shapes, stats and weights."""
    params.validate()
    payload = {
        "format": "infercarbon-checkpoint",
        "version": 1,
        "seed": seed,
        "node_width": params.node_width,
        "global_width": params.global_width,
        "hidden_width": params.hidden_width,
        "stats": stats.to_dict(),
        "params": {name: arr.tolist() for name, arr in zip(PARAM_NAMES, params.as_list())},
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)


def load_checkpoint(path) -> tuple[GnnParams, FeatureStats, dict]:
    """Load a checkpoint; refuses mismatched widths or a foreign format."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != "infercarbon-checkpoint" or payload.get("version") != 1:
        raise ShapeError("not a recognized checkpoint file")
    params = GnnParams.from_list(
        [np.asarray(payload["params"][name], dtype=np.float64) for name in PARAM_NAMES]
    )
    params.validate()
    expected = (payload["node_width"], payload["global_width"], payload["hidden_width"])
    actual = (params.node_width, params.global_width, params.hidden_width)
    if expected != actual:
        raise ShapeError(f"checkpoint widths {expected} do not match weights {actual}")
    stats = FeatureStats.from_dict(payload["stats"])
    meta = {"seed": payload.get("seed"), "extra": payload.get("extra", {})}
    return params, stats, meta
