"""The per-shape distance network: a small ReLU MLP with a TanH output,
trained with Adam under an L1 loss.

Parameters live in one flat float32 vector, layer by layer, each layer's
weight matrix (row-major, ``out x in``) followed by its bias vector.
Evaluation and gradients are computed in float64.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .errors import LengthMismatch, NonFiniteLoss

log = logging.getLogger(__name__)

INPUT_DIM = 3
OUTPUT_DIM = 1


@dataclass(frozen=True)
class MlpArchitecture:
    hidden_layers: int = 8
    hidden_width: int = 32

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("hidden_layers and hidden_width must be >= 1")

    @property
    def dims(self) -> list[int]:
        return [INPUT_DIM] + [self.hidden_width] * self.hidden_layers + [OUTPUT_DIM]

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        d = self.dims
        return list(zip(d[1:], d[:-1]))

    @property
    def parameter_count(self) -> int:
        n, h = self.hidden_layers, self.hidden_width
        return (INPUT_DIM * h + h) + (n - 1) * (h * h + h) + (h + 1)

    def __str__(self) -> str:
        return f"{self.hidden_layers}x{self.hidden_width}"


BASE_ARCHITECTURE = MlpArchitecture(8, 32)


@dataclass(frozen=True)
class MlpModel:
    architecture: MlpArchitecture
    params: np.ndarray  # float32, length architecture.parameter_count

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float32).reshape(-1)
        if len(p) != self.architecture.parameter_count:
            raise ValueError(f"expected {self.architecture.parameter_count} parameters, got {len(p)}")
        if not np.all(np.isfinite(p)):
            raise ValueError("parameters must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    def layers(self, params=None):
        """(weight, bias) views for each layer, in float64."""
        flat = np.asarray(self.params if params is None else params, dtype=np.float64)
        out, k = [], 0
        for rows, cols in self.architecture.layer_shapes:
            w = flat[k : k + rows * cols].reshape(rows, cols)
            k += rows * cols
            b = flat[k : k + rows]
            k += rows
            out.append((w, b))
        return out

    def __call__(self, points):
        return forward(self, points)


def init_model(arch: MlpArchitecture = BASE_ARCHITECTURE, seed: int = 42) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for rows, cols in arch.layer_shapes:
        limit = math.sqrt(6.0 / (rows + cols))
        chunks.append(rng.uniform(-limit, limit, size=rows * cols))
        chunks.append(np.zeros(rows))
    return MlpModel(arch, np.concatenate(chunks).astype(np.float32))


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


@njit(cache=True)
def _forward_points(params, dims, points):
    n_layers = dims.shape[0] - 1
    width = 0
    for d in dims:
        width = max(width, d)
    out = np.empty(points.shape[0])
    h = np.empty(width)
    nxt = np.empty(width)
    for p in range(points.shape[0]):
        for i in range(3):
            h[i] = points[p, i]
        k = 0
        for layer in range(n_layers):
            n_in = dims[layer]
            n_out = dims[layer + 1]
            bias = k + n_in * n_out
            for r in range(n_out):
                acc = 0.0
                row = k + r * n_in
                for c in range(n_in):
                    acc += params[row + c] * h[c]
                acc += params[bias + r]
                nxt[r] = acc
            k = bias + n_out
            if layer < n_layers - 1:
                for r in range(n_out):
                    h[r] = nxt[r] if nxt[r] > 0.0 else 0.0
            else:
                out[p] = math.tanh(nxt[0])
    return out


def forward(model: MlpModel, points) -> np.ndarray:
    """Network output per point; each point is evaluated independently, so
    results do not depend on how a batch is partitioned."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    dims = np.array(model.architecture.dims, dtype=np.int64)
    return _forward_points(model.params.astype(np.float64), dims, pts)


def loss_l1(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions vs {len(t)} targets")
    if len(p) == 0:
        raise LengthMismatch("empty batch")
    return float(np.abs(p - t).mean())


def _loss_and_grad(model: MlpModel, params: np.ndarray, points: np.ndarray, targets: np.ndarray):
    layers = model.layers(params)
    acts = [points]
    h = points
    for w, b in layers[:-1]:
        h = np.maximum(h @ w.T + b, 0.0)
        acts.append(h)
    w_out, b_out = layers[-1]
    pred = np.tanh(h @ w_out.T + b_out)[:, 0]
    n = len(targets)
    resid = pred - targets
    loss = float(np.abs(resid).mean())
    # subgradient conventions: d|u|/du = 0 and ReLU'(0) = 0
    delta = (np.sign(resid) * (1.0 - pred * pred) / n)[:, None]
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append((delta.T @ acts[i], delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w) * (acts[i] > 0.0)
    flat = []
    for gw, gb in reversed(grads):
        flat.append(gw.reshape(-1))
        flat.append(gb)
    return loss, np.concatenate(flat)


def backward(model: MlpModel, points, targets) -> np.ndarray:
    """Exact (sub)gradient of the mean L1 loss with respect to ``params``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(pts) != len(tgt):
        raise LengthMismatch(f"{len(pts)} points vs {len(tgt)} targets")
    if len(pts) == 0:
        raise LengthMismatch("empty batch")
    return _loss_and_grad(model, model.params.astype(np.float64), pts, tgt)[1]


# --------------------------------------------------------------------------
# optimization
# --------------------------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    max_epochs: int = 100
    batch_size: int = 1024
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 5
    min_rel_improvement: float = 1e-3
    seed: int = 42

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("learning_rate and batch_size must be positive, max_epochs non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(model: MlpModel, gradient, state: AdamState, config: TrainConfig) -> tuple[MlpModel, AdamState]:
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ValueError("gradient and optimizer state sizes differ")
    step = state.step + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * g
    v = config.beta2 * state.v + (1.0 - config.beta2) * g * g
    m_hat = m / (1.0 - config.beta1**step)
    v_hat = v / (1.0 - config.beta2**step)
    params = model.params.astype(np.float64) - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    # master copy held at float32 so a saved model reloads bit-for-bit
    return MlpModel(model.architecture, params.astype(np.float32)), AdamState(m, v, step)


@dataclass
class TrainResult:
    model: MlpModel
    history: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    seconds: float = 0.0

    @property
    def epochs_ran(self) -> int:
        return len(self.history)

    @property
    def best_loss(self) -> float:
        return min(self.history) if self.history else math.inf

    def __iter__(self):
        # allows ``model, history = train(...)``
        return iter((self.model, self.history))


ProgressSink = Callable[[int, float, float], None]


def train(
    model: MlpModel,
    positions,
    targets,
    config: TrainConfig | None = None,
    progress: ProgressSink | None = None,
    on_epoch: Callable[[int, MlpModel], None] | None = None,
) -> TrainResult:
    """Mini-batch Adam on the L1 loss with early stopping.

    Stops once the best loss has improved by less than
    ``min_rel_improvement`` (relative) for ``patience`` consecutive epochs and
    returns the parameters of the best epoch.
    """
    config = config or TrainConfig()
    x = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(x) == 0:
        raise ValueError("training set is empty")
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} positions vs {len(y)} targets")
    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros(model.architecture.parameter_count)
    result = TrainResult(model)
    best = math.inf
    stale = 0
    t0 = time.perf_counter()
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for b, lo in enumerate(range(0, len(x), config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            loss, grad = _loss_and_grad(model, model.params.astype(np.float64), x[idx], y[idx])
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise NonFiniteLoss(epoch, b, loss)
            total += loss * len(idx)
            model, state = adam_step(model, grad, state, config)
        epoch_loss = total / len(x)
        result.history.append(epoch_loss)
        elapsed = time.perf_counter() - t0
        if progress is not None:
            progress(epoch + 1, epoch_loss, elapsed)
        if on_epoch is not None:
            on_epoch(epoch + 1, model)
        improved = best == math.inf or (best - epoch_loss) > config.min_rel_improvement * best
        if epoch_loss < best:
            best = epoch_loss
            result.model = model
            result.best_epoch = epoch + 1
        stale = 0 if improved else stale + 1
        if stale >= config.patience:
            result.stopped_early = True
            log.debug("early stop after epoch %d (best %.6g)", epoch + 1, best)
            break
    result.seconds = time.perf_counter() - t0
    return result
