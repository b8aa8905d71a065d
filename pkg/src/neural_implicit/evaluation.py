"""Surface error, neural-vs-grid comparison and error-driven architecture
escalation."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .distance_field import MeshSdf, grid_from_function, grid_query, grid_to_bytes
from .fileformat import file_size
from .mesh import Mesh, sample_surface
from .network import MlpArchitecture, MlpModel, TrainConfig, forward, init_model, train
from .sampling import TrainingSet

DEFAULT_SURFACE_SAMPLES = 100_000


@dataclass
class EvalReport:
    surface_error: float
    training_loss: float = math.nan
    surface_sample_count: int = 0
    epochs_ran: int = 0
    file_bytes: int = 0
    wall_seconds: float = 0.0

    def line(self) -> str:
        """Single-line ``key=value`` record."""
        parts = []
        for f in fields(self):
            v = getattr(self, f.name)
            parts.append(f"{f.name}={v:.6g}" if isinstance(v, float) else f"{f.name}={v}")
        return " ".join(parts)

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return list(asdict(self).values())


def _stable_mean(values: np.ndarray) -> float:
    # fixed-order pairwise reduction; independent of how values were produced
    return float(np.add.reduce(np.ascontiguousarray(values, dtype=np.float64)) / len(values))


def surface_error(field_fn: Callable, mesh: Mesh, count: int = DEFAULT_SURFACE_SAMPLES, seed: int = 0) -> float:
    """Mean ``|field|`` over area-uniform samples of ``mesh``.

    ``mesh`` must already be expressed in the field's coordinate frame.
    """
    if count < 1:
        raise ValueError("surface error needs at least one sample")
    pts = sample_surface(mesh, count, seed)
    return _stable_mean(np.abs(np.asarray(field_fn(pts), dtype=np.float64)))


def model_field(model: MlpModel) -> Callable:
    return lambda p: forward(model, p)


@dataclass
class Comparison:
    neural_error: float
    grid_error: float
    neural_bytes: int
    grid_bytes: int
    neural_payload_bytes: int
    grid_payload_bytes: int
    grid_resolution: int
    count: int

    @property
    def neural_wins(self) -> bool:
        return self.neural_error < self.grid_error

    def line(self) -> str:
        return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in asdict(self).items())


def compare_representations(
    mesh: Mesh,
    neural,
    grid_resolution: int = 20,
    count: int = DEFAULT_SURFACE_SAMPLES,
    seed: int = 0,
    oracle: Callable | None = None,
) -> Comparison:
    """Surface error of a network against a trilinear grid of the same
    oracle. ``neural`` is an :class:`MlpModel` or any distance callable;
    ``mesh`` is in the normalized frame."""
    oracle = oracle or MeshSdf(mesh)
    grid = grid_from_function(oracle, grid_resolution)
    if isinstance(neural, MlpModel):
        field_fn = model_field(neural)
        arch = neural.architecture
        neural_bytes = file_size(arch)
        neural_payload = 4 * arch.parameter_count
    else:
        field_fn = neural
        neural_bytes = neural_payload = 0
    return Comparison(
        neural_error=surface_error(field_fn, mesh, count, seed),
        grid_error=surface_error(lambda p: grid_query(grid, p), mesh, count, seed),
        neural_bytes=neural_bytes,
        grid_bytes=len(grid_to_bytes(grid)),
        neural_payload_bytes=neural_payload,
        grid_payload_bytes=4 * grid_resolution**3,
        grid_resolution=grid_resolution,
        count=count,
    )


@dataclass
class Attempt:
    architecture: MlpArchitecture
    surface_error: float
    training_loss: float
    epochs_ran: int


@dataclass
class EscalationResult:
    model: MlpModel
    report: EvalReport
    met: bool
    attempts: list[Attempt] = field(default_factory=list)


def error_driven_escalation(
    mesh: Mesh,
    training_set: TrainingSet,
    target_error: float,
    ladder: Sequence[MlpArchitecture],
    train_config: TrainConfig | None = None,
    count: int = DEFAULT_SURFACE_SAMPLES,
    seed: int = 0,
) -> EscalationResult:
    """Train successively larger networks until one reaches ``target_error``.

    Returns the first architecture that meets the target, otherwise the best
    one seen with ``met=False``.
    """
    if not ladder:
        raise ValueError("architecture ladder is empty")
    train_config = train_config or TrainConfig()
    best: EscalationResult | None = None
    attempts: list[Attempt] = []
    for arch in sorted(ladder, key=lambda a: a.parameter_count):
        t0 = time.perf_counter()
        result = train(init_model(arch, train_config.seed), training_set.positions, training_set.targets(), train_config)
        err = surface_error(model_field(result.model), mesh, count, seed)
        attempts.append(Attempt(arch, err, result.best_loss, result.epochs_ran))
        report = EvalReport(
            surface_error=err,
            training_loss=result.best_loss,
            surface_sample_count=count,
            epochs_ran=result.epochs_ran,
            file_bytes=file_size(arch),
            wall_seconds=time.perf_counter() - t0,
        )
        current = EscalationResult(result.model, report, err <= target_error, attempts)
        if current.met:
            return current
        if best is None or err < best.report.surface_error:
            best = current
    best.attempts = attempts
    return best
