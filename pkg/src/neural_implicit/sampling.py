"""Training-set construction: uniform candidates in the unit ball, distance
based importance weights and weighted subset selection, plus the vertex- and
surface-Gaussian comparison samplers."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import OracleFailure
from .mesh import Mesh, sample_surface

STRATEGIES = ("importance", "uniform", "vertex_gaussian", "surface_gaussian")
DEFAULT_SIGMA = {"vertex_gaussian": 0.1, "surface_gaussian": 0.01}
BIAS_SIGMA = 0.1
LABEL_CLAMP = 1.0 - 1e-4
SAMPLE_MAGIC = b"NISA"

# full-scale candidate/subset sizes; the CLI multiplies both by --scale
FULL_CANDIDATES = 10_000_000
FULL_SUBSET = 1_000_000


@dataclass
class SamplingConfig:
    candidate_count: int = 100_000
    subset_count: int = 10_000
    beta: float = 30.0
    strategy: str = "importance"
    sigma: float | None = None
    bias_points: Sequence[tuple[Sequence[float], float]] = field(default_factory=tuple)
    seed: int = 42

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.subset_count > self.candidate_count:
            raise ValueError("subset_count must not exceed candidate_count")
        if self.subset_count < 0 or self.beta < 0:
            raise ValueError("subset_count and beta must be non-negative")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def gaussian_sigma(self) -> float:
        return self.sigma if self.sigma is not None else DEFAULT_SIGMA.get(self.strategy, 0.1)


@dataclass(frozen=True)
class TrainingSet:
    """Positions in the unit ball with signed distance labels and the
    (cached) weight each position was selected with."""

    positions: np.ndarray  # (m, 3)
    sdf: np.ndarray  # (m,)
    weights: np.ndarray  # (m,)

    def __len__(self) -> int:
        return len(self.sdf)

    def targets(self) -> np.ndarray:
        """Labels clamped into the open TanH range."""
        return np.clip(self.sdf, -LABEL_CLAMP, LABEL_CLAMP)


def sample_uniform_ball(count: int, seed: int = 0) -> np.ndarray:
    """Volume-uniform points in the unit ball by radial inversion."""
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=(count, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = np.cbrt(rng.uniform(size=(count, 1)))
    return direction * radius


def importance_weight(sdf_value, beta: float):
    """``exp(-beta |sdf|)``: 1 on the surface, decaying away from it."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return np.exp(-beta * np.abs(sdf_value))


def bias_factor(position, bias_points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(position, dtype=np.float64))
    factor = np.ones(len(p))
    for point, strength in bias_points:
        d2 = ((p - np.asarray(point, dtype=np.float64)) ** 2).sum(axis=1)
        factor *= 1.0 + strength * np.exp(-d2 / (2.0 * BIAS_SIGMA**2))
    return factor


def combined_weight(sdf_value, position, config: SamplingConfig):
    w = importance_weight(np.asarray(sdf_value, dtype=np.float64), config.beta) * bias_factor(position, config.bias_points)
    return float(w[0]) if np.ndim(sdf_value) == 0 else w


def weighted_subset(weights: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of an m-subset drawn without replacement with probability
    proportional to ``weights`` (exponential keys, largest ``log(u) / w``).

    Returned in ascending index order.
    """
    u = rng.uniform(size=len(weights))
    with np.errstate(divide="ignore"):
        keys = np.where(weights > 0, np.log(u) / weights, -np.inf)
    order = np.argsort(-keys, kind="stable")
    return np.sort(order[:m])


def _label(oracle: Callable, points: np.ndarray) -> np.ndarray:
    try:
        sdf = np.asarray(oracle(points), dtype=np.float64).reshape(-1)
    except Exception as exc:
        raise OracleFailure(f"distance oracle failed: {exc}") from exc
    if sdf.shape != (len(points),) or not np.all(np.isfinite(sdf)):
        raise OracleFailure("distance oracle returned non-finite or misshapen labels")
    return sdf


def _gaussian_cloud(centers: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian offsets around ``centers``; points leaving the unit ball are redrawn."""
    pts = centers + rng.normal(scale=sigma, size=centers.shape)
    outside = np.linalg.norm(pts, axis=1) > 1.0
    while outside.any():
        pts[outside] = centers[outside] + rng.normal(scale=sigma, size=(outside.sum(), 3))
        outside = np.linalg.norm(pts, axis=1) > 1.0
    return pts


def build_training_set(oracle: Callable, config: SamplingConfig, mesh: Mesh | None = None) -> TrainingSet:
    """Draw and label the training set ``S``.

    ``oracle`` maps an ``(k, 3)`` array to ``k`` signed distances. The
    Gaussian strategies also need the (normalized) ``mesh``.
    """
    rng = np.random.default_rng(config.seed)
    m = config.subset_count
    if config.strategy in ("importance", "uniform"):
        candidates = sample_uniform_ball(config.candidate_count, int(rng.integers(2**63)))
        if config.strategy == "uniform":
            pos = candidates[:m]
            sdf = _label(oracle, pos)
            return TrainingSet(pos, sdf, combined_weight(sdf, pos, config))
        sdf = _label(oracle, candidates)
        weights = combined_weight(sdf, candidates, config)
        idx = weighted_subset(weights, m, rng)
        return TrainingSet(candidates[idx], sdf[idx], weights[idx])
    if mesh is None:
        raise ValueError(f"strategy {config.strategy!r} needs the mesh")
    sigma = config.gaussian_sigma
    if config.strategy == "vertex_gaussian":
        centers = mesh.vertices[rng.integers(0, mesh.n_vertices, size=m)]
    else:
        centers = sample_surface(mesh, m, int(rng.integers(2**63)))
    pos = _gaussian_cloud(centers, sigma, rng)
    sdf = _label(oracle, pos)
    return TrainingSet(pos, sdf, combined_weight(sdf, pos, config))


def save_samples(samples: TrainingSet, path) -> None:
    """Debug dump: magic, u64 count, then (x, y, z, sdf) as little-endian f32."""
    rows = np.column_stack([samples.positions, samples.sdf]).astype("<f4")
    Path(path).write_bytes(SAMPLE_MAGIC + struct.pack("<Q", len(rows)) + rows.tobytes())


def load_samples(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != SAMPLE_MAGIC:
        raise ValueError(f"{path}: not a sample dump")
    (count,) = struct.unpack_from("<Q", data, 4)
    return np.frombuffer(data, dtype="<f4", offset=12, count=4 * count).reshape(count, 4)
