"""Sphere marching with an active-ray mask buffer.

Rays start where they enter the unit ball (or at the eye when it is inside)
and rays that miss the ball are discarded up front. Each iteration gathers
the positions of all still-active rays into dense batches, evaluates the
scene once per batch and advances every ray by its distance value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

ACTIVE, HIT, MISS = 0, 1, 2
AMBIENT = 0.1
DEGENERATE_GRADIENT = 1e-12

BatchSink = Callable[[np.ndarray], None]


@dataclass(frozen=True)
class Camera:
    eye: tuple = (0.0, 0.0, -2.0)
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    fov: float = 45.0
    width: int = 256
    height: int = 256

    def __post_init__(self):
        if np.allclose(self.eye, self.look_at):
            raise ValueError("camera eye and look_at coincide")
        if not 0 < self.fov < 180:
            raise ValueError("field of view must lie in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")

    def basis(self):
        fwd = np.asarray(self.look_at, dtype=np.float64) - np.asarray(self.eye, dtype=np.float64)
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-12:
            raise ValueError("camera up vector is parallel to the view direction")
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return fwd, right, up

    def directions(self) -> np.ndarray:
        """Unit ray directions through pixel centers, row-major from the top row."""
        fwd, right, up = self.basis()
        half = math.tan(math.radians(self.fov) / 2.0)
        aspect = self.width / self.height
        xs = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * half * aspect
        ys = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * half
        d = fwd + xs[None, :, None] * right + ys[:, None, None] * up
        d = d.reshape(-1, 3)
        return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass(frozen=True)
class MarchConfig:
    epsilon: float = 1e-3
    max_steps: int = 200
    normal_h: float | None = None
    batch_size: int | None = None  # None: one batch with every active ray

    def __post_init__(self):
        if self.epsilon <= 0 or self.max_steps < 1:
            raise ValueError("epsilon must be positive and max_steps >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def h(self) -> float:
        return self.normal_h if self.normal_h is not None else 2.0 * self.epsilon


@dataclass
class RayBuffer:
    origin: np.ndarray  # (N, 3)
    direction: np.ndarray  # (N, 3) unit
    t: np.ndarray  # (N,)
    t_exit: np.ndarray  # (N,) where the ray leaves the unit ball
    state: np.ndarray  # (N,) ACTIVE / HIT / MISS
    steps: np.ndarray  # (N,)
    width: int = 0
    height: int = 0
    diagnostics: list = field(default_factory=list)

    def positions(self, idx=None) -> np.ndarray:
        if idx is None:
            return self.origin + self.t[:, None] * self.direction
        return self.origin[idx] + self.t[idx, None] * self.direction[idx]

    @property
    def hit_mask(self) -> np.ndarray:
        return (self.state == HIT).reshape(self.height, self.width)

    def copy(self) -> "RayBuffer":
        return RayBuffer(
            self.origin.copy(), self.direction.copy(), self.t.copy(), self.t_exit.copy(),
            self.state.copy(), self.steps.copy(), self.width, self.height, list(self.diagnostics),
        )


def init_rays(camera: Camera) -> RayBuffer:
    d = camera.directions()
    n = len(d)
    o = np.broadcast_to(np.asarray(camera.eye, dtype=np.float64), (n, 3)).copy()
    # |o + t d|^2 = 1 with |d| = 1
    b = (o * d).sum(axis=1)
    c = (o * o).sum(axis=1) - 1.0
    disc = b * b - c
    state = np.full(n, MISS, dtype=np.int8)
    t = np.zeros(n)
    t_exit = np.zeros(n)
    ok = disc >= 0
    root = np.sqrt(np.where(ok, disc, 0.0))
    near, far = -b - root, -b + root
    ok &= far >= 0
    state[ok] = ACTIVE
    t[ok] = np.maximum(near[ok], 0.0)
    t_exit[ok] = far[ok]
    return RayBuffer(o, d, t, t_exit, state, np.zeros(n, dtype=np.int64), camera.width, camera.height)


def evaluate(field_fn, points: np.ndarray, batch_size: int | None = None, sink: BatchSink | None = None) -> np.ndarray:
    """Evaluate ``field_fn`` on ``points`` in dense batches."""
    if len(points) == 0:
        return np.empty(0)
    size = len(points) if batch_size is None else batch_size
    out = np.empty(len(points))
    for lo in range(0, len(points), size):
        chunk = points[lo : lo + size]
        if sink is not None:
            sink(chunk)
        out[lo : lo + size] = field_fn(chunk)
    return out


def march(scene, rays: RayBuffer, config: MarchConfig = MarchConfig(), sink: BatchSink | None = None) -> RayBuffer:
    """March every active ray to a hit or a miss; returns a new buffer."""
    rays = rays.copy()
    eps = config.epsilon
    while True:
        idx = np.flatnonzero(rays.state == ACTIVE)
        if len(idx) == 0:
            break
        d = evaluate(scene, rays.positions(idx), config.batch_size, sink)
        bad = ~np.isfinite(d)
        if bad.any():
            for i in idx[bad]:
                rays.diagnostics.append(("NonFiniteDistance", int(i)))
            log.warning("%d rays returned non-finite distances; marked as misses", int(bad.sum()))
            rays.state[idx[bad]] = MISS
        good = ~bad
        idx, d = idx[good], d[good]
        hit = d < eps
        rays.state[idx[hit]] = HIT
        go = idx[~hit]
        rays.t[go] += d[~hit]
        rays.steps[go] += 1
        exited = rays.t[go] > rays.t_exit[go] + eps
        spent = rays.steps[go] >= config.max_steps
        rays.state[go[exited | spent]] = MISS
    return rays


def normals(scene, points: np.ndarray, h: float, batch_size=None, sink: BatchSink | None = None):
    """Central-difference gradients, normalized; also returns the raw norms."""
    offsets = np.vstack([np.eye(3) * h, -np.eye(3) * h])
    probes = (points[:, None, :] + offsets[None]).reshape(-1, 3)
    v = evaluate(scene, probes, batch_size, sink).reshape(-1, 6)
    grad = (v[:, :3] - v[:, 3:]) / (2.0 * h)
    norm = np.linalg.norm(grad, axis=1)
    safe = np.where(norm > DEGENERATE_GRADIENT, norm, 1.0)
    return grad / safe[:, None], norm


def shade(
    scene,
    rays: RayBuffer,
    light=(-1.0, 1.0, -1.0),
    config: MarchConfig = MarchConfig(),
    albedo=(0.85, 0.85, 0.85),
    background=(0.0, 0.0, 0.0),
    sink: BatchSink | None = None,
) -> np.ndarray:
    """Lambertian image ``(height, width, 3)`` with values in [0, 1].

    ``light`` points from the surface toward the light.
    """
    lvec = np.asarray(light, dtype=np.float64)
    lvec = lvec / np.linalg.norm(lvec)
    img = np.empty((len(rays.t), 3))
    img[:] = np.asarray(background, dtype=np.float64)
    idx = np.flatnonzero(rays.state == HIT)
    if len(idx):
        n, norm = normals(scene, rays.positions(idx), config.h, config.batch_size, sink)
        lambert = np.maximum(0.0, n @ lvec)
        lambert[norm <= DEGENERATE_GRADIENT] = 0.0
        img[idx] = np.clip(np.asarray(albedo)[None, :] * lambert[:, None] + AMBIENT, 0.0, 1.0)
    return img.reshape(rays.height, rays.width, 3)


@dataclass
class RenderResult:
    image: np.ndarray
    rays: RayBuffer
    evaluations: int

    @property
    def hit_fraction(self) -> float:
        return float((self.rays.state == HIT).mean())


def render(scene, camera: Camera, config: MarchConfig = MarchConfig(), light=(-1.0, 1.0, -1.0)) -> RenderResult:
    count = [0]

    def sink(batch):
        count[0] += len(batch)

    rays = march(scene, init_rays(camera), config, sink)
    image = shade(scene, rays, light, config, sink=sink)
    return RenderResult(image, rays, count[0])
