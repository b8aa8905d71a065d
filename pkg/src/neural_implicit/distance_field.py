"""Ground-truth signed distance: BVH nearest-triangle queries signed by
(fast) generalized winding numbers, plus the uniform-grid SDF baseline.

All query functions accept a single point ``(3,)`` or a batch ``(k, 3)`` and
return a scalar or a ``(k,)`` array respectively.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import FormatError, OnSurface
from .mesh import Mesh

LEAF_SIZE = 8
ON_SURFACE_EPS = 1e-12
DEFAULT_ACCURACY_BETA = 2.0
DEFAULT_ORDER = 2
GRID_MAGIC = b"SDFG"


def _as_points(q):
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    return np.ascontiguousarray(q.reshape(-1, 3)), single


def _unwrap(values, single):
    return float(values[0]) if single else values


# --------------------------------------------------------------------------
# BVH and nearest-triangle distance
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bvh:
    """Binary AABB tree; node 0 is the root.

    ``left[i] < 0`` marks a leaf owning ``perm[start[i]:start[i] + count[i]]``.
    Internal nodes span the union of their children's ranges.
    """

    corners: np.ndarray  # (T, 3, 3) triangle corners in mesh order
    bounds: np.ndarray  # (K, 6) min xyz then max xyz
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    perm: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.bounds)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)

    def depth(self) -> int:
        best, stack = 0, [(0, 1)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.left[node] >= 0:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best


def build_bvh(mesh: Mesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Median split along the longest axis of each node's AABB."""
    corners = np.ascontiguousarray(mesh.corners())
    centers = corners.mean(axis=1)
    tri_lo, tri_hi = corners.min(axis=1), corners.max(axis=1)
    perm = np.arange(len(corners), dtype=np.int64)
    bounds, left, right, start, count = [], [], [], [], []

    def build(lo: int, hi: int) -> int:
        ids = perm[lo:hi]
        box = np.concatenate([tri_lo[ids].min(axis=0), tri_hi[ids].max(axis=0)])
        node = len(bounds)
        bounds.append(box)
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(hi - lo)
        if hi - lo > leaf_size:
            axis = int(np.argmax(box[3:] - box[:3]))
            perm[lo:hi] = ids[np.argsort(centers[ids, axis], kind="stable")]
            mid = lo + (hi - lo) // 2
            left[node] = build(lo, mid)
            right[node] = build(mid, hi)
        return node

    build(0, len(corners))
    return Bvh(
        corners,
        np.array(bounds).reshape(-1, 6),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(start, dtype=np.int64),
        np.array(count, dtype=np.int64),
        perm,
    )


def unsigned_distance(bvh: Bvh, q):
    """Exact distance to the nearest triangle and that triangle's index.

    Ties resolve to the lowest triangle index.
    """
    pts, single = _as_points(q)
    dist, tri = K.bvh_distance(bvh.corners, bvh.bounds, bvh.left, bvh.right, bvh.start, bvh.count, bvh.perm, pts)
    if single:
        return float(dist[0]), int(tri[0])
    return dist, tri


def unsigned_distance_bruteforce(mesh_or_bvh, q):
    """All-triangle scan, the reference the BVH must reproduce."""
    corners = mesh_or_bvh.corners if isinstance(mesh_or_bvh, Bvh) else np.ascontiguousarray(mesh_or_bvh.corners())
    pts, single = _as_points(q)
    dist, tri = K.bruteforce_distance(corners, pts)
    if single:
        return float(dist[0]), int(tri[0])
    return dist, tri


# --------------------------------------------------------------------------
# winding numbers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WindingTree:
    """Per-node far-field aggregates over a :class:`Bvh` topology.

    Moments are surface integrals of ``n (x - c)^k`` about each node's
    area-weighted centroid ``c``: ``dipole`` (k = 0) through ``moment3``
    (k = 3).
    """

    bvh: Bvh
    dipole: np.ndarray  # (K, 3)
    moment1: np.ndarray  # (K, 3, 3)
    moment2: np.ndarray  # (K, 3, 3, 3)
    moment3: np.ndarray  # (K, 3, 3, 3, 3)
    centroid: np.ndarray  # (K, 3)
    area: np.ndarray  # (K,)
    radius: np.ndarray  # (K,) max distance from centroid to a node vertex


def triangle_dipoles(corners: np.ndarray) -> np.ndarray:
    """Area-weighted normals ``a n`` (half the edge cross product)."""
    return 0.5 * np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])


def build_winding_tree(bvh: Bvh) -> WindingTree:
    corners = bvh.corners
    tri_dipole = triangle_dipoles(corners)
    tri_area = np.linalg.norm(tri_dipole, axis=1)
    tri_center = corners.mean(axis=1)
    offsets = corners - tri_center[:, None, :]
    # second moment of a uniform triangle about its centroid: (1/12) sum d d^T
    tri_cov = np.einsum("tli,tlj->tij", offsets, offsets) / 12.0
    # degree-3 exact triangle quadrature (centroid plus three interior points)
    bary = np.array([[1 / 3, 1 / 3, 1 / 3], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]])
    quad_w = np.array([-27.0, 25.0, 25.0, 25.0]) / 48.0
    quad_pts = np.einsum("qa,tai->tqi", bary, corners)
    k = bvh.n_nodes
    dipole = np.zeros((k, 3))
    weighted = np.zeros((k, 3))
    area = np.zeros(k)
    # children always carry larger indices than their parent, so a reverse sweep is bottom-up
    for node in range(k - 1, -1, -1):
        if bvh.left[node] < 0:
            ids = bvh.perm[bvh.start[node] : bvh.start[node] + bvh.count[node]]
            dipole[node] = tri_dipole[ids].sum(axis=0)
            weighted[node] = (tri_center[ids] * tri_area[ids, None]).sum(axis=0)
            area[node] = tri_area[ids].sum()
        else:
            a, b = bvh.left[node], bvh.right[node]
            dipole[node] = dipole[a] + dipole[b]
            weighted[node] = weighted[a] + weighted[b]
            area[node] = area[a] + area[b]
    centroid = np.empty((k, 3))
    radius = np.empty(k)
    moment1 = np.empty((k, 3, 3))
    moment2 = np.empty((k, 3, 3, 3))
    moment3 = np.empty((k, 3, 3, 3, 3))
    for node in range(k):
        ids = bvh.perm[bvh.start[node] : bvh.start[node] + bvh.count[node]]
        pts = corners[ids].reshape(-1, 3)
        c = weighted[node] / area[node] if area[node] > 0 else pts.mean(axis=0)
        centroid[node] = c
        radius[node] = np.sqrt(((pts - c) ** 2).sum(axis=1).max())
        m = tri_center[ids] - c
        an = tri_dipole[ids]
        moment1[node] = np.einsum("ti,tj->ij", an, m)
        second = np.einsum("tj,tk->tjk", m, m) + tri_cov[ids]
        moment2[node] = np.einsum("ti,tjk->ijk", an, second)
        y = quad_pts[ids] - c
        moment3[node] = np.einsum("ti,q,tqj,tqk,tql->ijkl", an, quad_w, y, y, y, optimize=True)
    return WindingTree(bvh, dipole, moment1, moment2, moment3, centroid, area, radius)


def _raise_on_surface(values, pts, single):
    if single and np.isnan(values[0]):
        raise OnSurface(f"query point {pts[0].tolist()} lies on the mesh")
    return _unwrap(values, single)


def winding_number_exact(mesh: Mesh, q):
    """Sum of triangle solid angles over 4 pi, in mesh triangle order.

    A single on-surface query raises :class:`OnSurface`; in a batch the
    corresponding entries are NaN.
    """
    corners = mesh.corners if isinstance(mesh, Bvh) else np.ascontiguousarray(mesh.corners())
    pts, single = _as_points(q)
    return _raise_on_surface(K.winding_exact(corners, pts, ON_SURFACE_EPS), pts, single)


def winding_number_fast(tree: WindingTree, q, accuracy_beta: float = DEFAULT_ACCURACY_BETA,
                        order: int = DEFAULT_ORDER):
    """Tree-accelerated winding number.

    Nodes farther than ``accuracy_beta`` times their radius contribute a
    Taylor expansion truncated after ``order`` (0 = dipole only, up to 3 =
    third moments); nearer leaves are summed exactly. ``accuracy_beta=inf``
    reproduces :func:`winding_number_exact` bitwise.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError(f"expansion order must be 0..3, got {order}")
    if not accuracy_beta >= 1:
        raise ValueError(f"accuracy_beta must be >= 1, got {accuracy_beta}")
    b = tree.bvh
    pts, single = _as_points(q)
    values = K.winding_fast(
        b.corners, b.left, b.right, b.start, b.count, b.perm,
        tree.dipole, tree.moment1, tree.moment2, tree.moment3, tree.centroid, tree.radius,
        pts, float(accuracy_beta), int(order), ON_SURFACE_EPS,
    )
    return _raise_on_surface(values, pts, single)


# --------------------------------------------------------------------------
# signed distance
# --------------------------------------------------------------------------


def signed_distance(bvh: Bvh, tree: WindingTree, q, accuracy_beta: float = DEFAULT_ACCURACY_BETA,
                    order: int = DEFAULT_ORDER):
    """Negative inside (winding number > 0.5), zero on the surface."""
    pts, single = _as_points(q)
    dist, _ = unsigned_distance(bvh, pts)
    out = dist.copy()
    off = dist >= ON_SURFACE_EPS
    if off.any():
        w = winding_number_fast(tree, pts[off], accuracy_beta, order)
        out[off] = np.where(w > 0.5, -dist[off], dist[off])
    out[~off] = 0.0
    return _unwrap(out, single)


class MeshSdf:
    """Callable signed-distance oracle for a (normalized) mesh."""

    def __init__(self, mesh: Mesh, accuracy_beta: float = DEFAULT_ACCURACY_BETA, order: int = DEFAULT_ORDER):
        self.mesh = mesh
        self.accuracy_beta = accuracy_beta
        self.order = order
        self.bvh = build_bvh(mesh)
        self.tree = build_winding_tree(self.bvh)

    def __call__(self, q):
        return signed_distance(self.bvh, self.tree, q, self.accuracy_beta, self.order)


# --------------------------------------------------------------------------
# uniform grid baseline
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SdfGrid:
    """Lattice values ``values[ix, iy, iz]`` on a regular grid over ``[lo, hi]``."""

    values: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (self.resolution - 1)

    def lattice_points(self) -> np.ndarray:
        axes = [np.linspace(self.lo[a], self.hi[a], self.resolution) for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @property
    def nbytes(self) -> int:
        return len(grid_to_bytes(self))

    def __call__(self, q):
        return grid_query(self, q)


def lattice(resolution: int, lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 1.0)) -> np.ndarray:
    axes = [np.linspace(lo[a], hi[a], resolution) for a in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def grid_from_function(fn, resolution: int, lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 1.0)) -> SdfGrid:
    if resolution < 2:
        raise ValueError("grid resolution must be >= 2")
    pts = lattice(resolution, lo, hi)
    values = np.asarray(fn(pts.reshape(-1, 3)), dtype=np.float64).reshape((resolution,) * 3)
    return SdfGrid(values, np.array(lo, dtype=np.float64), np.array(hi, dtype=np.float64))


def build_sdf_grid(bvh: Bvh, tree: WindingTree, resolution: int, accuracy_beta: float = DEFAULT_ACCURACY_BETA,
                   order: int = DEFAULT_ORDER) -> SdfGrid:
    return grid_from_function(lambda p: signed_distance(bvh, tree, p, accuracy_beta, order), resolution)


def grid_query(grid: SdfGrid, q):
    """Trilinear interpolation; points outside the grid are clamped to it."""
    pts, single = _as_points(q)
    values = np.ascontiguousarray(grid.values, dtype=np.float64)
    return _unwrap(K.trilinear(values, grid.lo, grid.spacing, pts), single)


def grid_to_bytes(grid: SdfGrid) -> bytes:
    r = grid.resolution
    header = GRID_MAGIC + struct.pack("<I6d", r, *grid.lo, *grid.hi)
    # x-fastest ordering: index [iz, iy, ix] in C order
    payload = np.ascontiguousarray(grid.values.transpose(2, 1, 0), dtype="<f4").tobytes()
    return header + payload


def grid_from_bytes(data: bytes) -> SdfGrid:
    head = 4 + 4 + 48
    if data[:4] != GRID_MAGIC:
        raise FormatError(f"bad grid magic {data[:4]!r}")
    if len(data) < head:
        raise FormatError("grid header truncated")
    r, *b = struct.unpack_from("<I6d", data, 4)
    if len(data) != head + 4 * r**3:
        raise FormatError(f"grid payload is {len(data) - head} bytes, expected {4 * r**3}")
    values = np.frombuffer(data, dtype="<f4", offset=head).reshape(r, r, r).transpose(2, 1, 0)
    return SdfGrid(values.astype(np.float64), np.array(b[:3]), np.array(b[3:]))


def save_grid(grid: SdfGrid, path) -> None:
    Path(path).write_bytes(grid_to_bytes(grid))


def load_grid(path) -> SdfGrid:
    return grid_from_bytes(Path(path).read_bytes())


def sphere_sdf(radius: float, center=(0.0, 0.0, 0.0)):
    """Analytic sphere distance as an oracle callable."""
    c = np.asarray(center, dtype=np.float64)

    def sdf(q):
        pts, single = _as_points(q)
        return _unwrap(np.linalg.norm(pts - c, axis=1) - radius, single)

    return sdf


__all__ = [
    "Bvh", "WindingTree", "SdfGrid", "MeshSdf", "build_bvh", "build_winding_tree",
    "unsigned_distance", "unsigned_distance_bruteforce", "winding_number_exact",
    "winding_number_fast", "signed_distance", "build_sdf_grid", "grid_query",
    "grid_from_function", "grid_to_bytes", "grid_from_bytes", "save_grid", "load_grid",
    "sphere_sdf", "lattice",
]
