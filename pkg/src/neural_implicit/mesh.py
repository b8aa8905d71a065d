"""Triangle mesh loading (OBJ, binary/ASCII STL), unit-sphere normalization and
area-uniform surface sampling."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, MalformedRecord, UnreadableFile

log = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12
STL_WELD_TOL = 1e-8
FORMATS = ("obj", "stl_binary", "stl_ascii")


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    source_path: str = ""
    dropped_degenerate: int = 0

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise MalformedRecord("triangle index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """(T, 3, 3) array of triangle corner positions."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        return triangle_areas(self.corners())

    def subset(self, triangle_ids) -> "Mesh":
        return Mesh(self.vertices, self.triangles[np.asarray(triangle_ids)], self.source_path)


@dataclass(frozen=True)
class NormalizationTransform:
    """Maps model units into the unit ball: ``p' = (p + translation) * scale``."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))

    def apply(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) + self.translation) * self.scale

    def inverse(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale - self.translation

    def matrix(self) -> np.ndarray:
        """Row-major 3x4 affine matrix equivalent to :meth:`apply`."""
        m = np.zeros((3, 4))
        m[:, :3] = np.eye(3) * self.scale
        m[:, 3] = self.translation * self.scale
        return m

    @classmethod
    def from_matrix(cls, m) -> "NormalizationTransform":
        m = np.asarray(m, dtype=np.float64).reshape(3, 4)
        scale = float(m[0, 0])
        return cls(translation=m[:, 3] / scale, scale=scale)


def triangle_areas(corners: np.ndarray) -> np.ndarray:
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


# --------------------------------------------------------------------------
# loading
# --------------------------------------------------------------------------


def detect_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return "obj"
    if suffix != ".stl":
        raise UnreadableFile(f"{path}: unknown mesh extension {suffix!r}")
    with open(path, "rb") as fh:
        head = fh.read(84)
    if len(head) >= 84:
        (count,) = struct.unpack("<I", head[80:84])
        if 84 + 50 * count == path.stat().st_size:
            return "stl_binary"
    if head.lstrip().lower().startswith(b"solid"):
        return "stl_ascii"
    return "stl_binary"


def load_mesh(path, format: str | None = None) -> Mesh:
    """Load a triangle mesh; ``format`` is one of ``obj``, ``stl_binary``,
    ``stl_ascii`` or ``None`` to detect from the file."""
    path = Path(path)
    if not path.is_file():
        raise UnreadableFile(f"{path}: no such file")
    try:
        fmt = format or detect_format(path)
        if fmt == "obj":
            vertices, triangles = _parse_obj(path.read_text(errors="replace"))
            vertices, triangles = weld(vertices, triangles, 0.0)
        elif fmt == "stl_binary":
            vertices, triangles = weld(*_parse_stl_binary(path.read_bytes()), STL_WELD_TOL)
        elif fmt == "stl_ascii":
            vertices, triangles = weld(*_parse_stl_ascii(path.read_text(errors="replace")), STL_WELD_TOL)
        else:
            raise ValueError(f"unknown mesh format {fmt!r}; expected one of {FORMATS}")
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    if len(triangles) == 0:
        raise EmptyMesh(f"{path}: no triangles")
    return _drop_degenerate(vertices, triangles, str(path))


def _parse_obj(text: str):
    vertices: list[tuple[float, float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            try:
                x, y, z = (float(s) for s in parts[1:4])
            except ValueError:
                raise MalformedRecord("bad vertex record", f"line {lineno}") from None
            if len(parts) < 4:
                raise MalformedRecord("vertex needs 3 coordinates", f"line {lineno}")
            vertices.append((x, y, z))
        elif tag == "f":
            if len(parts) < 4:
                raise MalformedRecord("face needs at least 3 vertices", f"line {lineno}")
            idx = []
            for token in parts[1:]:
                try:
                    i = int(token.split("/", 1)[0])
                except ValueError:
                    raise MalformedRecord(f"bad face index {token!r}", f"line {lineno}") from None
                # OBJ is 1-based; negative indices count back from the latest vertex
                j = i - 1 if i > 0 else len(vertices) + i
                if i == 0 or not 0 <= j < len(vertices):
                    raise MalformedRecord(
                        f"face index {i} out of range for {len(vertices)} vertices", f"line {lineno}"
                    )
                idx.append(j)
            # fan triangulation for polygons
            for k in range(1, len(idx) - 1):
                triangles.append((idx[0], idx[k], idx[k + 1]))
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(triangles, dtype=np.int64).reshape(-1, 3)


def _parse_stl_binary(data: bytes):
    if len(data) < 84:
        raise MalformedRecord("binary STL shorter than its 84-byte header", "offset 0")
    (count,) = struct.unpack_from("<I", data, 80)
    need = 84 + 50 * count
    if len(data) < need:
        raise MalformedRecord(f"binary STL declares {count} facets but is truncated", f"offset {len(data)}")
    record = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    facets = np.frombuffer(data, dtype=record, count=count, offset=84)
    corners = facets["v"].astype(np.float64).reshape(-1, 3)
    return corners, np.arange(3 * count, dtype=np.int64).reshape(-1, 3)


def _parse_stl_ascii(text: str):
    corners = []
    facet: list = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        key = parts[0].lower()
        if key == "vertex":
            try:
                facet.append([float(s) for s in parts[1:4]])
            except ValueError:
                raise MalformedRecord("bad vertex record", f"line {lineno}") from None
            if len(parts) != 4:
                raise MalformedRecord("vertex needs 3 coordinates", f"line {lineno}")
        elif key == "endloop":
            if len(facet) != 3:
                raise MalformedRecord(f"facet loop has {len(facet)} vertices", f"line {lineno}")
            corners.extend(facet)
            facet = []
        elif key not in ("solid", "facet", "outer", "endfacet", "endsolid"):
            raise MalformedRecord(f"unexpected keyword {parts[0]!r}", f"line {lineno}")
    corners = np.array(corners, dtype=np.float64).reshape(-1, 3)
    return corners, np.arange(len(corners), dtype=np.int64).reshape(-1, 3)


def weld(vertices: np.ndarray, triangles: np.ndarray, tol: float):
    """Merge vertices closer than ``tol`` (Chebyshev-cell hash, first
    occurrence wins). Unreferenced vertices are kept."""
    if len(vertices) == 0:
        return vertices, triangles
    if tol <= 0:
        uniq, first, inverse = np.unique(vertices, axis=0, return_index=True, return_inverse=True)
        # keep first-occurrence order so the output is stable under re-load
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        return uniq[order], rank[inverse.reshape(-1)][triangles]
    cells = np.floor(vertices / tol).astype(np.int64)
    table: dict[tuple, list[int]] = {}
    remap = np.empty(len(vertices), dtype=np.int64)
    kept: list[int] = []
    offsets = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)]
    for i, (p, cell) in enumerate(zip(vertices, map(tuple, cells))):
        match = -1
        for d in offsets:
            for j in table.get((cell[0] + d[0], cell[1] + d[1], cell[2] + d[2]), ()):
                if np.all(np.abs(vertices[kept[j]] - p) <= tol):
                    match = j
                    break
            if match >= 0:
                break
        if match < 0:
            match = len(kept)
            kept.append(i)
            table.setdefault(cell, []).append(match)
        remap[i] = match
    return vertices[kept], remap[triangles]


def _drop_degenerate(vertices, triangles, source: str) -> Mesh:
    corners = vertices[triangles]
    center = 0.5 * (vertices.min(axis=0) + vertices.max(axis=0))
    radius = np.linalg.norm(vertices - center, axis=1).max()
    # area threshold is measured in normalized (unit-ball) units
    area_scale = 1.0 / radius**2 if radius > 0 else 1.0
    keep = triangle_areas(corners) * area_scale >= DEGENERATE_AREA
    dropped = int((~keep).sum())
    if dropped:
        log.info("%s: dropped %d degenerate triangles", source, dropped)
    if not keep.any():
        raise EmptyMesh(f"{source}: every triangle is degenerate")
    return Mesh(vertices, triangles[keep], source, dropped)


def save_obj(mesh: Mesh, path) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# normalization and sampling
# --------------------------------------------------------------------------


def normalize_to_unit_sphere(mesh: Mesh, padding: float = 0.1) -> tuple[Mesh, NormalizationTransform]:
    if not 0 <= padding < 0.5:
        raise ValueError(f"padding must lie in [0, 0.5), got {padding}")
    if mesh.n_triangles == 0:
        raise EmptyMesh("cannot normalize an empty mesh")
    v = mesh.vertices
    translation = -0.5 * (v.min(axis=0) + v.max(axis=0))
    radius = np.linalg.norm(v + translation, axis=1).max()
    if radius == 0:
        raise EmptyMesh("mesh collapses to a point")
    xf = NormalizationTransform(translation, (1.0 - padding) / radius)
    return Mesh(xf.apply(v), mesh.triangles, mesh.source_path, mesh.dropped_degenerate), xf


def sample_surface(mesh: Mesh, count: int, seed: int = 0) -> np.ndarray:
    """Area-uniform random points on the mesh surface, shape (count, 3)."""
    if mesh.n_triangles == 0:
        raise EmptyMesh("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.areas()
    cdf = np.cumsum(areas)
    tri = np.searchsorted(cdf, rng.uniform(0.0, cdf[-1], size=count), side="right")
    tri = np.minimum(tri, len(areas) - 1)
    u = rng.uniform(size=(count, 2))
    flip = u.sum(axis=1) > 1.0
    u[flip] = 1.0 - u[flip]
    c = mesh.corners()[tri]
    return c[:, 0] + u[:, :1] * (c[:, 1] - c[:, 0]) + u[:, 1:] * (c[:, 2] - c[:, 0])
