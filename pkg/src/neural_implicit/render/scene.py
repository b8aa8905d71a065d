"""Distance-field scene trees and the text expression language used by the
``render`` command.

Grammar (whitespace is insignificant)::

    expr   := NAME "(" [arg ("," arg)*] ")"
    arg    := NUMBER | STRING | expr
    NAME   := sphere | box | ni | grid | empty | union | intersection
              | difference | translate | rotate

``sphere(r)``, ``box(h)`` or ``box(hx, hy, hz)``, ``ni("file.ni")``,
``grid("file.sdfg")``, ``empty()``, ``union(a, b, ...)``,
``intersection(a, b, ...)``, ``difference(a, b)``, ``translate(x, y, z, e)``
and ``rotate(ax, ay, az, degrees, e)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..distance_field import SdfGrid, grid_query, load_grid
from ..errors import SceneParseError
from ..fileformat import NeuralImplicit
from ..fileformat import load as load_ni
from ..network import forward


class Node:
    def distance(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return float(self.distance(pts.reshape(1, 3))[0])
        return self.distance(pts.reshape(-1, 3))


@dataclass(frozen=True)
class Sphere(Node):
    radius: float

    def distance(self, points):
        return np.sqrt((points * points).sum(axis=1)) - self.radius


@dataclass(frozen=True)
class Box(Node):
    half_extent: tuple[float, float, float]

    def distance(self, points):
        q = np.abs(points) - np.asarray(self.half_extent)
        outside = np.sqrt((np.maximum(q, 0.0) ** 2).sum(axis=1))
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Empty(Node):
    def distance(self, points):
        return np.full(len(points), np.inf)


@dataclass(frozen=True, eq=False)
class NeuralLeaf(Node):
    """A network field in its own unit-ball frame.

    Outside the ball the network was never trained, so the distance is the
    gap to the ball plus the prediction at the nearest ball point.
    ``relaxation`` scales returned distances (values below 1 make marching
    safer for fields that are not exactly 1-Lipschitz).
    """

    implicit: NeuralImplicit
    relaxation: float = 1.0

    def distance(self, points):
        r = np.sqrt((points * points).sum(axis=1))
        outside = r > 1.0
        pts = points.copy()
        pts[outside] /= r[outside, None]
        d = forward(self.implicit.model, pts)
        d[outside] += r[outside] - 1.0
        return self.relaxation * d


@dataclass(frozen=True, eq=False)
class GridLeaf(Node):
    grid: SdfGrid

    def distance(self, points):
        return grid_query(self.grid, points)


@dataclass(frozen=True, eq=False)
class Union(Node):
    children: tuple

    def distance(self, points):
        out = self.children[0].distance(points)
        for c in self.children[1:]:
            out = np.minimum(out, c.distance(points))
        return out


@dataclass(frozen=True, eq=False)
class Intersection(Node):
    children: tuple

    def distance(self, points):
        out = self.children[0].distance(points)
        for c in self.children[1:]:
            out = np.maximum(out, c.distance(points))
        return out


@dataclass(frozen=True, eq=False)
class Difference(Node):
    a: Node
    b: Node

    def distance(self, points):
        return np.maximum(self.a.distance(points), -self.b.distance(points))


@dataclass(frozen=True, eq=False)
class Rigid(Node):
    """Child placed by ``x_world = R x_local + t``; queries use the inverse."""

    rotation: np.ndarray
    translation: np.ndarray
    child: Node

    def distance(self, points):
        local = (points - self.translation) @ self.rotation
        return self.child.distance(local)


def translate(x, y, z, child) -> Rigid:
    return Rigid(np.eye(3), np.array([x, y, z], dtype=np.float64), child)


def rotate(axis, degrees, child) -> Rigid:
    a = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ValueError("rotation axis must be non-zero")
    a = a / norm
    th = np.radians(degrees)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    r = np.eye(3) + np.sin(th) * k + (1 - np.cos(th)) * (k @ k)
    return Rigid(r, np.zeros(3), child)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<str>\"[^\"]*\"|'[^']*')|(?P<name>[A-Za-z_]\w*)|(?P<punct>[(),]))"
)


class _Parser:
    def __init__(self, text: str, base_dir: Path, relaxation: float):
        self.text = text
        self.pos = 0
        self.base_dir = base_dir
        self.relaxation = relaxation
        self._cache: dict[str, object] = {}

    def _skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self):
        self._skip()
        if self.pos >= len(self.text):
            return None, None, self.pos
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            raise SceneParseError(f"unexpected character {self.text[self.pos]!r}", self.pos)
        kind = m.lastgroup
        return kind, m.group(kind), m.start(kind)

    def _next(self):
        kind, value, start = self._peek()
        if kind is None:
            raise SceneParseError("unexpected end of expression", self.pos)
        self.pos = start + len(value)
        return kind, value, start

    def _expect(self, punct):
        kind, value, start = self._peek()
        if kind is None:
            raise SceneParseError(f"expected {punct!r} but the expression ended", self.pos)
        if value != punct:
            raise SceneParseError(f"expected {punct!r}, found {value!r}", start)
        self.pos = start + 1

    def parse(self) -> Node:
        node = self._expr()
        kind, value, start = self._peek()
        if kind is not None:
            raise SceneParseError(f"unexpected trailing {value!r}", start)
        return node

    def _expr(self):
        kind, value, start = self._next()
        if kind != "name":
            raise SceneParseError(f"expected a shape or operator name, found {value!r}", start)
        self._expect("(")
        args = []
        kind, tok, _ = self._peek()
        if tok != ")":
            while True:
                args.append(self._arg())
                kind, tok, pos = self._peek()
                if tok == ",":
                    self.pos = pos + 1
                    continue
                break
        self._expect(")")
        return self._build(value, args, start)

    def _arg(self):
        kind, value, start = self._peek()
        if kind == "num":
            self.pos = start + len(value)
            return float(value)
        if kind == "str":
            self.pos = start + len(value)
            return value[1:-1]
        if kind == "name":
            return self._expr()
        if kind is None:
            raise SceneParseError("unexpected end of expression", self.pos)
        raise SceneParseError(f"unexpected {value!r}", start)

    def _build(self, name, args, offset):
        def need(cond, what):
            if not cond:
                raise SceneParseError(f"{name}() expects {what}", offset)

        nums = [a for a in args if isinstance(a, float)]
        nodes = [a for a in args if isinstance(a, Node)]
        strs = [a for a in args if isinstance(a, str)]
        if name == "sphere":
            need(len(args) == 1 and len(nums) == 1 and nums[0] > 0, "one positive radius")
            return Sphere(nums[0])
        if name == "box":
            need(len(args) in (1, 3) and len(nums) == len(args), "1 or 3 half extents")
            return Box(tuple(nums * 3) if len(nums) == 1 else tuple(nums))
        if name == "empty":
            need(not args, "no arguments")
            return Empty()
        if name in ("ni", "grid"):
            need(len(args) == 1 and len(strs) == 1, "one quoted file path")
            path = Path(strs[0])
            if not path.is_absolute():
                path = self.base_dir / path
            try:
                if name == "ni":
                    return NeuralLeaf(load_ni(path), self.relaxation)
                return GridLeaf(load_grid(path))
            except OSError as exc:
                raise SceneParseError(f"cannot read {strs[0]!r}: {exc.strerror}", offset) from None
        if name in ("union", "intersection"):
            need(len(args) >= 1 and len(nodes) == len(args), "one or more sub-expressions")
            return (Union if name == "union" else Intersection)(tuple(nodes))
        if name == "difference":
            need(len(args) == 2 and len(nodes) == 2, "two sub-expressions")
            return Difference(*nodes)
        if name == "translate":
            need(len(args) == 4 and len(nums) == 3 and isinstance(args[3], Node), "x, y, z and a sub-expression")
            return translate(*nums, args[3])
        if name == "rotate":
            need(len(args) == 5 and len(nums) == 4 and isinstance(args[4], Node),
                 "axis x, y, z, angle in degrees and a sub-expression")
            return rotate(nums[:3], nums[3], args[4])
        raise SceneParseError(f"unknown name {name!r}", offset)


def parse_scene(text: str, base_dir=".", relaxation: float = 1.0) -> Node:
    return _Parser(text, Path(base_dir), relaxation).parse()
