"""Shared fixtures and independent reference implementations used as test
oracles. Nothing here imports the library's numerical kernels."""

from __future__ import annotations

import numpy as np
import pytest

from neural_implicit.mesh import normalize_to_unit_sphere
from neural_implicit.shapes import icosphere, load_bundled, torus


def point_triangle_distance_ref(p, a, b, c) -> float:
    """Distance from ``p`` to triangle ``abc``: projection onto the plane when
    it lands inside, otherwise the nearest of the three edge segments."""
    p, a, b, c = (np.asarray(x, dtype=np.float64) for x in (p, a, b, c))
    n = np.cross(b - a, c - a)
    nn = n @ n
    if nn > 0:
        proj = p - ((p - a) @ n) / nn * n
        # barycentric sign test
        s1 = np.cross(b - a, proj - a) @ n
        s2 = np.cross(c - b, proj - b) @ n
        s3 = np.cross(a - c, proj - c) @ n
        if s1 >= 0 and s2 >= 0 and s3 >= 0:
            return float(np.linalg.norm(p - proj))

    def seg(u, v):
        d = v - u
        dd = d @ d
        t = 0.0 if dd == 0 else np.clip((p - u) @ d / dd, 0.0, 1.0)
        return float(np.linalg.norm(p - (u + t * d)))

    return min(seg(a, b), seg(b, c), seg(c, a))


def mesh_distance_ref(mesh, points) -> np.ndarray:
    corners = mesh.corners()
    return np.array([min(point_triangle_distance_ref(q, *tri) for tri in corners) for q in points])


def mlp_loss_ref(arch, params, points, targets) -> np.longdouble:
    """Mean L1 loss of the MLP, evaluated in extended precision."""
    flat = np.asarray(params, dtype=np.longdouble)
    h = np.asarray(points, dtype=np.longdouble)
    k = 0
    shapes = arch.layer_shapes
    for i, (rows, cols) in enumerate(shapes):
        w = flat[k : k + rows * cols].reshape(rows, cols)
        k += rows * cols
        b = flat[k : k + rows]
        k += rows
        z = h @ w.T + b
        h = np.maximum(z, 0) if i < len(shapes) - 1 else np.tanh(z)
    return np.mean(np.abs(h[:, 0] - np.asarray(targets, dtype=np.longdouble)))


@pytest.fixture(scope="session")
def unit_icosphere():
    """2-subdivision icosphere of radius 0.5 at the origin (already inside the ball)."""
    return icosphere(2, 0.5)


@pytest.fixture(scope="session")
def normalized_ico():
    return normalize_to_unit_sphere(load_bundled("icosphere"))


@pytest.fixture(scope="session")
def normalized_torus():
    return normalize_to_unit_sphere(torus())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---- acceptance summary ----------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
