"""Binary PPM output."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def to_bytes(image: np.ndarray) -> bytes:
    """P6 encoding of an ``(h, w, 3)`` float image in [0, 1], top row first."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) image, got shape {img.shape}")
    h, w, _ = img.shape
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write_image(image: np.ndarray, path, format: str = "ppm") -> None:
    if format != "ppm":
        raise ValueError(f"unsupported image format {format!r}")
    Path(path).write_bytes(to_bytes(image))


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
