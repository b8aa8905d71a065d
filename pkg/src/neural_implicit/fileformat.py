"""Reader and writer for ``.ni`` Neural Implicit files.

Layout (little-endian)::

    offset  size  field
    0       4     magic b"NIMP"
    4       1     version (1)
    5       2     hidden layer count (u16)
    7       2     hidden width (u16)
    9       1     hidden activation code (0 = ReLU)
    10      1     output activation code (0 = TanH)
    11      48    3x4 row-major affine transform, model units -> unit ball (f32)
    59      4*P   parameters (f32), layer by layer: weights (out x in) then biases
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, TrailingBytes, TruncatedPayload, UnknownActivationCode, UnsupportedVersion
from .mesh import NormalizationTransform
from .network import MlpArchitecture, MlpModel, forward

MAGIC = b"NIMP"
VERSION = 1
HEADER = struct.Struct("<4sBHHBB")
TRANSFORM_BYTES = 48
ACTIVATIONS_HIDDEN = {0: "relu"}
ACTIVATIONS_OUTPUT = {0: "tanh"}


def file_size(arch: MlpArchitecture) -> int:
    return HEADER.size + TRANSFORM_BYTES + 4 * arch.parameter_count


@dataclass(frozen=True)
class NeuralImplicit:
    model: MlpModel
    transform: NormalizationTransform

    def __iter__(self):
        return iter((self.model, self.transform))

    def __call__(self, points):
        """Signed distance in the normalized (unit-ball) frame."""
        return forward(self.model, points)

    def distance_world(self, points) -> np.ndarray:
        """Signed distance in the original model units."""
        return forward(self.model, self.transform.apply(points)) / self.transform.scale


def to_bytes(model: MlpModel, transform: NormalizationTransform) -> bytes:
    arch = model.architecture
    header = HEADER.pack(MAGIC, VERSION, arch.hidden_layers, arch.hidden_width, 0, 0)
    matrix = transform.matrix().astype("<f4").tobytes()
    return header + matrix + model.params.astype("<f4").tobytes()


def from_bytes(data: bytes) -> NeuralImplicit:
    if len(data) < HEADER.size:
        raise TruncatedPayload(f"file is {len(data)} bytes, shorter than the {HEADER.size}-byte header")
    magic, version, layers, width, act_hidden, act_out = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported format version {version}")
    if act_hidden not in ACTIVATIONS_HIDDEN:
        raise UnknownActivationCode(f"unknown hidden activation code {act_hidden}")
    if act_out not in ACTIVATIONS_OUTPUT:
        raise UnknownActivationCode(f"unknown output activation code {act_out}")
    arch = MlpArchitecture(layers, width)
    expected = file_size(arch)
    if len(data) < expected:
        raise TruncatedPayload(f"{arch} needs {expected} bytes, file has {len(data)}")
    if len(data) > expected:
        raise TrailingBytes(f"{len(data) - expected} bytes after the declared payload")
    matrix = np.frombuffer(data, dtype="<f4", count=12, offset=HEADER.size).reshape(3, 4)
    params = np.frombuffer(data, dtype="<f4", count=arch.parameter_count, offset=HEADER.size + TRANSFORM_BYTES)
    transform = NormalizationTransform.from_matrix(matrix.astype(np.float64))
    return NeuralImplicit(MlpModel(arch, params.astype(np.float32)), transform)


def save(model: MlpModel, transform: NormalizationTransform, path) -> int:
    """Write atomically (temp file + rename); returns the byte count."""
    path = Path(path)
    data = to_bytes(model, transform)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(data)


def load(path) -> NeuralImplicit:
    return from_bytes(Path(path).read_bytes())
