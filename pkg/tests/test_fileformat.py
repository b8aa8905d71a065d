import struct

import numpy as np
import pytest

from neural_implicit import fileformat
from neural_implicit.errors import BadMagic, TrailingBytes, TruncatedPayload, UnknownActivationCode, UnsupportedVersion
from neural_implicit.mesh import NormalizationTransform
from neural_implicit.network import BASE_ARCHITECTURE, MlpArchitecture, forward, init_model

XF = NormalizationTransform(np.array([0.25, -1.0, 2.0]), 0.5)


def test_sizes():
    assert fileformat.file_size(BASE_ARCHITECTURE) == 30271
    assert fileformat.file_size(MlpArchitecture(1, 4)) == 143
    assert len(fileformat.to_bytes(init_model(MlpArchitecture(1, 4)), XF)) == 143


def test_header_layout():
    data = fileformat.to_bytes(init_model(MlpArchitecture(3, 7)), XF)
    assert data[:4] == b"NIMP" and data[4] == 1
    assert struct.unpack_from("<HHBB", data, 5) == (3, 7, 0, 0)
    m = np.frombuffer(data, "<f4", 12, 11).reshape(3, 4)
    np.testing.assert_array_equal(m, XF.matrix().astype(np.float32))


def test_roundtrip_bitwise(tmp_path):
    model = init_model(seed=9)
    n = fileformat.save(model, XF, tmp_path / "a.ni")
    assert n == 30271 == (tmp_path / "a.ni").stat().st_size
    back = fileformat.load(tmp_path / "a.ni")
    np.testing.assert_array_equal(back.model.params, model.params)
    p = np.random.default_rng(0).uniform(-1, 1, size=(1000, 3))
    np.testing.assert_array_equal(forward(back.model, p), forward(model, p))
    np.testing.assert_allclose(back.transform.apply(p), XF.apply(p), rtol=1e-6)
    assert not list(tmp_path.glob(".a.ni.*"))


def test_world_distance_uses_transform():
    imp = fileformat.from_bytes(fileformat.to_bytes(init_model(MlpArchitecture(1, 4)), XF))
    p = np.array([[0.1, 0.2, 0.3]])
    assert imp.distance_world(p)[0] == pytest.approx(forward(imp.model, XF.apply(p))[0] / 0.5, rel=1e-6)


def _valid():
    return bytearray(fileformat.to_bytes(init_model(MlpArchitecture(2, 4)), XF))


@pytest.mark.parametrize(
    "mutate, error",
    [
        (lambda d: d.__setitem__(slice(0, 4), b"NOPE"), BadMagic),
        (lambda d: d.__setitem__(4, 2), UnsupportedVersion),
        (lambda d: d.__setitem__(9, 7), UnknownActivationCode),
        (lambda d: d.__setitem__(10, 1), UnknownActivationCode),
        (lambda d: d.__delitem__(slice(-1, None)), TruncatedPayload),
        (lambda d: d.__delitem__(slice(5, None)), TruncatedPayload),
        (lambda d: d.extend(b"\0"), TrailingBytes),
    ],
)
def test_corrupt_files_rejected(mutate, error):
    data = _valid()
    mutate(data)
    with pytest.raises(error):
        fileformat.from_bytes(bytes(data))
