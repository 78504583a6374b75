import struct
import zlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from wavestate.tensorfile import (
    BadMagic,
    BadVersion,
    ChecksumMismatch,
    TensorFileError,
    TruncatedFile,
    decode_tensor,
    encode_tensor,
    read_tensor_file,
    write_tensor_file,
)

dtypes = st.sampled_from([np.float32, np.float64, np.uint8])


@given(dtypes.flatmap(lambda d: arrays(d, array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=5))))
def test_round_trip(a):
    b = decode_tensor(encode_tensor(a))
    assert b.dtype == a.dtype and b.shape == a.shape
    assert a.tobytes() == b.tobytes()


def test_layout_bytes():
    data = encode_tensor(np.array([[1, 2, 3]], dtype=np.uint8))
    assert data[:4] == b"WSTF"
    assert struct.unpack_from("<HB", data, 4) == (1, 2)
    assert struct.unpack_from("<II", data, 7) == (1, 3)
    assert data[15] == 2 and data[16:19] == bytes([1, 2, 3])
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])
    assert len(data) == 4 + 2 + 1 + 8 + 1 + 3 + 4


def test_scalar(tmp_path):
    p = tmp_path / "s.wstf"
    write_tensor_file(p, np.float64(2.5))
    back = read_tensor_file(p)
    assert back.shape == () and back == 2.5


def test_float_endianness():
    data = encode_tensor(np.array([1.0], dtype=">f8"))
    assert data[12:20] == struct.pack("<d", 1.0)


def test_flipped_payload_byte():
    data = bytearray(encode_tensor(np.arange(10, dtype=np.float64)))
    data[20] ^= 0xFF
    with pytest.raises(ChecksumMismatch):
        decode_tensor(bytes(data))


def test_distinct_errors():
    good = encode_tensor(np.arange(4, dtype=np.float32))
    with pytest.raises(BadMagic):
        decode_tensor(b"NOPE" + good[4:])
    bumped = bytearray(good)
    bumped[4] = 2
    with pytest.raises(BadVersion):
        decode_tensor(bytes(bumped))
    for cut in (2, 6, 10, len(good) - 1):
        with pytest.raises(TruncatedFile):
            decode_tensor(good[:cut])
    with pytest.raises(TensorFileError):
        decode_tensor(good + b"\0")
    assert issubclass(ChecksumMismatch, ValueError)


def test_unsupported_dtype():
    with pytest.raises(TypeError):
        encode_tensor(np.arange(3, dtype=np.int64))
