import struct

import numpy as np
import pytest

from tierkv.errors import TraceFormatError
from tierkv.synth import SynthParams, gen_trace
from tierkv.tracefile import MAGIC, TraceFile, read_trace, write_trace


def small_trace(seed=0):
    return gen_trace(SynthParams(n_prefill=40, n_decode=6, d=8, heads=2,
                                 clusters_per_segment=4, segment_size=20, seed=seed))


def test_roundtrip_bit_exact(tmp_path):
    trace = small_trace()
    path = tmp_path / "t.bin"
    write_trace(path, trace)
    back = read_trace(path)
    for name in ("prefill_keys", "prefill_values", "queries", "new_keys", "new_values"):
        a, b = getattr(trace, name), getattr(back, name)
        assert a.shape == b.shape
        assert np.array_equal(a.view(np.uint32), b.view(np.uint32)), name


def test_same_seed_byte_identical_file(tmp_path):
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    write_trace(p1, small_trace(seed=3))
    write_trace(p2, small_trace(seed=3))
    assert p1.read_bytes() == p2.read_bytes()


def test_truncated_body_reports_byte_counts(tmp_path):
    path = tmp_path / "t.bin"
    write_trace(path, small_trace())
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(TraceFormatError, match="expected .* got"):
        read_trace(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "t.bin"
    write_trace(path, small_trace())
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(TraceFormatError, match="magic"):
        read_trace(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "t.bin"
    write_trace(path, small_trace())
    data = bytearray(path.read_bytes())
    struct.pack_into("<I", data, 4, 99)
    path.write_bytes(bytes(data))
    with pytest.raises(TraceFormatError, match="version"):
        read_trace(path)


def test_zero_dimension_rejected(tmp_path):
    path = tmp_path / "t.bin"
    header = struct.pack("<4sIIIQQ", MAGIC, 1, 1, 0, 4, 2)
    path.write_bytes(header)
    with pytest.raises(TraceFormatError, match="d must be positive"):
        read_trace(path)


def test_header_fields(tmp_path):
    trace = small_trace()
    path = tmp_path / "t.bin"
    write_trace(path, trace)
    magic, version, heads, d, n_prefill, n_decode = struct.unpack_from(
        "<4sIIIQQ", path.read_bytes())
    assert (magic, version) == (MAGIC, 1)
    assert (heads, d, n_prefill, n_decode) == (2, 8, 40, 6)


def test_shape_validation():
    trace = small_trace()
    bad = TraceFile(
        d=trace.d,
        prefill_keys=trace.prefill_keys,
        prefill_values=trace.prefill_values,
        queries=trace.queries[:3],
        new_keys=trace.new_keys,
        new_values=trace.new_values,
    )
    with pytest.raises(TraceFormatError):
        bad.validate()
