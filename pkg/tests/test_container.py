import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bfac.container import ContainerHeader, GopRecord, demux, mux, rate_report
from bfac.errors import BadMagic, FormatError, InvalidArgument, LengthOverrun, MalformedHeader, TruncatedData, VersionMismatch


def _stream(frames=20, gop=10, seed=0):
    rng = np.random.default_rng(seed)
    header = ContainerHeader(64, 48, 3, frames, gop, 30, 45, sigma=0.125, enhancer="guided")
    blob = lambda: rng.integers(0, 256, int(rng.integers(0, 60)), dtype=np.uint8).tobytes()
    records = [GopRecord(tuple(blob() for _ in range(2 if g == 0 else 1)), blob(), blob())
               for g in range(header.gop_count)]
    return header, records


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), frames=st.integers(2, 80), gop=st.integers(2, 21),
       planes=st.sampled_from([1, 3]), sel=st.sampled_from(["adaptive", "forced-past"]),
       name=st.text("abcdefghij-_", min_size=1, max_size=20), sigma=st.floats(1e-3, 10),
       snap=st.floats(0, 4))
def test_roundtrip_property(seed, frames, gop, planes, sel, name, sigma, snap):
    rng = np.random.default_rng(seed)
    header = ContainerHeader(int(rng.integers(1, 2000)), int(rng.integers(1, 2000)), planes, frames, gop,
                             int(rng.integers(0, 52)), int(rng.integers(0, 52)), int(rng.integers(1, 30)),
                             int(rng.integers(4, 17)), sel, 30000, 1001, sigma, 0.02, 0.01, snap, name)
    blob = lambda: rng.integers(0, 256, int(rng.integers(0, 40)), dtype=np.uint8).tobytes()
    records = [GopRecord(tuple(blob() for _ in range(2 if g == 0 else 1)), blob(), blob())
               for g in range(header.gop_count)]
    data = mux(header, records)
    h2, r2 = demux(data)
    assert h2 == header and r2 == records
    assert mux(h2, r2) == data
    assert rate_report(header, records).total_bits == 8 * len(data)


def test_two_gop_stream_has_three_keyframes():
    header, records = _stream(frames=19, gop=10)
    _, back = demux(mux(header, records))
    assert len(back) == 2 and sum(len(r.keyframes) for r in back) == 3


def test_report_categories():
    header, records = _stream()
    rep = rate_report(header, records)
    assert rep.categories["keyframes"] == 8 * sum(len(k) for r in records for k in r.keyframes)
    assert rep.categories["aux_stream"] == 8 * sum(len(r.aux) for r in records)
    assert sum(sum(g.values()) for g in rep.per_gop) + 8 * len(header.pack()) == rep.total_bits
    assert rep.lines()[-1] == f"bits_total={rep.total_bits}"


def test_distinct_parse_errors():
    header, records = _stream()
    data = mux(header, records)
    with pytest.raises(BadMagic):
        demux(b"BFAX" + data[4:])
    with pytest.raises(VersionMismatch):
        demux(data[:4] + b"\x02" + data[5:])
    with pytest.raises(TruncatedData, match="truncated"):
        demux(data[: len(header.pack()) - 3])
    with pytest.raises(LengthOverrun):
        demux(data + b"\0")
    pos = len(header.pack()) + 1
    with pytest.raises(LengthOverrun):
        demux(data[:pos] + b"\xff\xff\xff\x7f" + data[pos + 4 :])


def test_every_truncation_is_an_error():
    header, records = _stream()
    data = mux(header, records)
    for cut in range(len(data)):
        with pytest.raises(FormatError):
            demux(data[:cut])


def test_random_corruption_never_crashes():
    header, records = _stream()
    data = bytearray(mux(header, records))
    rng = np.random.default_rng(9)
    for _ in range(300):
        bad = bytearray(data)
        for i in rng.integers(0, len(bad), 3):
            bad[i] = int(rng.integers(0, 256))
        try:
            demux(bytes(bad))
        except FormatError:
            pass


def test_inconsistent_header_fields():
    header, records = _stream()
    data = bytearray(mux(header, records))
    data[12:14] = (1).to_bytes(2, "little")  # gop_size 1
    with pytest.raises(MalformedHeader):
        demux(bytes(data))


def test_mux_validation():
    header, records = _stream()
    with pytest.raises(InvalidArgument):
        mux(header, records[:-1])
    with pytest.raises(InvalidArgument):
        mux(header, [GopRecord((b"a",))] + records[1:])
    with pytest.raises(InvalidArgument):
        ContainerHeader(4, 4, 1, 0, 10, 30, 45)
    with pytest.raises(InvalidArgument):
        ContainerHeader(70000, 4, 1, 10, 10, 30, 45).pack()
