import numpy as np
import pytest
from hypothesis import given, strategies as st

from bfac.errors import InvalidArgument, MalformedHeader, TruncatedData, UnsupportedBitDepth, UnsupportedFormat
from bfac.frame import (
    Frame,
    Video,
    flatten_gops,
    gop_bounds,
    load_raw,
    load_video,
    load_y4m,
    round_half_away,
    save_raw,
    save_video,
    segment_gops,
)


def test_round_half_away_from_zero():
    np.testing.assert_array_equal(round_half_away(np.array([0.5, 1.5, -0.5, -1.5, 2.4])), [1, 2, -1, -2, 2])


def test_frame_is_read_only_and_validated():
    f = Frame(np.zeros((4, 5), dtype=np.uint8))
    assert f.shape == (1, 4, 5) and (f.width, f.height) == (5, 4)
    with pytest.raises(ValueError):
        f.planes[0, 0, 0] = 1
    with pytest.raises(InvalidArgument):
        Frame(np.zeros((2, 4, 4), dtype=np.uint8))
    with pytest.raises(InvalidArgument):
        Frame(np.full((1, 2, 2), 300))


def test_float_frames_are_rounded_and_clamped():
    f = Frame(np.array([[[-3.0, 1.5, 254.5, 400.0]]]))
    np.testing.assert_array_equal(f.planes[0, 0], [0, 2, 255, 255])


def test_video_rejects_mixed_shapes():
    with pytest.raises(InvalidArgument):
        Video((Frame.constant(4, 4, 0), Frame.constant(4, 5, 0)))


@pytest.mark.parametrize(
    "count,n,expected",
    [
        (9, 5, [(0, 4), (4, 8)]),
        (6, 10, [(0, 5)]),
        (120, 15, [(i * 14, i * 14 + 14) for i in range(8)] + [(112, 119)]),
        (61, 16, [(0, 15), (15, 30), (30, 45), (45, 60)]),
        (2, 2, [(0, 1)]),
    ],
)
def test_gop_bounds(count, n, expected):
    assert gop_bounds(count, n) == expected


def test_gop_bounds_rejects_bad_arguments():
    with pytest.raises(InvalidArgument):
        gop_bounds(10, 1)
    with pytest.raises(InvalidArgument):
        gop_bounds(1, 5)


@given(count=st.integers(2, 60), n=st.integers(2, 25))
def test_segmentation_invariants(count, n):
    frames = [Frame.constant(2, 2, i) for i in range(count)]
    gops = segment_gops(frames, n)
    assert gops[0].start_index == 0 and gops[-1].end_index == count - 1
    for a, b in zip(gops, gops[1:]):
        assert b.start_index == a.end_index
    for g in gops:
        assert 2 <= g.size <= n
        assert len(g.intermediates) == g.end_index - g.start_index - 1
    assert flatten_gops(gops) == frames


def test_raw_two_frame_4x4(tmp_path):
    path = tmp_path / "clip.raw"
    path.write_bytes(bytes(range(32)))
    (tmp_path / "clip.raw.hdr").write_text("width=4\nheight=4\nframes=2\n")
    v = load_raw(path)
    assert len(v) == 2 and v[1].planes[0, 0, 0] == 16


def test_raw_roundtrip_rgb(tmp_path, rng):
    v = Video(tuple(Frame(rng.integers(0, 256, (3, 6, 10))) for _ in range(3)), fps=30.0)
    save_raw(v, tmp_path / "a.raw")
    back = load_video(tmp_path / "a.raw")
    assert back.frames == v.frames and back.fps == 30.0


def test_raw_errors(tmp_path):
    p = tmp_path / "x.raw"
    p.write_bytes(bytes(10))
    with pytest.raises(MalformedHeader):
        load_raw(p)
    (tmp_path / "x.raw.hdr").write_text("width=4\nheight=4\nframes=1\n")
    with pytest.raises(TruncatedData):
        load_raw(p)
    (tmp_path / "x.raw.hdr").write_text("width=4\nheight=4\nframes=1\nbitdepth=10\n")
    with pytest.raises(UnsupportedBitDepth):
        load_raw(p)
    (tmp_path / "x.raw.hdr").write_text("width=four\n")
    with pytest.raises(MalformedHeader):
        load_raw(p)


@pytest.mark.parametrize("planes", [1, 3])
def test_y4m_roundtrip(tmp_path, rng, planes):
    v = Video(tuple(Frame(rng.integers(0, 256, (planes, 5, 7))) for _ in range(4)), fps=25.0)
    save_video(v, tmp_path / "a.y4m")
    back = load_video(tmp_path / "a.y4m")
    assert back.frames == v.frames and back.fps == 25.0


def test_y4m_rejects_420(tmp_path):
    p = tmp_path / "a.y4m"
    p.write_bytes(b"YUV4MPEG2 W4 H4 F25:1 C420jpeg\nFRAME\n" + bytes(24))
    with pytest.raises(UnsupportedFormat, match="unsupported pixel format"):
        load_y4m(p)


def test_y4m_rejects_high_bit_depth(tmp_path):
    p = tmp_path / "a.y4m"
    p.write_bytes(b"YUV4MPEG2 W4 H4 F25:1 C444p10\n")
    with pytest.raises(UnsupportedBitDepth):
        load_y4m(p)


def test_y4m_truncated_and_garbage(tmp_path):
    p = tmp_path / "a.y4m"
    p.write_bytes(b"YUV4MPEG2 W4 H4 F25:1 Cmono\nFRAME\n" + bytes(10))
    with pytest.raises(TruncatedData):
        load_y4m(p)
    p.write_bytes(b"not a video")
    with pytest.raises(MalformedHeader):
        load_y4m(p)


def test_synthetic_corpus_length():
    from bfac.synth import talking_blob

    assert len(talking_blob(120, 64)) == 120
