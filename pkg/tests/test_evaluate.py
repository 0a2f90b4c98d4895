import csv
import io
import math

import pytest

from bfac.errors import InvalidArgument, MalformedHeader
from bfac.evaluate import (
    RD_COLUMNS,
    TRACE_COLUMNS,
    bd_csv,
    fmt,
    frame_metrics,
    frame_metrics_csv,
    gop_sweep,
    kbps,
    load_external_metrics,
    load_rd_csv,
    mean_quality,
    merge_external,
    qp_ladder,
)
from bfac.synth import static, talking_blob


@pytest.fixture(scope="module")
def static_sweep():
    return gop_sweep(static(20, 256), (5, 10, 15, 20), metrics=("psnr", "ssim"))


def test_formatting():
    assert fmt(1 / 3) == "0.333333"
    assert fmt(math.inf) == "inf" and fmt(-math.inf) == "-inf" and fmt(math.nan) == "nan"
    assert kbps(1000, 25, 25.0) == 1.0
    assert mean_quality([30.0, math.inf]) == 65.0


def test_static_traces_are_flat(static_sweep):
    for p in static_sweep.points:
        for trace in p.traces.values():
            assert max(trace) - min(trace) <= 0.5


def test_rd_csv_schema_and_roundtrip(static_sweep, tmp_path):
    text = static_sweep.rd_csv()
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0].keys()) == RD_COLUMNS
    assert len(rows) == 8
    rates = [float(r["kbps"]) for r in rows if r["metric"] == "psnr"]
    assert all(b < a for a, b in zip(rates, rates[1:]))
    path = tmp_path / "rd.csv"
    path.write_text(text)
    curves = load_rd_csv(path)
    assert set(curves) == {"psnr", "ssim"} and len(curves["psnr"].points) == 4


def test_trace_csv_schema(static_sweep):
    rows = list(csv.DictReader(io.StringIO(static_sweep.trace_csv())))
    assert tuple(rows[0].keys()) == TRACE_COLUMNS
    assert {r["mode"] for r in rows} == {"adaptive", "forced-past"}
    assert len(rows) == 4 * 2 * 20
    keys = [r for r in rows if r["gop"] == "5" and r["mode"] == "adaptive" and r["keyframe"] == "1"]
    assert [int(r["frame"]) for r in keys] == [0, 4, 8, 12, 16, 19]
    assert all(r["selected"] == "key" for r in keys)


def test_csv_is_deterministic(static_sweep):
    again = gop_sweep(static(20, 256), (5, 10, 15, 20), metrics=("psnr", "ssim"), workers=3)
    assert again.rd_csv() == static_sweep.rd_csv()
    assert again.trace_csv() == static_sweep.trace_csv()


def test_external_metrics_merge(static_sweep, tmp_path):
    p = tmp_path / "lpips.csv"
    lines = ["gop,frame,metric,value"]
    for g in (5, 10, 15, 20):
        lines += [f"{g},{i},lpips,{0.01 * g + 0.001 * i}" for i in range(3)]
    p.write_text("\n".join(lines) + "\n")
    ext = load_external_metrics(p)
    merge_external(static_sweep, ext)
    assert "lpips" in static_sweep.metrics
    assert static_sweep.points[0].quality["lpips"] == pytest.approx(0.051)
    assert "lpips" in static_sweep.rd_csv()
    p.write_text("gop,frame,metric,value\n5,0,lpips,x\n")
    with pytest.raises(MalformedHeader):
        load_external_metrics(p)
    p.write_text("gop,metric\n5,lpips\n")
    with pytest.raises(MalformedHeader):
        load_external_metrics(p)
    with pytest.raises(InvalidArgument):
        merge_external(static_sweep, {(5, "dists"): [0.1]})


def test_bd_csv_identical(tmp_path):
    rd = "gop,kbps,metric,value,bits_keyframes,bits_aux,bits_keypoints\n" + "".join(
        f"{g},{r},psnr,{q},0,0,0\n" for g, r, q in [(5, 200, 38), (10, 120, 36), (15, 90, 35), (20, 80, 34.5)]
    )
    p = tmp_path / "rd.csv"
    p.write_text(rd)
    curves = load_rd_csv(p)
    assert bd_csv(curves, curves) == "metric,bd_rate_percent,bd_quality\npsnr,0.000000,0.000000\n"


def test_frame_metrics_csv():
    v = talking_blob(3, 32)
    text = frame_metrics_csv(frame_metrics(v, v, ["psnr", "charbonnier"]))
    assert text.splitlines()[0] == "frame,metric,value"
    assert "0,psnr,inf" in text and "mean,psnr,100.000000" in text
    with pytest.raises(InvalidArgument):
        frame_metrics(v, talking_blob(2, 32))


def test_qp_ladder_monotone():
    frames = list(talking_blob(3, 64))
    for kind in ("intra", "inter"):
        check = qp_ladder(frames, [40, 20, 30], kind)
        assert check.qps == [20, 30, 40] and check.monotone


def test_sweep_validation():
    v = talking_blob(6, 32)
    with pytest.raises(InvalidArgument):
        gop_sweep(v, (5, 10))
    with pytest.raises(InvalidArgument):
        gop_sweep(v, ())
    with pytest.raises(InvalidArgument):
        gop_sweep(v, (5,), metrics=("vmaf",))
