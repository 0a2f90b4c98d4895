"""Acceptance suite: one test per numbered criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import csv
import io
import os
import time

import numpy as np
import pytest

from bfac import cli
from bfac.config import Config
from bfac.container import ContainerHeader, GopRecord, demux, mux, rate_report
from bfac.enhance import select_reference
from bfac.evaluate import SweepResult, gop_sweep, run_point
from bfac.frame import Frame
from bfac.keypoints import CornerDetector, KeypointSet
from bfac.metrics import RdCurve, bd_metrics, charbonnier, psnr
from bfac.motion import MotionField, animate, warp_array
from bfac.rangecoder import SymbolModel, range_decode, range_encode
from bfac.reconstruct import decode_video, encode_video
from bfac.synth import morph, talking_blob
from test_motion import naive_warp

CPUS = os.cpu_count() or 1


@pytest.mark.criterion(1, "entropy-layer losslessness (1000 streams, < 30 s)")
def test_criterion_01_entropy_lossless():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        alphabet = int(rng.integers(2, 257))
        n = int(rng.integers(0, 10_001))
        skew = rng.random() < 0.5
        sym = (rng.geometric(0.3, n) - 1) % alphabet if skew else rng.integers(0, alphabet, n)
        model = SymbolModel(alphabet)
        out = range_decode(range_encode(sym, model), n, model)
        assert np.array_equal(out, sym)
    elapsed = time.perf_counter() - start
    print(f"criterion 1: 1000 streams in {elapsed:.2f} s")
    assert elapsed < 30


@pytest.mark.criterion(2, "container round-trip and bit accounting (200 cases)")
def test_criterion_02_container_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(200):
        frames, gop = int(rng.integers(2, 200)), int(rng.integers(2, 40))
        header = ContainerHeader(
            int(rng.integers(1, 4096)), int(rng.integers(1, 4096)), int(rng.choice([1, 3])), frames, gop,
            int(rng.integers(0, 52)), int(rng.integers(0, 52)), int(rng.integers(1, 64)), int(rng.integers(4, 17)),
            str(rng.choice(["adaptive", "forced-past"])), int(rng.integers(1, 120_000)), int(rng.integers(1, 1002)),
            float(rng.uniform(0.01, 1)), float(rng.uniform(1e-4, 1)), float(rng.uniform(0, 0.5)),
            float(rng.uniform(0, 3)), str(rng.choice(["guided", "identity"])),
        )
        blob = lambda: rng.integers(0, 256, int(rng.integers(0, 300)), dtype=np.uint8).tobytes()
        records = [GopRecord(tuple(blob() for _ in range(2 if g == 0 else 1)), blob(), blob())
                   for g in range(header.gop_count)]
        data = mux(header, records)
        h2, r2 = demux(data)
        assert h2 == header and r2 == records and mux(h2, r2) == data
        assert rate_report(h2, r2).total_bits == 8 * len(data)


@pytest.mark.criterion(3, "keyframe reuse: 61 frames at GOP 16 carry 5 keyframe payloads")
def test_criterion_03_keyframe_reuse():
    video = talking_blob(61, 64)
    enc = encode_video(video, Config(gop_size=16))
    header, records = demux(enc.bitstream)
    assert header.gop_count == len(records) == 4
    assert [len(r.keyframes) for r in records] == [2, 1, 1, 1]
    assert sum(len(r.keyframes) for r in records) == 5
    assert len(decode_video(enc.bitstream).video) == 61


@pytest.mark.criterion(4, "reference selection examples and morph crossover (< 10 s)")
def test_criterion_04_selection():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    a = Frame(rng.integers(0, 256, (3, 32, 32)))
    b = Frame(rng.integers(0, 256, (3, 32, 32)))
    assert select_reference(a, b, a).selected == "past"
    assert select_reference(a, b, b).selected == "future"
    assert select_reference(a, a, b).selected == "future"

    n = 31
    video = morph(n, 256)
    res = decode_video(encode_video(video, Config(gop_size=n)).bitstream, workers=CPUS)
    sel = [c.selected for _, c in res.selections]
    switches = sum(x != y for x, y in zip(sel, sel[1:]))
    crossover = 1 + sel.index("future")
    elapsed = time.perf_counter() - start
    print(f"criterion 4: selection {''.join(s[0] for s in sel)}, crossover frame {crossover}, "
          f"midpoint {(n - 1) / 2}, {elapsed:.2f} s")
    assert sel[0] == "past" and switches <= 1
    assert abs(crossover - (n - 1) / 2) <= 2
    assert elapsed < 10


@pytest.mark.criterion(5, "optimized warp equals naive bilinear oracle (50 fields)")
def test_criterion_05_warp_oracle():
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(50):
        planes = rng.random((3, 64, 64)) * 255
        ys, xs = np.mgrid[0:64, 0:64].astype(np.float64)
        flow = np.stack([xs, ys]) + rng.normal(0, 6, (2, 64, 64))
        field = MotionField(flow, np.ones((64, 64)))
        worst = max(worst, float(np.abs(warp_array(planes, field) - naive_warp(planes, flow)).max()))
    print(f"criterion 5: max deviation {worst:.3e}")
    assert worst <= 1e-6


def _shift(planes, dx, dy):
    return np.roll(planes, (dy, dx), axis=(1, 2))


@pytest.mark.criterion(6, "motion identity and translation equivariance")
def test_criterion_06_motion_identity_equivariance():
    det = CornerDetector()
    frames = talking_blob(9, 256)
    key = frames[0]
    kps = det(key)
    same, field = animate(key, kps, kps)
    assert np.abs(same.planes.astype(int) - key.planes).max() <= 1
    assert np.all(field.confidence == 1)

    target = det(frames[8])
    w = h = 256
    for dx, dy in [(3, 0), (5, -4), (-7, 6)]:
        moved_key = Frame(_shift(key.planes, dx, dy))
        offset = np.array([dx / (w - 1), dy / (h - 1)])
        k2 = KeypointSet(kps.points + offset)
        t2 = KeypointSet(target.points + offset)
        out1, f1 = animate(key, kps, target)
        out2, f2 = animate(moved_key, k2, t2)
        m = 40  # interior: away from clamped borders and the wrapped strip
        inner = np.s_[m:-m, m:-m]
        moved = np.s_[m + dy:h - m + dy, m + dx:w - m + dx]
        np.testing.assert_allclose(f2.flow[0][moved], f1.flow[0][inner] + dx, atol=1e-9)
        np.testing.assert_allclose(f2.flow[1][moved], f1.flow[1][inner] + dy, atol=1e-9)
        diff = np.abs(out2.planes[:, moved[0], moved[1]].astype(int) - out1.planes[:, inner[0], inner[1]])
        assert diff.max() <= 1
        print(f"criterion 6: shift ({dx},{dy}) max interior difference {diff.max()} LSB")


@pytest.mark.criterion(7, "metric ground truths")
def test_criterion_07_metric_ground_truths():
    zero, full, one = (Frame.constant(16, 16, v, 3) for v in (0, 255, 1))
    assert psnr(zero, full) == 0.0
    assert abs(psnr(zero, one) - 48.1308) <= 1e-4
    assert abs(charbonnier(zero, zero, eps=1e-3) - 0.0316228) <= 1e-6


@pytest.mark.criterion(8, "BD metrics closed forms")
def test_criterion_08_bd_closed_forms():
    rates, quality = [80.0, 150.0, 260.0, 410.0], [31.2, 33.9, 36.1, 37.8]
    anchor = RdCurve.from_arrays(rates, quality)
    r, q = bd_metrics(anchor, anchor)
    assert abs(r) <= 1e-9 and abs(q) <= 1e-9
    r, _ = bd_metrics(anchor, RdCurve.from_arrays([2 * x for x in rates], quality))
    assert abs(r - 100.0) <= 0.1
    _, q = bd_metrics(anchor, RdCurve.from_arrays(rates, [x + 1 for x in quality]))
    assert abs(q - 1.0) <= 0.01


@pytest.mark.criterion(9, "bidirectional advantage on the morph corpus (< 3 min)")
def test_criterion_09_bidirectional_advantage(tmp_path):
    start = time.perf_counter()
    video = morph(120, 256)
    point = run_point(video, Config(gop_size=15))
    adaptive, past = point.tail_half_mean("adaptive"), point.tail_half_mean("forced-past")
    trace = SweepResult([point], ("psnr",)).trace_csv()
    (tmp_path / "trace.csv").write_text(trace)
    rows = list(csv.DictReader(io.StringIO(trace)))
    elapsed = time.perf_counter() - start
    print(f"criterion 9: tail-half mean PSNR adaptive {adaptive:.3f} dB, forced-past {past:.3f} dB, "
          f"margin {adaptive - past:.3f} dB, {elapsed:.1f} s")
    assert {r["mode"] for r in rows} == {"adaptive", "forced-past"}
    assert sum(r["mode"] == "adaptive" for r in rows) == sum(r["mode"] == "forced-past" for r in rows) == 120
    assert adaptive - past > 0
    assert elapsed < 180


@pytest.mark.criterion(10, "GOP sweep 5/10/15/20 at qp 30/45 (< 5 min)")
def test_criterion_10_protocol_sweep():
    start = time.perf_counter()
    video = talking_blob(120, 256)
    res = gop_sweep(video, (5, 10, 15, 20), qp_key=30, qp_aux=45, metrics=("psnr", "ssim"),
                    workers=CPUS, qp_check=True)
    elapsed = time.perf_counter() - start
    rates = [p.kbps for p in res.points]
    print(f"criterion 10: kbps {[round(r, 2) for r in rates]}, "
          f"psnr {[round(p.quality['psnr'], 2) for p in res.points]}, {elapsed:.1f} s")
    assert [p.gop for p in res.points] == [5, 10, 15, 20]
    assert all(b < a for a, b in zip(rates, rates[1:]))
    for p in res.points:
        assert p.qp_checks and all(c.monotone for c in p.qp_checks)
    assert len(res.rd_csv().splitlines()) == 1 + 4 * 2
    assert elapsed < 300


def _pipeline(tmp_path, capsys, tag, workers):
    d = tmp_path / tag
    d.mkdir()
    steps = [
        ["synth", "talking-blob", "30", "256", "--seed", "11", "-o", d / "in.y4m"],
        ["encode", d / "in.y4m", d / "out.bfac", "--gop-size", "10", "--workers", workers],
        ["decode", d / "out.bfac", d / "dec.y4m", "--workers", workers],
        ["eval", d / "in.y4m", d / "dec.y4m", "--workers", workers],
        ["sweep", d / "in.y4m", "--gops", "5,10,15,20", "--metrics", "psnr", "--out-dir", d, "--workers", workers],
    ]
    outputs = []
    for argv in steps:
        assert cli.main([str(a) for a in argv]) == 0
        outputs.append(capsys.readouterr().out)
    files = {name: (d / name).read_bytes() for name in ("out.bfac", "dec.y4m", "rd.csv", "trace.csv")}
    return outputs, files


@pytest.mark.criterion(11, "end-to-end determinism across runs and worker counts")
def test_criterion_11_determinism(tmp_path, capsys):
    out1, files1 = _pipeline(tmp_path, capsys, "run1", 1)
    out2, files2 = _pipeline(tmp_path, capsys, "run2", max(CPUS, 3))
    assert out1 == out2
    assert files1 == files2
