"""Command-line interface.

Machine-readable output (CSV, ``key=value`` rate lines) goes to stdout,
everything meant for humans to stderr. Exit codes: 0 success, 2 usage error,
3 format error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import Config
from .errors import FormatError, InvalidArgument
from .evaluate import (
    DEFAULT_GOP_SIZES,
    bd_csv,
    frame_metrics,
    frame_metrics_csv,
    gop_sweep,
    kbps,
    load_external_metrics,
    load_rd_csv,
    merge_external,
    write_text,
)
from .frame import load_video, save_video
from .reconstruct import decode_video, encode_video
from .synth import KINDS, synthesize

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("bfac")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value config file; flags override it")
    p.add_argument("--gop-size", type=int)
    p.add_argument("--qp-key", type=int)
    p.add_argument("--qp-aux", type=int)
    p.add_argument("--kp-count", type=int)
    p.add_argument("--kp-precision", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--w0", type=float)
    p.add_argument("--snap", type=float, help="keypoint jitter radius in pixels")
    p.add_argument("--enhancer")
    p.add_argument("--selection", choices=("adaptive", "forced-past"))
    p.add_argument("--seed", type=int)


def _add_workers(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: available CPUs); output does not depend on it")


def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


def _config(args) -> Config:
    cfg = Config.from_file(args.config) if getattr(args, "config", None) else Config()
    keys = ("gop_size", "qp_key", "qp_aux", "kp_count", "kp_precision", "sigma", "w0",
            "snap", "enhancer", "selection", "seed")
    return cfg.with_overrides(**{k: getattr(args, k, None) for k in keys})


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="progress messages on stderr")
    parser = argparse.ArgumentParser(prog="bfac", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"bfac {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[common], help="encode a raw/y4m video into a .bfac bitstream")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=("raw", "y4m"))
    _add_codec_flags(p)
    _add_workers(p)

    p = sub.add_parser("decode", parents=[common], help="decode a .bfac bitstream")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=("raw", "y4m"))
    p.add_argument("--selection", choices=("adaptive", "forced-past"))
    _add_workers(p)

    p = sub.add_parser("eval", parents=[common], help="per-frame and mean quality; optional BD metrics")
    p.add_argument("original", nargs="?")
    p.add_argument("decoded", nargs="?", help="decoded video or .bfac bitstream")
    p.add_argument("--metrics", type=_str_list, default=["psnr", "ssim", "charbonnier"])
    p.add_argument("--anchor", type=Path, help="anchor RD CSV")
    p.add_argument("--rd", type=Path, help="test RD CSV compared against --anchor")
    p.add_argument("--selection", choices=("adaptive", "forced-past"))
    _add_workers(p)

    p = sub.add_parser("sweep", parents=[common], help="GOP-size sweep producing RD and trace CSVs")
    p.add_argument("input")
    p.add_argument("--gops", type=_int_list, default=list(DEFAULT_GOP_SIZES))
    p.add_argument("--metrics", type=_str_list, default=["psnr", "ssim", "charbonnier"])
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--external", type=Path, help="per-frame external metric CSV to merge")
    _add_codec_flags(p)
    _add_workers(p)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic test sequence")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("frames", type=int)
    p.add_argument("size", type=int, nargs="?", default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("-o", "--output", required=True)
    return parser


def cmd_encode(args) -> int:
    cfg = _config(args)
    video = load_video(args.input, args.format)
    res = encode_video(video, cfg)
    Path(args.output).write_bytes(res.bitstream)
    for line in res.report.lines():
        print(line)
    print(f"kbps={kbps(res.report.total_bits, len(video), video.fps):.6f}")
    log.info("encoded %d frames into %d bytes", len(video), len(res.bitstream))
    return EXIT_OK


def cmd_decode(args) -> int:
    res = decode_video(Path(args.input).read_bytes(), selection=args.selection, workers=_workers(args))
    save_video(res.video, args.output, args.format)
    log.info("decoded %d frames", len(res.video))
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.original:
        if not args.decoded:
            raise InvalidArgument("eval needs both ORIGINAL and DECODED")
        original = load_video(args.original)
        if str(args.decoded).endswith(".bfac"):
            data = Path(args.decoded).read_bytes()
            dec = decode_video(data, selection=args.selection, workers=_workers(args))
            decoded = dec.video
            log.info("bitstream rate: %.6f kbps", kbps(8 * len(data), len(decoded), decoded.fps))
        else:
            decoded = load_video(args.decoded)
        sys.stdout.write(frame_metrics_csv(frame_metrics(original, decoded, args.metrics)))
    if args.anchor or args.rd:
        if not (args.anchor and args.rd):
            raise InvalidArgument("BD metrics need both --anchor and --rd")
        sys.stdout.write(bd_csv(load_rd_csv(args.anchor), load_rd_csv(args.rd)))
    if not args.original and not args.anchor:
        raise InvalidArgument("nothing to evaluate")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    video = load_video(args.input)
    res = gop_sweep(video, args.gops, cfg.qp_key, cfg.qp_aux, args.metrics, cfg, workers=_workers(args))
    if args.external:
        merge_external(res, load_external_metrics(args.external))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rd = res.rd_csv()
    write_text(args.out_dir / "rd.csv", rd)
    write_text(args.out_dir / "trace.csv", res.trace_csv())
    sys.stdout.write(rd)
    for p in res.points:
        log.info("gop %d: %.3f kbps, adaptive tail %.3f dB, forced-past tail %.3f dB",
                 p.gop, p.kbps, p.tail_half_mean("adaptive"), p.tail_half_mean("forced-past"))
    return EXIT_OK


def cmd_synth(args) -> int:
    video = synthesize(args.kind, args.frames, args.size, args.seed, args.fps)
    save_video(video, args.output)
    log.info("wrote %d %s frames to %s", len(video), args.kind, args.output)
    return EXIT_OK


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except FormatError as exc:
        print(f"bfac: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (InvalidArgument, FileNotFoundError, IsADirectoryError) as exc:
        print(f"bfac: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"bfac: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
