"""Command-line surface: compress, decompress, info, and the study reports.

Exit codes: 0 success, 2 usage, 3 file I/O, 4 malformed container,
5 denoiser failure, 6 capacity/validation.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench, codec, pnm, ratecontrol
from .bitstream import (
    CompressedImage,
    MalformedContainerError,
    bit_saving_csv,
    bit_saving_study,
)
from .codebook import CapacityError
from .testbed import (
    DenoiserConnectionError,
    GaussianPrior,
    ProtocolError,
    RemoteDenoiser,
    ShapeMismatchError,
    gaussian_denoiser,
    psnr,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CONTAINER = 4
EXIT_DENOISER = 5
EXIT_CAPACITY = 6


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _make_denoiser(kind: str, d: int):
    if kind == "gaussian":
        return gaussian_denoiser(GaussianPrior.default_ramp(d))
    if kind.startswith("remote:"):
        return RemoteDenoiser(kind[len("remote:") :])
    raise CliError(EXIT_USAGE, f"unknown denoiser {kind!r}")


def _load_image(path):
    try:
        return pnm.read_pnm(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc}") from exc


def _cmd_compress(args) -> int:
    img = _load_image(args.infile)
    x0 = pnm.to_working(img)
    h, w = img.shape[:2]
    ch = 1 if img.ndim == 2 else img.shape[2]

    m = args.M
    if args.target_psnr is not None:
        if not args.rate_model:
            raise CliError(EXIT_USAGE, "--target-psnr needs --rate-model")
        model = ratecontrol.load_model(args.rate_model)
        score = ratecontrol.complexity_score(img)
        cid = ratecontrol.select_bitrate(model, score, args.target_psnr)
        m = codec.M_VALUES[cid]
        print(f"selected M={m} (config {cid}) for target {args.target_psnr} dB")
    if m is None:
        raise CliError(EXIT_USAGE, "either --M or --target-psnr is required")

    mask = None
    if args.mask:
        mask_img = _load_image(args.mask)
        if mask_img.ndim != 2:
            raise CliError(EXIT_USAGE, "mask must be a grayscale PGM")
        weights = 1.0 + args.priority * (np.asarray(mask_img, dtype=np.float64) / 255.0)
        mask = codec.PriorityMask.from_pixel_map(weights, x0.size, ch)

    params = codec.EncodeParams(
        M=m,
        T=args.T,
        K=args.K,
        C=args.C,
        seed=args.seed,
        schedule_id=args.schedule,
        N=args.N,
        workers=args.workers,
    )
    denoiser = _make_denoiser(args.denoiser, x0.size)
    try:
        result = codec.encode(x0, denoiser, params, mask, height=h, width=w, channels=ch)
    except (DenoiserConnectionError, ProtocolError, ShapeMismatchError) as exc:
        raise CliError(EXIT_DENOISER, str(exc)) from exc
    except CapacityError as exc:
        raise CliError(EXIT_CAPACITY, str(exc)) from exc
    try:
        result.container.save(args.outfile)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.outfile}: {exc}") from exc

    rec_img = pnm.from_working(result.reconstruction, h, w, ch)
    print(f"bpp: {result.bpp:.4f}")
    print(f"psnr: {psnr(np.asarray(img) / 255.0, np.asarray(rec_img) / 255.0):.4f}")
    return EXIT_OK


def _cmd_decompress(args) -> int:
    try:
        ci = CompressedImage.load(args.infile)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.infile}: {exc}") from exc
    except MalformedContainerError as exc:
        raise CliError(EXIT_CONTAINER, str(exc)) from exc
    head = ci.header
    denoiser = _make_denoiser(args.denoiser, head.d)
    try:
        rec = codec.decode(ci, denoiser, workers=args.workers)
    except MalformedContainerError as exc:
        raise CliError(EXIT_CONTAINER, str(exc)) from exc
    except (DenoiserConnectionError, ProtocolError, ShapeMismatchError) as exc:
        raise CliError(EXIT_DENOISER, str(exc)) from exc
    rec_img = pnm.from_working(rec, head.height, head.width, head.channels)
    try:
        pnm.write_pnm(args.outfile, rec_img)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot write {args.outfile}: {exc}") from exc
    if args.ref:
        ref = _load_image(args.ref)
        print(f"psnr: {psnr(np.asarray(ref) / 255.0, np.asarray(rec_img) / 255.0):.4f}")
    return EXIT_OK


def _cmd_info(args) -> int:
    try:
        ci = CompressedImage.load(args.infile)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.infile}: {exc}") from exc
    except MalformedContainerError as exc:
        raise CliError(EXIT_CONTAINER, str(exc)) from exc
    for line in ci.header.lines():
        print(line)
    return EXIT_OK


def _write_report(path, text: str) -> None:
    try:
        if path == "-":
            sys.stdout.write(text)
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _cmd_bench(args) -> int:
    cells = [
        {"K": args.K, "M": m, "C": args.C, "d": args.d}
        for m in (args.M or [5, 20, 100])
    ]
    rows = bench.bench_selection(
        cells, trials=args.trials, seed=args.seed, repeats=args.repeats
    )
    _write_report(args.out, bench.rows_to_csv(rows))
    return EXIT_OK


def _cmd_angle_study(args) -> int:
    rows = bench.angle_study(
        args.K,
        args.d,
        args.M or [4, 16, 64],
        args.C_values or [2],
        trials=args.trials,
        seed=args.seed,
    )
    _write_report(args.out, bench.rows_to_csv(rows))
    return EXIT_OK


def _cmd_bit_saving(args) -> int:
    m_values = args.M or [1, 2, 4, 8, 16, 32, 64, 100, 128, 256, 512, 700, 1024]
    _write_report(args.out, bit_saving_csv(bit_saving_study(args.K, m_values)))
    return EXIT_OK


def _cmd_fit_rate_model(args) -> int:
    rows = []
    try:
        with open(args.infile, "r", encoding="utf-8") as fh:
            for ln in fh:
                ln = ln.strip()
                if not ln or ln.startswith("#") or ln.startswith("config_id"):
                    continue
                cid, score, p = ln.split(",")
                rows.append((int(cid), float(score), float(p)))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.infile}: {exc}") from exc
    if args.outlier_quantile < 1.0:
        rows = ratecontrol.filter_outliers(rows, args.outlier_quantile)
    try:
        model = ratecontrol.fit(rows)
    except ratecontrol.DegenerateFitError as exc:
        raise CliError(EXIT_CAPACITY, str(exc)) from exc
    ratecontrol.save_model(model, args.out)
    print(f"fitted {len(model.entries)} configs")
    return EXIT_OK


def _cmd_select_rate(args) -> int:
    model = ratecontrol.load_model(args.model)
    if args.score is not None:
        score = args.score
    elif args.infile:
        score = float(ratecontrol.complexity_score(_load_image(args.infile)))
    else:
        raise CliError(EXIT_USAGE, "provide --score or --in")
    if args.naive:
        cid = ratecontrol.select_bitrate_naive(model, args.target_psnr)
    else:
        cid = ratecontrol.select_bitrate(model, score, args.target_psnr)
    print(cid)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdcm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="compress a PGM/PPM image")
    c.add_argument("--in", dest="infile", required=True)
    c.add_argument("--out", dest="outfile", required=True)
    c.add_argument("--M", type=int, default=None)
    c.add_argument("--T", type=int, default=20)
    c.add_argument("--K", type=int, default=16384)
    c.add_argument("--C", type=int, default=1)
    c.add_argument("--N", type=int, default=None)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--schedule", type=int, default=0, choices=(0, 1))
    c.add_argument("--mask", default=None, help="grayscale PGM priority map")
    c.add_argument("--priority", type=float, default=3.0)
    c.add_argument("--denoiser", default="gaussian")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--target-psnr", type=float, default=None)
    c.add_argument("--rate-model", default=None)
    c.set_defaults(fn=_cmd_compress)

    dparse = sub.add_parser("decompress", help="reconstruct an image from a container")
    dparse.add_argument("--in", dest="infile", required=True)
    dparse.add_argument("--out", dest="outfile", required=True)
    dparse.add_argument("--denoiser", default="gaussian")
    dparse.add_argument("--workers", type=int, default=1)
    dparse.add_argument("--ref", default=None, help="original image, to print PSNR")
    dparse.set_defaults(fn=_cmd_decompress)

    i = sub.add_parser("info", help="print a container header")
    i.add_argument("--in", dest="infile", required=True)
    i.set_defaults(fn=_cmd_info)

    b = sub.add_parser("bench", help="time the selectors over a grid")
    b.add_argument("--K", type=int, default=1024)
    b.add_argument("--d", type=int, default=4096)
    b.add_argument("--C", type=int, default=2)
    b.add_argument("--M", type=int, nargs="*", default=None)
    b.add_argument("--trials", type=int, default=1)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="-")
    b.set_defaults(fn=_cmd_bench)

    a = sub.add_parser("angle-study", help="mean-angle comparison grid")
    a.add_argument("--K", type=int, default=1024)
    a.add_argument("--d", type=int, default=4096)
    a.add_argument("--M", type=int, nargs="*", default=None)
    a.add_argument("--C-values", type=int, nargs="*", default=None)
    a.add_argument("--trials", type=int, default=50)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="-")
    a.set_defaults(fn=_cmd_angle_study)

    s = sub.add_parser("bit-saving", help="rank coding vs per-index coding")
    s.add_argument("--K", type=int, default=16384)
    s.add_argument("--M", type=int, nargs="*", default=None)
    s.add_argument("--out", default="-")
    s.set_defaults(fn=_cmd_bit_saving)

    f = sub.add_parser("fit-rate-model", help="fit score->PSNR lines from a CSV")
    f.add_argument("--in", dest="infile", required=True, help="CSV of config_id,score,psnr")
    f.add_argument("--out", required=True)
    f.add_argument("--outlier-quantile", type=float, default=0.96)
    f.set_defaults(fn=_cmd_fit_rate_model)

    r = sub.add_parser("select-rate", help="choose a config for a target PSNR")
    r.add_argument("--model", required=True)
    r.add_argument("--target-psnr", type=float, required=True)
    r.add_argument("--score", type=float, default=None)
    r.add_argument("--in", dest="infile", default=None)
    r.add_argument("--naive", action="store_true")
    r.set_defaults(fn=_cmd_select_rate)

    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
