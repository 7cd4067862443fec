"""``ledd`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error or failed check.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import codec
from .codec import CodeStream, CodecError, CorruptStreamError, bits_per_pixel, encode_image
from .imageio import PGMError, list_pgms, read_pgm, write_pgm
from .network import WeightFileError, forward_refine, load_weights

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 by default; usage errors here map to 1
        raise UsageError(f"{self.prog}: {message}")


def _tau(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tau must be an integer, got {text!r}") from None
    if not 0 <= v <= codec.MAX_TAU:
        raise argparse.ArgumentTypeError(f"tau must be in 0..{codec.MAX_TAU}, got {v}")
    return v


def _tau_list(text):
    from .training import parse_taus
    try:
        taus = parse_taus(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tau list {text!r}") from None
    if not taus:
        raise argparse.ArgumentTypeError("empty tau list")
    for t in taus:
        _tau(str(t))
    return taus


def _fmt(v):
    return "inf" if np.isinf(v) else f"{v:.4f}"


# --- subcommands -----------------------------------------------------------

def cmd_encode(args) -> int:
    img = read_pgm(args.inp)
    t0 = time.perf_counter()
    stream, _ = encode_image(img, args.tau)
    elapsed = time.perf_counter() - t0
    stream.save(args.out)
    print(f"bpp,{bits_per_pixel(stream, img):.4f}")
    print(f"encode_seconds,{elapsed:.4f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    stream = CodeStream.load(args.inp)
    y = codec.decode_image(stream)
    if args.model is not None:
        y = forward_refine(load_weights(args.model), y, stream.tau)
    write_pgm(y, args.out)
    return EXIT_OK


def cmd_refine(args) -> int:
    y = read_pgm(args.inp)
    write_pgm(forward_refine(load_weights(args.model), y, args.tau), args.out)
    return EXIT_OK


_TRAIN_FLAGS = [
    # (flag, config field, type, help)
    ("--taus", "taus", _tau_list, "training rates, e.g. 1-8 or 1,2,4"),
    ("--patch", "patch", int, "patch size (even)"),
    ("--stride", "stride", int, "patch stride"),
    ("--batch", "batch", int, "mini-batch size"),
    ("--epochs-hi", "epochs_hi", int, "epochs at the high learning rate"),
    ("--epochs-lo", "epochs_lo", int, "epochs at the low learning rate"),
    ("--lr-hi", "lr_hi", float, "high learning rate"),
    ("--lr-lo", "lr_lo", float, "low learning rate"),
    ("--lambda", "lam", float, "weight of the l-infinity loss term"),
    ("--seed", "seed", int, "initialisation and shuffling seed"),
    ("--base-channels", "base_channels", int, "network width"),
    ("--blocks", "num_body_blocks", int, "number of dilated residual blocks"),
]


def cmd_train(args) -> int:
    from .training import TrainConfig, train
    try:
        cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
        overrides = {field: getattr(args, field) for _, field, _, _ in _TRAIN_FLAGS
                     if getattr(args, field) is not None}
        cfg = cfg.replace(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    def report(entry):
        print(f"epoch,{entry.epoch},loss,{entry.train_loss:.6g},psnr,{_fmt(entry.val_psnr)}", flush=True)

    if args.resume and not args.checkpoint:
        args.checkpoint = args.resume
    train(args.data, cfg, args.out, val_dir=args.val_data, checkpoint_path=args.checkpoint,
          resume_from=args.resume, on_epoch=report)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import CSV_COLUMNS, rd_sweep
    model = load_weights(args.model) if args.model else None
    points = rd_sweep(args.data, args.taus, model, args.csv)
    print(",".join(CSV_COLUMNS))
    with open(args.csv) as fh:
        next(fh)
        sys.stdout.write(fh.read())
    return EXIT_OK if points else EXIT_DATA


def cmd_roundtrip(args) -> int:
    paths = list_pgms(args.data)
    if not paths:
        raise UsageError(f"no .pgm images in {args.data}")
    failures = 0
    print("file,tau,linf,status")
    for path in paths:
        img = read_pgm(path)
        for tau in args.taus:
            stream, recon = encode_image(img, tau)
            try:
                y = codec.decode_image(stream.to_bytes())
            except CodecError as exc:
                print(f"{path},{tau},-,FAIL ({exc})")
                failures += 1
                continue
            linf = int(np.max(np.abs(y.pixels.astype(np.int16) - img.pixels.astype(np.int16))))
            ok = linf <= tau and y == recon
            failures += not ok
            print(f"{path},{tau},{linf},{'PASS' if ok else 'FAIL'}")
    print(f"summary,{len(paths)} files,{len(args.taus)} taus,{failures} failures")
    return EXIT_OK if failures == 0 else EXIT_DATA


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite
    dtype = np.float64 if args.float64 else np.float32
    all_ok = True
    print("op,max_rel_error,tolerance,checked,excluded,status")
    for name, rep in run_suite(dtype, seed=args.seed):
        all_ok &= rep.passed
        print(f"{name},{rep.max_rel_error:.3e},{rep.tolerance:g},{rep.checked},{rep.excluded},"
              f"{'PASS' if rep.passed else 'FAIL'}", flush=True)
    return EXIT_OK if all_ok else EXIT_DATA


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ledd", description="Near-lossless grayscale codec with a refinement network.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("encode", help="compress a PGM image")
    s.add_argument("--in", dest="inp", required=True, help="input .pgm")
    s.add_argument("--out", required=True, help="output .lnl code stream")
    s.add_argument("--tau", type=_tau, required=True, help="per-pixel error bound, 0..8")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", help="decompress a code stream")
    s.add_argument("--in", dest="inp", required=True, help="input .lnl code stream")
    s.add_argument("--out", required=True, help="output .pgm")
    s.add_argument("--model", help="weights (.lnw); when given, the refined image is written")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("refine", help="refine an already decoded image")
    s.add_argument("--in", dest="inp", required=True, help="conventionally decoded .pgm")
    s.add_argument("--tau", type=_tau, required=True, help="bound the image was coded with")
    s.add_argument("--model", required=True, help="weights (.lnw)")
    s.add_argument("--out", required=True, help="output .pgm")
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("train", help="train the refinement network")
    s.add_argument("--data", required=True, help="directory of training .pgm images")
    s.add_argument("--out", required=True, help="output weights (.lnw)")
    s.add_argument("--config", help="key=value training config file; flags override it")
    for flag, field, kind, text in _TRAIN_FLAGS:
        s.add_argument(flag, dest=field, type=kind, default=None, help=text)
    s.add_argument("--val-data", help="held-out .pgm directory for the per-epoch PSNR")
    s.add_argument("--checkpoint", help="checkpoint written after every epoch")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="rate-distortion sweep to CSV")
    s.add_argument("--data", required=True, help="directory of .pgm images")
    s.add_argument("--taus", type=_tau_list, default=tuple(range(9)), help="e.g. 1,2,4,8 (default 0-8)")
    s.add_argument("--model", help="weights (.lnw) for the refined columns")
    s.add_argument("--csv", required=True, help="output CSV path")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("roundtrip", help="check the error bound on a directory")
    s.add_argument("--data", required=True, help="directory of .pgm images")
    s.add_argument("--taus", type=_tau_list, default=tuple(range(9)), help="default 0-8")
    s.set_defaults(func=cmd_roundtrip)

    s = sub.add_parser("gradcheck", help="finite-difference check of every operator")
    s.add_argument("--float64", action="store_true", help="run in double precision (tolerance 1e-6)")
    s.add_argument("--seed", type=int, default=0, help="seed for the random test inputs")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CodecError, CorruptStreamError, PGMError, WeightFileError, OSError, ValueError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
