"""Command-line entry point: ``edgerestore <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from edgerestore import workflow
from edgerestore.config import load_config
from edgerestore.errors import EdgeRestoreError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

BENCH_MODES = {"float": "float", "quant": "quantized", "quantized": "quantized",
               "quant+ft": "quantized+finetune", "quantized+finetune": "quantized+finetune"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    default = argparse.SUPPRESS if suppress else None
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, default=default, help="master seed (overrides config)")
    p.add_argument("--config", default=default, help="key=value config file")
    p.add_argument("--out", default=argparse.SUPPRESS if suppress else "run",
                   help="run directory (default: ./run)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgerestore", parents=[_global_options(False)],
                     description="Quantized tile-wise denoising pipeline with fine-tune recovery.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="<command>")
    common = [_global_options(True)]

    p = sub.add_parser("synth", parents=common, help="generate the synthetic phantom dataset")
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--n-test", type=int, dest="n_test")
    p.add_argument("--size", type=int, dest="image_size")
    p.add_argument("--noise-level", type=float, dest="noise_level")

    p = sub.add_parser("train", parents=common, help="train the float denoiser on 64x64 tiles")
    p.add_argument("--iterations", type=int)
    p.add_argument("--base-width", type=int, dest="base_width")
    p.add_argument("--batch-size", type=int, dest="batch_size")

    p = sub.add_parser("convert", parents=common, help="calibrate and quantize the denoiser to uint8")
    p.add_argument("--calib-images", type=int, dest="calib_images")

    p = sub.add_parser("train-finetune", parents=common, help="train the fine-tune net on quantized outputs")
    p.add_argument("--iterations", type=int, dest="ft_iterations")
    p.add_argument("--overlap", type=int)
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("infer", parents=common, help="denoise a dataset split")
    p.add_argument("--mode", choices=sorted(workflow.VARIANTS), required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--overlap", type=int)
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("eval", parents=common, help="SSIM reports for float, quant and quant+ft")
    p.add_argument("--overlap", type=int)
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("bench", parents=common, help="per-stage latency breakdown")
    p.add_argument("--mode", choices=sorted(BENCH_MODES), default="quantized+finetune")
    p.add_argument("--repetitions", type=int, dest="bench_repetitions")
    p.add_argument("--warmup", type=int, dest="bench_warmup")
    p.add_argument("--images", type=int, dest="bench_images")
    p.add_argument("--overlap", type=int)
    p.add_argument("--parallel-jobs", type=int, default=0,
                   help="also time tile inference on this many threads (reported separately)")

    p = sub.add_parser("count-ops", parents=common, help="operation counts per 1024x1024 image")
    p.add_argument("--image-size", type=int, default=1024)

    sub.add_parser("run", parents=common, help="synth, train, convert, train-finetune and eval in one go")
    return parser


_NOT_CONFIG = {"command", "config", "out", "verbose", "mode", "split", "parallel_jobs"}


def _config_overrides(args) -> dict:
    skip = set(_NOT_CONFIG)
    if args.command == "count-ops":
        skip.add("image_size")
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def _print_ssim(reports) -> None:
    print(f"{'variant':<22} {'mean':>8} {'p25':>8} {'p50':>8} {'p75':>8}")
    for r in reports.values():
        print(f"{r.label:<22} {r.mean:8.4f} {r.p25:8.4f} {r.p50:8.4f} {r.p75:8.4f}")


def dispatch(args) -> int:
    cfg = load_config(args.config, **_config_overrides(args))
    out = args.out
    cmd = args.command
    if cmd == "synth":
        workflow.synth(cfg, out)
    elif cmd == "train":
        print(workflow.train(cfg, out))
    elif cmd == "convert":
        print(workflow.convert(cfg, out))
    elif cmd == "train-finetune":
        print(workflow.train_finetune_stage(cfg, out))
    elif cmd == "infer":
        images = workflow.infer(cfg, out, args.mode, args.split)
        print(f"wrote {len(images)} images to {workflow.RunDir(out).outputs(args.mode)}")
    elif cmd == "eval":
        _print_ssim(workflow.evaluate(cfg, out))
    elif cmd == "bench":
        report = workflow.bench(cfg, out, BENCH_MODES[args.mode], args.parallel_jobs)
        print(report.format_table(), end="")
    elif cmd == "count-ops":
        print(json.dumps(workflow.ops_report(cfg, out, args.image_size), indent=2))
    elif cmd == "run":
        _print_ssim(workflow.run_all(cfg, out))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except (EdgeRestoreError, OSError) as exc:
        print(f"edgerestore: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
