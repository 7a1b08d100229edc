"""Command-line entry point: ``dpfnet train | infer | eval``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every failure prints a single ``dpfnet: error: <cause>`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, load_config
from .data import DatasetError, ImageError, discover_pairs, load_image, load_pairs, save_image
from .metrics import enhance, evaluate_dataset
from .tensor import NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("dpfnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpfnet", description="Dual-branch Fourier/spatial low-light enhancement.")
    parser.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")
    sub = parser.add_subparsers(dest="command", metavar="{train,infer,eval}", parser_class=_Parser)

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", required=True, type=Path, help="flat key = value config file")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p = sub.add_parser("infer", help="enhance one PNG or a directory of PNGs")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--input", required=True, type=Path, help="PNG file or directory")
    p.add_argument("--output", required=True, type=Path, help="output directory")

    p = sub.add_parser("eval", help="PSNR/SSIM report over a low/ + gt/ dataset")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--dataset", required=True, type=Path, help="directory holding low/ and gt/")
    p.add_argument("--report", required=True, type=Path, help="CSV report path; a figure goes alongside")
    return parser


def _resolve(path_text: str, base: Path) -> Path:
    path = Path(path_text)
    return path if path.is_absolute() else base / path


def cmd_train(args) -> int:
    from .train import CHECKPOINT_NAME, METRICS_NAME, train

    if not args.config.is_file():
        raise UsageError(f"{args.config}: no such config file")
    cfg = load_config(args.config)
    if not cfg.dataset:
        raise UsageError(f"{args.config}: 'dataset' is not set")
    # relative paths in a config file are taken relative to that file
    base = args.config.resolve().parent
    items = load_pairs(discover_pairs(_resolve(cfg.dataset, base)))
    out = _resolve(cfg.output_dir, base)
    if args.resume is not None and not args.resume.is_file():
        raise CheckpointError(f"{args.resume}: no such checkpoint")
    log.info("training %s (%d pairs) -> %s", cfg.ablation, len(items), out)
    result = train(items, cfg, out, resume=args.resume)
    if not result.history:
        print(f"nothing to do: checkpoint already at epoch {cfg.epochs}")
        return EXIT_OK
    last = result.history[-1]
    print(f"epoch {last['epoch']}: loss {last['loss_total']:.5f}, train PSNR {last['train_psnr']:.2f} dB")
    print(f"checkpoint: {out / CHECKPOINT_NAME}")
    print(f"metrics: {out / METRICS_NAME}")
    print(f"figure: {out / 'training.png'}")
    return EXIT_OK


def _input_images(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise ImageError(f"{path}: no such file or directory")
    files = sorted((p for p in path.iterdir() if p.suffix.lower() == ".png"), key=lambda p: p.name.encode())
    if not files:
        raise DatasetError(f"{path}: no PNG files")
    return files


def cmd_infer(args) -> int:
    files = _input_images(args.input)
    out_dir = args.output.resolve()
    if any(f.resolve().parent == out_dir for f in files):
        raise UsageError("--output must differ from the input directory (inputs would be overwritten)")
    model, _, _ = load_checkpoint(args.checkpoint)
    for f in files:
        save_image(enhance(model, load_image(f)), out_dir / f.name)
        log.info("wrote %s", out_dir / f.name)
    print(f"enhanced {len(files)} image(s) into {args.output}")
    return EXIT_OK


def _figure_path(report: Path) -> Path:
    fig = report.with_suffix(".png")
    return fig if fig != report else report.with_name(report.stem + "_figure.png")


def cmd_eval(args) -> int:
    from .plotting import plot_eval_report

    items = load_pairs(discover_pairs(args.dataset))
    model, _, _ = load_checkpoint(args.checkpoint)
    report = evaluate_dataset(model, items, checkpoint=str(args.checkpoint))
    if not report.rows:
        raise DatasetError("every image is smaller than the SSIM window; nothing to report")
    report.write_csv(args.report)
    fig = plot_eval_report(report, _figure_path(args.report))
    print(report.table())
    print(f"report: {args.report}")
    print(f"figure: {fig}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "infer": cmd_infer, "eval": cmd_eval}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: train, infer or eval")
        logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", force=True)
        # non-finite values raise NumericError; numpy's own warnings would only repeat that
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        code, cause = EXIT_USAGE, exc
    except (DatasetError, ImageError, CheckpointError, OSError) as exc:
        code, cause = EXIT_DATA, exc
    except NumericError as exc:
        code, cause = EXIT_NUMERIC, exc
    except ValueError as exc:
        # remaining ValueErrors come from inconsistent config vs data (e.g. crop too large)
        code, cause = EXIT_USAGE, exc
    message = str(cause).splitlines()[0] if str(cause) else type(cause).__name__
    print(f"dpfnet: error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
