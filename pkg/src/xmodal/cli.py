"""Command-line surface: dataset | train | translate | evaluate | ablate | report.

Exit codes: 0 success, 2 configuration/validation problems (the message
names the offending key), 3 missing conditioning material, 1 anything else.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .ablation import plot_stats, run_ablation
from .checkpoint import load_checkpoint
from .config import (ConfigError, default_config_text, load_config,
                     run_config_hash, to_train_config)
from .evaluate import evaluate_checkpoint
from .imaging import (ImagingError, UnpairedDataset, generate_unpaired_dataset,
                      load_image, save_image)
from .training import (CT2MRI, MRI2CT, TrainingError, cycle_translate,
                       init_train_state, train, translate)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CONDITIONING = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xmodal",
        description="Unpaired bidirectional CT/MRI translation at desk scale.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="generate an unpaired phantom dataset")
    p.add_argument("--n", type=int, required=True, help="number of hidden pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=64, help="image side (multiple of 64)")
    p.add_argument("--shapes", type=int, default=4, help="ellipses per phantom")
    p.add_argument("--noise", type=float, default=0.01, help="pseudo-MRI noise sigma")

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--print-defaults", action="store_true",
                   help="print the documented default config and exit")

    p = sub.add_parser("translate", help="translate one image with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="input image (PNG or raw)")
    p.add_argument("--direction", choices=(CT2MRI, MRI2CT), default=CT2MRI)
    p.add_argument("--cond", help="target-side exemplar image or pool directory")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--cycle", action="store_true",
                   help="also write the back-translated image")

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--direction", choices=(CT2MRI, MRI2CT), default=CT2MRI)
    p.add_argument("--out", help="directory for the report and difference images")
    p.add_argument("--limit", type=int, help="evaluate only the first N pairs")
    p.add_argument("--diff-images", type=int, default=4,
                   help="write difference images for the first N pairs")

    p = sub.add_parser("ablate", help="run the scenario-by-DiL matrix")
    p.add_argument("--config", required=True, help="base config (scenario fields overridden)")
    p.add_argument("--train-dataset", required=True)
    p.add_argument("--test-dataset", required=True)
    p.add_argument("--budget-epochs", type=int, default=10,
                   help="equal training budget per cell")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="plots from existing logs")
    p.add_argument("--stats", help="stats.tsv from a training run")
    p.add_argument("--out", required=True, help="output image path or directory")
    return parser


def _cmd_dataset(args) -> int:
    manifest = generate_unpaired_dataset(args.n, args.seed, args.out,
                                         size=args.size, num_shapes=args.shapes,
                                         noise_sigma=args.noise)
    print(f"wrote {len(manifest.pairs)} images per modality under {args.out}")
    print(f"hidden pairing: {os.path.join(args.out, 'pairs.eval.tsv')} (evaluation only)")
    return EXIT_OK


def _cmd_train(args) -> int:
    if args.print_defaults:
        print(default_config_text(), end="")
        return EXIT_OK
    cfg = load_config(args.config)
    dataset_dir = cfg["dataset_dir"]
    if not dataset_dir:
        raise ConfigError("dataset_dir is required for training")
    ds = UnpairedDataset(dataset_dir)
    pool_size = min(len(ds.ct_files), len(ds.mri_files))
    if args.resume:
        state = load_checkpoint(args.resume)
        tc = state.config
    else:
        tc = to_train_config(cfg, pool_size)
        state = init_train_state(tc)
    out_dir = cfg["out_dir"]
    print(f"config hash {run_config_hash(cfg)[:12]}  out {out_dir}")
    ckpt, stats = train(tc, dataset_dir, out_dir, state=state,
                        log=lambda s: print(
                            f"epoch {s.epoch:4d}  l_total {s.l_total:.4f}  "
                            f"l_cyc {s.l_cyc:.4f}  l_id {s.l_id:.4f}"))
    print(f"final checkpoint: {ckpt}")
    return EXIT_OK


def _load_cond_source(arg):
    if arg is None:
        return []
    if os.path.isdir(arg):
        files = sorted(f for f in os.listdir(arg) if f.endswith(".png"))
        return [load_image(os.path.join(arg, f)) for f in files]
    return [load_image(arg)]


def _cmd_translate(args) -> int:
    state = load_checkpoint(args.ckpt)
    img = load_image(args.input)
    pool = _load_cond_source(args.cond)
    if state.config.conditioning.channels > 0 and not pool:
        print(f"error: the {state.config.conditioning.kind} scenario needs "
              "--cond (exemplar image or pool directory)", file=sys.stderr)
        return EXIT_CONDITIONING
    if args.cycle:
        syn, back = cycle_translate(state, img, args.direction, pool)
        save_image(syn, args.out)
        stem, ext = os.path.splitext(args.out)
        back_path = f"{stem}_back{ext}"
        save_image(back, back_path)
        print(f"wrote {args.out} and {back_path}")
    else:
        syn = translate(state, img, args.direction, pool)
        save_image(syn, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    state = load_checkpoint(args.ckpt)
    report = evaluate_checkpoint(state, args.dataset, direction=args.direction,
                                 out_dir=args.out, limit=args.limit,
                                 diff_images=args.diff_images if args.out else 0)
    mf, mc = report.mean_forward, report.mean_cycle
    print(f"{len(report.rows)} pairs  direction {report.direction}")
    print(f"forward  rmse {mf.rmse:8.3f}  psnr {mf.psnr:8.3f}  ssim {mf.ssim:6.3f}")
    print(f"cycle    rmse {mc.rmse:8.3f}  psnr {mc.psnr:8.3f}  ssim {mc.ssim:6.3f}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    base = load_config(args.config)
    matrix = run_ablation(base, args.train_dataset, args.test_dataset,
                          args.budget_epochs, args.out, log=print)
    print(f"matrix written to {os.path.join(args.out, 'ablation.tsv')}")
    failed = [c for c in matrix.cells if c.failure]
    for cell in failed:
        print(f"cell {cell.scenario} dil={cell.with_dil} failed: {cell.failure}")
    return EXIT_OK


def _cmd_report(args) -> int:
    if args.stats:
        out = args.out
        if os.path.isdir(out):
            out = os.path.join(out, "stats.png")
        plot_stats(args.stats, out)
        print(f"wrote {out}")
    else:
        print("nothing to report: pass --stats", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


_COMMANDS = {
    "dataset": _cmd_dataset,
    "train": _cmd_train,
    "translate": _cmd_translate,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ImagingError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
