import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import guirl
from guirl.envs.synth_env import SceneConfig, generate_tasks, load_dataset, save_dataset
from guirl.errors import DataError, InvariantError
from guirl.evaluator import evaluate_policy, score_prediction_file, write_report
from guirl.parsers.grounding_parser import (
    SOFT_MAX_CREDIT,
    extract_numbers_soft,
    extract_numbers_strict,
    soft_format_reward,
    strict_format_reward,
)
from guirl.policy.checkpoint import load_any_policy, load_checkpoint
from guirl.rubrics.utils.box_utils import accuracy_reward, total_reward
from guirl.trainers.ablation import run_ablation, write_ablation_csv
from guirl.trainers.grpo_trainer import GRPOTrainer
from guirl.trainers.sft_trainer import SFTTrainer
from guirl.trainers.train_config import TrainConfig, final_recipe
from guirl.types import AccuracyRewardKind, BBox, FormatSpec
from guirl.utils.config_utils import (
    add_config_arguments,
    coerce_values,
    config_overrides,
    parse_bool,
    parse_grid_file,
    read_config_file,
    write_config_file,
)
from guirl.utils.data_utils import provenance_line, write_jsonl
from guirl.utils.logging_utils import print_ablation_table, print_eval_report

logger = logging.getLogger("guirl.scripts.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def canvas_size(text: str) -> Tuple[int, int]:
    try:
        w, h = text.lower().replace("×", "x").split("x")
        size = (int(w), int(h))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")
    if size[0] <= 0 or size[1] <= 0:
        raise argparse.ArgumentTypeError(f"canvas size must be positive, got {text!r}")
    return size


def on_off(text: str) -> bool:
    try:
        return parse_bool(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def resolve_train_config(args: argparse.Namespace) -> TrainConfig:
    """Final recipe, then the config file, then command-line flags."""
    values = {}
    if args.config:
        values.update(coerce_values(TrainConfig, read_config_file(args.config), args.config))
    values.update(config_overrides(args, TrainConfig))
    return final_recipe(**values)


# ---- subcommands -------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = SceneConfig(
        k_max=args.k_max,
        canvas_min=args.canvas_min,
        canvas_max=args.canvas_max,
        min_box=args.min_box,
        min_box_fraction=args.min_box_fraction,
        max_box_fraction=args.max_box_fraction,
    )
    tasks = generate_tasks(args.seed, args.count, config)
    count = save_dataset(tasks, args.out)
    print(f"wrote {count} tasks (seed {args.seed}) to {args.out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_train_config(args)
    train_tasks = load_dataset(args.data)
    eval_tasks = load_dataset(args.eval_data) if args.eval_data else []
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config_file(
        config, out_dir / "config.cfg", provenance_line("config", config.digest())
    )

    trainer_cls = SFTTrainer if config.mode == "sft" else GRPOTrainer
    trainer = trainer_cls(config, train_tasks, eval_tasks)
    if args.resume:
        trainer.restore(load_checkpoint(args.resume, trainer.params.dims))
        logger.info(f"Resumed from {args.resume} at step {trainer.step}")
    trainer.train(until_step=args.until_step)
    jsonl, csv = trainer.save_metrics(out_dir)
    checkpoint = out_dir / "policy.ckpt"
    trainer.save_checkpoint(checkpoint)
    if isinstance(trainer, GRPOTrainer) and config.log_coefficients:
        write_jsonl(
            out_dir / "coefficients.jsonl", trainer.coefficient_log, "coefficients", config.digest()
        )
    print(f"trained {trainer.step} steps; metrics in {jsonl} and {csv}; checkpoint {checkpoint}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = Path(args.checkpoint)
    params = load_any_policy(checkpoint)
    tasks = load_dataset(args.data)
    if not tasks:
        raise DataError(f"{args.data}: no tasks to evaluate")
    report = evaluate_policy(
        params,
        tasks,
        include_resolution=args.resolution,
        mode=args.mode,
        k_max=args.k_max,
        bbox_half_extent=args.bbox_half_extent,
    )
    resolution = "on" if args.resolution else "off"
    print_eval_report(report, title=f"{checkpoint.name} ({args.mode}, resolution {resolution})")
    out = checkpoint.with_name(f"{checkpoint.stem}.eval.{args.mode}.res-{resolution}.json")
    write_report(report, out)
    print(f"report written to {out}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    report = score_prediction_file(args.predictions, args.annotations, args.mode)
    print_eval_report(report, title=f"{Path(args.predictions).name} ({args.mode})")
    if args.out:
        write_report(report, args.out)
    return EXIT_OK


def _reward_check_inputs(args: argparse.Namespace) -> List[str]:
    if args.text is not None:
        return [args.text]
    with open(args.file, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def cmd_reward_check(args: argparse.Namespace) -> int:
    kind = AccuracyRewardKind.parse(args.accuracy)
    gt: Optional[BBox] = None
    if args.gt is not None:
        try:
            gt = BBox.from_list([float(v) for v in args.gt.split(",")])
        except ValueError as e:
            raise DataError(f"invalid --gt {args.gt!r}: {e}") from e
    spec = FormatSpec.for_mode(kind.prediction_mode)
    for text in _reward_check_inputs(args):
        if args.format == "strict":
            fmt = strict_format_reward(text)
            numbers = extract_numbers_strict(text, spec.expected_coord_count)
        else:
            fmt = soft_format_reward(text, spec, args.soft_normalizer)
            numbers = extract_numbers_soft(text)
        shown = "[" + ", ".join(f"{v:g}" for v in numbers) + "]"
        if gt is None:
            print(f"format={fmt:.4f} numbers={shown} accuracy=- total={fmt:.4f}")
            continue
        acc = accuracy_reward(kind, numbers, gt)
        print(
            f"format={fmt:.4f} numbers={shown} accuracy={acc:.4f} "
            f"total={total_reward(fmt, acc):.4f}"
        )
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    variants = parse_grid_file(args.grid_file)
    base = resolve_train_config(args)
    train_tasks = load_dataset(args.data)
    eval_tasks = load_dataset(args.eval_data) if args.eval_data else []
    rows = run_ablation(variants, base, train_tasks, eval_tasks)
    write_ablation_csv(rows, args.out, base)
    if rows:
        print_ablation_table(rows)
    print(f"{len(rows)} variants written to {args.out}")
    return EXIT_OK


# ---- parser ------------------------------------------------------------------


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="guirl",
        description="GRPO fine-tuning of a grounding policy on synthetic GUI scenes.",
    )
    parser.add_argument("--version", action="version", version=f"guirl {guirl.__version__}")
    parser.add_argument(
        "--log-level", default="INFO", help="Logging level of the guirl loggers (default: INFO)"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", help="Generate a synthetic grounding dataset")
    p.add_argument("--seed", type=int, default=0, help="Generator seed (default: 0)")
    p.add_argument("--count", type=int, default=500, help="Number of tasks (default: 500)")
    p.add_argument("--out", required=True, help="Output dataset path (.jsonl)")
    p.add_argument("--k-max", type=int, default=5, help="Maximum elements per scene (default: 5)")
    p.add_argument(
        "--canvas-min", type=canvas_size, default=(320, 240), help="Smallest canvas (default: 320x240)"
    )
    p.add_argument(
        "--canvas-max", type=canvas_size, default=(1920, 1080), help="Largest canvas (default: 1920x1080)"
    )
    p.add_argument("--min-box", type=int, default=24, help="Minimum element side in px (default: 24)")
    p.add_argument(
        "--min-box-fraction",
        type=float,
        default=1 / 16,
        help="Minimum element side as a fraction of the canvas side (default: 0.0625)",
    )
    p.add_argument(
        "--max-box-fraction",
        type=float,
        default=0.25,
        help="Maximum element side as a fraction of the canvas side (default: 0.25)",
    )
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser(
        "train",
        help="Train with GRPO (or SFT with --mode sft)",
        description="Defaults follow the final recipe; a --config file overrides them "
        "and flags override the file. Resolution is off for training and on for evaluation "
        "by default.",
    )
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data", required=True, help="Training dataset")
    p.add_argument("--eval-data", help="Held-out dataset for periodic evaluation")
    p.add_argument("--out-dir", required=True, help="Directory for metrics, config and checkpoint")
    p.add_argument("--resume", help="Trainer checkpoint to continue from")
    p.add_argument("--until-step", type=int, help="Stop after this step (default: total_steps)")
    add_config_arguments(p, TrainConfig, shown_defaults=final_recipe())
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Point-in-box accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True, help="Policy or trainer checkpoint")
    p.add_argument("--data", required=True, help="Evaluation dataset")
    p.add_argument(
        "--resolution",
        type=on_off,
        default=True,
        metavar="{on,off}",
        help="Feed the canvas resolution; train off / test on is the recommended pairing (default: on)",
    )
    p.add_argument("--mode", choices=("point", "bbox"), default="point", help="Prediction mode (default: point)")
    p.add_argument("--k-max", type=int, default=5, help="Encoder element slots (default: 5)")
    p.add_argument(
        "--bbox-half-extent", type=float, default=1.0, help="Half box size in grid cells (default: 1.0)"
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="Score an external predictions file")
    p.add_argument("--predictions", required=True, help="JSONL records {id, completion}")
    p.add_argument("--annotations", required=True, help="Dataset or annotation JSONL")
    p.add_argument("--mode", choices=("point", "bbox"), default="point", help="Prediction mode (default: point)")
    p.add_argument("--out", help="Write the machine-readable report here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("reward-check", help="Print reward breakdowns of completions")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--text", help="A single completion")
    source.add_argument("--file", help="File with one completion per line")
    p.add_argument("--format", choices=("strict", "soft"), default="soft", help="Format reward (default: soft)")
    p.add_argument(
        "--accuracy",
        default="in-bbox",
        help="iou, iou@<tau>, in-bbox or distance@<k> (default: in-bbox)",
    )
    p.add_argument("--gt", help='Ground-truth box "x1,y1,x2,y2"')
    p.add_argument(
        "--soft-normalizer",
        type=float,
        default=SOFT_MAX_CREDIT,
        help=f"Soft format divisor (default: {SOFT_MAX_CREDIT})",
    )
    p.set_defaults(func=cmd_reward_check)

    p = sub.add_parser("ablate", help="Train a grid of config variants")
    p.add_argument(
        "--grid-file", required=True, help="Grid file: [name:] key=value ... per line"
    )
    p.add_argument("--config", help="Base key = value config file")
    p.add_argument("--data", required=True, help="Training dataset")
    p.add_argument("--eval-data", help="Held-out dataset")
    p.add_argument("--out", required=True, help="Comparison CSV path")
    add_config_arguments(p, TrainConfig, shown_defaults=final_recipe())
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    guirl.setup_logging(args.log_level)
    try:
        return args.func(args)
    except InvariantError as e:
        print(f"guirl {args.command}: invariant violated: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (DataError, OSError, ValueError) as e:
        print(f"guirl {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        logger.exception(f"unexpected failure: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
