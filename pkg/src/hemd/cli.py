"""Command-line entry point: ``hemd {segment,eval,inspect-forest,synth}``.

Structured output goes to stdout as JSON, logs to stderr. Exit status is 0
on success and 2 on usage, configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from hemd.baselines import max_value_components, otsu_components, threshold_components
from hemd.core import label_map_from_regions, regions_from_label_map
from hemd.errors import HemdError
from hemd.forest import build_forest
from hemd.metrics import sequence_scores
from hemd.pipeline import PipelineConfig, segment
from hemd.probmap_io import FORMATS, load_labels, load_sequence, quantize, read_pgm16, read_rawf32, save_labels, save_sequence
from hemd.synth import Scenario, merge_scenario, render, split_scenario

log = logging.getLogger("hemd")

EXIT_OK = 0
EXIT_ERROR = 2
METHODS = ("labels", "hemd", "th05", "otsu", "maxvalue")
PRESETS = {"merge": merge_scenario, "split": split_scenario}


class CliError(Exception):
    pass


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _dump_json(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=0.5, help="lowest candidate threshold (default 0.50)")
    p.add_argument("--delta", type=_fraction, default=Fraction(35, 100), help="relative size gate (default 0.35)")
    p.add_argument("--iters", type=int, default=10, help="matching iterations T (default 10)")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--format", choices=FORMATS, default="pgm16")
    p.add_argument("--no-early-stop", action="store_true", help="run all T iterations past a fixed point")


def _config(args) -> PipelineConfig:
    return PipelineConfig(tau=args.tau, delta=args.delta, iterations=args.iters,
                          connectivity=args.connectivity, early_stop=not args.no_early_stop)


def cmd_segment(args) -> int:
    cfg = _config(args)
    frames = load_sequence(args.input, args.format, threads=args.threads)
    hook = None
    if args.dump_ilp:
        ilp_dir = Path(args.out) / "ilp"
        ilp_dir.mkdir(parents=True, exist_ok=True)
        counter = {}

        def hook(t, kind, src, dst, problem):
            key = (t, kind, src, dst)
            counter[key] = counter.get(key, 0) + 1
            _dump_json(problem.to_json(), ilp_dir / f"iter{t:02d}_{kind}_{src:04d}_to_{dst:04d}.json")

    result = segment(frames, cfg, threads=args.threads, on_problem=hook)
    save_labels(result.labels, args.out)
    report_path = Path(args.report) if args.report else Path(args.out) / "report.json"
    _dump_json(result.report, report_path)
    _dump_json({"out": str(args.out), "report": str(report_path), "instances": result.report["instances"]})
    return EXIT_OK


def _predict(args, frames):
    if args.method == "hemd":
        return segment(frames, _config(args), threads=args.threads).instances
    if args.method == "th05":
        return [threshold_components(f, 0.5, args.connectivity) for f in frames]
    if args.method == "otsu":
        return [otsu_components(f, args.connectivity) for f in frames]
    if args.method == "maxvalue":
        if not args.boundary or not args.background:
            raise CliError("--method maxvalue needs --boundary and --background directories")
        bnd = load_sequence(args.boundary, args.format)
        bg = load_sequence(args.background, args.format)
        if not len(frames) == len(bnd) == len(bg):
            raise CliError("class map directories have different frame counts")
        return [max_value_components(f, b, g, args.connectivity) for f, b, g in zip(frames, bnd, bg)]
    raise CliError(f"unknown method {args.method}")


def cmd_eval(args) -> int:
    gt_labels = load_labels(args.gt)
    if args.method == "labels":
        pred_labels = load_labels(args.pred)
        if pred_labels[0].shape != gt_labels[0].shape:
            raise CliError(f"prediction shape {pred_labels[0].shape} != ground truth {gt_labels[0].shape}")
        pred = [regions_from_label_map(lab) for lab in pred_labels]
    else:
        frames = load_sequence(args.pred, args.format, threads=args.threads)
        if frames[0].shape != gt_labels[0].shape:
            raise CliError(f"probability map shape {frames[0].shape} != ground truth {gt_labels[0].shape}")
        pred = _predict(args, frames)
    if len(pred) != len(gt_labels):
        raise CliError(f"{len(pred)} predicted frames vs {len(gt_labels)} ground-truth frames")
    gt = [regions_from_label_map(lab) for lab in gt_labels]
    scores = sequence_scores(gt, pred)
    _dump_json({
        "method": args.method,
        "frames": [
            {"frame": w, "f1": float(a), "aji": float(b), "gt": len(g), "pred": len(p)}
            for w, (a, b, g, p) in enumerate(zip(scores["f1"], scores["aji"], gt, pred))
        ],
        "mean_f1": float(scores["mean_f1"]),
        "mean_aji": float(scores["mean_aji"]),
    })
    return EXIT_OK


def cmd_inspect_forest(args) -> int:
    path = Path(args.input)
    raw = read_rawf32(path) if path.suffix == ".raw" else read_pgm16(path) / 65535.0
    forest = build_forest(quantize(raw), args.tau, args.connectivity)
    _dump_json(forest.to_json())
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.scenario:
        scenario = Scenario.load(args.scenario)
    else:
        scenario = PRESETS[args.preset](seed=args.seed, noise=args.noise)
    frames, truth = render(scenario)
    out = Path(args.out)
    save_sequence(frames, out / "prob", args.format)
    save_labels([label_map_from_regions(g, frames[0].shape) for g in truth], out / "gt")
    _dump_json({"frames": len(frames), "shape": list(frames[0].shape), "gt_instances": [len(g) for g in truth],
                "prob": str(out / "prob"), "gt": str(out / "gt")})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hemd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment a probability-map sequence")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="run report path (default OUT/report.json)")
    p.add_argument("--dump-ilp", action="store_true", help="write every matching problem to OUT/ilp/")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="score predictions against ground-truth labels")
    p.add_argument("--pred", required=True, help="label dir, or probability dir when --method is not 'labels'")
    p.add_argument("--gt", required=True)
    p.add_argument("--method", choices=METHODS, default="labels")
    p.add_argument("--boundary", help="boundary-class probability dir (maxvalue)")
    p.add_argument("--background", help="background-class probability dir (maxvalue)")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-forest", help="dump the candidate forest of one frame")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.set_defaults(func=cmd_inspect_forest)

    p = sub.add_parser("synth", help="render a synthetic scenario")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--format", choices=FORMATS, default="pgm16")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("hemd: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (HemdError, CliError, OSError, ValueError) as exc:
        print(f"hemd {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
