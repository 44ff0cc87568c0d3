"""Command-line frontend: synth, train, score, eval, bench.

Exit codes: 0 success, 1 usage error, 2 runtime error, and 3 for `score`
when the image is judged anomalous, so shell pipelines can branch on the
verdict.
"""

import argparse
import json
import sys
from pathlib import Path

from . import imaging, pipeline, postprocess, synthgear
from .errors import PatchsightError
from .features import ExtractorConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_ANOMALOUS = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; we reserve 2 for runtime errors and
    # want validation to happen before anything touches the filesystem.
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    common.add_argument(
        "--json", action="store_true", help="print exactly one JSON document to stdout"
    )

    parser = _Parser(prog="patchsight", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--train-normal", type=int, default=15)
    p.add_argument("--test-normal", type=int, default=5)
    p.add_argument("--per-defect", type=int, default=5)

    p = sub.add_parser("train", parents=[common], help="fit a model on train/good")
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--algo", required=True, choices=["padim", "patchcore"])
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--epsilon", type=float, default=None, help="padim covariance ridge")
    p.add_argument(
        "--coreset-ratio", type=float, default=None, help="patchcore coreset fraction"
    )

    p = sub.add_parser("score", parents=[common], help="judge one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--heatmap-out", default=None, help="write the overlay PNG here")

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="evaluation report JSON to write")
    p.add_argument("--heatmap-dir", default=None, help="also write per-image heatmaps")

    p = sub.add_parser("bench", parents=[common], help="timing/memory benchmark")
    p.add_argument("--sizes", default="20,50,80", help="comma-separated dataset sizes")
    p.add_argument("--algos", default="padim,patchcore")
    p.add_argument("--out", required=True, help="benchmark JSON to write")
    p.add_argument("--workdir", default=None, help="where generated datasets go")
    return parser


def _say(args, message: str):
    if not args.quiet and not args.json:
        print(message)


def _algorithm_id(name: str) -> int:
    return {v: k for k, v in pipeline.ALGORITHM_NAMES.items()}[name]


def _cmd_synth(args) -> int:
    manifest = synthgear.generate_dataset(
        args.out,
        n_train_normal=args.train_normal,
        n_test_normal=args.test_normal,
        n_test_per_defect=args.per_defect,
        master_seed=args.seed,
    )
    if args.json:
        print(json.dumps(manifest))
    else:
        _say(args, f"wrote {len(manifest['images'])} images under {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    layout = pipeline.scan_layout(args.data)
    algorithm = _algorithm_id(args.algo)
    if algorithm == pipeline.ALGORITHM_PADIM:
        hyper = pipeline.PadimHyper() if args.epsilon is None else pipeline.PadimHyper(
            epsilon=args.epsilon
        )
    else:
        hyper = (
            pipeline.PatchcoreHyper()
            if args.coreset_ratio is None
            else pipeline.PatchcoreHyper(coreset_ratio=args.coreset_ratio)
        )
    model = pipeline.train(
        layout, algorithm, cfg=ExtractorConfig(), hyper=hyper, seed=args.seed
    )
    blob = pipeline.save(model)
    Path(args.out).write_bytes(blob)
    summary = {
        "model": args.out,
        "algorithm": args.algo,
        "n_train": len(layout.train_normal),
        "train_seconds": round(model.train_seconds, 3),
        "model_bytes": len(blob),
        "threshold": model.calibration.threshold,
    }
    if args.json:
        print(json.dumps(summary))
    else:
        _say(args, f"trained {args.algo} on {summary['n_train']} images "
                   f"in {summary['train_seconds']}s -> {args.out} ({len(blob)} bytes)")
    return EXIT_OK


def _cmd_score(args) -> int:
    model = pipeline.load(Path(args.model).read_bytes())
    img = pipeline.load_canonical(args.image)
    score, score_map = pipeline.score_image(model, img)
    v = postprocess.verdict(score, model.calibration, score_map, img)
    if args.heatmap_out:
        Path(args.heatmap_out).write_bytes(imaging.encode_png(v.heatmap))
    print(
        json.dumps(
            {
                "path": str(args.image),
                "label": v.label.value,
                "confidence_pct": v.confidence,
                "image_score": v.image_score,
            }
        )
    )
    return EXIT_ANOMALOUS if v.label is postprocess.Label.ANOMALOUS else EXIT_OK


def _cmd_eval(args) -> int:
    model = pipeline.load(Path(args.model).read_bytes())
    layout = pipeline.scan_layout(args.data)
    report = pipeline.evaluate(model, layout)
    Path(args.report).write_text(report.to_json())
    if args.heatmap_dir:
        out_dir = Path(args.heatmap_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for group, paths in [("good", layout.test_normal)] + sorted(
            layout.test_anomalous.items()
        ):
            for p in paths:
                img = pipeline.load_canonical(p)
                score, score_map = pipeline.score_image(model, img)
                v = postprocess.verdict(score, model.calibration, score_map, img)
                name = f"{group}_{Path(p).stem}_heatmap.png"
                (out_dir / name).write_bytes(imaging.encode_png(v.heatmap))
    if args.json:
        print(report.to_json(indent=None))
    else:
        _say(
            args,
            f"auroc={report.auroc:.4f} f1_macro={report.f1_macro:.4f} "
            f"confusion={report.confusion.to_dict()} -> {args.report}",
        )
    return EXIT_OK


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    algos = [_algorithm_id(a.strip()) for a in args.algos.split(",") if a.strip()]
    workdir = args.workdir or (Path(args.out).resolve().parent / "bench_datasets")
    records = pipeline.bench(sizes, algos, seed=args.seed, workdir=workdir)
    Path(args.out).write_text(pipeline.bench_json(records))
    if args.json:
        print(json.dumps([r.to_dict() for r in records]))
    else:
        _say(args, pipeline.bench_table(records))
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (PatchsightError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
