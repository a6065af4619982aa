"""Command-line entry point tying the pipeline together.

Subcommands: ``split``, ``preprocess``, ``train``, ``eval``, ``predict``,
``report`` (plus an unadvertised ``synth`` generator for the keyword-rule
corpus used by the desk-scale experiments).  Progress goes to stderr,
machine-readable artifacts to files only.  Exit status: 0 success, 1 data or
validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import data, encoder, metrics, strategies, synth, textprep

VISIBLE_COMMANDS = ("split", "preprocess", "train", "eval", "predict", "report")


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hostility",
        description="Multi-dimensional hostility detection for Devanagari posts.",
    )
    sub = parser.add_subparsers(
        dest="command", required=True, metavar="{" + ",".join(VISIBLE_COMMANDS) + "}"
    )

    p_split = sub.add_parser("split", help="stratified train/validation/test split")
    p_split.add_argument("--input", required=True, help="labeled corpus CSV")
    p_split.add_argument(
        "--ratios", default="0.7,0.1,0.2", help="train,validation,test fractions"
    )
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--out", required=True, help="output directory")

    p_prep = sub.add_parser("preprocess", help="clean the text column of a corpus file")
    p_prep.add_argument("--input", required=True)
    p_prep.add_argument("--output", required=True)

    p_train = sub.add_parser("train", help="train a strategy bundle")
    p_train.add_argument("--config", required=True, help="StrategyConfig JSON file")
    p_train.add_argument("--data", required=True, help="split directory")
    p_train.add_argument("--out", required=True, help="bundle output directory")

    p_eval = sub.add_parser("eval", help="score a bundle against a labeled corpus")
    p_eval.add_argument("--bundle", required=True)
    p_eval.add_argument("--data", required=True, help="labeled corpus CSV")
    p_eval.add_argument("--report", required=True, help="report JSON output path")
    p_eval.add_argument("--misclassified", help="optional misclassification TSV path")
    p_eval.add_argument("--limit", type=int, default=50, help="misclassification rows")
    p_eval.add_argument(
        "--fine-scoring",
        choices=("weighted", "binary"),
        default="weighted",
        help="per-dimension score: two-class weighted F1 or positive-class F1",
    )

    p_pred = sub.add_parser("predict", help="write per-post probabilities and labels")
    p_pred.add_argument("--bundle", required=True)
    p_pred.add_argument("--input", required=True, help="corpus CSV (labels optional)")
    p_pred.add_argument("--output", required=True, help="predictions CSV path")
    p_pred.add_argument("--threshold", type=float, default=None)

    p_report = sub.add_parser("report", help="tabulate one or more eval reports")
    p_report.add_argument("--reports", nargs="+", required=True, help="report JSON files")
    p_report.add_argument("--out", required=True, help="table output path")
    p_report.add_argument("--format", choices=("tsv", "markdown"), default="tsv")

    p_synth = sub.add_parser("synth")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--posts", type=int, default=500)
    p_synth.add_argument("--seed", type=int, default=7)

    return parser


def _cmd_split(args: argparse.Namespace) -> int:
    try:
        ratios = tuple(float(part) for part in args.ratios.split(","))
    except ValueError:
        raise data.CorpusError(f"--ratios must be three comma-separated numbers, got {args.ratios!r}")
    corpus = data.read_corpus(args.input)
    bundle = data.stratified_split(corpus, ratios=ratios, seed=args.seed)
    manifest = data.write_split(bundle, args.out)
    _progress(
        f"split {len(corpus)} posts into "
        f"{len(bundle.train)}/{len(bundle.validation)}/{len(bundle.test)}; "
        f"manifest at {manifest}"
    )
    return 0


def _cmd_preprocess(args: argparse.Namespace) -> int:
    in_path, out_path = Path(args.input), Path(args.output)
    with in_path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if not reader.fieldnames or "text" not in reader.fieldnames:
            raise data.CorpusError(f"{in_path}: no text column to preprocess")
        fieldnames = list(reader.fieldnames)
        rows = list(reader)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            row["text"] = textprep.clean_text(row["text"])
            writer.writerow(row)
    _progress(f"preprocessed {len(rows)} rows into {out_path}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config_payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
    config = strategies.StrategyConfig.from_dict(config_payload)
    splits = data.read_split(args.data)
    _progress(
        f"training {config.strategy} on {len(splits.train)} posts "
        f"(validation {len(splits.validation)}), seed {config.seed}"
    )
    bundle = strategies.train(config, splits)
    bundle.save(args.out)
    _progress(f"bundle saved to {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    bundle = strategies.TrainedBundle.load(args.bundle)
    corpus = data.read_corpus(args.data)
    predictions = strategies.predict(bundle, corpus)
    report = metrics.evaluate(predictions, corpus, fine_scoring=args.fine_scoring)
    report.write_json(args.report)
    _progress(
        f"evaluated {len(corpus)} posts: hostile={report.hostile_f1:.4f}, "
        f"weighted fine-grained={report.weighted_fine_grained:.4f}"
    )
    if args.misclassified:
        rows = metrics.misclassification_report(predictions, corpus, limit=args.limit)
        metrics.write_misclassification_tsv(rows, args.misclassified)
        _progress(f"{len(rows)} misclassified posts written to {args.misclassified}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    bundle = strategies.TrainedBundle.load(args.bundle)
    corpus = data.read_corpus(args.input, require_labels=False)
    predictions = strategies.predict(bundle, corpus, threshold=args.threshold)
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["id", "hostile_prob", *(f"{dim}_prob" for dim in data.FINE_DIMENSIONS), "labels"]
        )
        for pred in predictions:
            labels = pred.labels
            if labels.hostile:
                tags = [dim for dim in data.FINE_DIMENSIONS if labels.flag(dim)]
                label_field = ",".join(tags) if tags else "hostile"
            else:
                label_field = data.NON_HOSTILE_TAG
            writer.writerow(
                [
                    pred.post_id,
                    f"{pred.coarse_prob:.6f}",
                    *(f"{pred.fine_probs[dim]:.6f}" for dim in data.FINE_DIMENSIONS),
                    label_field,
                ]
            )
    _progress(f"{len(predictions)} predictions written to {out_path}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    columns = ("hostile", "defamation", "fake", "hate", "offensive", "weighted")
    rows = []
    for path in args.reports:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        missing = [col for col in columns if col not in payload]
        if missing:
            raise data.CorpusError(f"{path}: report missing field(s) {', '.join(missing)}")
        rows.append((Path(path).stem, [payload[col] for col in columns]))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    header = ["run", *columns]
    with out_path.open("w", encoding="utf-8") as handle:
        if args.format == "markdown":
            handle.write("| " + " | ".join(header) + " |\n")
            handle.write("|" + "---|" * len(header) + "\n")
            for name, scores in rows:
                handle.write(
                    "| " + " | ".join([name, *(f"{s:.4f}" for s in scores)]) + " |\n"
                )
        else:
            handle.write("\t".join(header) + "\n")
            for name, scores in rows:
                handle.write("\t".join([name, *(f"{s:.4f}" for s in scores)]) + "\n")
    _progress(f"comparison table for {len(rows)} run(s) written to {out_path}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    corpus = synth.synthetic_corpus(n_posts=args.posts, seed=args.seed)
    data.write_corpus(corpus, args.out)
    stats = data.label_stats(corpus)
    _progress(
        f"generated {stats.total} posts ({stats.hostile} hostile) into {args.out}"
    )
    return 0


_HANDLERS = {
    "split": _cmd_split,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "report": _cmd_report,
    "synth": _cmd_synth,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except (
        data.CorpusError,
        encoder.EncoderError,
        metrics.MetricsError,
        strategies.StrategyError,
        strategies.TrainingError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> int:
    return run()


if __name__ == "__main__":
    sys.exit(main())
