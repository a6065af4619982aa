#!/usr/bin/env python3
"""Desk-scale comparison of the four training strategies.

Generates the keyword-rule synthetic corpus, cleans and splits it, trains
MLC / MTL / BC / AUX with the built-in tiny encoder, and prints a result
table (hostile, defamation, fake, hate, offensive, weighted) over the test
split.  Everything is seeded, so reruns reproduce the table exactly.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from hostility.data import LabeledPost, label_stats, stratified_split, write_split
from hostility.encoder import EncoderSpec
from hostility.metrics import evaluate
from hostility.strategies import StrategyConfig, predict, train
from hostility.synth import synthetic_corpus
from hostility.textprep import clean_text

STRATEGIES = ("MLC", "MTL", "BC", "AUX")
COLUMNS = ("hostile", "defamation", "fake", "hate", "offensive", "weighted")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--posts", type=int, default=500)
    parser.add_argument("--corpus-seed", type=int, default=7)
    parser.add_argument("--split-seed", type=int, default=42)
    parser.add_argument("--train-seed", type=int, default=1)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--learning-rate", type=float, default=5e-3)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--out-dir", type=Path, default=Path("experiments/desk"))
    args = parser.parse_args()

    corpus = synthetic_corpus(args.posts, seed=args.corpus_seed)
    cleaned = tuple(
        LabeledPost(p.id, clean_text(p.text), p.labels) for p in corpus
    )
    splits = stratified_split(cleaned, (0.7, 0.1, 0.2), seed=args.split_seed)
    stats = label_stats(cleaned)
    print(
        f"corpus: {stats.total} posts, {stats.hostile} hostile "
        f"(fake={stats.fake} hate={stats.hate} offensive={stats.offensive} "
        f"defamation={stats.defamation})"
    )
    print(
        f"split sizes: train={len(splits.train)} validation={len(splits.validation)} "
        f"test={len(splits.test)}"
    )

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_split(splits, args.out_dir / "data")

    rows = {}
    for strategy in STRATEGIES:
        config = StrategyConfig(
            strategy=strategy,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            epochs=args.epochs,
            seed=args.train_seed,
            encoder=EncoderSpec(),
        )
        started = time.perf_counter()
        bundle = train(config, splits)
        elapsed = time.perf_counter() - started
        bundle.save(args.out_dir / f"bundle_{strategy.lower()}")
        report = evaluate(predict(bundle, splits.test), splits.test)
        report.write_json(args.out_dir / f"report_{strategy.lower()}.json")
        rows[strategy] = report.scores()
        print(f"trained {strategy} in {elapsed:.1f}s")

    header = f"{'strategy':10s}" + "".join(f"{c:>12s}" for c in COLUMNS)
    print("\n" + header)
    print("-" * len(header))
    for strategy, scores in rows.items():
        print(
            f"{strategy:10s}"
            + "".join(f"{scores[c]:12.4f}" for c in COLUMNS)
        )

    summary_path = args.out_dir / "summary.json"
    summary_path.write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    print(f"\nartifacts in {args.out_dir}")


if __name__ == "__main__":
    main()
