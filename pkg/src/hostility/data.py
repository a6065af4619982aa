"""Corpus ingestion, label modeling, statistics, and stratified splitting.

A corpus is an immutable tuple of :class:`LabeledPost`.  The on-disk format is
a UTF-8 CSV with header columns ``id``, ``text``, ``labels``; the labels field
holds either ``non-hostile`` or a comma-separated subset of the fine-grained
hostility tags (``fake``, ``hate``, ``offensive``, ``defamation``).
"""

from __future__ import annotations

import csv
import json
import random
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

LABEL_DIMENSIONS = ("hostile", "fake", "hate", "offensive", "defamation")
FINE_DIMENSIONS = ("fake", "hate", "offensive", "defamation")
NON_HOSTILE_TAG = "non-hostile"
CORPUS_COLUMNS = ("id", "text", "labels")

SPLIT_NAMES = ("train", "validation", "test")
MANIFEST_NAME = "manifest.json"


class CorpusError(ValueError):
    """Invalid corpus rows, label combinations, or split parameters."""


@dataclass(frozen=True)
class LabelSet:
    """Coarse hostile flag plus the four fine-grained hostility flags.

    Any fine flag implies ``hostile``.  Gold annotations additionally carry at
    least one fine flag whenever ``hostile`` is set; that is guaranteed by
    :func:`parse_corpus` (there is no bare ``hostile`` tag in the file format)
    rather than here, so that thresholded model predictions may be hostile
    without a confident sub-category.
    """

    hostile: bool
    fake: bool = False
    hate: bool = False
    offensive: bool = False
    defamation: bool = False

    def __post_init__(self) -> None:
        if not self.hostile and (self.fake or self.hate or self.offensive or self.defamation):
            raise CorpusError("fine-grained flags require hostile=True")

    def flag(self, dimension: str) -> bool:
        if dimension not in LABEL_DIMENSIONS:
            raise CorpusError(f"unknown label dimension {dimension!r}")
        return bool(getattr(self, dimension))

    def fine_flags(self) -> tuple[bool, ...]:
        return tuple(bool(getattr(self, dim)) for dim in FINE_DIMENSIONS)

    def combination_key(self) -> tuple[bool, ...]:
        return (self.hostile, *self.fine_flags())

    def to_field(self) -> str:
        """Render the labels column value for the corpus file format."""
        if not self.hostile:
            return NON_HOSTILE_TAG
        tags = [dim for dim in FINE_DIMENSIONS if getattr(self, dim)]
        if not tags:
            raise CorpusError(
                "hostile label set without fine-grained flags has no corpus-file form"
            )
        return ",".join(tags)

    @classmethod
    def from_field(cls, field: str) -> "LabelSet":
        tokens = [tok.strip().lower() for tok in field.split(",") if tok.strip()]
        if not tokens:
            raise CorpusError("empty labels field")
        unknown = [tok for tok in tokens if tok != NON_HOSTILE_TAG and tok not in FINE_DIMENSIONS]
        if unknown:
            raise CorpusError(f"unknown label token {unknown[0]!r}")
        fine = {dim: dim in tokens for dim in FINE_DIMENSIONS}
        if NON_HOSTILE_TAG in tokens:
            if any(fine.values()):
                raise CorpusError(
                    "contradictory labels: 'non-hostile' combined with a fine-grained tag"
                )
            return cls(hostile=False)
        return cls(hostile=True, **fine)


@dataclass(frozen=True)
class LabeledPost:
    """One social-media post: opaque id, raw text, optional gold labels."""

    id: str
    text: str
    labels: LabelSet | None = None


Corpus = tuple  # tuple[LabeledPost, ...]


@dataclass(frozen=True)
class LabelCounts:
    total: int
    non_hostile: int
    hostile: int
    fake: int
    hate: int
    offensive: int
    defamation: int

    def to_dict(self) -> dict[str, int]:
        return {
            "total": self.total,
            "non_hostile": self.non_hostile,
            "hostile": self.hostile,
            "fake": self.fake,
            "hate": self.hate,
            "offensive": self.offensive,
            "defamation": self.defamation,
        }


@dataclass(frozen=True)
class SplitBundle:
    """Train/validation/test corpora produced by stratified splitting."""

    train: tuple[LabeledPost, ...]
    validation: tuple[LabeledPost, ...]
    test: tuple[LabeledPost, ...]
    seed: int
    ratios: tuple[float, float, float]

    def parts(self) -> dict[str, tuple[LabeledPost, ...]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def parse_corpus(
    rows: Iterable[Mapping[str, str]], require_labels: bool = True
) -> tuple[LabeledPost, ...]:
    """Build a corpus from tabular records with ``id``/``text``/``labels`` fields.

    Rejects empty text, unknown label tokens, contradictory labels, and
    duplicate ids, citing the offending 1-based record index.  With
    ``require_labels=False`` a missing or empty labels field yields an
    unlabeled post (prediction input).
    """
    posts: list[LabeledPost] = []
    seen_ids: set[str] = set()
    for index, row in enumerate(rows, start=1):
        if "id" not in row or row["id"] is None:
            raise CorpusError(f"row {index}: missing id field")
        if "text" not in row or row["text"] is None:
            raise CorpusError(f"row {index}: missing text field")
        post_id = str(row["id"])
        text = str(row["text"])
        if not text.strip():
            raise CorpusError(f"row {index}: empty text")
        if post_id in seen_ids:
            raise CorpusError(f"row {index}: duplicate id {post_id!r}")
        seen_ids.add(post_id)

        raw_labels = row.get("labels")
        labels: LabelSet | None
        if raw_labels is None or not str(raw_labels).strip():
            if require_labels:
                raise CorpusError(f"row {index}: missing labels field")
            labels = None
        else:
            try:
                labels = LabelSet.from_field(str(raw_labels))
            except CorpusError as exc:
                raise CorpusError(f"row {index}: {exc}") from None
        posts.append(LabeledPost(id=post_id, text=text, labels=labels))
    return tuple(posts)


def label_stats(corpus: Sequence[LabeledPost]) -> LabelCounts:
    """Exact per-category counts over a labeled corpus."""
    counts = {dim: 0 for dim in LABEL_DIMENSIONS}
    non_hostile = 0
    for post in corpus:
        if post.labels is None:
            raise CorpusError(f"post {post.id!r} is unlabeled")
        if post.labels.hostile:
            for dim in LABEL_DIMENSIONS:
                if post.labels.flag(dim):
                    counts[dim] += 1
        else:
            non_hostile += 1
    return LabelCounts(
        total=len(corpus),
        non_hostile=non_hostile,
        hostile=counts["hostile"],
        fake=counts["fake"],
        hate=counts["hate"],
        offensive=counts["offensive"],
        defamation=counts["defamation"],
    )


def hostile_subset(corpus: Sequence[LabeledPost]) -> tuple[LabeledPost, ...]:
    """Exactly the hostile posts, corpus order preserved."""
    out = []
    for post in corpus:
        if post.labels is None:
            raise CorpusError(f"post {post.id!r} is unlabeled")
        if post.labels.hostile:
            out.append(post)
    return tuple(out)


def _dimension_errors(
    counts: dict[tuple[bool, ...], list[int]],
    sizes: list[int],
    fixed_counts: list[list[int]],
    rates: Sequence[float],
) -> tuple[float, float]:
    """(max, sum-of-squares) of per-split per-dimension rate errors, each
    normalized by its tolerance max(0.02 * size, 2) in post counts."""
    worst = 0.0
    total = 0.0
    n_dims = len(rates)
    for split in range(3):
        size = sizes[split]
        if size == 0:
            continue
        slack = max(0.02 * size, 2.0)
        for dim in range(n_dims):
            positives = fixed_counts[split][dim]
            for key, alloc in counts.items():
                if key[dim]:
                    positives += alloc[split]
            err = abs(positives - size * rates[dim]) / slack
            worst = max(worst, err)
            total += err * err
    return worst, total


def _rebalance_allocation(
    counts: dict[tuple[bool, ...], list[int]],
    sizes: list[int],
    fixed_counts: list[list[int]],
    rates: Sequence[float],
    max_rounds: int = 300,
) -> None:
    """Greedy size-preserving swaps between splits until every label
    dimension's positive-rate sits comfortably inside its tolerance.

    A swap moves one post of combination ``a`` from split ``s1`` to ``s2``
    and one post of combination ``b`` the other way, so split sizes (and the
    train-gets-the-remainder property) never change.  Combinations are
    interchangeable within themselves, which keeps this search tiny.
    """
    keys = sorted(counts)
    pairs = [(s1, s2) for s1 in range(3) for s2 in range(3) if s1 != s2]
    for _ in range(max_rounds):
        current = _dimension_errors(counts, sizes, fixed_counts, rates)
        if current[0] <= 0.75:
            return
        best = None
        best_score = current
        for s1, s2 in pairs:
            for a in keys:
                if counts[a][s1] == 0:
                    continue
                for b in keys:
                    if b == a or counts[b][s2] == 0:
                        continue
                    counts[a][s1] -= 1
                    counts[a][s2] += 1
                    counts[b][s2] -= 1
                    counts[b][s1] += 1
                    score = _dimension_errors(counts, sizes, fixed_counts, rates)
                    counts[a][s1] += 1
                    counts[a][s2] -= 1
                    counts[b][s2] += 1
                    counts[b][s1] -= 1
                    if score < best_score:
                        best_score = score
                        best = (s1, s2, a, b)
        if best is None:
            return
        s1, s2, a, b = best
        counts[a][s1] -= 1
        counts[a][s2] += 1
        counts[b][s2] -= 1
        counts[b][s1] += 1


def stratified_split(
    corpus: Sequence[LabeledPost],
    ratios: Sequence[float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> SplitBundle:
    """Deterministic stratified split over the full 5-flag label combination.

    Validation and test sizes are the floors of ``ratio * corpus size``; the
    rounding remainder goes to train.  Per-combination allocations start from
    a proportional apportionment and a deterministic rebalancing pass then
    enforces that each label dimension's positive-rate in every split stays
    within max(0.02, 2/split-size) of the corpus rate.  A combination with
    fewer members than there are non-empty splits is placed wholly in train
    with a warning.
    """
    if len(corpus) == 0:
        raise CorpusError("cannot split an empty corpus")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise CorpusError("expected exactly three split ratios")
    if any(r < 0 for r in ratios):
        raise CorpusError("split ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {sum(ratios)!r}")

    groups: dict[tuple[bool, ...], list[int]] = {}
    for position, post in enumerate(corpus):
        if post.labels is None:
            raise CorpusError(f"post {post.id!r} is unlabeled")
        groups.setdefault(post.labels.combination_key(), []).append(position)

    n_nonempty = sum(1 for r in ratios if r > 0)
    train_block: list[int] = []
    large_keys = []
    for key in sorted(groups):
        if len(groups[key]) < n_nonempty:
            warnings.warn(
                f"label combination {key} has only {len(groups[key])} member(s); "
                "placing all of them in train",
                stacklevel=2,
            )
            train_block.extend(groups[key])
        else:
            large_keys.append(key)

    # Proportional apportionment with running accumulators: validation and
    # test column sums land on floor(ratio * allocatable), so the corpus-level
    # rounding remainder is exactly what train absorbs.
    counts: dict[tuple[bool, ...], list[int]] = {}
    acc = [0.0, 0.0]
    taken = [0, 0]
    for key in large_keys:
        n = len(groups[key])
        alloc = [0, 0, 0]
        for j, ratio in enumerate((ratios[1], ratios[2])):
            acc[j] += n * ratio
            share = int(acc[j]) - taken[j]
            share = min(share, n - alloc[1] - alloc[2])
            alloc[1 + j] = share
            taken[j] += share
        alloc[0] = n - alloc[1] - alloc[2]
        counts[key] = alloc

    # The combination key already lists the 5 dimension flags in
    # LABEL_DIMENSIONS order, so it doubles as the flag vector below.
    n_dims = len(LABEL_DIMENSIONS)
    stats = label_stats(corpus)
    rates = [getattr(stats, dim) / stats.total for dim in LABEL_DIMENSIONS]
    fixed_counts = [[0] * n_dims, [0] * n_dims, [0] * n_dims]
    for position in train_block:
        labels = corpus[position].labels
        for dim_index, dim in enumerate(LABEL_DIMENSIONS):
            if labels.flag(dim):
                fixed_counts[0][dim_index] += 1
    sizes = [
        len(train_block) + sum(alloc[0] for alloc in counts.values()),
        sum(alloc[1] for alloc in counts.values()),
        sum(alloc[2] for alloc in counts.values()),
    ]
    _rebalance_allocation(counts, sizes, fixed_counts, rates)

    rng = random.Random(seed)
    assigned: dict[str, list[int]] = {name: [] for name in SPLIT_NAMES}
    assigned["train"].extend(train_block)
    for key in large_keys:
        members = list(groups[key])
        rng.shuffle(members)
        n_val, n_test = counts[key][1], counts[key][2]
        assigned["validation"].extend(members[:n_val])
        assigned["test"].extend(members[n_val : n_val + n_test])
        assigned["train"].extend(members[n_val + n_test :])

    parts = {
        name: tuple(corpus[i] for i in sorted(positions))
        for name, positions in assigned.items()
    }
    return SplitBundle(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        seed=seed,
        ratios=ratios,
    )


def read_corpus(path: str | Path, require_labels: bool = True) -> tuple[LabeledPost, ...]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fields = reader.fieldnames or []
        missing = [col for col in ("id", "text") if col not in fields]
        if require_labels and "labels" not in fields:
            missing.append("labels")
        if missing:
            raise CorpusError(f"{path}: missing column(s) {', '.join(missing)}")
        return parse_corpus(reader, require_labels=require_labels)


def write_corpus(corpus: Sequence[LabeledPost], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CORPUS_COLUMNS)
        for post in corpus:
            field = post.labels.to_field() if post.labels is not None else ""
            writer.writerow([post.id, post.text, field])


def write_split(bundle: SplitBundle, out_dir: str | Path) -> Path:
    """Write ``train.csv``/``validation.csv``/``test.csv`` plus a JSON manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name, part in bundle.parts().items():
        write_corpus(part, out_dir / f"{name}.csv")
        counts[name] = label_stats(part).to_dict() if part else LabelCounts(0, 0, 0, 0, 0, 0, 0).to_dict()
    manifest = {
        "seed": bundle.seed,
        "ratios": list(bundle.ratios),
        "counts": counts,
        "files": {name: f"{name}.csv" for name in SPLIT_NAMES},
    }
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def read_split(data_dir: str | Path) -> SplitBundle:
    """Load a split directory written by :func:`write_split`."""
    data_dir = Path(data_dir)
    manifest_path = data_dir / MANIFEST_NAME
    seed, ratios = 0, (0.7, 0.1, 0.2)
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        seed = int(manifest.get("seed", 0))
        ratios = tuple(manifest.get("ratios", ratios))
    parts = {}
    for name in SPLIT_NAMES:
        path = data_dir / f"{name}.csv"
        parts[name] = read_corpus(path) if path.exists() else ()
    if not parts["train"]:
        raise CorpusError(f"{data_dir}: no train.csv found")
    return SplitBundle(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        seed=seed,
        ratios=ratios,  # type: ignore[arg-type]
    )
