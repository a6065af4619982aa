"""Synthetic keyword-rule corpus for desk-scale experiments.

The labeling rule is purely lexical: a post is hostile exactly when it
contains at least one trigger token, and each fine-grained flag is set
exactly when that dimension's trigger appears.  This makes the task linearly
separable for any encoder that can detect token presence, which the
acceptance experiments rely on.  Generated posts also carry occasional URLs,
mentions, hashtags, and emoji so the preprocessing step has real work to do;
that noise is class-independent.
"""

from __future__ import annotations

import random

from .data import FINE_DIMENSIONS, LabeledPost, LabelSet
from .encoder import DEFAULT_BUCKETS, hash_bucket

TRIGGER_TOKENS = {
    "fake": "झूठी",
    "hate": "घृणित",
    "offensive": "अभद्र",
    "defamation": "बदनामी",
}

NEUTRAL_TOKENS = (
    "आज", "भारत", "समाचार", "लोग", "सरकार", "शहर", "पानी", "किताब",
    "बाजार", "खेल", "मौसम", "गाना", "सड़क", "विद्यालय", "त्योहार", "परिवार",
    "काम", "सुबह", "रात", "चाय", "रेल", "फसल", "नदी", "पहाड़",
)

NOISE_TOKENS = ("https://example.com/x1", "@kisi_ka_naam", "#rujhan", "😀", "www.udaharan.in/p")


def _assert_no_bucket_collisions(num_buckets: int = DEFAULT_BUCKETS) -> None:
    buckets: dict[int, str] = {}
    for word in (*TRIGGER_TOKENS.values(), *NEUTRAL_TOKENS):
        bucket = hash_bucket(word, num_buckets)
        if bucket in buckets:
            raise AssertionError(
                f"hash-bucket collision between {buckets[bucket]!r} and {word!r}; "
                "adjust the token lists"
            )
        buckets[bucket] = word


def synthetic_corpus(
    n_posts: int = 500, seed: int = 7, hostile_rate: float = 0.5
) -> tuple[LabeledPost, ...]:
    """Generate a separable corpus of ``n_posts`` labeled posts."""
    _assert_no_bucket_collisions()
    rng = random.Random(seed)
    posts = []
    for index in range(n_posts):
        words = rng.choices(NEUTRAL_TOKENS, k=rng.randint(6, 12))
        hostile = rng.random() < hostile_rate
        if hostile:
            n_dims = 1 if rng.random() < 0.7 else 2
            dims = rng.sample(FINE_DIMENSIONS, k=n_dims)
            for dim in dims:
                for _ in range(rng.randint(1, 2)):
                    words.insert(rng.randrange(len(words) + 1), TRIGGER_TOKENS[dim])
            labels = LabelSet(hostile=True, **{dim: dim in dims for dim in FINE_DIMENSIONS})
        else:
            labels = LabelSet(hostile=False)
        if rng.random() < 0.2:
            words.insert(rng.randrange(len(words) + 1), rng.choice(NOISE_TOKENS))
        if rng.random() < 0.3:
            words.append(rng.choice(("।", "?")))
        posts.append(
            LabeledPost(id=f"synth-{index:04d}", text=" ".join(words), labels=labels)
        )
    return tuple(posts)


def trigger_rule_labels(text: str) -> LabelSet:
    """Recompute the labels the generation rule assigns to a text."""
    tokens = set(text.split())
    flags = {dim: TRIGGER_TOKENS[dim] in tokens for dim in FINE_DIMENSIONS}
    return LabelSet(hostile=any(flags.values()), **flags)
