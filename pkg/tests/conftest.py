from __future__ import annotations

import pytest

from hostility.data import LabeledPost, LabelSet, stratified_split
from hostility.synth import synthetic_corpus
from hostility.textprep import clean_text


def make_post(index: int, text: str = "कुछ शब्द यहाँ", **flags) -> LabeledPost:
    hostile = flags.pop("hostile", bool(flags))
    return LabeledPost(
        id=f"p{index:04d}", text=text, labels=LabelSet(hostile=hostile, **flags)
    )


def cleaned(corpus):
    return tuple(
        LabeledPost(post.id, clean_text(post.text), post.labels) for post in corpus
    )


@pytest.fixture(scope="session")
def synth_corpus_500():
    return synthetic_corpus(500, seed=7)


@pytest.fixture(scope="session")
def synth_splits_500(synth_corpus_500):
    return stratified_split(cleaned(synth_corpus_500), (0.7, 0.1, 0.2), seed=42)


@pytest.fixture(scope="session")
def synth_splits_small():
    corpus = synthetic_corpus(160, seed=11)
    return stratified_split(cleaned(corpus), (0.7, 0.15, 0.15), seed=3)
