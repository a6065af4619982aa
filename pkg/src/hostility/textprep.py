"""Social-media text cleaning for Devanagari-script posts.

The pipeline applies, in order: URL replacement with the literal token
``http``, removal of ``@mention`` / ``#hashtag`` tokens, deletion of emoji /
emoticon / flag codepoints, a charset whitelist (Unicode letters, combining
marks, digits, whitespace, and the sentence punctuation ``।`` ``.`` ``?``),
and whitespace normalization.  The transform is idempotent and total.
"""

from __future__ import annotations

import functools
import re
import unicodedata

KEPT_PUNCTUATION = frozenset({"।", ".", "?"})  # danda, full stop, question mark

# Maximal non-whitespace token carrying a recognized URL prefix.
_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_HASHTAG_RE = re.compile(r"[@#]\S+")

URL_PLACEHOLDER = "http"

# Emoji presentation blocks, variation selectors, the combining enclosing
# keycap, regional indicators (inside the supplementary block), and tag
# characters used by flag sequences.  Variation selectors and the keycap are
# combining marks, so the charset whitelist alone would keep them.
_EMOJI_RANGES = (
    (0x20E3, 0x20E3),
    (0x2600, 0x27BF),
    (0x2B00, 0x2BFF),
    (0xFE00, 0xFE0F),
    (0x1F000, 0x1FAFF),
    (0xE0000, 0xE007F),
)

# The cleaned-text alphabet: every non-whitespace character is a Unicode
# letter, combining mark, or digit (any script), or kept punctuation.
_ALNUM_CATEGORIES = frozenset({"L", "M", "N"})


@functools.lru_cache(maxsize=None)
def _is_emoji_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


@functools.lru_cache(maxsize=None)
def _is_kept_char(ch: str) -> bool:
    if ch in KEPT_PUNCTUATION or ch.isspace():
        return True
    return unicodedata.category(ch)[0] in _ALNUM_CATEGORIES


def _pipeline_once(text: str) -> str:
    text = _URL_RE.sub(URL_PLACEHOLDER, text)
    text = _MENTION_HASHTAG_RE.sub(" ", text)
    text = "".join(ch for ch in text if not _is_emoji_char(ch))
    text = "".join(ch for ch in text if _is_kept_char(ch))
    return " ".join(text.split())


def clean_text(text: str) -> str:
    """Clean one post; total and idempotent over arbitrary Unicode input.

    The pass is repeated until the text stops changing: character deletions
    can splice fragments into a new recognizable URL token (``"ww,w.x"``
    becomes ``"www.x"``), which a single pass would leave unreplaced.
    Every changing pass strictly shrinks the text, so this terminates.
    """
    while True:
        cleaned = _pipeline_once(text)
        if cleaned == text:
            return cleaned
        text = cleaned


def is_clean(text: str) -> bool:
    """Check the cleaned-text invariants (used by fuzz tests and assertions)."""
    if clean_text(text) != text:
        return False
    for ch in text:
        if ch.isspace():
            continue
        if ch in KEPT_PUNCTUATION:
            continue
        if _is_emoji_char(ch) or ch in "@#":
            return False
        if unicodedata.category(ch)[0] not in _ALNUM_CATEGORIES:
            return False
    return True
