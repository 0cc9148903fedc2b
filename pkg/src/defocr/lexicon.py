"""Lexicon retrieval correction for decoded strings.

A decoded word is matched against an ordered lexicon by edit distance;
a close-enough hit replaces it, otherwise it passes through unchanged.
Comparison happens on case-folded forms (by default) but the original-
cased lexicon entry is what gets returned.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RefusalError


@dataclass
class Lexicon:
    """Ordered word list; duplicates (after folding) keep the first entry."""

    words: list = field(default_factory=list)
    case_fold: bool = True

    def __post_init__(self) -> None:
        cleaned = []
        seen = set()
        for w in self.words:
            if not w:
                raise ConfigError("lexicon entries must be nonempty")
            key = w.casefold() if self.case_fold else w
            if key in seen:
                continue
            seen.add(key)
            cleaned.append(w)
        self.words = cleaned

    def __len__(self) -> int:
        return len(self.words)


def load_lexicon(path, case_fold: bool = True) -> Lexicon:
    """One word per line; '#' comment lines ignored, whitespace stripped."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if not word or word.startswith("#"):
                continue
            words.append(word)
    return Lexicon(words=words, case_fold=case_fold)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = np.arange(len(b) + 1, dtype=np.int64)
    cur = np.empty_like(prev)
    for i, ca in enumerate(a, start=1):
        cur[0] = i
        for j, cb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ca != cb),
            )
        prev, cur = cur, prev
    return int(prev[-1])


def default_max_dist(query: str) -> int:
    """ceil(len/4), capped at 2."""
    return min(2, -(-len(query) // 4))


def retrieve(query: str, lex: Lexicon, max_dist: int, rescore=None):
    """Closest lexicon word within max_dist, or None.

    Ties break by smaller distance, then lexicographic order of the
    folded word, then earliest lexicon position. An optional rescore
    callback (word, distance) -> real re-ranks the surviving candidates
    by ascending score, with the same secondary tie-break.
    """
    if max_dist < 0:
        raise ConfigError(f"max_dist must be nonnegative, got {max_dist}")
    if not lex.words:
        raise RefusalError("cannot retrieve from an empty lexicon")
    q = query.casefold() if lex.case_fold else query
    best = None
    best_key = None
    for pos, word in enumerate(lex.words):
        folded = word.casefold() if lex.case_fold else word
        dist = levenshtein(q, folded)
        if dist > max_dist:
            continue
        primary = rescore(word, dist) if rescore is not None else dist
        key = (primary, folded, pos)
        if best_key is None or key < best_key:
            best_key = key
            best = word
    return best


def correct(decoded: str, lex: Lexicon, max_dist: int, rescore=None) -> str:
    """Lexicon-corrected string; unchanged when nothing is close enough."""
    if not lex.words:
        return decoded
    hit = retrieve(decoded, lex, max_dist, rescore=rescore)
    return decoded if hit is None else hit
