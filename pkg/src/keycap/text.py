"""Text preprocessing, vocabulary construction, and fixed-length encoding.

Preprocessing keeps only lowercase alphabetic tokens: input is split on
whitespace, non-letter characters are stripped from each piece, and empty
pieces are dropped. Tokens seen fewer than `min_count` times map to UNK.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

from .errors import DataError

PAD_ID = 0
UNK_ID = 1
START_ID = 2
END_ID = 3
SEP_ID = 4

SPECIALS = ("<pad>", "<unk>", "<start>", "<end>")
SEP_TOKEN = "<sep>"

_NON_ALPHA = re.compile(r"[^a-z]+")


def preprocess(text: str) -> list[str]:
    """Lowercase, strip non-letters inside each whitespace token, drop empties."""
    tokens = []
    for piece in text.lower().split():
        cleaned = _NON_ALPHA.sub("", piece)
        if cleaned:
            tokens.append(cleaned)
    return tokens


@dataclass(frozen=True)
class EncodedSequence:
    """Fixed-length id array; positions at or past true_length are PAD."""

    ids: tuple[int, ...]
    true_length: int

    def __post_init__(self):
        assert len(self.ids) >= self.true_length >= 0
        assert all(i == PAD_ID for i in self.ids[self.true_length :])


class Vocabulary:
    """Bidirectional token<->id map with reserved specials.

    Ids 0-3 are PAD/UNK/START/END, id 4 is the keyword separator, and
    corpus tokens follow from id 5. Immutable once built.
    """

    def __init__(self, tokens: list[str]):
        self.id_to_token = list(SPECIALS) + [SEP_TOKEN] + list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.id_to_token[idx]

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def to_text(self) -> str:
        """One token per line; 4 special lines, then <sep>, then body (id 4 + line)."""
        return "\n".join(self.id_to_token) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        lines = text.splitlines()
        if len(lines) < 5 or tuple(lines[:4]) != SPECIALS or lines[4] != SEP_TOKEN:
            raise DataError("vocabulary file header is malformed")
        return cls(lines[5:])


def build_vocabulary(corpus: list[list[str]], min_count: int = 2) -> Vocabulary:
    """Count tokens over the corpus and keep those seen at least min_count times.

    Id assignment is deterministic: count descending, then token ascending.
    """
    if not corpus:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for tokens in corpus:
        counts.update(tokens)
    kept = [tok for tok, c in counts.items() if c >= min_count]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocabulary(kept)


def encode(
    vocab: Vocabulary, tokens: list[str], max_len: int, add_bounds: bool
) -> EncodedSequence:
    """Map tokens to a fixed-length id array, truncating or padding to max_len.

    With add_bounds the sequence is wrapped in START/END; truncation keeps
    START and forces a final END.
    """
    if max_len < 1:
        raise DataError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.lookup(t) for t in tokens]
    if add_bounds:
        if max_len < 2:
            raise DataError("max_len must be >= 2 when adding START/END bounds")
        body = ids[: max_len - 2]
        ids = [START_ID] + body + [END_ID]
    else:
        ids = ids[:max_len]
    true_length = len(ids)
    ids = ids + [PAD_ID] * (max_len - true_length)
    return EncodedSequence(tuple(ids), true_length)


def encode_keywords(vocab: Vocabulary, keywords: list[str], max_len: int) -> EncodedSequence:
    """Encode a keyword list as one sequence, groups joined by the separator."""
    ids: list[int] = []
    for i, phrase in enumerate(keywords):
        if i > 0:
            ids.append(SEP_ID)
        ids.extend(vocab.lookup(t) for t in preprocess(phrase))
    ids = ids[:max_len]
    true_length = len(ids)
    return EncodedSequence(tuple(ids + [PAD_ID] * (max_len - true_length)), true_length)


def decode(vocab: Vocabulary, ids) -> list[str]:
    """Inverse of encode for display: drops PAD/START/END, keeps word tokens."""
    out = []
    for i in ids:
        if i in (PAD_ID, START_ID, END_ID):
            continue
        out.append(vocab.token(int(i)))
    return out
