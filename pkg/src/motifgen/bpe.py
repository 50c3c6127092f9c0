"""Byte-pair encoding over event token bodies.

Merges are learned greedily: the most frequent adjacent pair wins each
round (ties to the lexicographically smallest pair) and becomes a fresh id
numbered upward from the base vocabulary size. Pairs touching a special
token or the bar token are never counted, and nothing at or before the sep
of a conditioned sequence participates, so condition prefixes pass through
encoding verbatim. Training stops once total encoded length falls to the
target fraction of total base length, or when no pair occurs twice.

Encoding replays merges in learning order, replacing left to right without
overlap; decoding expands recursively and is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tokenizer import TokenSequence
from .vocab import VOCAB, VOCAB_SIZE, Vocabulary

_SEPARATOR = -1
_DELETED = -2
_PAIR_KEY = 1 << 20  # ids stay far below this


class EmptyCorpus(ValueError):
    """BPE training needs at least one sequence."""


class UnknownToken(ValueError):
    """An id is outside the model's base or merged vocabulary."""


@dataclass(frozen=True)
class BpeModel:
    base_vocab_size: int
    merges: tuple[tuple[int, int, int], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for i, (a, b, new_id) in enumerate(self.merges):
            if new_id != self.base_vocab_size + i:
                raise ValueError(f"merges[{i}]: expected new id {self.base_vocab_size + i}")
            if not (0 <= a < new_id and 0 <= b < new_id):
                raise ValueError(f"merges[{i}]: pair ({a}, {b}) references undefined ids")

    @property
    def vocab_size(self) -> int:
        return self.base_vocab_size + len(self.merges)

    def expansions(self) -> dict[int, tuple[int, ...]]:
        """Merged id -> the base-id sequence it stands for."""
        table: dict[int, tuple[int, ...]] = {}

        def expand(t: int) -> tuple[int, ...]:
            return table[t] if t >= self.base_vocab_size else (t,)

        for a, b, new_id in self.merges:
            table[new_id] = expand(a) + expand(b)
        return table

    def to_json_dict(self) -> dict:
        return {
            "base_vocab_size": self.base_vocab_size,
            "merges": [[a, b, n] for a, b, n in self.merges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, data: dict) -> "BpeModel":
        try:
            base = int(data["base_vocab_size"])
            merges = tuple((int(a), int(b), int(n)) for a, b, n in data["merges"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad BPE model payload: {exc}") from exc
        return cls(base, merges)

    @classmethod
    def from_json(cls, text: str) -> "BpeModel":
        return cls.from_json_dict(json.loads(text))


def _excluded_ids(vocab: Vocabulary) -> tuple[int, ...]:
    return (vocab.pad, vocab.bos, vocab.sep, vocab.eos, vocab.bar)


def _flatten(
    sequences: Sequence[Sequence[int]], vocab: Vocabulary
) -> tuple[np.ndarray, np.ndarray, int]:
    """Concatenate sequences with separators; mark merge-eligible slots.

    Tokens at or before a sep are ineligible (condition prefixes stay
    verbatim); separators and excluded ids are handled by the id check at
    pair time. Returns (ids, eligible, token count).
    """
    ids: list[int] = []
    eligible: list[bool] = []
    total = 0
    for seq in sequences:
        toks = list(seq)
        total += len(toks)
        boundary = toks.index(vocab.sep) if vocab.sep in toks else -1
        for i, t in enumerate(toks):
            if not 0 <= t < VOCAB_SIZE:
                raise UnknownToken(f"id {t} is not a base vocabulary token")
            ids.append(t)
            eligible.append(i > boundary)
        ids.append(_SEPARATOR)
        eligible.append(False)
    return np.array(ids, dtype=np.int64), np.array(eligible, dtype=bool), total


def train_bpe(
    corpus: Iterable[TokenSequence | Sequence[int]],
    target_ratio: float = 0.66,
    vocab: Vocabulary = VOCAB,
) -> BpeModel:
    """Learn merges until mean encoded length / mean base length <= target."""
    if not 0.0 < target_ratio <= 1.0:
        raise ValueError(f"target ratio out of range: {target_ratio}")
    sequences = [s.ids if isinstance(s, TokenSequence) else tuple(s) for s in corpus]
    if not sequences:
        raise EmptyCorpus("no sequences to train on")

    arr, eligible, base_total = _flatten(sequences, vocab)
    if base_total == 0:
        raise EmptyCorpus("corpus has no tokens")
    n_separators = len(sequences)
    min_mergeable = max(_excluded_ids(vocab)) + 1  # specials and bar sit below this

    merges: list[tuple[int, int, int]] = []
    while True:
        left, right = arr[:-1], arr[1:]
        ok = (
            eligible[:-1]
            & eligible[1:]
            & (left >= min_mergeable)
            & (right >= min_mergeable)
        )
        keys = left[ok] * _PAIR_KEY + right[ok]
        if keys.size == 0:
            break
        uniq, counts = np.unique(keys, return_counts=True)
        top = counts.max()
        if top < 2:
            break
        best = int(uniq[counts == top].min())
        a, b = divmod(best, _PAIR_KEY)
        new_id = vocab.size + len(merges)
        merges.append((a, b, new_id))

        hits = np.flatnonzero((left == a) & (right == b) & ok)
        kept: list[int] = []
        last = -2
        for i in hits.tolist():  # left-to-right, no overlap
            if i > last + 1:
                kept.append(i)
                last = i
        kept_idx = np.array(kept, dtype=np.int64)
        arr[kept_idx] = new_id
        arr[kept_idx + 1] = _DELETED
        keep_mask = arr != _DELETED
        arr = arr[keep_mask]
        eligible = eligible[keep_mask]

        encoded_total = len(arr) - n_separators
        if encoded_total / base_total <= target_ratio:
            break
    return BpeModel(vocab.size, tuple(merges))


def _split_at_sep(ids: tuple[int, ...], vocab: Vocabulary) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if vocab.sep in ids:
        cut = ids.index(vocab.sep) + 1
        return ids[:cut], ids[cut:]
    return (), ids


def bpe_encode(model: BpeModel, seq: TokenSequence, vocab: Vocabulary = VOCAB) -> TokenSequence:
    """Apply merges to the body of a base sequence; prefix passes verbatim."""
    if seq.space != "base":
        raise ValueError("bpe_encode expects a base-space sequence")
    for t in seq.ids:
        if not 0 <= t < model.base_vocab_size:
            raise UnknownToken(f"id {t} is not a base vocabulary token")
    prefix, body = _split_at_sep(seq.ids, vocab)
    out = list(body)
    for a, b, new_id in model.merges:
        merged: list[int] = []
        i = 0
        while i < len(out):
            if i + 1 < len(out) and out[i] == a and out[i + 1] == b:
                merged.append(new_id)
                i += 2
            else:
                merged.append(out[i])
                i += 1
        out = merged
    return TokenSequence(prefix + tuple(out), space="bpe")


def bpe_decode(model: BpeModel, seq: TokenSequence) -> TokenSequence:
    """Expand merged ids back to base ids; exact inverse of bpe_encode."""
    if seq.space != "bpe":
        raise ValueError("bpe_decode expects a bpe-space sequence")
    table = model.expansions()
    out: list[int] = []
    for t in seq.ids:
        if 0 <= t < model.base_vocab_size:
            out.append(t)
        elif t in table:
            out.extend(table[t])
        else:
            raise UnknownToken(f"id {t} is not defined by this BPE model")
    return TokenSequence(tuple(out), space="base")
