"""Core domain types for slot-based triplet extraction.

A sentence is tokenized into whole-word tokens (optionally followed by the
three placeholder tokens ``[is]``, ``[from]``, ``[to]``).  A triplet is
represented as a per-token mask over four classes (Background, Subject,
Relation, Object); a sentence carries up to N such masks, one per slot.
This module holds those types plus the conversions between token masks and
plain (arg1, rel, arg2) string extractions.  Everything here is a pure
function over immutable values.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np


class SlotieError(Exception):
    """Base class for every error raised by this package."""


class EmptyInput(SlotieError):
    """Raised when a sentence is empty or whitespace-only."""


class NoTriplet(SlotieError):
    """Raised when an all-Background mask is asked to produce a triplet."""


class BadAnnotation(SlotieError):
    """Raised for malformed gold annotations (bad indices, tags, or tokens)."""


class TokenClass(IntEnum):
    """The four per-token classes; BACKGROUND is the designated empty class."""

    BACKGROUND = 0
    SUBJECT = 1
    RELATION = 2
    OBJECT = 3


N_CLASSES = len(TokenClass)

#: Trailing placeholder tokens that stand in for tuple words absent from the
#: sentence body ("is", "from", "to" used implicitly).
PLACEHOLDER_TOKENS = ("[is]", "[from]", "[to]")

#: Sentinel character span assigned to appended placeholder tokens.
PLACEHOLDER_SPAN = (-1, -1)

_PUNCT = frozenset(string.punctuation)


def split_chunk(chunk: str) -> list[str]:
    """Split one whitespace-delimited chunk into word and punctuation tokens.

    Leading and trailing punctuation characters become single-character
    tokens; interior punctuation stays attached (so "28,750" and
    "signal-to-noise" survive as single tokens).
    """
    lead = 0
    while lead < len(chunk) and chunk[lead] in _PUNCT:
        lead += 1
    trail = len(chunk)
    while trail > lead and chunk[trail - 1] in _PUNCT:
        trail -= 1
    tokens = list(chunk[:lead])
    if trail > lead:
        tokens.append(chunk[lead:trail])
    tokens.extend(chunk[trail:])
    return tokens


@dataclass(frozen=True)
class TokenSequence:
    """A tokenized sentence with per-token character offsets.

    ``char_spans[i]`` is the half-open (start, end) span of token ``i`` in
    the original sentence; appended placeholders carry the sentinel span.
    When placeholders are present they are exactly the last three tokens,
    in the order ``[is]``, ``[from]``, ``[to]``.
    """

    tokens: tuple[str, ...]
    char_spans: tuple[tuple[int, int], ...]
    placeholder_flags: tuple[bool, ...]

    def __post_init__(self) -> None:
        if not (len(self.tokens) == len(self.char_spans) == len(self.placeholder_flags)):
            raise BadAnnotation("tokens, spans and flags must have equal length")
        prev_end = -1
        for (start, end), flag in zip(self.char_spans, self.placeholder_flags):
            if flag:
                continue
            if start < prev_end or end <= start:
                raise BadAnnotation("char spans must be increasing and non-overlapping")
            prev_end = end
        flagged = [i for i, f in enumerate(self.placeholder_flags) if f]
        if flagged:
            expected = [len(self.tokens) - 3, len(self.tokens) - 2, len(self.tokens) - 1]
            if flagged != expected or self.tokens[-3:] != PLACEHOLDER_TOKENS:
                raise BadAnnotation(
                    "placeholders must be exactly the trailing [is], [from], [to] tokens"
                )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def has_placeholders(self) -> bool:
        return bool(self.placeholder_flags) and self.placeholder_flags[-1]

    @property
    def body_tokens(self) -> tuple[str, ...]:
        """Tokens without the appended placeholders."""
        return self.tokens[:-3] if self.has_placeholders else self.tokens


@dataclass(frozen=True)
class TripletMask:
    """Per-token class labels encoding (at most) one triplet."""

    labels: tuple[TokenClass, ...]

    @property
    def is_background(self) -> bool:
        return all(lab == TokenClass.BACKGROUND for lab in self.labels)

    @property
    def has_all_parts(self) -> bool:
        """True when the mask labels at least one Subject, Relation and Object."""
        present = set(self.labels)
        return {TokenClass.SUBJECT, TokenClass.RELATION, TokenClass.OBJECT} <= present

    def as_array(self) -> np.ndarray:
        return np.fromiter((int(lab) for lab in self.labels), dtype=np.int64, count=len(self.labels))

    def token_indices(self) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
        """Indices labeled Subject, Relation and Object, in token order."""
        parts: dict[TokenClass, list[int]] = {
            TokenClass.SUBJECT: [],
            TokenClass.RELATION: [],
            TokenClass.OBJECT: [],
        }
        for i, lab in enumerate(self.labels):
            if lab != TokenClass.BACKGROUND:
                parts[lab].append(i)
        return (
            tuple(parts[TokenClass.SUBJECT]),
            tuple(parts[TokenClass.RELATION]),
            tuple(parts[TokenClass.OBJECT]),
        )


@dataclass(frozen=True)
class LabelGrid:
    """Up to ``n_slots`` triplet masks for one sentence (the gold or decoded
    counterpart of the probability tensor)."""

    masks: tuple[TripletMask, ...]
    n_slots: int | None = None

    def __post_init__(self) -> None:
        lengths = {len(m.labels) for m in self.masks}
        if len(lengths) > 1:
            raise BadAnnotation("all masks in a grid must cover the same tokens")
        if self.n_slots is not None and len(self.masks) > self.n_slots:
            raise BadAnnotation(
                f"{len(self.masks)} masks exceed the {self.n_slots}-slot budget"
            )

    @property
    def n_gold(self) -> int:
        return len(self.masks)

    @property
    def seq_length(self) -> int | None:
        return len(self.masks[0].labels) if self.masks else None

    def label_array(self) -> np.ndarray:
        """Dense (M, T) integer class labels."""
        if not self.masks:
            return np.zeros((0, 0), dtype=np.int64)
        return np.stack([m.as_array() for m in self.masks])


@dataclass(frozen=True)
class Extraction:
    """An (arg1, rel, arg2) string triple with an optional confidence."""

    arg1: str
    rel: str
    arg2: str
    confidence: float | None = None

    def __post_init__(self) -> None:
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.arg1, self.rel, self.arg2)


@dataclass(frozen=True)
class PredictionTensor:
    """A (T, N, C) probability tensor; rows over the class axis sum to one."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 3 or probs.shape[2] != N_CLASSES:
            raise ValueError(f"expected shape (T, N, {N_CLASSES}), got {probs.shape}")
        if probs.min() < -1e-9 or probs.max() > 1.0 + 1e-9:
            raise ValueError("probabilities must lie in [0, 1]")
        row_sums = probs.sum(axis=2)
        if not np.allclose(row_sums, 1.0, atol=1e-6):
            raise ValueError("class probabilities must sum to 1 per (token, slot)")

    @property
    def n_tokens(self) -> int:
        return self.probs.shape[0]

    @property
    def n_slots(self) -> int:
        return self.probs.shape[1]


def tokenize(sentence: str, append_placeholders: bool = False) -> TokenSequence:
    """Whitespace-and-punctuation tokenization with exact character offsets.

    Raises EmptyInput for empty or whitespace-only sentences.  When
    ``append_placeholders`` is set, the three placeholder tokens are added
    at the end with sentinel offsets.
    """
    if not sentence.strip():
        raise EmptyInput("cannot tokenize an empty sentence")
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    for match in re.finditer(r"\S+", sentence):
        chunk = match.group()
        offset = match.start()
        pos = 0
        for piece in split_chunk(chunk):
            tokens.append(piece)
            spans.append((offset + pos, offset + pos + len(piece)))
            pos += len(piece)
    flags = [False] * len(tokens)
    if append_placeholders:
        for placeholder in PLACEHOLDER_TOKENS:
            tokens.append(placeholder)
            spans.append(PLACEHOLDER_SPAN)
            flags.append(True)
    return TokenSequence(tuple(tokens), tuple(spans), tuple(flags))


def sequence_from_tokens(tokens: Sequence[str], append_placeholders: bool = False) -> TokenSequence:
    """Build a TokenSequence from pre-tokenized text.

    Character spans are synthesized as if the tokens were joined by single
    spaces; used for corpora that arrive already tokenized.
    """
    if not tokens:
        raise EmptyInput("cannot build a sequence from zero tokens")
    out: list[str] = []
    spans: list[tuple[int, int]] = []
    pos = 0
    for token in tokens:
        if not token or token.split() != [token]:
            raise BadAnnotation(f"invalid token {token!r}")
        out.append(token)
        spans.append((pos, pos + len(token)))
        pos += len(token) + 1
    flags = [False] * len(out)
    if append_placeholders:
        for placeholder in PLACEHOLDER_TOKENS:
            out.append(placeholder)
            spans.append(PLACEHOLDER_SPAN)
            flags.append(True)
    return TokenSequence(tuple(out), tuple(spans), tuple(flags))


def mask_to_extraction(seq: TokenSequence, mask: TripletMask) -> Extraction:
    """Concatenate, in token order, the Subject/Relation/Object tokens of a
    mask into an (arg1, rel, arg2) extraction.

    Placeholder tokens keep their bracketed surface form verbatim.  Raises
    NoTriplet for an all-Background mask.
    """
    if len(mask.labels) != len(seq):
        raise BadAnnotation(
            f"mask covers {len(mask.labels)} tokens but the sentence has {len(seq)}"
        )
    parts: dict[TokenClass, list[str]] = {
        TokenClass.SUBJECT: [],
        TokenClass.RELATION: [],
        TokenClass.OBJECT: [],
    }
    for token, label in zip(seq.tokens, mask.labels):
        if label != TokenClass.BACKGROUND:
            parts[label].append(token)
    if not any(parts.values()):
        raise NoTriplet("mask labels every token Background")
    return Extraction(
        " ".join(parts[TokenClass.SUBJECT]),
        " ".join(parts[TokenClass.RELATION]),
        " ".join(parts[TokenClass.OBJECT]),
    )


def grid_from_tuples(
    seq: TokenSequence,
    gold: Sequence[tuple[Sequence[int], Sequence[int], Sequence[int]]],
    n_slots: int | None = None,
) -> LabelGrid:
    """Build a LabelGrid from (subject, relation, object) token-index triples.

    One mask per triple, in the given order.  Raises BadAnnotation for
    out-of-range or conflicting indices, empty parts, or duplicate triples.
    """
    n_tokens = len(seq)
    masks: list[TripletMask] = []
    seen: set[tuple[tuple[int, ...], ...]] = set()
    for parts in gold:
        if len(parts) != 3:
            raise BadAnnotation(f"expected 3 index groups per triplet, got {len(parts)}")
        key = tuple(tuple(sorted(set(p))) for p in parts)
        if key in seen:
            raise BadAnnotation(f"duplicate gold triplet {key}")
        seen.add(key)
        labels = [TokenClass.BACKGROUND] * n_tokens
        classes = (TokenClass.SUBJECT, TokenClass.RELATION, TokenClass.OBJECT)
        for token_class, indices in zip(classes, parts):
            if not indices:
                raise BadAnnotation(f"gold triplet has no {token_class.name} tokens")
            for index in indices:
                if not 0 <= index < n_tokens:
                    raise BadAnnotation(f"token index {index} out of range (T={n_tokens})")
                if labels[index] != TokenClass.BACKGROUND:
                    raise BadAnnotation(f"token {index} labeled twice within one triplet")
                labels[index] = token_class
        masks.append(TripletMask(tuple(labels)))
    return LabelGrid(tuple(masks), n_slots)
