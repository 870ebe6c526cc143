"""Dataset ingestion and generation.

Three ways of producing training grids are supported: aligning string
tuples onto their sentence by iterated longest-common-substring matching
(generation-style corpora), collapsing n-ary CoNLL role annotations into
subject/relation/object masks, and generating synthetic sentences from a
pool of lexicalized knowledge-base triplets.  The module also owns the
plain-text file formats: the tuples TSV used between extraction and
scoring, the JSON-lines training-grid format, and the triplet-pool TSV.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    BadAnnotation,
    Extraction,
    LabelGrid,
    PLACEHOLDER_TOKENS,
    SlotieError,
    TokenClass,
    TokenSequence,
    TripletMask,
    sequence_from_tokens,
    split_chunk,
    tokenize,
)


class FormatError(SlotieError):
    """Raised for malformed input files; the message carries the line number."""


class ConfigError(SlotieError):
    """Raised for unusable configuration (e.g. a too-small triplet pool)."""


@dataclass(frozen=True)
class GenerativeRecord:
    """A sentence with its set of string tuples."""

    sentence: str
    tuples: tuple[Extraction, ...]


@dataclass(frozen=True)
class ConllRecord:
    """A tokenized sentence with one role-tag layer per tuple annotation."""

    tokens: tuple[str, ...]
    role_labels: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class TemplateSpec:
    probability: float
    kind: str


#: Sentence templates and their sampling probabilities: a single triplet
#: closed by a period, two triplets joined by a conjunction, 3-5 triplets
#: joined by commas, and 2-9 triplets joined by periods.
DEFAULT_TEMPLATES = (
    TemplateSpec(0.10, "single"),
    TemplateSpec(0.20, "pair"),
    TemplateSpec(0.35, "commas"),
    TemplateSpec(0.35, "periods"),
)

DEFAULT_CONJUNCTIONS = ("while", "and")

#: The largest template can draw this many triplets from the pool.
MIN_POOL_SIZE = 9


@dataclass(frozen=True)
class TripletPool:
    """Lexicalized (subject, relation, object) triples for one language."""

    triples: tuple[tuple[str, str, str], ...]
    language: str = "en"

    def __post_init__(self) -> None:
        for triple in self.triples:
            if not all(part.strip() for part in triple):
                raise ConfigError(f"pool triple has an empty part: {triple}")

    def __len__(self) -> int:
        return len(self.triples)

    @classmethod
    def from_tsv(cls, path, language: str = "en") -> "TripletPool":
        triples: list[tuple[str, str, str]] = []
        for lineno, line in enumerate(_read_lines(path), start=1):
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(cols)}")
            triples.append((cols[0], cols[1], cols[2]))
        return cls(tuple(triples), language)


@dataclass(frozen=True)
class SkippedTuple:
    extraction: Extraction
    reason: str
    unmatched: tuple[str, ...] = ()


@dataclass(frozen=True)
class AlignedRecord:
    """Alignment output: the placeholder-extended sequence, the accepted
    masks, and a report of skipped tuples."""

    sentence: str
    sequence: TokenSequence
    grid: LabelGrid
    skipped: tuple[SkippedTuple, ...]


def tuple_part_tokens(text: str) -> list[str]:
    """Tokenize one tuple part, keeping [is]/[from]/[to] atomic."""
    tokens: list[str] = []
    for chunk in text.split():
        if chunk in PLACEHOLDER_TOKENS:
            tokens.append(chunk)
        else:
            tokens.extend(split_chunk(chunk))
    return tokens


_PLACEHOLDER_KEYS = {ph: ph[1:-1] for ph in PLACEHOLDER_TOKENS}


def _match_key(token: str) -> str:
    return _PLACEHOLDER_KEYS.get(token, token)


def _longest_common_run(
    sent_keys: Sequence[str],
    sent_avail: Sequence[bool],
    part_keys: Sequence[str],
    part_avail: Sequence[bool],
) -> tuple[list[int], list[int]] | None:
    """Longest common contiguous run between the two *remaining* token
    subsequences; ties break toward the earliest sentence position, then
    the earliest part position.  Returns original-index lists or None."""
    a = [(i, sent_keys[i]) for i, ok in enumerate(sent_avail) if ok]
    b = [(j, part_keys[j]) for j, ok in enumerate(part_avail) if ok]
    if not a or not b:
        return None
    best_len = 0
    best_a = best_b = -1
    prev = [0] * (len(b) + 1)
    for ai in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for bj in range(1, len(b) + 1):
            if a[ai - 1][1] == b[bj - 1][1]:
                cur[bj] = prev[bj - 1] + 1
                run, a_start, b_start = cur[bj], ai - cur[bj], bj - cur[bj]
                if run > best_len or (
                    run == best_len
                    and (a_start, b_start) < (best_a, best_b)
                ):
                    best_len, best_a, best_b = run, a_start, b_start
        prev = cur
    if best_len == 0:
        return None
    return (
        [a[i][0] for i in range(best_a, best_a + best_len)],
        [b[j][0] for j in range(best_b, best_b + best_len)],
    )


_PART_CLASSES = (TokenClass.SUBJECT, TokenClass.RELATION, TokenClass.OBJECT)
_PART_NAMES = ("arg1", "rel", "arg2")


def _align_tuple(sent_keys: list[str], ext: Extraction) -> tuple[TokenClass, ...] | SkippedTuple:
    labels = [TokenClass.BACKGROUND] * len(sent_keys)
    available = [True] * len(sent_keys)
    for token_class, name, part in zip(_PART_CLASSES, _PART_NAMES, ext.as_tuple()):
        part_tokens = tuple_part_tokens(part)
        if not part_tokens:
            return SkippedTuple(ext, f"empty {name}")
        part_keys = [_match_key(t) for t in part_tokens]
        part_avail = [True] * len(part_keys)
        while any(part_avail):
            run = _longest_common_run(sent_keys, available, part_keys, part_avail)
            if run is None:
                unmatched = tuple(t for t, ok in zip(part_tokens, part_avail) if ok)
                return SkippedTuple(ext, f"{name} tokens not found in sentence", unmatched)
            for si in run[0]:
                labels[si] = token_class
                available[si] = False
            for pj in run[1]:
                part_avail[pj] = False
    return tuple(labels)


def lcs_align(record: GenerativeRecord, n_slots: int | None = None) -> AlignedRecord:
    """Project string tuples onto token masks by iterated longest-common-run
    matching with exclusion.

    The sentence is tokenized with the three placeholders appended; a
    placeholder satisfies a tuple token ("is", or the bracketed "[is]")
    that does not occur in the sentence body.  Matched tokens are excluded
    from later matching, so the three spans of one mask are disjoint.  A
    tuple is skipped (and reported) if any of its tokens stays unmatched.
    """
    seq = tokenize(record.sentence, append_placeholders=True)
    sent_keys = [
        _match_key(tok) if flag else tok
        for tok, flag in zip(seq.tokens, seq.placeholder_flags)
    ]
    masks: list[TripletMask] = []
    skipped: list[SkippedTuple] = []
    for ext in record.tuples:
        outcome = _align_tuple(sent_keys, ext)
        if isinstance(outcome, SkippedTuple):
            skipped.append(outcome)
        else:
            masks.append(TripletMask(outcome))
    return AlignedRecord(record.sentence, seq, LabelGrid(tuple(masks), n_slots), tuple(skipped))


# -- n-ary CoNLL conversion ---------------------------------------------------

_TAG_RE = re.compile(r"^(P|A(\d+))-(B|I)$")


@dataclass(frozen=True)
class ConllConversion:
    sequence: TokenSequence
    grid: LabelGrid
    rejected: tuple[str, ...]

    @property
    def accepted(self) -> bool:
        return self.grid.n_gold > 0


def read_conll(path) -> list[ConllRecord]:
    """Read whitespace-separated CoNLL records: token column followed by one
    tag column per tuple annotation; blank lines separate sentences."""
    records: list[ConllRecord] = []
    tokens: list[str] = []
    rows: list[list[str]] = []

    def flush(lineno: int) -> None:
        if not tokens:
            return
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise FormatError(f"{path}:{lineno}: ragged tag columns within one record")
        if widths == {0}:
            raise FormatError(f"{path}:{lineno}: record has no tag columns")
        layers = tuple(tuple(layer) for layer in zip(*rows))
        records.append(ConllRecord(tuple(tokens), layers))
        tokens.clear()
        rows.clear()

    lineno = 0
    for lineno, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if not stripped:
            flush(lineno)
            continue
        cols = stripped.split()
        tokens.append(cols[0])
        rows.append(cols[1:])
    flush(lineno)
    return records


def _layer_classes(tags: Sequence[str]) -> list[TokenClass]:
    """Map one role-tag layer to token classes, validating B/I continuity."""
    classes: list[TokenClass] = []
    prev_role: str | None = None
    for position, tag in enumerate(tags):
        if tag == "O":
            classes.append(TokenClass.BACKGROUND)
            prev_role = None
            continue
        match = _TAG_RE.match(tag)
        if not match:
            raise BadAnnotation(f"unknown role tag {tag!r} at token {position}")
        role, arg_num, boundary = match.group(1), match.group(2), match.group(3)
        if boundary == "I" and prev_role != role:
            raise BadAnnotation(f"{tag} at token {position} continues no {role}-B span")
        prev_role = role
        if role == "P":
            classes.append(TokenClass.RELATION)
        elif arg_num == "0":
            classes.append(TokenClass.SUBJECT)
        else:
            classes.append(TokenClass.OBJECT)
    return classes


def lsoie_convert(record: ConllRecord, append_placeholders: bool = True) -> ConllConversion:
    """Collapse n-ary role annotations into triplet masks.

    Per layer: the predicate span becomes the Relation, A0 becomes the
    Subject, and every higher-numbered argument merges into the Object.  A
    layer is rejected when it lacks a predicate, an A0, or any higher
    argument.  Placeholders (when appended) carry Background labels.
    """
    rejected: list[str] = []
    masks: list[TripletMask] = []
    pad = len(PLACEHOLDER_TOKENS) if append_placeholders else 0
    for layer_index, tags in enumerate(record.role_labels):
        if len(tags) != len(record.tokens):
            raise BadAnnotation(f"layer {layer_index} has {len(tags)} tags for {len(record.tokens)} tokens")
        classes = _layer_classes(tags)
        present = set(classes)
        if TokenClass.RELATION not in present:
            rejected.append(f"layer {layer_index}: no predicate")
            continue
        if TokenClass.SUBJECT not in present or TokenClass.OBJECT not in present:
            rejected.append(f"layer {layer_index}: fewer than two arguments")
            continue
        classes.extend([TokenClass.BACKGROUND] * pad)
        masks.append(TripletMask(tuple(classes)))
    sequence = sequence_from_tokens(record.tokens, append_placeholders=append_placeholders)
    return ConllConversion(sequence, LabelGrid(tuple(masks)), tuple(rejected))


# -- synthetic sentence generation --------------------------------------------

@dataclass(frozen=True)
class SynthSample:
    record: GenerativeRecord
    template: str


def _template_count(kind: str, rng: np.random.Generator) -> int:
    if kind == "single":
        return 1
    if kind == "pair":
        return 2
    if kind == "commas":
        return int(rng.integers(3, 6))
    if kind == "periods":
        return int(rng.integers(2, 10))
    raise ConfigError(f"unknown template kind {kind!r}")


def synth_generate(
    pool: TripletPool,
    n_sentences: int,
    seed: int,
    templates: tuple[TemplateSpec, ...] = DEFAULT_TEMPLATES,
    conjunctions: tuple[str, ...] = DEFAULT_CONJUNCTIONS,
) -> list[SynthSample]:
    """Generate sentences by lexicalizing pool triplets into templates.

    Each triplet is flattened by joining its parts with spaces; a template
    then chains 1-9 such phrases.  Triplets are drawn without replacement
    within a sentence, and the sampled triplets are the gold extractions.
    Deterministic for a fixed seed.
    """
    if len(pool) < MIN_POOL_SIZE:
        raise ConfigError(f"pool has {len(pool)} triples; need at least {MIN_POOL_SIZE}")
    probs = np.array([t.probability for t in templates], dtype=np.float64)
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ConfigError("template probabilities must sum to 1")
    if not conjunctions:
        raise ConfigError("need at least one conjunction")
    rng = np.random.default_rng(seed)
    samples: list[SynthSample] = []
    for _ in range(n_sentences):
        kind = templates[int(rng.choice(len(templates), p=probs))].kind
        count = _template_count(kind, rng)
        chosen = [pool.triples[i] for i in rng.choice(len(pool), size=count, replace=False)]
        phrases = [" ".join(triple) for triple in chosen]
        if kind == "single":
            sentence = phrases[0] + " ."
        elif kind == "pair":
            conj = conjunctions[int(rng.integers(len(conjunctions)))]
            sentence = f"{phrases[0]} {conj} {phrases[1]} ."
        elif kind == "commas":
            sentence = " , ".join(phrases) + " ."
        else:
            sentence = " . ".join(phrases) + " ."
        extractions = tuple(Extraction(s, r, o) for s, r, o in chosen)
        samples.append(SynthSample(GenerativeRecord(sentence, extractions), kind))
    return samples


def template_frequencies(samples: Iterable[SynthSample]) -> dict[str, float]:
    counts = Counter(s.template for s in samples)
    total = sum(counts.values())
    return {kind: counts.get(kind, 0) / total for kind in sorted({t.kind for t in DEFAULT_TEMPLATES} | set(counts))}


# -- file formats --------------------------------------------------------------

def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def read_tuples_tsv(path) -> list[GenerativeRecord]:
    """Read `sentence TAB confidence TAB arg1 TAB rel TAB arg2` lines,
    grouping consecutive-or-not lines of the same sentence together."""
    grouped: dict[str, list[Extraction]] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise FormatError(f"{path}:{lineno}: expected 5 columns, got {len(cols)}")
        sentence, conf_text, arg1, rel, arg2 = cols
        try:
            confidence = float(conf_text)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad confidence {conf_text!r}") from exc
        if not 0.0 <= confidence <= 1.0:
            raise FormatError(f"{path}:{lineno}: confidence {confidence} outside [0, 1]")
        grouped.setdefault(sentence, []).append(Extraction(arg1, rel, arg2, confidence))
    return [GenerativeRecord(s, tuple(exts)) for s, exts in grouped.items()]


def write_tuples_tsv(path, records: Iterable[GenerativeRecord]) -> None:
    """Inverse of :func:`read_tuples_tsv`; a missing confidence is written
    as "1.0" by convention."""
    lines: list[str] = []
    for record in records:
        for ext in record.tuples:
            fields = (record.sentence, *ext.as_tuple())
            if any("\t" in f or "\n" in f for f in fields):
                raise FormatError(f"tabs/newlines not allowed in fields: {fields!r}")
            conf = "1.0" if ext.confidence is None else str(float(ext.confidence))
            lines.append("\t".join((record.sentence, conf, ext.arg1, ext.rel, ext.arg2)))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_imojie_jsonl(path) -> list[GenerativeRecord]:
    """Read generation-style JSON lines: one object per line with a
    "sentence" string and a "tuples" list of part-string lists.  Parts
    beyond the third are appended to arg2."""
    records: list[GenerativeRecord] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "sentence" not in obj or "tuples" not in obj:
            raise FormatError(f"{path}:{lineno}: need a sentence and a tuples list")
        extractions: list[Extraction] = []
        for parts in obj["tuples"]:
            if not isinstance(parts, list) or len(parts) < 3:
                raise FormatError(f"{path}:{lineno}: tuples need at least 3 parts")
            arg2 = " ".join(str(p) for p in parts[2:])
            extractions.append(Extraction(str(parts[0]), str(parts[1]), arg2))
        records.append(GenerativeRecord(str(obj["sentence"]), tuple(extractions)))
    return records


_CLASS_LETTERS = {
    TokenClass.BACKGROUND: "B",
    TokenClass.SUBJECT: "S",
    TokenClass.RELATION: "R",
    TokenClass.OBJECT: "O",
}
_LETTER_CLASSES = {v: k for k, v in _CLASS_LETTERS.items()}


def write_grid_jsonl(path, records: Iterable[AlignedRecord]) -> None:
    """Write the mask-level training format: tokens plus per-mask class
    letters (B=Background, S=Subject, R=Relation, O=Object)."""
    lines = []
    for record in records:
        obj = {
            "sentence": record.sentence,
            "tokens": list(record.sequence.tokens),
            "placeholders": sum(record.sequence.placeholder_flags),
            "masks": [[_CLASS_LETTERS[lab] for lab in m.labels] for m in record.grid.masks],
        }
        lines.append(json.dumps(obj, ensure_ascii=False))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_grid_jsonl(path) -> list[tuple[TokenSequence, LabelGrid]]:
    """Read the training format back into sequences and label grids."""
    dataset: list[tuple[TokenSequence, LabelGrid]] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            tokens = [str(t) for t in obj["tokens"]]
            n_placeholders = int(obj["placeholders"])
            mask_rows = obj["masks"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
        if n_placeholders not in (0, len(PLACEHOLDER_TOKENS)):
            raise FormatError(f"{path}:{lineno}: bad placeholder count {n_placeholders}")
        if n_placeholders:
            if tuple(tokens[-n_placeholders:]) != PLACEHOLDER_TOKENS:
                raise FormatError(f"{path}:{lineno}: trailing tokens are not the placeholders")
            sequence = sequence_from_tokens(tokens[:-n_placeholders], append_placeholders=True)
        else:
            sequence = sequence_from_tokens(tokens)
        masks = []
        for row in mask_rows:
            if len(row) != len(tokens):
                raise FormatError(f"{path}:{lineno}: mask length differs from token count")
            try:
                masks.append(TripletMask(tuple(_LETTER_CLASSES[c] for c in row)))
            except KeyError as exc:
                raise FormatError(f"{path}:{lineno}: unknown class letter {exc}") from exc
        dataset.append((sequence, LabelGrid(tuple(masks))))
    return dataset
