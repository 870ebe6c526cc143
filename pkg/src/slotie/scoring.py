"""Benchmark scorers and the token-level training metric.

Four corpus scoring schemes are provided, differing in pair similarity and
matching strategy:

* ``wire57_score`` — token-overlap precision/recall per pair, greedy
  highest-F1 matching, micro-averaged over token counts.
* ``carb_score`` — stopword-filtered token overlap; recall averages each
  gold's best match, precision comes from a greedy one-to-one matching.
* ``carb_1to1_score`` — same pair similarity, but a single optimal
  one-to-one matching drives both precision and recall.
* ``oie2016_score`` — tuples match when the per-element heads agree; the
  head extractor is pluggable (the default heuristic takes the last
  non-stopword token and is intentionally parser-free).

All scorers take ``{sentence: [Extraction, ...]}`` maps for gold and
predictions, keyed by the exact sentence string.  Sentences present only
on the prediction side must be filtered out by the caller.  Empty
prediction sets score precision 0, not 1.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import Extraction, LabelGrid, TokenClass, N_CLASSES
from .data import tuple_part_tokens
from .matching import Assignment, hungarian_max

STOPWORDS_VERSION = "en-1"
_STOPWORDS_PATH = Path(__file__).with_name("stopwords_en.txt")


def _load_stopwords() -> frozenset[str]:
    words = []
    for line in _STOPWORDS_PATH.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.append(line)
    return frozenset(words)


STOPWORDS = _load_stopwords()


def stopwords_checksum() -> str:
    """SHA-256 of the shipped stopword file; pin this to reproduce scores."""
    return hashlib.sha256(_STOPWORDS_PATH.read_bytes()).hexdigest()


def scoring_tokens(text: str, drop_stopwords: bool = False) -> list[str]:
    """Lowercased tokens of one tuple part.

    With ``drop_stopwords``, stopwords are removed unless that would empty
    a non-empty part, in which case the unfiltered tokens are kept (so a
    bare "is" relation stays scoreable).
    """
    tokens = [t.lower() for t in tuple_part_tokens(text)]
    if drop_stopwords:
        kept = [t for t in tokens if t not in STOPWORDS]
        return kept if kept else tokens
    return tokens


def _overlap(a: Sequence[str], b: Sequence[str]) -> int:
    return sum((Counter(a) & Counter(b)).values())


def _harmonic(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ScoredPair:
    """Token-overlap scores for one (prediction, gold) pair."""

    pred_index: int
    gold_index: int
    precision: float
    recall: float
    f1: float
    overlap: int = 0
    pred_size: int = 0
    gold_size: int = 0


@dataclass
class BenchmarkReport:
    scheme: str
    precision: float
    recall: float
    f1: float
    auc: float | None = None
    matched: int = 0
    gold_count: int = 0
    pred_count: int = 0
    per_sentence: list[dict] = field(default_factory=list)
    totals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "matched": self.matched,
            "gold_count": self.gold_count,
            "pred_count": self.pred_count,
            "totals": self.totals,
            "per_sentence": self.per_sentence,
        }


def auc_single_point(precision: float, recall: float) -> float:
    """Area under the two-segment curve through (0, 1), (recall, precision)
    and (1, 0) — the documented single-point approximation, equal to
    (precision + recall) / 2.  A coarse convention, flagged approximate."""
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise ValueError("precision and recall must lie in [0, 1]")
    first = recall * (1.0 + precision) / 2.0
    second = (1.0 - recall) * precision / 2.0
    return first + second


# -- token-level training metric ------------------------------------------------

class MacroF1Accumulator:
    """Corpus-level token-wise macro F1 over the four classes.

    Predicted slots are compared against their assigned gold mask;
    unmatched slots are scored against all-Background.  A class absent
    from both sides counts as perfect (F1 = 1), which keeps identical
    grids at exactly 1.0.
    """

    def __init__(self) -> None:
        self.true_positive = np.zeros(N_CLASSES, dtype=np.int64)
        self.pred_total = np.zeros(N_CLASSES, dtype=np.int64)
        self.gold_total = np.zeros(N_CLASSES, dtype=np.int64)

    def add(self, pred: LabelGrid, gold: LabelGrid, assignment: Assignment) -> None:
        pred_labels = pred.label_array()
        slot_to_gold = assignment.slot_to_gold()
        gold_labels = gold.label_array()
        background = int(TokenClass.BACKGROUND)
        for slot in range(pred.n_gold):
            predicted = pred_labels[slot]
            if slot in slot_to_gold:
                target = gold_labels[slot_to_gold[slot]]
            else:
                target = np.full_like(predicted, background)
            for klass in range(N_CLASSES):
                p = predicted == klass
                g = target == klass
                self.true_positive[klass] += int((p & g).sum())
                self.pred_total[klass] += int(p.sum())
                self.gold_total[klass] += int(g.sum())

    def value(self) -> float:
        scores = []
        for klass in range(N_CLASSES):
            tp = self.true_positive[klass]
            pred_n = self.pred_total[klass]
            gold_n = self.gold_total[klass]
            if pred_n == 0 and gold_n == 0:
                scores.append(1.0)
                continue
            precision = tp / pred_n if pred_n else 0.0
            recall = tp / gold_n if gold_n else 0.0
            scores.append(_harmonic(precision, recall))
        return float(np.mean(scores))


def token_macro_f1(pred: LabelGrid, gold: LabelGrid, assignment: Assignment) -> float:
    """Token-wise macro F1 between a decoded grid and the gold grid under a
    given slot-to-gold assignment."""
    acc = MacroF1Accumulator()
    acc.add(pred, gold, assignment)
    return acc.value()


# -- WiRe57-style scoring --------------------------------------------------------

def wire57_pair(
    t: Extraction, g: Extraction, pred_index: int = 0, gold_index: int = 0
) -> ScoredPair | None:
    """Token-overlap scores for a possibly-matching pair.

    The pair qualifies only if every part (arg1, rel, arg2) shares at
    least one token; otherwise None.  Precision divides the summed
    per-part multiset overlaps by the prediction's token count, recall by
    the gold's token count.
    """
    t_parts = [scoring_tokens(x) for x in t.as_tuple()]
    g_parts = [scoring_tokens(x) for x in g.as_tuple()]
    overlaps = [_overlap(tp, gp) for tp, gp in zip(t_parts, g_parts)]
    if any(o == 0 for o in overlaps):
        return None
    overlap = sum(overlaps)
    t_size = sum(len(p) for p in t_parts)
    g_size = sum(len(p) for p in g_parts)
    precision = overlap / t_size if t_size else 0.0
    recall = overlap / g_size if g_size else 0.0
    return ScoredPair(
        pred_index, gold_index, precision, recall, _harmonic(precision, recall),
        overlap=overlap, pred_size=t_size, gold_size=g_size,
    )


def _greedy_by_f1(pairs: list[ScoredPair]) -> list[ScoredPair]:
    """Repeatedly take the highest-F1 pair (ties: lowest pred index, then
    lowest gold index), removing both sides."""
    chosen: list[ScoredPair] = []
    used_pred: set[int] = set()
    used_gold: set[int] = set()
    for pair in sorted(pairs, key=lambda p: (-p.f1, p.pred_index, p.gold_index)):
        if pair.pred_index in used_pred or pair.gold_index in used_gold:
            continue
        chosen.append(pair)
        used_pred.add(pair.pred_index)
        used_gold.add(pair.gold_index)
    return chosen


def wire57_score(
    gold: Mapping[str, Sequence[Extraction]],
    pred: Mapping[str, Sequence[Extraction]],
) -> BenchmarkReport:
    """Corpus score: greedy per-sentence matching, micro-averaged token
    overlap over all predicted and gold tokens."""
    matched_overlap = 0
    pred_tokens_total = 0
    gold_tokens_total = 0
    matched = gold_count = pred_count = 0
    per_sentence: list[dict] = []
    for sentence, gold_exts in gold.items():
        pred_exts = list(pred.get(sentence, ()))
        pairs = []
        for i, t in enumerate(pred_exts):
            for j, g in enumerate(gold_exts):
                pair = wire57_pair(t, g, i, j)
                if pair is not None:
                    pairs.append(pair)
        chosen = _greedy_by_f1(pairs)
        sent_overlap = sum(p.overlap for p in chosen)
        sent_pred_tokens = sum(
            sum(len(scoring_tokens(x)) for x in t.as_tuple()) for t in pred_exts
        )
        sent_gold_tokens = sum(
            sum(len(scoring_tokens(x)) for x in g.as_tuple()) for g in gold_exts
        )
        matched_overlap += sent_overlap
        pred_tokens_total += sent_pred_tokens
        gold_tokens_total += sent_gold_tokens
        matched += len(chosen)
        gold_count += len(gold_exts)
        pred_count += len(pred_exts)
        per_sentence.append(
            {
                "sentence": sentence,
                "matched": len(chosen),
                "gold": len(gold_exts),
                "pred": len(pred_exts),
                "overlap": sent_overlap,
                "pred_tokens": sent_pred_tokens,
                "gold_tokens": sent_gold_tokens,
            }
        )
    precision = matched_overlap / pred_tokens_total if pred_tokens_total else 0.0
    recall = matched_overlap / gold_tokens_total if gold_tokens_total else 0.0
    return BenchmarkReport(
        "wire57", precision, recall, _harmonic(precision, recall),
        matched=matched, gold_count=gold_count, pred_count=pred_count,
        per_sentence=per_sentence,
        totals={
            "matched_overlap": matched_overlap,
            "pred_tokens": pred_tokens_total,
            "gold_tokens": gold_tokens_total,
        },
    )


# -- CaRB-style scoring ------------------------------------------------------------

def carb_pair(
    t: Extraction, g: Extraction, pred_index: int = 0, gold_index: int = 0
) -> ScoredPair | None:
    """Stopword-filtered token-overlap scores; the pair qualifies only when
    the relation fields share at least one (filtered) token."""
    t_parts = [scoring_tokens(x, drop_stopwords=True) for x in t.as_tuple()]
    g_parts = [scoring_tokens(x, drop_stopwords=True) for x in g.as_tuple()]
    if _overlap(t_parts[1], g_parts[1]) == 0:
        return None
    overlap = sum(_overlap(tp, gp) for tp, gp in zip(t_parts, g_parts))
    t_size = sum(len(p) for p in t_parts)
    g_size = sum(len(p) for p in g_parts)
    precision = overlap / t_size if t_size else 0.0
    recall = overlap / g_size if g_size else 0.0
    return ScoredPair(
        pred_index, gold_index, precision, recall, _harmonic(precision, recall),
        overlap=overlap, pred_size=t_size, gold_size=g_size,
    )


def carb_score(
    gold: Mapping[str, Sequence[Extraction]],
    pred: Mapping[str, Sequence[Extraction]],
) -> BenchmarkReport:
    """CaRB-style corpus score.

    Recall is the mean, over gold tuples, of the best matched recall in
    the tuple's row.  Precision matches predictions to gold tuples
    one-to-one (greedy by pair precision, each gold used once) and is the
    mean over predictions of their matched precision.
    """
    recall_sum = 0.0
    precision_sum = 0.0
    matched = gold_count = pred_count = 0
    per_sentence: list[dict] = []
    for sentence, gold_exts in gold.items():
        pred_exts = list(pred.get(sentence, ()))
        pairs = []
        for i, t in enumerate(pred_exts):
            for j, g in enumerate(gold_exts):
                pair = carb_pair(t, g, i, j)
                if pair is not None:
                    pairs.append(pair)
        sent_recall = 0.0
        for j in range(len(gold_exts)):
            row = [p.recall for p in pairs if p.gold_index == j]
            sent_recall += max(row) if row else 0.0
        used_gold: set[int] = set()
        used_pred: set[int] = set()
        sent_precision = 0.0
        sent_matched = 0
        for pair in sorted(pairs, key=lambda p: (-p.precision, p.pred_index, p.gold_index)):
            if pair.pred_index in used_pred or pair.gold_index in used_gold:
                continue
            used_pred.add(pair.pred_index)
            used_gold.add(pair.gold_index)
            sent_precision += pair.precision
            sent_matched += 1
        recall_sum += sent_recall
        precision_sum += sent_precision
        matched += sent_matched
        gold_count += len(gold_exts)
        pred_count += len(pred_exts)
        per_sentence.append(
            {
                "sentence": sentence,
                "matched": sent_matched,
                "gold": len(gold_exts),
                "pred": len(pred_exts),
                "recall_sum": sent_recall,
                "precision_sum": sent_precision,
            }
        )
    precision = precision_sum / pred_count if pred_count else 0.0
    recall = recall_sum / gold_count if gold_count else 0.0
    return BenchmarkReport(
        "carb", precision, recall, _harmonic(precision, recall),
        matched=matched, gold_count=gold_count, pred_count=pred_count,
        per_sentence=per_sentence,
        totals={"precision_sum": precision_sum, "recall_sum": recall_sum},
    )


def carb_1to1_score(
    gold: Mapping[str, Sequence[Extraction]],
    pred: Mapping[str, Sequence[Extraction]],
) -> BenchmarkReport:
    """CaRB similarity with a single optimal one-to-one matching (maximum
    total pair F1) driving both precision and recall."""
    precision_sum = 0.0
    recall_sum = 0.0
    matched = gold_count = pred_count = 0
    per_sentence: list[dict] = []
    for sentence, gold_exts in gold.items():
        pred_exts = list(pred.get(sentence, ()))
        pair_map: dict[tuple[int, int], ScoredPair] = {}
        for i, t in enumerate(pred_exts):
            for j, g in enumerate(gold_exts):
                pair = carb_pair(t, g, i, j)
                if pair is not None:
                    pair_map[(i, j)] = pair
        sent_matched = 0
        sent_precision = 0.0
        sent_recall = 0.0
        if pair_map:
            similarity = np.zeros((len(pred_exts), len(gold_exts)))
            for (i, j), pair in pair_map.items():
                similarity[i, j] = pair.f1
            if similarity.shape[0] >= similarity.shape[1]:
                assignment = hungarian_max(similarity)
                chosen = assignment.pairs
            else:
                assignment = hungarian_max(similarity.T)
                chosen = tuple((i, j) for j, i in assignment.pairs)
            for i, j in chosen:
                pair = pair_map.get((i, j))
                if pair is None:
                    continue
                sent_matched += 1
                sent_precision += pair.precision
                sent_recall += pair.recall
        precision_sum += sent_precision
        recall_sum += sent_recall
        matched += sent_matched
        gold_count += len(gold_exts)
        pred_count += len(pred_exts)
        per_sentence.append(
            {
                "sentence": sentence,
                "matched": sent_matched,
                "gold": len(gold_exts),
                "pred": len(pred_exts),
                "precision_sum": sent_precision,
                "recall_sum": sent_recall,
            }
        )
    precision = precision_sum / pred_count if pred_count else 0.0
    recall = recall_sum / gold_count if gold_count else 0.0
    return BenchmarkReport(
        "carb11", precision, recall, _harmonic(precision, recall),
        matched=matched, gold_count=gold_count, pred_count=pred_count,
        per_sentence=per_sentence,
        totals={"precision_sum": precision_sum, "recall_sum": recall_sum},
    )


# -- head-agreement scoring ---------------------------------------------------------

def default_head(text: str) -> str:
    """Heuristic head: the last non-stopword token (last token if all are
    stopwords).  Parser-free and intentionally approximate."""
    tokens = [t.lower() for t in tuple_part_tokens(text)]
    kept = [t for t in tokens if t not in STOPWORDS]
    pick = kept if kept else tokens
    return pick[-1] if pick else ""


def oie2016_score(
    gold: Mapping[str, Sequence[Extraction]],
    pred: Mapping[str, Sequence[Extraction]],
    head_fn: Callable[[str], str] = default_head,
) -> BenchmarkReport:
    """Tuples match when arg1, rel and arg2 heads all agree; one-to-one
    greedy matching by index order; precision/recall over matched counts."""
    matched = gold_count = pred_count = 0
    per_sentence: list[dict] = []
    for sentence, gold_exts in gold.items():
        pred_exts = list(pred.get(sentence, ()))
        gold_heads = [tuple(head_fn(x) for x in g.as_tuple()) for g in gold_exts]
        used_gold: set[int] = set()
        sent_matched = 0
        for t in pred_exts:
            t_heads = tuple(head_fn(x) for x in t.as_tuple())
            for j, g_heads in enumerate(gold_heads):
                if j not in used_gold and t_heads == g_heads:
                    used_gold.add(j)
                    sent_matched += 1
                    break
        matched += sent_matched
        gold_count += len(gold_exts)
        pred_count += len(pred_exts)
        per_sentence.append(
            {
                "sentence": sentence,
                "matched": sent_matched,
                "gold": len(gold_exts),
                "pred": len(pred_exts),
            }
        )
    precision = matched / pred_count if pred_count else 0.0
    recall = matched / gold_count if gold_count else 0.0
    return BenchmarkReport(
        "oie2016", precision, recall, _harmonic(precision, recall),
        matched=matched, gold_count=gold_count, pred_count=pred_count,
        per_sentence=per_sentence,
        totals={"matched": matched},
    )


SCHEMES: dict[str, Callable[..., BenchmarkReport]] = {
    "wire57": wire57_score,
    "carb": carb_score,
    "carb11": carb_1to1_score,
    "oie2016": oie2016_score,
}
