"""The four benchmark scoring schemes on one prediction file.

Same gold, same predictions, four verdicts: token-overlap with greedy
matching (wire57), stopword-filtered overlap with row-max recall and
greedy one-to-one precision (carb), the same similarity under a single
optimal one-to-one matching (carb11), and head-agreement counting
(oie2016).  The AUC column is the documented single-point approximation
(precision + recall) / 2.

Run from the repository root:  python3 demos/05_benchmark_scorers.py
"""

from slotie import auc_single_point, read_tuples_tsv, wire57_pair
from slotie.scoring import SCHEMES, stopwords_checksum

gold_records = read_tuples_tsv("data/sample_gold.tsv")
pred_records = read_tuples_tsv("data/sample_pred.tsv")
gold = {r.sentence: list(r.tuples) for r in gold_records}
pred = {r.sentence: list(r.tuples) for r in pred_records}

print("=== one pair under the token-overlap formulas ===")
t = pred["A spectrum from a single FID has a low signal-to-noise ratio ."][0]
g = gold["A spectrum from a single FID has a low signal-to-noise ratio ."][0]
pair = wire57_pair(t, g)
print(f"pred {t.as_tuple()}")
print(f"gold {g.as_tuple()}")
print(f"precision {pair.precision:.3f}  recall {pair.recall:.3f}  f1 {pair.f1:.3f}")

print()
print(f"=== corpus scores ({len(gold)} sentences) ===")
print(f"{'scheme':<10} {'prec':>7} {'rec':>7} {'f1':>7} {'auc':>7}")
for name, scheme in SCHEMES.items():
    report = scheme(gold, pred)
    auc = auc_single_point(report.precision, report.recall)
    print(f"{name:<10} {report.precision:>7.3f} {report.recall:>7.3f} "
          f"{report.f1:>7.3f} {auc:>7.3f}")

print()
print("scores depend on the shipped stopword list; its checksum is")
print("  sha256:" + stopwords_checksum())
