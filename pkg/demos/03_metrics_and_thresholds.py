"""Evaluation metrics and decision-threshold calibration.

The positive class is "fake" and an image is predicted fake when its score
is >= the threshold (0.5 by default). Average precision is the
uninterpolated step sum over the precision-recall curve; AUC equals the
probability that a random fake outscores a random real (ties count half).
The oracle threshold is the accuracy-maximizing one: an upper bound that is
unavailable in deployment but shows how much calibration could help.
"""

from sidbench.metrics import (
    ScoreSet,
    accuracy,
    average_precision,
    confusion_at,
    oracle_threshold,
    pr_curve,
    roc_auc,
    tpr_tnr,
)

scores = ScoreSet.from_items(
    [
        ("img0", 0.9, "fake"),
        ("img1", 0.8, "real"),
        ("img2", 0.7, "fake"),
        ("img3", 0.6, "fake"),
    ]
)

c = confusion_at(scores, 0.5)
tpr, tnr = tpr_tnr(c)
print(f"at threshold 0.5: tp={c.tp} tn={c.tn} fp={c.fp} fn={c.fn}")
print(f"  accuracy={accuracy(c):.4f} tpr={tpr:.4f} tnr={tnr:.4f}")

print("\nprecision-recall curve (one point per distinct score):")
for p in pr_curve(scores):
    print(f"  t={p.threshold:.2f}  precision={p.precision:.4f}  recall={p.recall:.4f}")

print(f"\naverage precision: {average_precision(scores):.6f}  (= 29/36)")
print(f"roc auc:           {roc_auc(scores):.6f}  (= 1/3)")

t, acc = oracle_threshold(scores)
print(f"\noracle threshold {t:.4f} reaches accuracy {acc:.4f}")
print("(here the default threshold already matches the oracle: no headroom)")

skewed = ScoreSet.from_items(
    [("a", 0.30, "real"), ("b", 0.35, "fake"), ("c", 0.40, "fake"), ("d", 0.45, "fake")]
)
t, acc = oracle_threshold(skewed)
print(
    f"\na detector scoring every image below 0.5: acc@0.5="
    f"{accuracy(confusion_at(skewed, 0.5)):.4f}, acc@{t:.4f}={acc:.4f}"
)
print("(calibration recovers a detector whose scores are shifted, not broken)")
