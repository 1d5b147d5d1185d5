"""Scoring a grader: quadratic weighted kappa and friends.

Severity grades are ordinal, so plain accuracy is misleading: confusing
grade 0 with grade 4 is far worse than confusing 2 with 3. Quadratic
weighted kappa charges each error by the squared grade distance and
normalizes by the disagreement expected from the two marginal
distributions alone. 1 is perfect, 0 is chance, negative is worse than
chance.
"""

import numpy as np

from fundusdl.metrics import (Binarization, discretize, evaluate, roc_auc,
                              quadratic_weighted_kappa)

truth = np.array([0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4])

print("same predictions, increasingly wrong by grade distance:")
for shift in (0, 1, 2):
    pred = np.clip(truth + shift, 0, 4)
    k = quadratic_weighted_kappa(truth, pred)
    print(f"  every grade off by {shift}: kappa {k:+.3f}")
constant = np.full_like(truth, 4)
print(f"  always predicting grade 4: kappa "
      f"{quadratic_weighted_kappa(truth, constant):+.3f} (chance level)")

# Continuous scores are mapped to grades by fixed thresholds at the
# half-points; the regression head never needs a softmax.
scores = np.array([0.2, 0.4, 0.61, 1.1, 0.9, 1.48, 2.2, 1.7,
                   2.9, 3.3, 3.52, 4.4])
print(f"\nthresholds map scores to grades: "
      f"{scores[:4]} -> {discretize(scores)[:4]}")

# Screening quality is a binary question: does the system separate
# healthy eyes from eyes needing referral, whatever the exact grade?
sick = Binarization("healthy_vs_sick", positive_grades=(1, 2, 3, 4))
auc = roc_auc(scores, sick.positives(truth))
print(f"healthy-vs-sick ranking AUC: {auc:.3f}")

report = evaluate(scores, truth)
print("\nfull report:\n")
print(report.to_text())
