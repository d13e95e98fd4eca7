# Three views of a ranking: positives at the top, ROC-AUC and PR-AUC

import numpy as np

from toprej.metrics import curve_points, evaluate_scores

pos = np.array([3.0, 2.5, 0.4, 0.1])
neg = np.array([2.0, 0.3, -1.0, -1.5, -2.0])

rep = evaluate_scores(pos, neg)
print(rep.summary())

# Two positives score above the best negative, so half the positives are at the top.
# The same number is the TPR where the ROC curve leaves FPR = 0.
roc, pr = curve_points(pos, neg)
for thr, fpr, tpr in roc:
    print(f"thr {thr:6.2f}  fpr {fpr:.2f}  tpr {tpr:.2f}")
