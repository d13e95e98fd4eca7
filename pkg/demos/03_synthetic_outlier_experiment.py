# Does a reject branch help when some negatives sit inside the positive cloud?
#
# A few training negatives are moved onto the positive mean. A plain ranker
# has to fight them; the rejecting ranker can give up on them instead.
# Takes around ten seconds.

import numpy as np

from toprej import LossConfig, SynthConfig, TrainConfig, evaluate, synth_generate, train
from toprej.training import reject_weights

for seed in range(3):
    tr, te, outliers = synth_generate(SynthConfig(outlier_rate=0.05, seed=seed))
    row = []
    for variant in ("top", "toprej"):
        params, _ = train(tr, TrainConfig(loss=LossConfig(variant), seed=seed))
        row.append(evaluate(params, te).pos_at_top)
    neg = tr.neg_index
    r = reject_weights(params, tr.X[neg])
    injected = np.isin(tr.ids[neg], outliers)
    print(f"seed {seed}: pos@top top={row[0]:.3f} toprej={row[1]:.3f}  "
          f"mean r injected={r[injected].mean():.2f} others={r[~injected].mean():.2f}")
