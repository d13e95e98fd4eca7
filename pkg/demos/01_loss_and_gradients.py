# Ranking at the top with a p-norm push
#
# The loss looks at every negative, asks how badly it outranks the positives,
# and then pushes hardest on the worst one. Large p means "care about the top".

import numpy as np

from toprej.losses import LossConfig, loss_and_grads, pnorm_reduce

rng = np.random.default_rng(0)
pos = rng.normal(1.0, 1.0, size=5)
neg = rng.normal(0.0, 1.0, size=45)

# The p-norm creeps towards the max as p grows.
a = rng.exponential(size=10)
for p in (1, 4, 16, 64, 1024):
    print(f"p={p:5d}  pnorm={pnorm_reduce(a, p):.6f}  max={a.max():.6f}")

# Plain top-rank loss and its gradient on the scores.
value, d_pos, d_neg, _ = loss_and_grads(pos, neg, LossConfig("top", p=32))
print("loss", value.total)
print("hardest negative gets the largest push:", np.argmax(d_neg) == np.argmax(neg))

# With a rejection weight per negative the loss can switch some of them off,
# but pays a penalty once the average weight falls below c.
r = np.full(neg.size, 0.9)
r[np.argmax(neg)] = 0.05
value, _, _, d_rej = loss_and_grads(pos, neg, LossConfig("toprej", p=32), neg_reject=r)
print("with rejection:", value.rank_term, "+ penalty", value.penalty_term)
print("gradient on the rejected negative", d_rej[np.argmax(neg)])
