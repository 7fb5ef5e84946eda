"""
A bounded memory of virtual points
===================================

The virtual vector machine keeps at most ``capacity`` points with Gaussian
sites. When the memory is full it either evicts a point (its site is
folded into a fixed residual prior) or merges the two closest points into
one virtual point at their midpoint, with a residual correction chosen so
that the pair's exact projection is reproduced. The choice is the one
that keeps the sites closest to their exact factors.

Here the learner sees 600 points in memory 10 and is compared with
window EP (the last 10 points) and with batch EP over everything.
"""

import numpy as np

from vvm import VirtualVectorMachine, WindowEpState, ep_batch
from vvm.ep import EpConfig
from vvm.harness import MixtureSpec, make_fig1_data
from vvm.features import prepare_stream_record

np.set_printoptions(precision=4, suppress=True)

raw, labels = make_fig1_data(np.random.default_rng(3), MixtureSpec(n_per_class=300))
points = np.array([prepare_stream_record(r, int(y)) for r, y in zip(raw, labels)])

ep = EpConfig(max_sweeps=50)
vvm = VirtualVectorMachine(3, capacity=10, k_pairs=3, ep=ep)
window = WindowEpState(3, 10, ep=ep)
for p in points:
    vvm.update(p)
    window.update(p)

batch = ep_batch(points, 0.01, ep).surrogate
print("points seen:", vvm.points_seen, " held in memory:", len(vvm.cache))
print("decisions:", vvm.decision_counts())
print("last few:", [(d.step, d.kind, d.indices) for d in vvm.decisions[-4:]])


def gap(q):
    return np.linalg.norm(q.mean - batch.mean)


# on an easy, almost separable stream the two bounded learners land close to each other;
# the averaged comparison against a sampled posterior is in ``vvm fig1``
print("batch EP mean  ", batch.mean)
print("VVM(10) mean   ", vvm.surrogate.mean, f" distance {gap(vvm.surrogate):.4f}")
print("window(10) mean", window.surrogate.mean, f" distance {gap(window.surrogate):.4f}")

# the points the machine kept sit near the boundary: small |margin|
margins = vvm.cache.matrix() @ vvm.surrogate.mean
print("margins of the kept points", np.sort(margins))
print("median margin over the stream", np.median(points @ vvm.surrogate.mean))

# predictions are a class label and a predictive probability of +1
label, prob = vvm.predict(np.array([1.0, 0.5, 1.0]))
print("predict (1, 0.5):", label, round(prob, 4))
