"""Alternating optimization of node weights and SVMs.

The synthetic generator hides its class signal at one hierarchy level;
pooling coarser than that level sees nothing, pooling finer sees extra
video-specific detail. The alternation discovers the right granularity:
the traced objective decreases monotonically while the weight mass
migrates to the signal level.
"""

import numpy as np

from treemkl import (
    AVERAGING,
    EmConfig,
    Hierarchy,
    KernelConfig,
    em_fit,
    gen_sequences,
    kernel_columns,
    median_gamma,
    pool_sequence,
    predict,
)
from treemkl.synth import SynthSpec

SIGNAL_LEVEL = 3
spec = SynthSpec(num_classes=4, per_class=30, frames=32, dim=16,
                 signal_level=SIGNAL_LEVEL, seed=0)
data = gen_sequences(spec)
h = Hierarchy(SIGNAL_LEVEL + 1)
trees = [pool_sequence(s, h) for s in data.sequences["appearance"]]
tr, te = data.split_indices("train"), data.split_indices("test")
train, test = [trees[i] for i in tr], [trees[i] for i in te]

kcfg = KernelConfig("rbf", median_gamma(train))
result = em_fit(train, data.labels[tr], AVERAGING, kcfg,
                EmConfig(max_iters=10))

print(f"=== alternation on a level-{SIGNAL_LEVEL} dataset "
      f"(depth {h.depth}, {len(train)} train videos) ===")
print("iter | objective | weight mass per level")
for it, (obj, beta) in enumerate(zip(result.objective_trace,
                                     result.beta_trace)):
    masses = [beta[h.level_slice(l)].sum() for l in range(1, h.depth + 1)]
    pretty = " ".join(f"{m:.2f}" for m in masses)
    print(f"{it:4d} | {obj:9.3f} | {pretty}")

mass = result.beta[h.level_slice(SIGNAL_LEVEL)].sum()
share = 2 ** (SIGNAL_LEVEL - 1) / h.node_count
print(f"\nsignal-level mass {mass:.3f} vs uniform share {share:.3f}")

cols = kernel_columns(test, train, result.beta, AVERAGING, kcfg)
acc = float(np.mean(predict(result.model, cols) == data.labels[te]))
print(f"test accuracy: {acc:.3f}")

# the same data pooled at depth 1 is plain global averaging: the signal
# cancels and the classifier cannot do better than chance
h1 = Hierarchy(1)
train1 = [pool_sequence(data.sequences["appearance"][i], h1) for i in tr]
test1 = [pool_sequence(data.sequences["appearance"][i], h1) for i in te]
kcfg1 = KernelConfig("rbf", median_gamma(train1))
res1 = em_fit(train1, data.labels[tr], AVERAGING, kcfg1)
cols1 = kernel_columns(test1, train1, res1.beta, AVERAGING, kcfg1)
acc1 = float(np.mean(predict(res1.model, cols1) == data.labels[te]))
print(f"global-average-pooling baseline accuracy: {acc1:.3f} "
      f"(chance is {1 / spec.num_classes:.2f})")
