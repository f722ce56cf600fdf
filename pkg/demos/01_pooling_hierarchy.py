"""Temporal hierarchy pooling: what the tree looks like and why the
node means are robust to frame rate.

A depth-D hierarchy splits the frame axis into 1, 2, 4, ... 2**(D-1)
intervals; every node stores the mean of its interval's frame vectors.
The root is ordinary global average pooling, deeper nodes are more
time-localized.
"""

import numpy as np

from treemkl import Hierarchy, StreamFeatureSequence, build_intervals, pool_sequence

rng = np.random.default_rng(0)

print("=== interval layout for 10 frames, depth 3 ===")
for iv in build_intervals(10, 3):
    bar = " " * iv.start + "#" * (iv.end - iv.start)
    print(f"level {iv.level} node {iv.index}: [{iv.start:2d},{iv.end:2d})  {bar}")

seq = StreamFeatureSequence(video_id="demo", stream="appearance",
                            rows=rng.standard_normal((24, 4)))
tree = pool_sequence(seq, Hierarchy(3))
print("\n=== pooled tree (24 frames, dim 4, depth 3) ===")
for (level, index), vec in zip(Hierarchy(3).nodes, tree.vectors):
    print(f"level {level} node {index}: {np.round(vec, 3)}")

print("\nroot equals the plain global mean:",
      np.array_equal(tree.root, seq.rows.mean(axis=0)))

# videos of different lengths produce identically-shaped trees: no
# resampling, no padding
short = StreamFeatureSequence(video_id="short", stream="appearance",
                              rows=rng.standard_normal((7, 4)))
long = StreamFeatureSequence(video_id="long", stream="appearance",
                             rows=rng.standard_normal((301, 4)))
print("\n7-frame tree shape:  ", pool_sequence(short, Hierarchy(3)).vectors.shape)
print("301-frame tree shape:", pool_sequence(long, Hierarchy(3)).vectors.shape)

# duplicating every frame (e.g. doubling the frame rate) leaves every
# node mean unchanged: the representation is video-length agnostic
dup = StreamFeatureSequence(video_id="dup", stream="appearance",
                            rows=np.repeat(seq.rows, 3, axis=0))
dup_tree = pool_sequence(dup, Hierarchy(3))
print("\nmax node deviation after tripling every frame:",
      float(np.abs(dup_tree.vectors - tree.vectors).max()))
