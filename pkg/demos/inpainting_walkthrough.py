"""
Filling a hole with its surroundings
====================================

A walk through max-pooling inpainting on a feature map small enough to
print. Run it with ``python demos/inpainting_walkthrough.py``.
"""

import numpy as np

from mpikit import MpiOptions, PoolMode, mpi_forward, mpi_oracle, nn_inpaint_labels

np.set_printoptions(precision=1, suppress=True, linewidth=100)

# one channel, 7x7, values rising to the right so each fill is easy to trace
f = np.tile(np.arange(7, dtype=np.float32), (7, 1)) + 10 * np.arange(7)[:, None]
print("features\n", f)

# a 3x3 object in the middle; 0 marks foreground
m = np.ones((7, 7), dtype=np.uint8)
m[2:5, 2:5] = 0

# without the erosion pre-step the ring of background around the hole feeds it
out, prov = mpi_forward(f[None], m, MpiOptions(boundary_erosion_radius=0))
print("\ninpainted, no erosion\n", out[0])
print("iterations:", prov.iterations)

# every filled value can be traced back to one background pixel
for y, x in [(2, 2), (3, 3), (4, 4)]:
    print(f"  ({y},{x}) <- {prov.lookup(0, y, x)}")

# the default erodes the background by one pixel first, so object borders
# (often blurred into the background) do not leak into the fill
out_e, prov_e = mpi_forward(f[None], m)
print("\ninpainted, default erosion\n", out_e[0])
print("iterations:", prov_e.iterations)

# the iteration has a closed form: the max over background pixels within
# Chebyshev distance k of each hole pixel, k being the ring it was filled in
print("matches closed form:", np.array_equal(out_e, mpi_oracle(f[None], m)))

# negative features: with zero fill the zero padding of a foreground
# neighbour can win, the masked variant only ever picks real background
neg = -1 - f
z, _ = mpi_forward(neg[None], m, MpiOptions(boundary_erosion_radius=0))
s, _ = mpi_forward(neg[None], m, MpiOptions(boundary_erosion_radius=0, pool_mode=PoolMode.MASKED_SENTINEL))
print("\nnegative features, zero fill\n", z[0])
print("negative features, masked\n", s[0])

# the same machinery on a label map, through a one-hot encoding
labels = np.array([[0, 0, 1, 1, 1],
                   [0, 0, 1, 1, 1],
                   [2, 2, 2, 1, 1],
                   [2, 2, 2, 2, 1],
                   [0, 2, 2, 2, 2]], dtype=np.uint8)
hole = np.ones((5, 5), dtype=np.uint8)
hole[1:4, 1] = 0
hole[3, 1:4] = 0
print("\nlabels\n", labels)
print("labels with the L-shaped hole filled\n",
      nn_inpaint_labels(labels, hole, MpiOptions(boundary_erosion_radius=0)))
