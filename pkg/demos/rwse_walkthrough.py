"""
Random-walk structural encodings
================================

Each node gets the probability that a random walk started there is back
home after 1, 2, ..., k steps. Nodes with the same local shape get the same
vector, so the encoding tells a ring apart from a star.
"""

import numpy as np

from gnnplus import Graph, compute_rwse

# A 6-ring: every node looks the same, so every row is the same.
ring = Graph.from_undirected(6, [[i, (i + 1) % 6] for i in range(6)], np.ones((6, 1)))
print("ring\n", compute_rwse(ring, 4).round(4))

# A star with 5 leaves. The hub returns on every even step with certainty.
star = Graph.from_undirected(6, [[0, i] for i in range(1, 6)], np.ones((6, 1)))
print("star\n", compute_rwse(star, 4).round(4))

# An isolated node has no step to take and gets an all-zero row.
lonely = Graph.from_undirected(3, [[0, 1]], np.ones((3, 1)))
print("edge plus isolated node\n", compute_rwse(lonely, 3))

# Relabelling nodes only reorders the rows.
perm = np.random.default_rng(0).permutation(6)
same = np.allclose(compute_rwse(star.permuted(perm), 4), compute_rwse(star, 4)[perm])
print("permutation equivariant:", same)
