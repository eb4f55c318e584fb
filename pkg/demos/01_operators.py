# # Hyperedge energies and the multi-scale Laplacian
#
# A hyperedge of size s penalises disagreement among its members. With the
# 1/C(s,2) weight the energy is the mean squared difference over member
# pairs, so a single outlier costs 2/s whatever the size.

import numpy as np

from mshl import Hyperedge, Hypergraph, dirichlet_energy, edge_laplacian, multiscale_laplacian

# One member switched on, the rest at zero.

for s in (2, 3, 4, 5):
    x = np.zeros((s, 1))
    x[0] = 1.0
    e = Hyperedge(tuple(range(s)))
    print(s, dirichlet_energy(x, e, normalized=True), 2 / s)

# A pattern that is constant across the group costs nothing.

e = Hyperedge((0, 1, 2))
X = np.outer(np.ones(3), [0.5, -1.0, 3.0])
print(dirichlet_energy(X, e, normalized=True))

# The per-edge operator is the complete-graph Laplacian on the members.

print(edge_laplacian(e, 4))

# Summing weighted edges of several sizes gives one PSD operator.

H = Hypergraph.from_edges(6, [Hyperedge((0, 1)), Hyperedge((1, 2, 3), 0.8),
                              Hyperedge((2, 3, 4, 5), 0.6)])
L = multiscale_laplacian(H)
print(np.round(L, 3))
print("min eigenvalue", np.linalg.eigvalsh(L).min())
