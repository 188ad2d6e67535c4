"""Why weights matter on a three-column toy problem.

Two measurements, three unknowns. The data are consistent with the sparse
vector (0, 0, alpha) and with the "spread out" vector (1, 1, 0). Plain l1
picks whichever has the smaller l1 norm, so the answer flips at alpha = 2.
"""
import numpy as np

from sparse_pce.pc_basis import from_matrix
from sparse_pce.solvers import WeightVector, solve_bpdn, solve_weighted_bpdn
from sparse_pce.theory import beta_gamma, sharpness_matrix

for alpha in (1.0, 1.9, 2.1, 3.0):
    psi, u = sharpness_matrix(alpha)
    c = solve_bpdn(from_matrix(psi, u), 0.0).c
    beta = beta_gamma(psi, None, [2]).beta
    print(f"alpha={alpha:3.1f}  l1 solution={np.round(c, 6)}  beta={beta:.3f}")

# With alpha = 3 the l1 solution is (1, 1, 0) although the generating vector
# is (0, 0, 3). Penalizing the first two columns more restores it.
psi, u = sharpness_matrix(3.0)
W = WeightVector(np.array([2.0, 2.0, 1.0]), "prior_bound")
c = solve_weighted_bpdn(from_matrix(psi, u), 0.0, W).c
print("weighted solution:", np.round(c, 6))
print("weighted beta:", beta_gamma(psi, W, [2]).beta)
