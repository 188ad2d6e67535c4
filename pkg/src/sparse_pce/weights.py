"""Weights for l1 recovery built from a-priori coefficient information.

Only the ranking and relative size of the weights matters to the solvers
(the argmin of ``||W c||_1`` is invariant under ``W -> t W``), so unknown
prefactors in the bounds below can be set to any positive value. The
damping ``eps_w`` is not scale free, though: pass bounds on the scale of
the coefficients (for instance ``C0`` equal to the estimated mean).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import gammaln

from .pc_basis import OrderedBasis, basis_matrix, legendre_table
from .solvers import WeightVector

GK_FLOOR = 1e-14


def damped_weights(c_est, eps_w: float, p: float = 1.0) -> WeightVector:
    """``w_j = (|c_j| + eps_w)^(-p)``."""
    if not eps_w > 0:
        raise ValueError("eps_w must be > 0")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    c = np.abs(np.asarray(c_est, dtype=float).ravel())
    if not np.all(np.isfinite(c)):
        raise ValueError("coefficient estimates must be finite")
    return WeightVector((c + eps_w) ** (-p), "prior_bound")


def default_eps_w(u_samples, scale: float = 5e-5) -> float:
    """``scale * |mean(u)|``, or ``scale * std(u)`` if the sample mean is exactly 0."""
    u = np.asarray(u_samples, dtype=float).ravel()
    if u.size == 0:
        raise ValueError("no samples")
    m = abs(float(np.mean(u)))
    if m > 0:
        return scale * m
    s = float(np.std(u))
    if s > 0:
        return scale * s
    raise ValueError("degenerate QOI: zero mean and zero spread")


# ---------------------------------------------------------------------------
# elliptic decay bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayModel:
    """``|c_alpha| <= C0 (|alpha|!/alpha!) exp(-sum_k g_k alpha_k)``."""

    g: np.ndarray
    C0: float = 1.0

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).ravel()
        if not np.all(np.isfinite(g)):
            raise ValueError("rates g_k must be finite")
        if not self.C0 > 0:
            raise ValueError("C0 must be positive")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    def with_C0(self, C0: float) -> "DecayModel":
        return DecayModel(self.g, C0)


def elliptic_bound(model: DecayModel, basis: OrderedBasis) -> np.ndarray:
    """Bound value for every basis index; the multinomial factor is formed in log space."""
    if model.g.size != basis.d:
        raise ValueError(f"{model.g.size} rates for a d={basis.d} basis")
    A = basis.indices
    log_multi = gammaln(A.sum(axis=1) + 1.0) - gammaln(A + 1.0).sum(axis=1)
    return model.C0 * np.exp(log_multi - A @ model.g)


def theoretical_gk(r) -> np.ndarray:
    """``g_k = -log(r_k / (sqrt(3) log 2))``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r_k must be positive")
    return -np.log(r / (math.sqrt(3.0) * math.log(2.0)))


def fit_gk(alpha_degrees, coeffs_1d) -> float:
    """Least-squares slope of ``-log|c|`` against degree; tiny coefficients are skipped."""
    deg = np.asarray(alpha_degrees, dtype=float).ravel()
    c = np.abs(np.asarray(coeffs_1d, dtype=float).ravel())
    if deg.size != c.size:
        raise ValueError("degrees and coefficients differ in length")
    keep = c > GK_FLOOR
    if keep.sum() < 2:
        raise ValueError("need at least 2 coefficients above the 1e-14 floor")
    slope, _ = np.polyfit(deg[keep], -np.log(c[keep]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# dimensional (Taylor) bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaylorBoundSpec:
    """Inputs of ``sum_k |E[psi_j (t . xi)^k]| / (k! |Tc_bar|^k)``."""

    t: np.ndarray
    K: int = 4
    Tc_bar: float = -0.5
    mc_samples: int = 200_000

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        if not np.all(np.isfinite(t)):
            raise ValueError("t must be finite")
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.Tc_bar == 0:
            raise ValueError("Tc_bar must be nonzero")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)


def _check_dims(spec, basis):
    if spec.t.size != basis.d:
        raise ValueError(f"t has {spec.t.size} entries, basis has d={basis.d}")


def taylor_moments_mc(spec: TaylorBoundSpec, basis: OrderedBasis, rng_seed=0, block: int = 8192):
    """Monte Carlo ``E[psi_j (t . xi)^k]`` for ``k = 0..K``.

    Returns ``(means, stderr)``, both of shape ``(P, K+1)``. Blocks are summed
    in a fixed order so the result depends only on the seed.
    """
    _check_dims(spec, basis)
    rng = np.random.default_rng(rng_seed)
    M, K = spec.mc_samples, spec.K
    s1 = np.zeros((basis.P, K + 1))
    s2 = np.zeros((basis.P, K + 1))
    done = 0
    while done < M:
        n = min(block, M - done)
        xi = rng.uniform(-1.0, 1.0, (n, basis.d))
        psi = basis_matrix(basis, xi)
        z = xi @ spec.t
        powers = z[:, None] ** np.arange(K + 1)
        s1 += psi.T @ powers
        s2 += (psi ** 2).T @ (powers ** 2)
        done += n
    mean = s1 / M
    se = np.sqrt(np.maximum(s2 / M - mean ** 2, 0.0) / max(M - 1, 1))
    # the k = 0 column is E[psi_j] = [j == 0] by orthonormality; use it exactly
    mean[:, 0] = 0.0
    mean[0, 0] = 1.0
    se[:, 0] = 0.0
    return mean, se


def _scale(spec):
    k = np.arange(spec.K + 1)
    return 1.0 / (np.array([math.factorial(int(i)) for i in k]) * abs(spec.Tc_bar) ** k)


def taylor_bound(spec: TaylorBoundSpec, basis: OrderedBasis, rng_seed=0) -> np.ndarray:
    """Monte Carlo estimate of the dimensional bound (leading constant omitted)."""
    mean, _ = taylor_moments_mc(spec, basis, rng_seed)
    return np.abs(mean) @ _scale(spec)


def _moment_table(qmax: int, kmax: int) -> np.ndarray:
    # m[a, b] = E[psi_a(x) x^b] for x ~ U[-1, 1], exact by Gauss quadrature
    n = (qmax + kmax) // 2 + 2
    x, w = np.polynomial.legendre.leggauss(n)
    w = 0.5 * w
    L = legendre_table(qmax, x)
    return (L * w[:, None]).T @ (x[:, None] ** np.arange(kmax + 1))


def taylor_moments_exact(spec: TaylorBoundSpec, basis: OrderedBasis) -> np.ndarray:
    """Exact ``E[psi_j (t . xi)^k]`` by multinomial expansion, shape ``(P, K+1)``.

    Cost grows like ``C(d + K - 1, K)`` per order; intended for moderate ``d``.
    """
    _check_dims(spec, basis)
    d, K = basis.d, spec.K
    A = basis.indices
    qmax = int(A.max()) if A.size else 0
    mom = _moment_table(qmax, K)
    out = np.zeros((basis.P, K + 1))
    out[:, 0] = np.all(A == 0, axis=1).astype(float)
    t = spec.t
    for k in range(1, K + 1):
        for combo in combinations_with_replacement(range(d), k):
            beta = np.bincount(combo, minlength=d)
            coef = math.factorial(k) / np.prod([math.factorial(int(b)) for b in beta])
            coef *= np.prod(t ** beta)
            if coef == 0:
                continue
            # E[psi_alpha xi^beta] factorizes over dimensions
            out[:, k] += coef * np.prod(mom[A, beta[None, :]], axis=1)
    return out


def taylor_bound_exact(spec: TaylorBoundSpec, basis: OrderedBasis) -> np.ndarray:
    return np.abs(taylor_moments_exact(spec, basis)) @ _scale(spec)


def save_bound_csv(path, bound) -> None:
    """Rows ``j, |bound_j|`` for scatter plots of bound versus index."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["j", "bound"])
        for j, b in enumerate(np.abs(np.asarray(bound, dtype=float))):
            wr.writerow([j, repr(float(b))])


def misrank(bound, fraction: float, rng) -> np.ndarray:
    """Shuffle the values of a random ``fraction`` of entries among themselves.

    Produces bounds that point at the wrong basis functions while keeping the
    overall magnitude profile.
    """
    b = np.array(bound, dtype=float)
    n = int(round(fraction * b.size))
    if n < 2:
        return b
    idx = rng.choice(b.size, n, replace=False)
    b[idx] = b[rng.permutation(idx)]
    return b
