"""Brute-force recovery constants for small measurement matrices.

* ``delta_s``: restricted isometry constant, the largest deviation of the
  squared singular values of any ``s``-column submatrix from 1.
* ``beta_W``: the largest ratio ``||(W c)_C||_1 / ||(W c)_{C^c}||_1`` over
  nonzero null-space vectors ``c``; ``gamma_W = beta_W / (1 + beta_W)``.
  ``beta_W < 1`` certifies that every vector supported on ``C`` is the unique
  weighted-l1 minimizer of its own measurements.

Normalization: by default ``delta_s`` is computed for ``Psi / sqrt(N)``, which
has unit expected column norm for an orthonormal basis sampled from its
measure. ``beta_W`` only depends on the null space and is scale free.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations, product

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from .solvers import WeightVector

ENUM_LIMIT = 1_000_000
EXACT_LIMIT = 12
RANK_TOL = 1e-10


@dataclass(frozen=True)
class RicEstimate:
    s: int
    delta: float
    extremal_support: tuple
    normalize: str | None = "sqrtN"


@dataclass(frozen=True)
class NullSpaceConstants:
    beta: float
    gamma: float
    exact: bool
    note: str = ""


def _normalized(psi, normalize):
    A = np.asarray(psi, dtype=float)
    if normalize == "sqrtN":
        return A / np.sqrt(A.shape[0])
    if normalize == "columns":
        n = np.linalg.norm(A, axis=0)
        if np.any(n == 0):
            raise ValueError("zero column cannot be normalized")
        return A / n
    if normalize is None:
        return A
    raise ValueError(f"unknown normalization {normalize!r}")


def ric_bruteforce(psi, s: int, normalize: str | None = "sqrtN", chunk: int = 20000) -> RicEstimate:
    """Exact ``delta_s`` by enumerating every support of size ``s``.

    Supports of size below ``s`` need no separate pass: a Gram submatrix's
    eigenvalues interlace those of any larger one containing it.
    """
    A = _normalized(psi, normalize)
    P = A.shape[1]
    s = int(s)
    if not 1 <= s <= P:
        raise ValueError(f"s must be in 1..{P}")
    count = math.comb(P, s)
    if count > ENUM_LIMIT:
        raise ValueError(f"{count} supports exceed the enumeration limit {ENUM_LIMIT}; "
                         "use a smaller matrix or sparsity level")
    G = A.T @ A
    best, arg = -np.inf, None
    it = combinations(range(P), s)
    while True:
        idx = np.array([c for _, c in zip(range(chunk), it)], dtype=int)
        if idx.size == 0:
            break
        sub = G[idx[:, :, None], idx[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        dev = np.maximum(1.0 - ev[:, 0], ev[:, -1] - 1.0)
        k = int(np.argmax(dev))
        if dev[k] > best:
            best, arg = float(dev[k]), tuple(int(j) for j in idx[k])
    return RicEstimate(s=s, delta=max(best, 0.0), extremal_support=arg, normalize=normalize)


def null_space(psi, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal null-space basis ``(P, r)`` from the SVD with a relative cutoff."""
    A = np.asarray(psi, dtype=float)
    _, sv, Vt = linalg.svd(A, full_matrices=True)
    rank = int(np.sum(sv > tol * (sv[0] if sv.size else 0.0)))
    return Vt[rank:].T


def _ratio(y, C, mask):
    den = np.abs(y[~mask]).sum()
    num = np.abs(y[C]).sum()
    return np.inf if den == 0 and num > 0 else num / den


def _weights(W, P):
    if W is None:
        return np.ones(P)
    w = W.w if isinstance(W, WeightVector) else np.asarray(W, dtype=float)
    if w.size != P:
        raise ValueError(f"{w.size} weights for {P} columns")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return w


def beta_gamma(psi, W=None, support=(), *, exact: bool | None = None,
               mc_samples: int = 20000, seed=0) -> NullSpaceConstants:
    """Null-space constants for support ``C`` under weights ``W``.

    Exact route (``|C| <= 12``): with the sign pattern of ``(Wc)_C`` fixed to
    ``sigma`` the problem ``max sigma^T (W Z z)_C  s.t. ||(W Z z)_{C^c}||_1 <= 1``
    is a linear program; the maximum over patterns is ``beta``. Patterns
    ``sigma`` and ``-sigma`` give the same value, so half are skipped.
    Otherwise a Monte Carlo lower bound over random null-space directions.
    """
    A = np.asarray(psi, dtype=float)
    P = A.shape[1]
    w = _weights(W, P)
    C = np.array(sorted(set(int(j) for j in support)), dtype=int)
    if C.size == 0:
        return NullSpaceConstants(0.0, 0.0, True, "empty support")
    mask = np.zeros(P, dtype=bool)
    mask[C] = True
    Z = null_space(A)
    r = Z.shape[1]
    if r == 0:
        return NullSpaceConstants(0.0, 0.0, True, "trivial null space")
    WZ = w[:, None] * Z
    if exact is None:
        exact = C.size <= EXACT_LIMIT
    if exact and C.size > EXACT_LIMIT:
        raise ValueError(f"exact enumeration limited to |C| <= {EXACT_LIMIT}")

    if not exact:
        rng = np.random.default_rng(seed)
        Y = WZ @ rng.standard_normal((r, mc_samples))
        num = np.abs(Y[C]).sum(axis=0)
        den = np.abs(Y[~mask]).sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
        beta = float(ratio.max())
        return NullSpaceConstants(beta, _gamma(beta), False, f"{mc_samples} random directions")

    # variables (z, t): z free in R^r, t >= 0 bounds |(WZ z)_j| on C^c
    B = WZ[~mask]
    m = B.shape[0]
    if m == 0 or np.allclose(B, 0.0):
        if np.any(np.abs(WZ[C]) > RANK_TOL):
            return NullSpaceConstants(np.inf, 1.0, True, "null vector vanishes off the support")
    A_ub = np.block([[B, -np.eye(m)], [-B, -np.eye(m)], [np.zeros((1, r)), np.ones((1, m))]])
    b_ub = np.concatenate([np.zeros(2 * m), [1.0]])
    bounds = [(None, None)] * r + [(0, None)] * m
    beta = 0.0
    for tail in product((1.0, -1.0), repeat=C.size - 1):
        sigma = np.array((1.0,) + tail)
        obj = -np.concatenate([sigma @ WZ[C], np.zeros(m)])
        res = linprog(obj, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status == 3:
            return NullSpaceConstants(np.inf, 1.0, True, "unbounded sign-pattern program")
        if res.status != 0:
            raise RuntimeError(f"LP for sign pattern {sigma.tolist()} failed: {res.message}")
        y = WZ @ res.x[:r]
        beta = max(beta, -res.fun, _ratio(y, C, mask))
    return NullSpaceConstants(float(beta), _gamma(beta), True, f"{2 ** (C.size - 1)} sign patterns")


def _gamma(beta):
    return 1.0 if np.isinf(beta) else float(beta / (1.0 + beta))


@dataclass
class BoundCheck:
    beta_I: float
    beta_W: float
    c_low: float
    C_high: float
    delta_2s: float
    ric_bound: float | None
    sandwich_ok: bool
    ric_ok: bool | None
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.sandwich_ok and self.ric_ok is not False

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_beta_bounds(psi, W=None, support=(), normalize: str | None = "sqrtN",
                      rel_tol: float = 1e-9) -> BoundCheck:
    """Evaluate the weighted/unweighted comparison and the RIC bound on ``beta_I``.

    With ``c = min_C w / max_{C^c} w`` and ``C = max_C w / min_{C^c} w`` the
    checks are ``c beta_I <= beta_W <= C beta_I`` and, when
    ``delta_{2|C|} < 1``, ``beta_I <= sqrt(2) delta / (1 - delta)``.
    """
    A = np.asarray(psi, dtype=float)
    P = A.shape[1]
    w = _weights(W, P)
    C = np.array(sorted(set(int(j) for j in support)), dtype=int)
    mask = np.zeros(P, dtype=bool)
    mask[C] = True
    bI = beta_gamma(A, None, C).beta
    bW = beta_gamma(A, w, C).beta
    c_low = w[C].min() / w[~mask].max()
    C_high = w[C].max() / w[~mask].min()
    slack = rel_tol * max(1.0, bI, bW)
    sandwich = (c_low * bI <= bW + slack) and (bW <= C_high * bI + slack)
    delta = ric_bruteforce(A, min(2 * C.size, P), normalize).delta
    if delta < 1:
        rb = math.sqrt(2.0) * delta / (1.0 - delta)
        ric_ok = bool(bI <= rb + slack)
    else:
        rb, ric_ok = None, None
    return BoundCheck(beta_I=bI, beta_W=bW, c_low=float(c_low), C_high=float(C_high),
                      delta_2s=delta, ric_bound=rb, sandwich_ok=bool(sandwich), ric_ok=ric_ok,
                      details={"support": C.tolist(), "normalize": normalize})


def sharpness_matrix(alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """``Psi = [[a, 0, 1], [0, a, 1]]`` and ``u = (a, a)``."""
    a = float(alpha)
    return np.array([[a, 0.0, 1.0], [0.0, a, 1.0]]), np.array([a, a])
