"""Multivariate orthonormal Legendre polynomial chaos bases.

A basis function is identified by a multi-index ``alpha`` (a tuple of
non-negative exponents, one per stochastic dimension) and equals the product
of univariate Legendre polynomials normalised so that
``E[psi_j psi_k] = delta_jk`` for ``xi`` uniform on ``[-1, 1]^d``.

Ordering of a total-degree basis
--------------------------------
Indices are graded by total degree ``|alpha|``. Inside one degree block the
comparator is

    key(alpha) = (last_nonzero(alpha), tuple(-a for a in alpha))

i.e. indices that only activate the leading coordinates come first, and ties
are broken by descending lexicographic order of the exponents. For ``d=2``
this gives ``00, 10, 01, 20, 11, 02``. Truncating the graded list to the first
``P_keep`` entries therefore keeps the low-order interactions of the leading
(most energetic) dimensions.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

CLAMP_TOL = 1e-12

# Largest cardinality we hand out; beyond this int64 index arithmetic breaks.
_MAX_CARDINALITY = np.iinfo(np.int64).max


def basis_cardinality(d: int, q: int) -> int:
    """Number of ``d``-variate polynomials of total degree at most ``q``.

    Evaluates ``(d+q)! / (d! q!)`` as a running product, so no factorial is
    ever formed. Raises ``OverflowError`` when the count does not fit in a
    signed 64-bit integer.
    """
    d, q = int(d), int(q)
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if q < 0:
        raise ValueError(f"degree must be >= 0, got {q}")
    k = min(d, q)
    n = d + q
    p = 1
    for i in range(1, k + 1):
        p = p * (n - k + i) // i
        if p > _MAX_CARDINALITY:
            raise OverflowError(f"basis cardinality for d={d}, q={q} exceeds int64")
    return p


def total_degree(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def multi_factorial(alpha: Sequence[int]) -> int:
    """``alpha! = prod_k alpha_k!``."""
    out = 1
    for a in alpha:
        out *= math.factorial(int(a))
    return out


def _last_nonzero(alpha: Sequence[int]) -> int:
    for k in range(len(alpha) - 1, -1, -1):
        if alpha[k]:
            return k
    return -1


def ordering_key(alpha: Sequence[int]) -> tuple:
    """Sort key reproducing the graded order used by :func:`build_basis`."""
    return (total_degree(alpha), _last_nonzero(alpha), tuple(-int(a) for a in alpha))


def _prefixes_desc(length: int, max_sum: int) -> Iterator[tuple]:
    # all tuples of `length` non-negative ints with sum <= max_sum, descending lex
    if length == 0:
        yield ()
        return
    for a in range(max_sum, -1, -1):
        for rest in _prefixes_desc(length - 1, max_sum - a):
            yield (a,) + rest


def _iter_graded(d: int, q: int) -> Iterator[tuple]:
    yield (0,) * d
    for t in range(1, q + 1):
        for m in range(d):
            tail = (0,) * (d - m - 1)
            for prefix in _prefixes_desc(m, t - 1):
                yield prefix + (t - sum(prefix),) + tail


@dataclass(frozen=True)
class OrderedBasis:
    """Truncated total-degree Legendre basis in graded order.

    ``indices`` is an integer array of shape ``(P, d)``; row ``j`` is the
    multi-index of basis function ``j`` (0-based, row 0 is the constant).
    """

    d: int
    q: int
    indices: np.ndarray = field(repr=False)
    P_keep: int | None = None

    @property
    def P(self) -> int:
        return self.indices.shape[0]

    def __len__(self) -> int:
        return self.P

    def degrees(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    def position(self, alpha: Sequence[int]) -> int:
        """Row of ``alpha`` in the basis; ``ValueError`` when absent."""
        alpha = np.asarray(alpha, dtype=int)
        hits = np.flatnonzero((self.indices == alpha).all(axis=1))
        if hits.size == 0:
            raise ValueError(f"multi-index {tuple(alpha)} not in basis")
        return int(hits[0])

    def to_spec(self) -> dict:
        return {"d": self.d, "q": self.q, "P_keep": self.P_keep}

    @classmethod
    def from_spec(cls, spec: dict) -> "OrderedBasis":
        return build_basis(spec["d"], spec["q"], spec.get("P_keep"))

    def save_spec(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_spec(), fh)

    def to_csv(self, path) -> None:
        """One row per multi-index: ``j, degree, a1, ..., ad``."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["j", "degree"] + [f"a{k + 1}" for k in range(self.d)])
            for j, alpha in enumerate(self.indices):
                wr.writerow([j, int(alpha.sum())] + [int(a) for a in alpha])


def read_basis_csv(path) -> np.ndarray:
    """Read the multi-index table written by :meth:`OrderedBasis.to_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[int(v) for v in row[2:]] for row in rows[1:]], dtype=int)


def build_basis(d: int, q: int, P_keep: int | None = None) -> OrderedBasis:
    """Total-degree-``q`` basis in ``d`` variables, optionally truncated.

    >>> build_basis(2, 1).indices.tolist()
    [[0, 0], [1, 0], [0, 1]]
    """
    full = basis_cardinality(d, q)
    if P_keep is not None:
        P_keep = int(P_keep)
        if P_keep < 1:
            raise ValueError("P_keep must be positive")
        if P_keep > full:
            raise ValueError(f"P_keep={P_keep} exceeds basis cardinality {full} for d={d}, q={q}")
    count = full if P_keep is None else P_keep
    out = np.empty((count, d), dtype=int)
    for j, alpha in enumerate(_iter_graded(d, q)):
        if j == count:
            break
        out[j] = alpha
    out.setflags(write=False)
    return OrderedBasis(d=d, q=q, indices=out, P_keep=P_keep)


def _check_points(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if np.any(np.abs(xi) > 1.0 + CLAMP_TOL):
        raise ValueError("sample points must lie in [-1, 1]")
    return np.clip(xi, -1.0, 1.0)


def legendre_table(q: int, xi) -> np.ndarray:
    """Orthonormal Legendre values of degrees ``0..q`` at ``xi``.

    Returns an array of shape ``xi.shape + (q + 1,)``. Uses the three-term
    recurrence ``(k+1) L_{k+1} = (2k+1) x L_k - k L_{k-1}`` and rescales by
    ``sqrt(2k+1)``.
    """
    if q < 0:
        raise ValueError("degree must be >= 0")
    x = _check_points(xi)
    out = np.empty(x.shape + (q + 1,))
    out[..., 0] = 1.0
    if q >= 1:
        out[..., 1] = x
    for k in range(1, q):
        out[..., k + 1] = ((2 * k + 1) * x * out[..., k] - k * out[..., k - 1]) / (k + 1)
    out *= np.sqrt(2.0 * np.arange(q + 1) + 1.0)
    return out


def eval_legendre_1d(k: int, xi):
    """``sqrt(2k+1) L_k(xi)``, orthonormal under the density 1/2 on [-1, 1]."""
    k = int(k)
    if k < 0:
        raise ValueError(f"degree must be >= 0, got {k}")
    vals = legendre_table(k, xi)[..., k]
    return float(vals) if np.ndim(vals) == 0 else vals


def eval_basis(alpha: Sequence[int], xi) -> float:
    """Product ``prod_k psi_{alpha_k}(xi_k)`` at a single point."""
    alpha = [int(a) for a in alpha]
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.ndim != 1 or len(alpha) != xi.size:
        raise ValueError(f"multi-index has length {len(alpha)} but point has {xi.size} coordinates")
    out = 1.0
    for a, x in zip(alpha, xi):
        if a:
            out *= eval_legendre_1d(a, x)
    return float(out)


def inf_norm(alpha: Sequence[int]) -> float:
    """``sup |psi_alpha| = prod_k sqrt(2 alpha_k + 1)``, attained at ``xi = 1``."""
    return float(np.prod(np.sqrt(2.0 * np.asarray(alpha, dtype=float) + 1.0)))


def basis_matrix(basis: OrderedBasis, xi_samples) -> np.ndarray:
    """Evaluate every basis function at every sample: shape ``(N, P)``."""
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    if xi.shape[1] != basis.d:
        raise ValueError(f"samples have {xi.shape[1]} columns, basis has d={basis.d}")
    idx = basis.indices
    qmax = int(idx.max()) if idx.size else 0
    table = legendre_table(qmax, xi)  # (N, d, qmax+1)
    psi = np.ones((xi.shape[0], basis.P))
    for k in range(basis.d):
        col = idx[:, k]
        active = np.flatnonzero(col)
        if active.size:
            psi[:, active] *= table[:, k, col[active]]
    return psi


@dataclass(frozen=True)
class MeasurementSet:
    """Samples ``xi`` (N x d), measurement matrix ``psi`` (N x P), data ``u`` (N,)."""

    xi: np.ndarray
    psi: np.ndarray
    u: np.ndarray

    @property
    def N(self) -> int:
        return self.psi.shape[0]

    @property
    def P(self) -> int:
        return self.psi.shape[1]

    def subset(self, rows) -> "MeasurementSet":
        rows = np.asarray(rows)
        return MeasurementSet(self.xi[rows], self.psi[rows], self.u[rows])


def assemble(basis: OrderedBasis, xi_samples, u_values) -> MeasurementSet:
    """Build ``Psi[i, j] = psi_j(xi_i)`` and pair it with the data vector."""
    xi = np.asarray(xi_samples, dtype=float)
    u = np.asarray(u_values, dtype=float).ravel()
    if xi.ndim == 1:
        xi = xi.reshape(-1, basis.d)
    if xi.shape[0] == 0:
        raise ValueError("empty measurement set")
    if xi.shape[0] != u.size:
        raise ValueError(f"{xi.shape[0]} samples but {u.size} data values")
    xi = _check_points(xi)
    psi = basis_matrix(basis, xi)
    for a in (xi, psi, u):
        a.setflags(write=False)
    return MeasurementSet(xi=xi, psi=psi, u=u)


def from_matrix(psi, u) -> MeasurementSet:
    """Wrap an arbitrary measurement matrix (no sample points attached)."""
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    u = np.asarray(u, dtype=float).ravel()
    if psi.shape[0] == 0:
        raise ValueError("empty measurement set")
    if psi.shape[0] != u.size:
        raise ValueError(f"matrix has {psi.shape[0]} rows but u has {u.size} entries")
    return MeasurementSet(xi=np.empty((psi.shape[0], 0)), psi=psi, u=u)
