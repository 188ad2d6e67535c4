"""Karhunen-Loeve expansions of 1-D stationary random fields on ``[0, 1]``.

Two kernels are supported:

* ``exp(-|y1 - y2| / l_c)`` with closed-form eigenpairs. On the symmetric
  interval ``[-1/2, 1/2]`` the eigenfunctions alternate

      phi_i(s) = cos(w_i s) / sqrt(0.5 + sin(w_i) / (2 w_i))    (i odd)
      phi_i(s) = sin(w_i s) / sqrt(0.5 - sin(w_i) / (2 w_i))    (i even)

  with ``lambda_i = 2 l_c / (l_c^2 w_i^2 + 1)``. The frequencies solve
  ``w + (1/l_c) tan(w/2) = 0`` on the sine branch and
  ``1/l_c - w tan(w/2) = 0`` on the cosine branch; root ``i`` lies in
  ``((i-1) pi, i pi)``. The wall coordinate ``y`` in ``[0, 1]`` is mapped to
  ``s = y - 1/2`` before evaluation.

* ``exp(-(x1 - x2)^2 / l_c^2)`` discretized by the Nystrom method on
  Gauss-Legendre nodes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

EIG_CLIP = 1e-14


def gauss_legendre_01(n: int):
    """``n``-point Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class KlExpansion:
    """Leading ``d`` eigenpairs of a covariance kernel on ``[0, 1]``.

    Eigenfunctions are evaluated through :meth:`eigfuncs`; everything stored is
    read-only so instances can be shared freely.
    """

    kernel: str
    l_c: float
    lambdas: np.ndarray
    omegas: np.ndarray | None = field(default=None, repr=False)
    # Nystrom data (gaussian kernel only)
    nodes: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)
    vectors: np.ndarray | None = field(default=None, repr=False)
    domain: tuple = (0.0, 1.0)

    @property
    def d(self) -> int:
        return self.lambdas.size

    def kernel_fn(self, x1, x2):
        diff = np.subtract.outer(np.asarray(x1, float), np.asarray(x2, float))
        if self.kernel == "gaussian":
            return np.exp(-(diff / self.l_c) ** 2)
        return np.exp(-np.abs(diff) / self.l_c)

    def eigfuncs(self, x) -> np.ndarray:
        """Values ``phi_k(x)``; shape ``x.shape + (d,)``."""
        x = np.asarray(x, dtype=float)
        if self.kernel == "exponential":
            return _exp_eigfuncs(self.omegas, x - 0.5)
        K = self.kernel_fn(x, self.nodes)
        return (K * self.weights) @ self.vectors / self.lambdas

    def sup_norms(self, n: int = 4001) -> np.ndarray:
        """``max |phi_k|`` over a uniform grid on the domain, endpoints included."""
        return np.abs(self.eigfuncs(np.linspace(0.0, 1.0, n))).max(axis=0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["k", "lambda"])
            for k, lam in enumerate(self.lambdas, start=1):
                wr.writerow([k, repr(float(lam))])

    def eigfunc_table(self, x, path) -> None:
        """Write ``x, phi_1(x), ..., phi_d(x)`` rows for a user grid."""
        x = np.asarray(x, dtype=float).ravel()
        vals = self.eigfuncs(x)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x"] + [f"phi_{k + 1}" for k in range(self.d)])
            for xi, row in zip(x, vals):
                wr.writerow([repr(float(xi))] + [repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# exponential kernel
# ---------------------------------------------------------------------------

def _is_cos(i: int) -> bool:
    # 1-based: odd i carry cosines
    return i % 2 == 1


def branch_residual(omega: float, i: int, l_c: float) -> float:
    """Residual of the frequency equation that root ``i`` (1-based) must satisfy."""
    t = np.tan(0.5 * omega)
    if _is_cos(i):
        return float(1.0 / l_c - omega * t)
    return float(omega + t / l_c)


def _root(i: int, l_c: float) -> float:
    c = 1.0 / l_c
    lo, hi = (i - 1) * np.pi, i * np.pi
    # multiplied through by cos(w/2) so the bracket has no poles
    if _is_cos(i):
        f = lambda w: c * np.cos(0.5 * w) - w * np.sin(0.5 * w)
    else:
        f = lambda w: w * np.cos(0.5 * w) + c * np.sin(0.5 * w)
    a, b = lo + 1e-14 * hi, hi - 1e-14 * hi
    fa, fb = f(a), f(b)
    if not fa * fb < 0:
        branch = "cosine" if _is_cos(i) else "sine"
        raise RuntimeError(f"no sign change for root {i} on the {branch} branch in ({lo:g}, {hi:g})")
    w = optimize.brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    # one Newton step on the tangent form tightens the published residual
    t = np.tan(0.5 * w)
    sec2 = 1.0 + t * t
    if _is_cos(i):
        g, dg = c - w * t, -t - 0.5 * w * sec2
    else:
        g, dg = w + c * t, 1.0 + 0.5 * c * sec2
    w_new = w - g / dg
    if lo < w_new < hi and abs(branch_residual(w_new, i, l_c)) <= abs(g):
        w = w_new
    return float(w)


def exponential_lambda(omega, l_c):
    omega = np.asarray(omega, dtype=float)
    return 2.0 * l_c / (l_c * l_c * omega * omega + 1.0)


def _norm_consts(omegas):
    i = np.arange(1, omegas.size + 1)
    sgn = np.where(i % 2 == 1, 1.0, -1.0)
    return np.sqrt(0.5 + sgn * np.sin(omegas) / (2.0 * omegas))


def _exp_eigfuncs(omegas, s):
    s = np.asarray(s, dtype=float)[..., None]
    i = np.arange(1, omegas.size + 1)
    arg = omegas * s
    vals = np.where(i % 2 == 1, np.cos(arg), np.sin(arg))
    return vals / _norm_consts(omegas)


def exponential_kl(l_c: float, d: int) -> KlExpansion:
    """Analytic KL of the exponential kernel on ``[0, 1]``."""
    if not l_c > 0:
        raise ValueError("correlation length must be positive")
    if d < 1:
        raise ValueError("d must be >= 1")
    omegas = np.array([_root(i, l_c) for i in range(1, d + 1)])
    lambdas = exponential_lambda(omegas, l_c)
    for a in (omegas, lambdas):
        a.setflags(write=False)
    return KlExpansion("exponential", float(l_c), lambdas, omegas=omegas)


# ---------------------------------------------------------------------------
# gaussian kernel
# ---------------------------------------------------------------------------

def gaussian_kl(l_c: float, d: int, n_grid: int | None = None) -> KlExpansion:
    """Nystrom KL of ``exp(-(x1-x2)^2/l_c^2)`` on ``[0, 1]``.

    ``n_grid`` defaults to ``8 d`` Gauss-Legendre nodes.
    """
    if not l_c > 0:
        raise ValueError("correlation length must be positive")
    if d < 1:
        raise ValueError("d must be >= 1")
    n_grid = 8 * d if n_grid is None else int(n_grid)
    if n_grid < 4 * d:
        raise ValueError(f"n_grid={n_grid} must be at least 4*d={4 * d}")
    x, w = gauss_legendre_01(n_grid)
    sw = np.sqrt(w)
    K = np.exp(-(np.subtract.outer(x, x) / l_c) ** 2)
    B = sw[:, None] * K * sw[None, :]
    vals, vecs = np.linalg.eigh(B)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vals = np.where(vals < EIG_CLIP, np.where(vals > -EIG_CLIP, 0.0, vals), vals)
    n_pos = int(np.sum(vals > 0))
    if d > n_pos:
        raise ValueError(f"requested d={d} but only {n_pos} numerically positive eigenvalues")
    lambdas = vals[:d].copy()
    nodal = vecs[:, :d] / sw[:, None]  # phi_k at the nodes, unit L2 norm
    # fix signs: first clearly nonzero nodal value positive
    for k in range(d):
        col = nodal[:, k]
        first = np.flatnonzero(np.abs(col) > 1e-8 * np.abs(col).max())[0]
        if col[first] < 0:
            nodal[:, k] = -col
    for a in (lambdas, nodal, x, w):
        a.setflags(write=False)
    return KlExpansion("gaussian", float(l_c), lambdas, nodes=x, weights=w, vectors=nodal)


def gram_matrix(kl: KlExpansion, n_quad: int = 400) -> np.ndarray:
    """Quadrature estimate of ``int_0^1 phi_j phi_k dx``."""
    x, w = gauss_legendre_01(n_quad)
    phi = kl.eigfuncs(x)
    return (phi * w[:, None]).T @ phi


# ---------------------------------------------------------------------------
# field evaluation
# ---------------------------------------------------------------------------

def eval_field(kl: KlExpansion, mean: float, sigma: float, x, xi):
    """``mean + sigma * sum_k sqrt(lambda_k) phi_k(x) xi_k``.

    ``x`` may be a scalar or grid; ``xi`` a single ``d``-vector or an
    ``(n, d)`` batch. Output shape is ``xi.shape[:-1] + x.shape``.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != kl.d:
        raise ValueError(f"xi has {xi.shape[-1]} entries, expansion has d={kl.d}")
    modes = kl.eigfuncs(x) * np.sqrt(kl.lambdas)  # x.shape + (d,)
    return mean + sigma * np.tensordot(xi, np.moveaxis(modes, -1, 0), axes=(-1, 0))


@dataclass(frozen=True)
class NuCoefficients:
    """Modes ``nu_i(y) = sigma_T sqrt(lambda_i) phi_i(y - 1/2)`` and ``t_i = int_0^1 nu_i``."""

    kl: KlExpansion
    sigma_T: float
    t: np.ndarray

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.sigma_T * np.sqrt(self.kl.lambdas) * self.kl.eigfuncs(y)


def nu_coefficients(kl: KlExpansion, sigma_T: float, n_quad: int = 256) -> NuCoefficients:
    """Wall-temperature modes and their integrals over ``[0, 1]``.

    Uses Gauss-Legendre quadrature. Sine modes are odd about ``y = 1/2`` and
    integrate to zero.
    """
    if kl.kernel != "exponential":
        raise ValueError("nu coefficients are defined for the exponential kernel")
    y, w = gauss_legendre_01(n_quad)
    t = w @ (sigma_T * np.sqrt(kl.lambdas) * kl.eigfuncs(y))
    t.setflags(write=False)
    return NuCoefficients(kl, float(sigma_T), t)
