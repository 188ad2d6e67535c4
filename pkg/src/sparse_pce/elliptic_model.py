"""1-D stochastic diffusion problem ``-(a(x, xi) u')' = 1`` on (0, 1), ``u(0) = u(1) = 0``.

The conductivity is a truncated KL expansion of a Gaussian-kernel field,

    a(x, xi) = a_bar + sigma_a * sum_k sqrt(lambda_k) phi_k(x) xi_k,   xi_k ~ U[-1, 1],

and the quantity of interest is ``u(qoi_x, xi)``.

Discretization: conservative finite volumes on the uniform vertex grid
``x_i = i / mesh_n``. The flux through the face between nodes ``i`` and ``i+1``
uses the harmonic mean of the nodal conductivities, which keeps the flux
continuous for rough coefficients. The scheme is second order for smooth
``a``; with ``mesh_n`` even the point ``x = 0.5`` is a node.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .pc_basis import legendre_table
from .random_field import KlExpansion, gaussian_kl
from .weights import DecayModel, fit_gk, theoretical_gk


@dataclass(frozen=True)
class EllipticConfig:
    a_bar: float = 0.1
    sigma_a: float = 0.021
    d: int = 10
    l_c: float = 1.0 / 16.0
    mesh_n: int = 256
    qoi_x: float = 0.5
    n_grid: int | None = None
    # full-scale d=40 violates the worst-case positivity margin; allow
    # opting out and rely on the per-realization check instead
    require_positive_margin: bool = True

    def __post_init__(self):
        if self.mesh_n < 8:
            raise ValueError("mesh_n must be >= 8")
        if not 0.0 < self.qoi_x < 1.0:
            raise ValueError("qoi_x must lie in (0, 1)")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.a_bar <= 0 or self.sigma_a < 0:
            raise ValueError("need a_bar > 0 and sigma_a >= 0")

    def build_kl(self) -> KlExpansion:
        return gaussian_kl(self.l_c, self.d, self.n_grid)

    def a_min(self, kl: KlExpansion) -> float:
        """Worst case ``a_bar - sigma_a sum_k sqrt(lambda_k) ||phi_k||_inf`` over the cube."""
        return float(self.a_bar - self.sigma_a * np.sum(np.sqrt(kl.lambdas) * kl.sup_norms()))

    def check(self, kl: KlExpansion) -> float:
        amin = self.a_min(kl)
        if amin <= 0 and self.require_positive_margin:
            raise ValueError(
                f"worst-case conductivity {amin:.4g} is not positive; "
                "set require_positive_margin=False to rely on per-sample checks")
        return amin

    def to_dict(self) -> dict:
        return asdict(self)


def _thomas(lower, diag, upper, rhs):
    """Solve tridiagonal systems batched along axis 0. Shapes ``(B, n)``."""
    n = diag.shape[1]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[:, 0] = upper[:, 0] / diag[:, 0]
    dp[:, 0] = rhs[:, 0] / diag[:, 0]
    for i in range(1, n):
        den = diag[:, i] - lower[:, i] * cp[:, i - 1]
        if np.any(den == 0):
            raise np.linalg.LinAlgError("singular tridiagonal system")
        cp[:, i] = upper[:, i] / den
        dp[:, i] = (rhs[:, i] - lower[:, i] * dp[:, i - 1]) / den
    x = np.empty_like(rhs)
    x[:, -1] = dp[:, -1]
    for i in range(n - 2, -1, -1):
        x[:, i] = dp[:, i] - cp[:, i] * x[:, i + 1]
    return x


def solve_nodal_field(a_nodes, source: float = 1.0) -> np.ndarray:
    """Nodal solution for nodal conductivities ``a_nodes`` of shape ``(B, n+1)``.

    Returns ``(B, n+1)`` including the zero boundary values.
    """
    a = np.atleast_2d(np.asarray(a_nodes, dtype=float))
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise ValueError("conductivity realization is not strictly positive on the mesh")
    B, n1 = a.shape
    n = n1 - 1
    h = 1.0 / n
    af = 2.0 * a[:, :-1] * a[:, 1:] / (a[:, :-1] + a[:, 1:])  # (B, n)
    diag = af[:, :-1] + af[:, 1:]  # interior nodes 1..n-1
    lower = -af[:, :-1].copy()
    upper = -af[:, 1:].copy()
    rhs = np.full((B, n - 1), source * h * h)
    u = np.zeros((B, n1))
    u[:, 1:-1] = _thomas(lower, diag, upper, rhs)
    return u


class EllipticModel:
    """Forward map ``xi -> u(qoi_x, xi)`` with the KL modes cached on the mesh."""

    def __init__(self, cfg: EllipticConfig, kl: KlExpansion | None = None):
        self.cfg = cfg
        self.kl = cfg.build_kl() if kl is None else kl
        if self.kl.d != cfg.d:
            raise ValueError(f"expansion has d={self.kl.d}, config has d={cfg.d}")
        self.amin = cfg.check(self.kl)
        self.x = np.linspace(0.0, 1.0, cfg.mesh_n + 1)
        self.modes = self.kl.eigfuncs(self.x) * np.sqrt(self.kl.lambdas)  # (n+1, d)
        pos = cfg.qoi_x * cfg.mesh_n
        self._i0 = min(int(math.floor(pos)), cfg.mesh_n - 1)
        self._frac = pos - self._i0

    def field(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[1] != self.cfg.d:
            raise ValueError(f"xi has {xi.shape[1]} entries, model has d={self.cfg.d}")
        return self.cfg.a_bar + self.cfg.sigma_a * xi @ self.modes.T

    def solution(self, xi) -> np.ndarray:
        return solve_nodal_field(self.field(xi))

    def qoi(self, xi, block: int = 4096) -> np.ndarray:
        """QOI for a batch ``(B, d)`` of inputs (or a single vector)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        out = np.empty(xi.shape[0])
        for s in range(0, xi.shape[0], block):
            u = self.solution(xi[s:s + block])
            out[s:s + block] = (1 - self._frac) * u[:, self._i0] + self._frac * u[:, self._i0 + 1]
        return out


def solve_bvp(cfg: EllipticConfig, kl: KlExpansion, xi) -> float:
    """QOI for a single input vector."""
    return float(EllipticModel(cfg, kl).qoi(np.asarray(xi, dtype=float)[None, :])[0])


def one_dim_study(model: EllipticModel, k: int, q: int, n_samples: int = 1000, seed=0) -> np.ndarray:
    """Degree-``q`` Legendre coefficients of the QOI as a function of ``xi_k`` alone.

    All other inputs sit at their mean 0. ``k`` is 0-based.
    """
    if n_samples < 3 * (q + 1):
        raise ValueError(f"need at least {3 * (q + 1)} samples for degree {q}")
    if not 0 <= k < model.cfg.d:
        raise ValueError(f"dimension index {k} out of range")
    rng = np.random.default_rng(seed)
    xk = rng.uniform(-1.0, 1.0, n_samples)
    xi = np.zeros((n_samples, model.cfg.d))
    xi[:, k] = xk
    u = model.qoi(xi)
    V = legendre_table(q, xk)
    coef, _, rank, _ = np.linalg.lstsq(V, u, rcond=None)
    if rank < q + 1:
        raise np.linalg.LinAlgError(f"1-D design matrix has rank {rank} < {q + 1}")
    return coef


def fitted_decay_model(model: EllipticModel, q: int = 3, n_samples: int = 1000, seed=0,
                       C0: float = 1.0) -> DecayModel:
    """Per-dimension rates ``g_k`` fitted from 1-D studies, one per input."""
    ss = np.random.SeedSequence(seed)
    g = [fit_gk(np.arange(q + 1), one_dim_study(model, k, q, n_samples, s))
         for k, s in enumerate(ss.spawn(model.cfg.d))]
    return DecayModel(np.array(g), C0)


def theoretical_decay_model(model: EllipticModel, C0: float = 1.0) -> DecayModel:
    """Rates from ``r_k = sigma_a sqrt(lambda_k) ||phi_k||_inf / a_min``."""
    if model.amin <= 0:
        raise ValueError("theoretical rates need a positive worst-case conductivity")
    r = model.cfg.sigma_a * np.sqrt(model.kl.lambdas) * model.kl.sup_norms() / model.amin
    return DecayModel(theoretical_gk(r), C0)


def save_samples(path, xi, u, cfg, seed) -> None:
    """CSV with two ``#`` header lines (config JSON, seed) then ``xi_1..xi_d,u`` rows.

    ``cfg`` is any config object with ``to_dict`` or a plain dict.
    """
    xi = np.atleast_2d(xi)
    cfg_dict = cfg.to_dict() if hasattr(cfg, "to_dict") else dict(cfg)
    with open(path, "w", newline="") as fh:
        fh.write("# config: " + json.dumps(cfg_dict, sort_keys=True) + "\n")
        fh.write("# seed: " + json.dumps(seed) + "\n")
        wr = csv.writer(fh)
        wr.writerow([f"xi_{k + 1}" for k in range(xi.shape[1])] + ["u"])
        for row, val in zip(xi, u):
            wr.writerow([repr(float(v)) for v in row] + [repr(float(val))])


def load_samples(path):
    """Inverse of :func:`save_samples`: ``(xi, u, header)``."""
    header = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            header[key] = json.loads(val)
        else:
            body.append(line)
    rows = list(csv.reader(body))
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
    return data[:, :-1], data[:, -1], header
