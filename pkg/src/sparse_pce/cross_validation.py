"""Choosing the BPDN tolerance by a reconstruction/validation split.

The rows are split once into ``N_r = floor(4N/5)`` reconstruction and
``N_v = N - N_r`` validation samples. Each candidate tolerance is used on the
reconstruction rows, the fit is scored on the validation rows, and the best
candidate ``eps*`` is rescaled to the full sample count:
``eps = sqrt(N / N_r) * eps*``. The final coefficients come from re-solving
on all ``N`` rows with ``eps``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .pc_basis import MeasurementSet
from .solvers import RecoveryResult, solve_weighted_bpdn, solve_weighted_bpdn_many

logger = logging.getLogger(__name__)

GRID_POINTS = 20
GRID_RANGE = (1e-4, 1.0)


@dataclass
class CvResult:
    epsilon_star: float
    epsilon: float
    grid: list = field(default_factory=list)  # (eps_r, validation error)
    split_seed: int = 0
    n_rec: int = 0
    n_val: int = 0
    infeasible: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "epsilon_star": float(self.epsilon_star),
            "epsilon": float(self.epsilon),
            "grid": [[float(e), float(v)] for e, v in self.grid],
            "split_seed": self.split_seed,
            "n_rec": self.n_rec,
            "n_val": self.n_val,
            "infeasible": [float(e) for e in self.infeasible],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CvResult":
        d = dict(d)
        d["grid"] = [tuple(p) for p in d["grid"]]
        return cls(**d)


def split_rows(N: int, split_seed) -> tuple[np.ndarray, np.ndarray]:
    """Random partition of ``range(N)`` into reconstruction and validation rows."""
    if N < 5:
        raise ValueError(f"need N >= 5 samples for a split, got {N}")
    n_rec = (4 * N) // 5
    perm = np.random.default_rng(split_seed).permutation(N)
    return np.sort(perm[:n_rec]), np.sort(perm[n_rec:])


def default_grid(u_rec) -> np.ndarray:
    """0 plus 20 log-spaced points over ``[1e-4, 1] * ||u_r||``."""
    un = float(np.linalg.norm(u_rec))
    return np.concatenate([[0.0], np.logspace(np.log10(GRID_RANGE[0]), np.log10(GRID_RANGE[1]),
                                              GRID_POINTS) * un])


def select_epsilon(m: MeasurementSet, W=None, grid=None, split_seed=0, *,
                   solver=None, method: str = "homotopy") -> CvResult:
    """Cross-validated tolerance.

    ``solver(m_rec, eps_list, W)`` must return one :class:`RecoveryResult` per
    tolerance; it defaults to the shared-path weighted solver. Ties in the
    validation error go to the smaller tolerance.
    """
    rec, val = split_rows(m.N, split_seed)
    m_rec, m_val = m.subset(rec), m.subset(val)
    grid = default_grid(m_rec.u) if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty tolerance grid")
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be nonnegative and sorted ascending")
    if solver is None:
        results = solve_weighted_bpdn_many(m_rec, grid, W, method=method)
    else:
        results = solver(m_rec, grid, W)

    curve, bad = [], []
    for eps_r, res in zip(grid, results):
        if res.status == "infeasible":
            bad.append(float(eps_r))
            continue
        err = float(np.linalg.norm(m_val.psi @ res.c - m_val.u))
        curve.append((float(eps_r), err))
    if not curve:
        raise RuntimeError(f"every grid tolerance is infeasible: {grid.tolist()}")
    errs = np.array([e for _, e in curve])
    best = int(np.argmin(errs))  # first minimum = smallest tolerance
    eps_star = curve[best][0]
    factor = np.sqrt(m.N / rec.size)
    return CvResult(epsilon_star=eps_star, epsilon=float(factor * eps_star), grid=curve,
                    split_seed=split_seed if isinstance(split_seed, int) else 0,
                    n_rec=int(rec.size), n_val=int(val.size), infeasible=bad)


def recover_with_cv(m: MeasurementSet, W=None, grid=None, split_seed=0, *,
                    method: str = "homotopy") -> tuple[RecoveryResult, CvResult]:
    """Select the tolerance, then solve on all rows with the corrected value."""
    cv = select_epsilon(m, W, grid, split_seed, method=method)
    res = solve_weighted_bpdn(m, cv.epsilon, W, method=method)
    return res, cv
