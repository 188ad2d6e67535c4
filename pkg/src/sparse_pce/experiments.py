"""Replicated recovery experiments and their error statistics.

Every replication draws fresh samples from a seed derived from
``(config seed, N, replication)``, picks the tolerance by cross-validation
(unless a fixed ``epsilon`` is configured), runs the configured method, and
compares the result with reference coefficients ``c*``:

* mean:  ``|c_0 - c*_0| / |c*_0|``
* std:   ``|s - s*| / s*`` with ``s = ||c_{1:}||_2`` (orthonormal basis)
* rms:   ``||c - c*||_2 / ||c*||_2``

Reports aggregate each statistic over replications as the average plus the
10th and 90th percentiles.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cross_validation import select_epsilon
from .elliptic_model import EllipticConfig, EllipticModel, fitted_decay_model
from .pc_basis import assemble, basis_matrix, build_basis
from .random_field import exponential_kl, nu_coefficients
from .solvers import (RecoveryResult, least_squares, solve_reweighted, solve_weighted_bpdn,
                      weighted_least_squares)
from .weights import (TaylorBoundSpec, damped_weights, default_eps_w, elliptic_bound, misrank,
                      taylor_bound)

logger = logging.getLogger(__name__)

PROBLEMS = ("synthetic_sparse", "synthetic_decay", "elliptic")
METHODS = ("l1", "weighted_l1", "reweighted_l1", "wls", "ls_reference")
SOURCES = ("none", "true_coeffs", "elliptic_bound", "taylor_bound")
STATS = ("mean", "std", "rms")
QUANTILES = (10, 90)


@dataclass
class ExperimentConfig:
    problem: str = "synthetic_decay"
    d: int = 10
    q: int = 3
    P_keep: int | None = None
    N_list: list = field(default_factory=lambda: [40])
    replications: int = 20
    method: str = "l1"
    weight_source: str = "none"
    seed: int = 0
    eps_w_scale: float = 5e-5
    # synthetic problems
    decay_rate: float = 2.0
    sparsity: int = 10
    noise_std: float = 0.0
    # tolerance: "cv" or a fixed number
    epsilon: float | str = "cv"
    # weight perturbation (fraction of bound entries shuffled)
    misrank_fraction: float = 0.0
    reweight_iters: int = 4
    # elliptic problem
    mesh_n: int = 256
    sigma_a: float = 0.021
    l_c: float = 1.0 / 16.0
    gk_samples: int = 1000
    ref_factor: int = 10
    # taylor bound
    taylor_K: int = 4
    taylor_Tc_bar: float = -0.5
    taylor_sigma_T: float = 0.11
    taylor_l_c: float = 1.0 / 21.0
    taylor_mc: int = 200_000
    cache_dir: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.weight_source not in SOURCES:
            raise ValueError(f"weight_source must be one of {SOURCES}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        self.N_list = [int(n) for n in self.N_list]
        if not self.N_list or any(b <= a for a, b in zip(self.N_list, self.N_list[1:])):
            raise ValueError("N_list must be nonempty and strictly ascending")
        if self.method in ("weighted_l1", "wls") and self.weight_source == "none":
            raise ValueError(f"method {self.method} needs a weight source")
        if self.method in ("l1", "reweighted_l1", "ls_reference") and self.weight_source != "none":
            raise ValueError(f"method {self.method} takes no weight source")
        if isinstance(self.epsilon, str) and self.epsilon != "cv":
            raise ValueError("epsilon must be 'cv' or a number")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)

    def problem_key(self) -> dict:
        """Fields that determine the ground truth (not the recovery method)."""
        keys = ["problem", "d", "q", "P_keep", "seed"]
        if self.problem == "synthetic_decay":
            keys += ["decay_rate"]
        elif self.problem == "synthetic_sparse":
            keys += ["sparsity"]
        else:
            keys += ["mesh_n", "sigma_a", "l_c"]
        d = self.to_dict()
        return {k: d[k] for k in keys}


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

class Problem:
    """Sampler ``xi -> u`` with optional planted coefficients."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.basis = build_basis(cfg.d, cfg.q, cfg.P_keep)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919]))
        P = self.basis.P
        self.model = None
        self.planted = None
        if cfg.problem == "synthetic_decay":
            self.planted = synthetic_decay_coeffs(P, cfg.decay_rate, rng)
        elif cfg.problem == "synthetic_sparse":
            self.planted = synthetic_sparse_coeffs(P, cfg.sparsity, rng)
        else:
            ecfg = EllipticConfig(sigma_a=cfg.sigma_a, d=cfg.d, l_c=cfg.l_c, mesh_n=cfg.mesh_n,
                                  require_positive_margin=False)
            self.model = EllipticModel(ecfg)

    def evaluate(self, xi) -> np.ndarray:
        if self.model is not None:
            return self.model.qoi(xi)
        return basis_matrix(self.basis, xi) @ self.planted

    def draw(self, N: int, rng, noise_std: float = 0.0):
        xi = rng.uniform(-1.0, 1.0, (N, self.basis.d))
        u = self.evaluate(xi)
        e = rng.normal(0.0, noise_std, N) if noise_std > 0 else np.zeros(N)
        return assemble(self.basis, xi, u + e), e


def synthetic_decay_coeffs(P: int, r: float, rng) -> np.ndarray:
    """``c_0 = 1``; the magnitudes ``j^(-r)``, ``j = 2..P``, with random signs on a random permutation of the rest."""
    c = np.zeros(P)
    c[0] = 1.0
    if P > 1:
        pos = 1 + rng.permutation(P - 1)
        c[pos] = rng.choice([-1.0, 1.0], P - 1) * np.arange(2, P + 1, dtype=float) ** (-r)
    return c


def synthetic_sparse_coeffs(P: int, s: int, rng) -> np.ndarray:
    """``s`` standard-normal entries at random positions."""
    if not 1 <= s <= P:
        raise ValueError("sparsity must lie in 1..P")
    c = np.zeros(P)
    c[rng.choice(P, s, replace=False)] = rng.standard_normal(s)
    return c


def _cache_path(cfg: ExperimentConfig, big_N: int, seed) -> Path | None:
    if cfg.cache_dir is None:
        return None
    key = json.dumps({"problem": cfg.problem_key(), "big_N": big_N, "seed": seed}, sort_keys=True)
    h = hashlib.sha256(key.encode()).hexdigest()[:16]
    return Path(cfg.cache_dir) / f"reference_{h}.npz"


def reference_solution(cfg: ExperimentConfig, big_N: int, seed=0, problem: Problem | None = None) -> np.ndarray:
    """Least-squares coefficients from ``big_N`` fresh samples, cached on disk when ``cache_dir`` is set."""
    problem = Problem(cfg) if problem is None else problem
    P = problem.basis.P
    if big_N < 3 * P:
        raise ValueError(f"reference fit needs big_N >= 3P = {3 * P}, got {big_N}")
    path = _cache_path(cfg, big_N, seed)
    if path is not None and path.exists():
        with np.load(path) as z:
            return z["c"]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), big_N, 104729]))
    m, _ = problem.draw(big_N, rng)
    c = least_squares(m, range(P))
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, c=c)
        os.replace(tmp, path)
    return c


def truth(cfg: ExperimentConfig, problem: Problem) -> np.ndarray:
    if problem.planted is not None:
        return problem.planted
    return reference_solution(cfg, cfg.ref_factor * problem.basis.P, cfg.seed, problem)


# ---------------------------------------------------------------------------
# weight sources
# ---------------------------------------------------------------------------

class BoundSource:
    """Produces coefficient-magnitude bounds scaled to the sample mean."""

    def __init__(self, cfg: ExperimentConfig, problem: Problem, c_ref: np.ndarray):
        self.cfg = cfg
        src = cfg.weight_source
        basis = problem.basis
        if src == "true_coeffs":
            shape = np.abs(c_ref)
        elif src == "elliptic_bound":
            if problem.model is None:
                raise ValueError("elliptic bound needs the elliptic problem")
            dm = fitted_decay_model(problem.model, q=3, n_samples=cfg.gk_samples, seed=cfg.seed)
            shape = elliptic_bound(dm, basis)
        elif src == "taylor_bound":
            kl = exponential_kl(cfg.taylor_l_c, basis.d)
            t = nu_coefficients(kl, cfg.taylor_sigma_T).t
            spec = TaylorBoundSpec(t, cfg.taylor_K, cfg.taylor_Tc_bar, cfg.taylor_mc)
            shape = taylor_bound(spec, basis, cfg.seed)
        else:
            shape = None
        if shape is not None and cfg.misrank_fraction > 0:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 31337]))
            shape = misrank(shape, cfg.misrank_fraction, rng)
        self.shape = shape
        self.exact_scale = src == "true_coeffs"

    def bound(self, m) -> np.ndarray:
        if self.exact_scale:
            return self.shape
        # prefactor unknown: pin the constant term to the sample mean
        return self.shape * (abs(float(np.mean(m.u))) / self.shape[0])


# ---------------------------------------------------------------------------
# single replication
# ---------------------------------------------------------------------------

def recover(cfg: ExperimentConfig, m, source: BoundSource | None, split_seed) -> RecoveryResult:
    """Run the configured method on one measurement set."""
    method = cfg.method
    if method == "ls_reference":
        c = least_squares(m, range(m.P))
        res = float(np.linalg.norm(m.psi @ c - m.u))
        return RecoveryResult(c, res, float(np.abs(c).sum()), res, 1, True)
    if method == "wls":
        return weighted_least_squares(m, source.bound(m))

    eps_w = default_eps_w(m.u, cfg.eps_w_scale)
    W = None
    if method == "weighted_l1":
        W = damped_weights(source.bound(m), eps_w, 1.0)
    if cfg.epsilon == "cv":
        eps = select_epsilon(m, W, split_seed=split_seed).epsilon
    else:
        eps = float(cfg.epsilon)
    if method == "reweighted_l1":
        return solve_reweighted(m, eps, eps_w, cfg.reweight_iters)
    return solve_weighted_bpdn(m, eps, W)


def errors(c, c_ref) -> np.ndarray:
    """Relative errors ``(mean, std, rms)`` of ``c`` against ``c_ref``."""
    c, c_ref = np.asarray(c), np.asarray(c_ref)
    s, s_ref = np.linalg.norm(c[1:]), np.linalg.norm(c_ref[1:])
    return np.array([
        abs(c[0] - c_ref[0]) / abs(c_ref[0]),
        abs(s - s_ref) / s_ref,
        np.linalg.norm(c - c_ref) / np.linalg.norm(c_ref),
    ])


def _rep_seeds(cfg, N, rep):
    ss = np.random.SeedSequence([cfg.seed, N, rep])
    draw_ss, split_ss = ss.spawn(2)
    return np.random.default_rng(draw_ss), int(split_ss.generate_state(1)[0])


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class ErrorReport:
    method: str
    N_list: list
    raw: dict  # N -> (replications, 3) array, NaN rows for failures
    failures: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for N in self.N_list:
            E = np.asarray(self.raw[N], dtype=float)
            ok = E[~np.isnan(E).any(axis=1)]
            for k, stat in enumerate(STATS):
                if ok.shape[0] == 0:
                    mean = lo = hi = float("nan")
                else:
                    col = ok[:, k]
                    mean = float(col.mean())
                    lo, hi = (float(v) for v in np.percentile(col, QUANTILES))
                out.append({"N": int(N), "method": self.method, "stat": stat,
                            "mean": mean, "lo": lo, "hi": hi})
        return out

    def stat(self, name: str, N: int) -> np.ndarray:
        """Per-replication values of one statistic (NaN for failures)."""
        return np.asarray(self.raw[N], dtype=float)[:, STATS.index(name)]

    def mean(self, name: str, N: int) -> float:
        return float(np.nanmean(self.stat(name, N)))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "N_list": [int(n) for n in self.N_list],
            "raw": {str(N): [[None if np.isnan(v) else float(v) for v in row]
                             for row in np.asarray(self.raw[N], dtype=float)] for N in self.N_list},
            "failures": {str(N): int(self.failures.get(N, 0)) for N in self.N_list},
            "config": self.config,
            "rows": self.rows(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorReport":
        N_list = [int(n) for n in d["N_list"]]
        raw = {int(N): np.array([[np.nan if v is None else v for v in row] for row in rows],
                                dtype=float).reshape(-1, len(STATS))
               for N, rows in d["raw"].items()}
        failures = {int(N): int(v) for N, v in d.get("failures", {}).items()}
        return cls(d["method"], N_list, raw, failures, d.get("config", {}))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ErrorReport):
            return NotImplemented
        return (self.method == other.method and self.N_list == other.N_list
                and all(np.array_equal(np.asarray(self.raw[N]), np.asarray(other.raw[N]), equal_nan=True)
                        for N in self.N_list)
                and {N: self.failures.get(N, 0) for N in self.N_list}
                == {N: other.failures.get(N, 0) for N in other.N_list}
                and self.config == other.config)


def run_experiment(cfg: ExperimentConfig, *, problem: Problem | None = None,
                   c_ref: np.ndarray | None = None) -> ErrorReport:
    """All replications for every ``N`` in the config."""
    problem = Problem(cfg) if problem is None else problem
    c_ref = truth(cfg, problem) if c_ref is None else c_ref
    source = BoundSource(cfg, problem, c_ref) if cfg.weight_source != "none" else None
    raw, failures = {}, {}
    for N in cfg.N_list:
        E = np.full((cfg.replications, len(STATS)), np.nan)
        nfail = 0
        for rep in range(cfg.replications):
            rng, split_seed = _rep_seeds(cfg, N, rep)
            try:
                m, _ = problem.draw(N, rng, cfg.noise_std)
                res = recover(cfg, m, source, split_seed)
                E[rep] = errors(res.c, c_ref)
            except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                nfail += 1
                logger.warning("N=%d rep=%d failed: %s", N, rep, exc)
        raw[N], failures[N] = E, nfail
    return ErrorReport(cfg.method, list(cfg.N_list), raw, failures, cfg.to_dict())


def emit(report: ErrorReport | list, path, fmt: str = "csv") -> None:
    """Write one report (or several) as CSV rows ``N, method, stat, mean, lo, hi`` or JSON."""
    reports = report if isinstance(report, list) else [report]
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["N", "method", "stat", "mean", "lo", "hi"])
                for rep in reports:
                    for row in rep.rows():
                        wr.writerow([row["N"], row["method"], row["stat"]]
                                    + [format(row[k], ".17g") for k in ("mean", "lo", "hi")])
        elif fmt == "json":
            data = [r.to_dict() for r in reports]
            with open(path, "w") as fh:
                json.dump(data if isinstance(report, list) else data[0], fh, indent=1)
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def load_report(path):
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, list):
        return [ErrorReport.from_dict(d) for d in data]
    return ErrorReport.from_dict(data)
