"""l1-constrained recovery of PC coefficients.

All solvers target basis pursuit denoising

    min ||W c||_1   subject to   ||Psi c - u||_2 <= eps

with ``W = I`` for the standard problem. Weighted problems are mapped onto the
unweighted one through ``Psi -> Psi W^{-1}``, ``c = W^{-1} c~``.

Two interchangeable routes compute the unweighted problem:

``method="homotopy"`` (default)
    Follows the piecewise-linear LASSO path ``c(lam)`` from ``lam = ||Psi^T u||_inf``
    downwards. The residual norm decreases monotonically along the path, so the
    segment that crosses ``||r|| = eps`` is found by scanning and the crossing
    point is a root of a scalar quadratic. Exact up to round-off.

``method="spg"``
    Root-finding on the Pareto curve ``phi(tau) = min{||Psi c - u||: ||c||_1 <= tau}``
    with Newton updates ``tau += ||r|| (||r|| - eps) / ||Psi^T r||_inf`` and a
    spectral projected-gradient LASSO solver for each ``tau``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .pc_basis import MeasurementSet

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-6
OPT_TOL = 1e-6

PROVENANCES = ("uniform", "prior_bound", "iterate")


@dataclass(frozen=True)
class WeightVector:
    """Strictly positive diagonal of ``W`` plus where it came from."""

    w: np.ndarray
    provenance: str = "uniform"

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("empty weight vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, P: int) -> "WeightVector":
        return cls(np.ones(P), "uniform")

    def __len__(self):
        return self.w.size


@dataclass
class RecoveryResult:
    c: np.ndarray
    residual: float
    objective: float
    epsilon_used: float
    iterations: int
    converged: bool
    status: str = "optimal"
    lam: float = field(default=0.0, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c"] = [float(v) for v in self.c]
        for k in ("residual", "objective", "epsilon_used", "lam"):
            d[k] = float(d[k])
        d["iterations"] = int(d["iterations"])
        d["converged"] = bool(d["converged"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RecoveryResult":
        d = dict(d)
        d["c"] = np.asarray(d["c"], dtype=float)
        return cls(**d)


# ---------------------------------------------------------------------------
# homotopy path
# ---------------------------------------------------------------------------

class _Chol:
    """Cholesky factor of ``A_S^T A_S`` grown one column at a time."""

    def __init__(self, A):
        self.A = A
        self.S: list[int] = []
        self.L = np.zeros((0, 0))

    def add(self, j) -> bool:
        a = self.A[:, j]
        if not self.S:
            g = a @ a
            if g <= 0:
                return False
            self.L = np.array([[np.sqrt(g)]])
            self.S.append(j)
            return True
        b = self.A[:, self.S].T @ a
        ell = linalg.solve_triangular(self.L, b, lower=True, check_finite=False)
        piv = a @ a - ell @ ell
        if piv <= 1e-12 * (a @ a):
            return False
        k = len(self.S)
        L = np.zeros((k + 1, k + 1))
        L[:k, :k] = self.L
        L[k, :k] = ell
        L[k, k] = np.sqrt(piv)
        self.L = L
        self.S.append(j)
        return True

    def remove(self, j):
        self.S.remove(j)
        if self.S:
            AS = self.A[:, self.S]
            self.L = linalg.cholesky(AS.T @ AS, lower=True, check_finite=False)
        else:
            self.L = np.zeros((0, 0))

    def solve(self, rhs):
        y = linalg.solve_triangular(self.L, rhs, lower=True, check_finite=False)
        return linalg.solve_triangular(self.L.T, y, lower=False, check_finite=False)


def _min_residual(A, b):
    x, *_ = linalg.lstsq(A, b, check_finite=False)
    return x, float(np.linalg.norm(b - A @ x))


def homotopy_path(A, b, sigmas, max_steps=None):
    """Solve unweighted BPDN for several tolerances along one LASSO path.

    Parameters
    ----------
    A : (N, P) array
    b : (N,) array
    sigmas : sequence of float
        Tolerances, any order. Each must be at least the least-squares
        residual of ``A x = b`` (callers check this).

    Returns
    -------
    list of (x, lam, steps, status) in the order of ``sigmas``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    N, P = A.shape
    sig = np.asarray(sigmas, dtype=float)
    order = np.argsort(-sig, kind="stable")
    out = [None] * sig.size
    max_steps = 8 * P + 10 if max_steps is None else max_steps

    bnorm = np.linalg.norm(b)
    pos = 0
    while pos < sig.size and sig[order[pos]] >= bnorm:
        out[order[pos]] = (np.zeros(P), 0.0, 0, "optimal")
        pos += 1
    if pos == sig.size:
        return out

    c = A.T @ b
    lam = float(np.max(np.abs(c)))
    chol = _Chol(A)
    excluded = np.zeros(P, dtype=bool)
    j0 = int(np.argmax(np.abs(c)))
    if not chol.add(j0):
        excluded[j0] = True
    signs = {j0: np.sign(c[j0])}
    steps = 0
    xS = np.zeros(0)

    while pos < sig.size:
        S = chol.S
        s = np.array([signs[j] for j in S])
        AS = A[:, S]
        xS = chol.solve(AS.T @ b - lam * s) if S else np.zeros(0)
        d = chol.solve(s) if S else np.zeros(0)
        r = b - AS @ xS
        uvec = AS @ d
        corr = A.T @ r
        v = A.T @ uvec

        # next breakpoint; a join counts only while the correlation moves
        # outward, a drop only while the coefficient moves toward zero
        gamma, event, who = lam, "end", -1
        inactive = np.ones(P, dtype=bool)
        inactive[S] = False
        inactive &= ~excluded
        if len(S) < N:
            with np.errstate(divide="ignore", invalid="ignore"):
                g1 = np.where(inactive & (1.0 - v > 0), (lam - corr) / (1.0 - v), np.inf)
                g2 = np.where(inactive & (1.0 + v > 0), (lam + corr) / (1.0 + v), np.inf)
            g = np.maximum(np.minimum(g1, g2), 0.0)
            j = int(np.argmin(g))
            if g[j] < gamma * (1 - 1e-12):
                gamma, event, who = float(g[j]), "add", j
        if S:
            shrinking = s * d < 0
            with np.errstate(divide="ignore", invalid="ignore"):
                gz = np.where(shrinking, np.maximum(-xS / d, 0.0), np.inf)
            k = int(np.argmin(gz))
            if gz[k] < gamma:
                gamma, event, who = float(gz[k]), "drop", S[k]

        # tolerances reached inside (0, gamma]
        rr, ru, uu = r @ r, r @ uvec, uvec @ uvec
        end_norm2 = rr - 2 * gamma * ru + gamma * gamma * uu
        while pos < sig.size:
            target = sig[order[pos]]
            if end_norm2 > target * target and not (event == "end" and target == 0.0):
                break
            disc = max(ru * ru - uu * (rr - target * target), 0.0)
            if uu > 0:
                gstar = (ru - np.sqrt(disc)) / uu
            else:
                gstar = gamma
            gstar = min(max(gstar, 0.0), gamma)
            x = np.zeros(P)
            x[S] = xS + gstar * d
            out[order[pos]] = (x, max(lam - gstar, 0.0), steps, "optimal")
            pos += 1
        if pos == sig.size:
            break
        if event == "end":
            # lam -> 0 without meeting remaining tolerances: numerically at the
            # least-squares limit, return it for the rest.
            x = np.zeros(P)
            x[S] = xS + gamma * d
            while pos < sig.size:
                out[order[pos]] = (x.copy(), 0.0, steps, "optimal")
                pos += 1
            break

        lam -= gamma
        steps += 1
        if event == "add":
            if chol.add(who):
                signs[who] = np.sign(corr[who] - gamma * v[who])
            else:
                excluded[who] = True
        else:
            chol.remove(who)
            signs.pop(who)
        if steps >= max_steps:
            x = np.zeros(P)
            x[chol.S] = chol.solve(A[:, chol.S].T @ b - lam * np.array([signs[j] for j in chol.S])) if chol.S else 0.0
            while pos < sig.size:
                out[order[pos]] = (x.copy(), lam, steps, "max_iter")
                pos += 1
            break
    return out


# ---------------------------------------------------------------------------
# spectral projected gradient / Pareto root-finding
# ---------------------------------------------------------------------------

def project_l1_ball(x, tau):
    """Euclidean projection of ``x`` onto ``{z : ||z||_1 <= tau}``."""
    x = np.asarray(x, dtype=float)
    if tau <= 0:
        return np.zeros_like(x)
    ax = np.abs(x)
    if ax.sum() <= tau:
        return x.copy()
    mu = np.sort(ax)[::-1]
    cs = np.cumsum(mu) - tau
    k = np.arange(1, x.size + 1)
    rho = np.flatnonzero(mu - cs / k > 0)[-1]
    theta = cs[rho] / (rho + 1)
    return np.sign(x) * np.maximum(ax - theta, 0.0)


def _spg_lasso(A, b, tau, x, gap_tol, max_iter):
    """min 0.5||Ax - b||^2 s.t. ||x||_1 <= tau by spectral projected gradient.

    Nonmonotone curvilinear search over the last 10 objective values with
    Barzilai-Borwein steps. Stops when the duality gap
    ``||r||^2 - b^T r + tau ||A^T r||_inf`` falls below ``gap_tol(||r||)``.
    """
    x = project_l1_ball(x, tau)
    r = b - A @ x
    g = -(A.T @ r)
    f = 0.5 * (r @ r)
    gi = np.max(np.abs(g))
    step = 1.0 / gi if gi > 0 else 1.0
    hist = [f]
    for it in range(1, max_iter + 1):
        gnorm = np.max(np.abs(g))
        rr = r @ r
        gap = rr - b @ r + tau * gnorm
        if gap <= gap_tol(np.sqrt(rr)):
            return x, r, it, "optimal"
        fmax = max(hist)
        alpha = 1.0
        for _ in range(30):
            xn = project_l1_ball(x - alpha * step * g, tau)
            rn = b - A @ xn
            fn = 0.5 * (rn @ rn)
            if fn <= fmax + 1e-4 * (g @ (xn - x)):
                break
            alpha *= 0.5
        else:
            return x, r, it, "line_search"
        gn = -(A.T @ rn)
        sv, yv = xn - x, gn - g
        sty = sv @ yv
        step = min(1e10, max(1e-10, (sv @ sv) / sty)) if sty > 0 else 1e10
        x, r, g, f = xn, rn, gn, fn
        hist.append(f)
        if len(hist) > 10:
            hist.pop(0)
    return x, r, max_iter, "max_iter"


def spg_bpdn(A, b, sigma, *, opt_tol=OPT_TOL, feas_tol=FEAS_TOL, max_iter=None, x0=None):
    """BPDN by root-finding on the Pareto curve with an SPG inner solver.

    ``phi(tau) = ||r(tau)||`` is convex and decreasing with slope
    ``-||A^T r||_inf / ||r||``. Newton steps from the left are safeguarded by
    bisection on the bracket of ``tau`` values seen so far.

    Returns ``(x, iterations, status)``; ``max_iter`` bounds each inner solve.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    N, P = A.shape
    max_iter = 10 * P if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    if bnorm <= sigma:
        return np.zeros(P), 0, "optimal"
    floor = 1e-10 * bnorm

    def gap_tol(rn):
        return max(1e-3 * opt_tol * max(sigma, floor) * rn, 1e-20 * bnorm * bnorm)

    x = np.zeros(P) if x0 is None else np.asarray(x0, dtype=float)
    tau = float(np.abs(x).sum())
    lo, hi = 0.0, np.inf
    r = b - A @ x
    total = 0
    status = "max_iter"
    for _ in range(100):
        if tau > 0:
            x, r, it, inner = _spg_lasso(A, b, tau, x, gap_tol, max_iter)
            total += it
        rn = np.linalg.norm(r)
        if abs(rn - sigma) <= feas_tol * sigma or rn <= max(sigma, floor) * (1 + feas_tol) and sigma == 0:
            status = "optimal"
            break
        if rn > sigma:
            lo = max(lo, tau)
        else:
            hi = min(hi, tau)
        gnorm = np.max(np.abs(A.T @ r))
        new = tau + rn * (rn - sigma) / gnorm if gnorm > 0 else np.inf
        if not lo < new < hi:
            new = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * max(tau, 1e-300)
        if abs(new - tau) <= 1e-15 * max(tau, 1.0):
            status = "stalled"
            break
        tau = new
    return x, total, status


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _polish(A, b, sigma, x, tol=FEAS_TOL):
    """Try to sharpen an approximate BPDN solution on its detected support.

    On a fixed support S with signs s the optimum satisfies
    ``A_S^T (b - A_S x_S) = lam s``, which gives ``x_S`` in closed form once
    ``lam`` is fixed by ``||r|| = sigma``. The candidate is returned only if it
    is sign consistent, dual feasible and no worse than ``x``.
    """
    N = A.shape[0]
    lam_max = np.max(np.abs(A.T @ b))
    ax = np.abs(x)
    if ax.max(initial=0) == 0:
        return None
    best = None
    for thr in (1e-3, 1e-6, 1e-9):
        S = np.flatnonzero(ax > thr * ax.max())
        if S.size == 0 or S.size > N:
            continue
        AS = A[:, S]
        s = np.sign(x[S])
        try:
            cf = linalg.cho_factor(AS.T @ AS, check_finite=False)
        except linalg.LinAlgError:
            continue
        x_ls = linalg.cho_solve(cf, AS.T @ b)
        r_ls = b - AS @ x_ls
        dS = linalg.cho_solve(cf, s)
        u = AS @ dS
        rl2 = r_ls @ r_ls
        if rl2 > sigma * sigma * (1 + tol) ** 2 + 1e-24:
            continue
        lam = np.sqrt(max(sigma * sigma - rl2, 0.0) / (u @ u)) if u @ u > 0 else 0.0
        xs = x_ls - lam * dS
        if np.any(np.sign(xs) != s):
            continue
        cand = np.zeros_like(x)
        cand[S] = xs
        r = b - A @ cand
        if lam > 1e-9 * lam_max:
            corr = np.abs(A.T @ r)
            if corr.max() > lam * (1 + 1e-6):
                continue
        if best is None or np.abs(cand).sum() < np.abs(best).sum():
            best = cand
    if best is None:
        return None
    if np.abs(best).sum() <= np.abs(x).sum() * (1 + 1e-6) + 1e-300:
        return best
    return None


def _refine_on_support(A, b, x):
    # at the least-squares floor the answer interpolates on its support;
    # an orthogonal solve there removes normal-equation round-off
    S = np.flatnonzero(x)
    if S.size == 0 or S.size > A.shape[0]:
        return x
    xs, *_ = linalg.lstsq(A[:, S], b, check_finite=False)
    if np.any(np.sign(xs) != np.sign(x[S])):
        return x
    out = np.zeros_like(x)
    out[S] = xs
    if np.linalg.norm(A @ out - b) <= np.linalg.norm(A @ x - b):
        return out
    return x


def _bpdn_arrays(A, b, epsilons, method="homotopy", tol=FEAS_TOL):
    """Unweighted BPDN on raw arrays for one or more tolerances."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    eps = np.atleast_1d(np.asarray(epsilons, dtype=float))
    if np.any(eps < 0) or not np.all(np.isfinite(eps)):
        raise ValueError("epsilon must be finite and >= 0")
    if not np.any(A):
        raise ValueError("measurement matrix is identically zero")
    N, P = A.shape
    x_ls, r_min = _min_residual(A, b)
    bnorm = np.linalg.norm(b)
    # round-off level residuals count as consistent systems
    slack = 1e-10 * bnorm

    results = [None] * eps.size
    feasible = [i for i in range(eps.size) if r_min <= eps[i] * (1 + tol) + slack]
    for i in range(eps.size):
        if i not in feasible:
            results[i] = RecoveryResult(
                c=x_ls, residual=r_min, objective=float(np.abs(x_ls).sum()),
                epsilon_used=max(float(eps[i]), r_min), iterations=0,
                converged=False, status="infeasible")
            logger.debug("eps=%g below least-squares residual %g", eps[i], r_min)
    if not feasible:
        return results

    # tolerances at the least-squares floor are reached at the end of the path
    targets = [max(float(eps[i]), r_min) for i in feasible]
    if method == "homotopy":
        sols = homotopy_path(A, b, targets)
    elif method == "spg":
        sols = []
        for t in targets:
            x, it, st = spg_bpdn(A, b, t)
            px = _polish(A, b, t, x)
            if px is not None:
                x = px
            sols.append((x, 0.0, it, st))
    else:
        raise ValueError(f"unknown method {method!r}")

    for i, t, (x, lam, steps, st) in zip(feasible, targets, sols):
        if t <= r_min * (1 + tol) + slack:
            x = _refine_on_support(A, b, x)
        res = float(np.linalg.norm(A @ x - b))
        ok = st == "optimal" and res <= t * (1 + tol) + 1e-12 * bnorm
        results[i] = RecoveryResult(
            c=x, residual=res, objective=float(np.abs(x).sum()),
            epsilon_used=float(t), iterations=int(steps), converged=bool(ok),
            status=st, lam=float(lam))
    return results


def solve_bpdn(m: MeasurementSet, epsilon: float, *, method: str = "homotopy") -> RecoveryResult:
    """min ||c||_1 s.t. ||Psi c - u||_2 <= epsilon.

    When ``epsilon`` is below the least-squares residual the problem has no
    feasible point; the least-squares solution is returned with
    ``converged=False`` and ``status="infeasible"``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return _bpdn_arrays(m.psi, m.u, [epsilon], method)[0]


def _as_weights(W, P) -> WeightVector:
    if W is None:
        return WeightVector.uniform(P)
    if not isinstance(W, WeightVector):
        W = WeightVector(np.asarray(W, dtype=float), "prior_bound")
    if len(W) != P:
        raise ValueError(f"weight vector has length {len(W)}, basis has P={P}")
    return W


def _unweight(res: RecoveryResult, w, A, b) -> RecoveryResult:
    c = res.c / w
    res.c = c
    res.objective = float(np.sum(w * np.abs(c)))
    return res


def solve_weighted_bpdn_many(m: MeasurementSet, epsilons, W=None, *, method="homotopy"):
    """Weighted BPDN at several tolerances, sharing one homotopy path."""
    W = _as_weights(W, m.P)
    A = m.psi / W.w
    out = _bpdn_arrays(A, m.u, epsilons, method)
    return [_unweight(r, W.w, A, m.u) for r in out]


def solve_weighted_bpdn(m: MeasurementSet, epsilon: float, W, *, method: str = "homotopy") -> RecoveryResult:
    """min ||W c||_1 s.t. ||Psi c - u||_2 <= epsilon, via ``Psi W^{-1}``."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return solve_weighted_bpdn_many(m, [epsilon], W, method=method)[0]


def solve_reweighted(m: MeasurementSet, epsilon: float, eps_w: float, max_iter: int = 5,
                     *, step_tol: float = 1e-8, method: str = "homotopy") -> RecoveryResult:
    """Iteratively re-weighted l1: ``w_j = 1/(|c_j| + eps_w)`` from the last iterate.

    The first iterate is unweighted. Stops after ``max_iter`` solves or once
    successive iterates differ by less than ``step_tol`` in l2. Failure to
    settle is reported through ``converged=False``, never raised.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not eps_w > 0:
        raise ValueError("eps_w must be > 0")
    res = solve_bpdn(m, epsilon, method=method)
    if max_iter == 1:
        res.iterations = 1
        return res
    c_prev = res.c
    settled = False
    it = 1
    for it in range(2, max_iter + 1):
        W = WeightVector(1.0 / (np.abs(c_prev) + eps_w), "iterate")
        res = solve_weighted_bpdn(m, epsilon, W, method=method)
        if np.linalg.norm(res.c - c_prev) < step_tol:
            settled = True
            break
        c_prev = res.c
    res.iterations = it
    res.converged = bool(res.converged and settled)
    if not settled:
        res.status = "not_settled" if res.status == "optimal" else res.status
    return res


def least_squares(m: MeasurementSet, support) -> np.ndarray:
    """Least squares restricted to the columns in ``support``; zeros elsewhere."""
    C = np.asarray(sorted(set(int(j) for j in support)), dtype=int)
    if C.size == 0:
        raise ValueError("empty support")
    if C.size > m.N:
        raise ValueError(f"support size {C.size} exceeds number of samples {m.N}")
    PC = m.psi[:, C]
    Q, R, piv = linalg.qr(PC, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > diag[0] * max(PC.shape) * np.finfo(float).eps)) if diag[0] > 0 else 0
    if rank < C.size:
        raise np.linalg.LinAlgError(
            f"restricted matrix is rank deficient: rank {rank} < {C.size} columns")
    z = linalg.solve_triangular(R, Q.T @ m.u)
    coef = np.empty(C.size)
    coef[piv] = z
    c = np.zeros(m.P)
    c[C] = coef
    return c


def weighted_least_squares(m: MeasurementSet, bound_magnitudes) -> RecoveryResult:
    """Least squares on the ``floor(N/2)`` columns with the largest bounds."""
    b = np.asarray(bound_magnitudes, dtype=float).ravel()
    if b.size != m.P:
        raise ValueError(f"{b.size} bounds for P={m.P} basis functions")
    if not np.all(np.isfinite(b)) or np.any(b < 0):
        raise ValueError("bounds must be finite and nonnegative")
    k = m.N // 2
    if k < 1:
        raise ValueError("need at least 2 samples")
    C = np.argsort(-b, kind="stable")[:k]
    c = least_squares(m, C)
    res = float(np.linalg.norm(m.psi @ c - m.u))
    return RecoveryResult(c=c, residual=res, objective=float(np.abs(c).sum()),
                          epsilon_used=res, iterations=1, converged=True, status="optimal")
