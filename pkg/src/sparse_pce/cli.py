"""Command-line entry point: ``sparse-pce <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cross_validation import select_epsilon
from .elliptic_model import EllipticConfig, EllipticModel, fitted_decay_model, load_samples, save_samples
from .experiments import ExperimentConfig, Problem, emit, run_experiment
from .pc_basis import assemble, build_basis, basis_matrix
from .random_field import exponential_kl, nu_coefficients
from .solvers import (WeightVector, solve_reweighted, solve_weighted_bpdn,
                      weighted_least_squares)
from .theory import beta_gamma, check_beta_bounds, ric_bruteforce, sharpness_matrix
from .weights import (TaylorBoundSpec, damped_weights, default_eps_w, elliptic_bound,
                      save_bound_csv, taylor_bound)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _versions() -> dict:
    return {"sparse_pce": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out: Path, command: str, config: dict, seeds) -> Path:
    path = out.parent / (out.stem + ".manifest.json") if out.suffix else out / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"command": command, "config": config, "seeds": seeds, "versions": _versions()},
                  fh, indent=1, sort_keys=True)
    return path


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc


def _basis_from(args, header=None):
    cfg = (header or {}).get("config", {})
    d = args.d if args.d is not None else cfg.get("d")
    q = args.q if args.q is not None else cfg.get("q")
    P_keep = args.P_keep if args.P_keep is not None else cfg.get("P_keep")
    if d is None or q is None:
        raise UsageError("basis needs --d and --q (or a sample file header that records them)")
    return build_basis(int(d), int(q), P_keep)


def _read_vector(path) -> np.ndarray:
    """Single-column CSV or ``j,value`` CSV with a header row."""
    rows = [line.split(",") for line in Path(path).read_text().splitlines() if line.strip()]
    if rows and not _is_number(rows[0][-1]):
        rows = rows[1:]
    return np.array([float(r[-1]) for r in rows])


def _is_number(s) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg_d = _load_config(args.config)
    for k in ("problem", "d", "q", "P_keep", "seed"):
        v = getattr(args, k, None)
        if v is not None:
            cfg_d[k] = v
    cfg = ExperimentConfig.from_dict(cfg_d)
    problem = Problem(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, args.N]))
    m, _ = problem.draw(args.N, rng, args.noise_std)
    out = Path(args.out)
    header_cfg = cfg.to_dict()
    save_samples(out, m.xi, m.u, header_cfg, [cfg.seed, args.N])
    write_manifest(out, "gen", header_cfg, {"seed": cfg.seed, "N": args.N})
    if problem.planted is not None and args.truth_out:
        save_bound_csv(args.truth_out, problem.planted)
    return EXIT_OK


def _measurements(args):
    xi, u, header = load_samples(args.samples)
    basis = _basis_from(args, header)
    return assemble(basis, xi, u), basis


def _weights(args, m):
    if args.weights is None:
        return None
    bound = _read_vector(args.weights)
    if bound.size != m.P:
        raise UsageError(f"weights file has {bound.size} entries, basis has P={m.P}")
    return damped_weights(bound, default_eps_w(m.u, args.eps_w_scale), 1.0)


def cmd_solve(args) -> int:
    m, basis = _measurements(args)
    W = _weights(args, m)
    cv = None
    if args.epsilon == "cv":
        cv = select_epsilon(m, W, split_seed=args.seed)
        eps = cv.epsilon
    else:
        eps = float(args.epsilon)
    if args.method == "l1":
        res = solve_weighted_bpdn(m, eps, None)
    elif args.method == "weighted_l1":
        if W is None:
            raise UsageError("weighted_l1 needs --weights")
        res = solve_weighted_bpdn(m, eps, W)
    elif args.method == "reweighted_l1":
        res = solve_reweighted(m, eps, default_eps_w(m.u, args.eps_w_scale), args.max_iter)
    else:
        if args.weights is None:
            raise UsageError("wls needs --weights")
        res = weighted_least_squares(m, _read_vector(args.weights))
    out = Path(args.out)
    payload = res.to_dict()
    if cv is not None:
        payload["cv"] = cv.to_dict()
    out.write_text(json.dumps(payload))
    write_manifest(out, "solve", {"method": args.method, "epsilon": args.epsilon, "basis": basis.to_spec(),
                                  "samples": str(args.samples)}, {"split_seed": args.seed})
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_cv(args) -> int:
    m, basis = _measurements(args)
    W = _weights(args, m)
    cv = select_epsilon(m, W, split_seed=args.seed)
    out = Path(args.out)
    out.write_text(cv.to_json())
    write_manifest(out, "cv", {"basis": basis.to_spec(), "samples": str(args.samples)},
                   {"split_seed": args.seed})
    return EXIT_OK


def cmd_weights(args) -> int:
    basis = _basis_from(args)
    if args.source == "elliptic_bound":
        model = EllipticModel(EllipticConfig(d=basis.d, mesh_n=args.mesh_n, sigma_a=args.sigma_a,
                                             require_positive_margin=False))
        dm = fitted_decay_model(model, q=3, n_samples=args.gk_samples, seed=args.seed)
        bound = elliptic_bound(dm.with_C0(args.C0), basis)
    else:
        kl = exponential_kl(args.l_c, basis.d)
        t = nu_coefficients(kl, args.sigma_T).t
        spec = TaylorBoundSpec(t, args.K, args.Tc_bar, args.mc_samples)
        bound = taylor_bound(spec, basis, args.seed)
        bound = bound * (args.C0 / bound[0])
    out = Path(args.out)
    save_bound_csv(out, bound)
    write_manifest(out, "weights", {"source": args.source, "basis": basis.to_spec()}, {"seed": args.seed})
    return EXIT_OK


def cmd_theory(args) -> int:
    if args.alpha is not None:
        A, _ = sharpness_matrix(args.alpha)
        support = [2] if args.support is None else args.support
    elif args.matrix is not None:
        A = np.loadtxt(args.matrix, delimiter=",", ndmin=2)
        support = args.support or [0]
    else:
        basis = build_basis(args.d or 4, args.q or 4, args.P)
        rng = np.random.default_rng(args.seed)
        A = basis_matrix(basis, rng.uniform(-1, 1, (args.N, basis.d)))
        support = args.support or sorted(rng.choice(basis.P, 2, replace=False).tolist())
    w = None
    if args.weights is not None:
        w = WeightVector(_read_vector(args.weights), "prior_bound").w
    s = args.s or 2 * len(support)
    ric = ric_bruteforce(A, min(s, A.shape[1]))
    nsc = beta_gamma(A, w, support)
    report = {
        "delta_s": {"s": ric.s, "delta": ric.delta, "support": list(ric.extremal_support)},
        "beta": None if np.isinf(nsc.beta) else nsc.beta,
        "gamma": nsc.gamma,
        "exact": nsc.exact,
        "bounds": check_beta_bounds(A, w, support).to_dict(),
    }
    text = json.dumps(report, indent=1)
    print(text)
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(Path(args.out), "theory", {"support": list(map(int, support))}, {"seed": args.seed})
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_config(args.config))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.cache_dir is None:
        cfg.cache_dir = str(out / "cache")
    report = run_experiment(cfg)
    emit(report, out / "report.csv", "csv")
    emit(report, out / "report.json", "json")
    write_manifest(out, "experiment", cfg.to_dict(),
                   {"base": cfg.seed, "per_replication": "SeedSequence([seed, N, rep])"})
    total_fail = sum(report.failures.values())
    if total_fail:
        logging.getLogger(__name__).warning("%d replications failed", total_fail)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_basis(p):
    p.add_argument("--d", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--P-keep", dest="P_keep", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sparse-pce", description="Sparse polynomial chaos recovery by weighted l1 minimization.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a sample set")
    p.add_argument("--config")
    p.add_argument("--problem", choices=("synthetic_sparse", "synthetic_decay", "elliptic"))
    _add_basis(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--truth-out", help="CSV for planted coefficients (synthetic problems)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    for name, func, hlp in (("solve", cmd_solve, "recover coefficients"),
                            ("cv", cmd_cv, "cross-validate the tolerance")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--samples", required=True)
        _add_basis(p)
        p.add_argument("--weights", help="CSV of bound magnitudes, one per basis function")
        p.add_argument("--eps-w-scale", type=float, default=5e-5)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        if name == "solve":
            p.add_argument("--method", default="l1", choices=("l1", "weighted_l1", "reweighted_l1", "wls"))
            p.add_argument("--epsilon", default="cv", help="number or 'cv'")
            p.add_argument("--max-iter", type=int, default=4)
        p.set_defaults(func=func)

    p = sub.add_parser("weights", help="coefficient bounds for weighting")
    p.add_argument("--source", required=True, choices=("elliptic_bound", "taylor_bound"))
    _add_basis(p)
    p.add_argument("--C0", type=float, default=1.0, help="value assigned to the constant term")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mesh-n", type=int, default=256)
    p.add_argument("--sigma-a", type=float, default=0.021)
    p.add_argument("--gk-samples", type=int, default=1000)
    p.add_argument("--l-c", type=float, default=1.0 / 21.0)
    p.add_argument("--sigma-T", type=float, default=0.11)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--Tc-bar", type=float, default=-0.5)
    p.add_argument("--mc-samples", type=int, default=200_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("theory", help="RIC and null-space constants")
    p.add_argument("--alpha", type=float, help="use the 2x3 sharpness example")
    p.add_argument("--matrix", help="CSV matrix")
    _add_basis(p)
    p.add_argument("--P", type=int, default=40)
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--s", type=int)
    p.add_argument("--support", type=int, nargs="+")
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("experiment", help="replicated sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"sparse-pce: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"sparse-pce: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
