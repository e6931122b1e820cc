"""Batch command line: simulate, fit, cv, eval, reproduce.

Standard output is machine-parseable (key=value lines or CSV); diagnostics
go to stderr. Exit codes: 0 success, 1 runtime or convergence failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import data_io, experiments
from .gaussian import GaussianModel, densify_gaussian, evaluate_gaussian, fit_gaussian
from .gaussian import gaussian_probability_field
from .link import field_from_dense, negative_log_likelihood, probability_field
from .metrics import EvalReport, frobenius_error, hellinger_sq, kl_divergence
from .metrics import prediction_error
from .model import AtomicModel, FitConfig, densify
from .simulate import make_ground_truth, make_sampling, sample_observations
from .solver import fit, lambda_max


class UsageError(Exception):
    """Bad flag combination detected after parsing; exits with code 2."""


def _kv(key, value):
    print(f"{key}={value}")


def cmd_simulate(args) -> int:
    if args.rank > min(args.rows, args.cols):
        raise UsageError(f"rank {args.rank} exceeds min(rows, cols) = "
                         f"{min(args.rows, args.cols)}")
    dist = make_sampling(args.sampling, args.rows, args.cols, args.skew,
                         seed=args.seed + 2)
    truth = make_ground_truth(args.rows, args.cols, args.classes, args.rank,
                              args.gamma_scale, seed=args.seed)
    obs = sample_observations(truth, dist, args.n_obs, seed=args.seed + 1)
    data_io.write_observations(args.out_obs, obs)
    data_io.write_truth(args.out_truth, truth)
    _kv("rows", args.rows)
    _kv("cols", args.cols)
    _kv("classes", args.classes)
    _kv("n_obs", obs.n)
    _kv("mu", f"{dist.mu:.17g}")
    _kv("l_c", f"{dist.l_c:.17g}")
    _kv("out_obs", args.out_obs)
    _kv("out_truth", args.out_truth)
    return 0


def _fit_config(args) -> FitConfig:
    return FitConfig(lam=args.lam, epsilon=args.eps, max_iters=args.max_iters,
                     seed=args.seed)


def cmd_fit(args) -> int:
    obs = data_io.read_observations(args.obs, rows=args.rows, cols=args.cols,
                                    classes=args.classes)
    cfg = _fit_config(args)
    if args.link == "logit":
        model, report = fit(obs, cfg)
        atoms = model.n_atoms
    else:
        model, report = fit_gaussian(obs, cfg)
        atoms = len(model.atoms)
    data_io.write_model(args.out_model, model, lam=args.lam)
    _kv("objective", f"{report.objective_trace[-1]:.17g}")
    _kv("iterations", report.iterations)
    _kv("atoms", atoms)
    _kv("stop_reason", report.stop_reason)
    _kv("converged", str(report.converged).lower())
    _kv("lambda", f"{args.lam:.17g}")
    _kv("out_model", args.out_model)
    return 0 if report.converged else 1


def lambda_grid(n: int, lam_max: float) -> np.ndarray:
    """Geometric grid of ceil(0.8 log n) points spanning [lam_max/1e3, lam_max]."""
    size = max(1, math.ceil(0.8 * math.log(n)))
    if size == 1:
        return np.asarray([lam_max])
    return np.geomspace(lam_max / 1e3, lam_max, size)


def _validation_loss(train_model, val_obs, link: str) -> float:
    if link == "logit":
        return negative_log_likelihood(train_model, val_obs)
    x = evaluate_gaussian(train_model, np.column_stack([val_obs.row_idx,
                                                        val_obs.col_idx]))
    y = val_obs.labels.astype(float)
    return float(np.mean((y - x) ** 2) / 2.0)


def cross_validate(obs, link: str, folds: int, eps: float, max_iters: int,
                   seed: int):
    """5-fold-style CV over the geometric penalty grid.

    Returns (chosen_lam, lam_max, table) with one (lam, mean, sd) row per
    grid point; the mean is the held-out negative log-likelihood (squared
    error for the Gaussian link).
    """
    lam_top = lambda_max(obs, link)
    grid = lambda_grid(obs.n, lam_top)
    perm = np.random.default_rng(seed).permutation(obs.n)
    fold_of = np.empty(obs.n, dtype=int)
    fold_of[perm] = np.arange(obs.n) % folds
    table = []
    for lam in grid:
        losses = []
        for f in range(folds):
            train_idx = np.nonzero(fold_of != f)[0]
            val_idx = np.nonzero(fold_of == f)[0]
            train = data_io._take(obs, train_idx)
            val = data_io._take(obs, val_idx)
            cfg = FitConfig(lam=float(lam), epsilon=eps, max_iters=max_iters,
                            seed=seed)
            if link == "logit":
                model, _ = fit(train, cfg)
            else:
                model, _ = fit_gaussian(train, cfg)
            losses.append(_validation_loss(model, val, link))
        losses = np.asarray(losses)
        sd = float(losses.std(ddof=1)) if folds > 1 else 0.0
        table.append((float(lam), float(losses.mean()), sd))
    chosen = min(table, key=lambda row: row[1])[0]
    return chosen, lam_top, table


def cmd_cv(args) -> int:
    obs = data_io.read_observations(args.obs, rows=args.rows, cols=args.cols,
                                    classes=args.classes)
    if args.folds < 2:
        raise UsageError("need at least 2 folds")
    chosen, lam_top, table = cross_validate(obs, args.link, args.folds,
                                            args.eps, args.max_iters, args.seed)
    _kv("lambda_max", f"{lam_top:.17g}")
    _kv("grid_size", len(table))
    _kv("chosen_lambda", f"{chosen:.17g}")
    lines = ["lambda,mean_val_loss,sd"]
    lines += [f"{lam:.17g},{mean:.17g},{sd:.17g}" for lam, mean, sd in table]
    if args.out_csv:
        with open(args.out_csv, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        _kv("out_csv", args.out_csv)
    else:
        print("\n".join(lines))
    return 0


def cmd_eval(args) -> int:
    if args.truth is None and args.test_obs is None:
        raise UsageError("need --truth and/or --test-obs")
    model = data_io.read_model(args.model)
    if model.classes != args.classes:
        raise UsageError(f"model file has {model.classes} classes, "
                         f"--classes says {args.classes}")
    if isinstance(model, AtomicModel):
        field = probability_field(model)
    else:
        field = gaussian_probability_field(model)

    kl = hell = 0.0
    frob = float("nan")
    pe = None
    if args.truth is not None:
        truth = data_io.read_truth(args.truth)
        truth_field = field_from_dense(truth)
        kl = kl_divergence(truth_field, field)
        hell = hellinger_sq(truth_field, field)
        if isinstance(model, AtomicModel):
            frob = frobenius_error(truth, densify(model))
    if args.test_obs is not None:
        test = data_io.read_observations(args.test_obs, rows=model.rows,
                                         cols=model.cols, classes=model.classes)
        pe = prediction_error(field, test)
    report = EvalReport(kl, hell, frob, pe)
    if args.out == "kv":
        for line in report.to_kv_lines():
            print(line)
    else:
        print(EvalReport.csv_header())
        print(report.to_csv_row())
    return 0


def cmd_reproduce(args) -> int:
    seeds = args.seeds
    if args.experiment == "fig1":
        cells = experiments.figure1_cells(args.scale, seeds,
                                          fractions=args.fractions)
    elif args.experiment == "table2":
        cells = experiments.table_cells(args.scale, 2, args.n_obs, seeds)
    elif args.experiment == "table3":
        cells = experiments.table_cells(args.scale, 5, args.n_obs, seeds)
    else:
        raise UsageError(f"unknown experiment {args.experiment!r}")
    m1, m2 = experiments.scaled_dims(args.scale)
    print(f"running {len(cells)} cells on a {m1}x{m2} grid", file=sys.stderr)
    results = experiments.run_cells(cells, workers=args.workers)
    per_seed, mean = experiments.write_results(args.out, args.experiment, results)
    _kv("out_per_seed", per_seed)
    _kv("out_mean", mean)
    return 0


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="famc",
        description="Matrix completion over finite alphabets: multinomial-logit "
                    "and Gaussian nuclear-norm estimators.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a ground truth and observations")
    p_sim.add_argument("--rows", type=int, required=True)
    p_sim.add_argument("--cols", type=int, required=True)
    p_sim.add_argument("--classes", type=int, default=2)
    p_sim.add_argument("--rank", type=int, default=5)
    p_sim.add_argument("--gamma-scale", type=float, default=1.0)
    p_sim.add_argument("--n-obs", type=int, required=True)
    p_sim.add_argument("--sampling", choices=["uniform", "product"], default="uniform")
    p_sim.add_argument("--skew", type=float, default=1.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out-obs", required=True)
    p_sim.add_argument("--out-truth", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit a model to an observation CSV")
    p_fit.add_argument("--obs", required=True)
    p_fit.add_argument("--rows", type=int)
    p_fit.add_argument("--cols", type=int)
    p_fit.add_argument("--classes", type=int)
    p_fit.add_argument("--link", choices=["logit", "gaussian"], default="logit")
    p_fit.add_argument("--lambda", dest="lam", type=float, required=True)
    p_fit.add_argument("--eps", type=float, default=1e-4)
    p_fit.add_argument("--max-iters", type=int, default=500)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out-model", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_cv = sub.add_parser("cv", help="choose the penalty by k-fold cross-validation")
    p_cv.add_argument("--obs", required=True)
    p_cv.add_argument("--rows", type=int)
    p_cv.add_argument("--cols", type=int)
    p_cv.add_argument("--classes", type=int)
    p_cv.add_argument("--link", choices=["logit", "gaussian"], default="logit")
    p_cv.add_argument("--folds", type=int, default=5)
    p_cv.add_argument("--eps", type=float, default=1e-4)
    p_cv.add_argument("--max-iters", type=int, default=200)
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--out-csv")
    p_cv.set_defaults(func=cmd_cv)

    p_eval = sub.add_parser("eval", help="score a model file against truth/test data")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--classes", type=int, required=True)
    p_eval.add_argument("--truth")
    p_eval.add_argument("--test-obs")
    p_eval.add_argument("--out", choices=["kv", "csv"], default="kv")
    p_eval.set_defaults(func=cmd_eval)

    p_rep = sub.add_parser("reproduce", help="run a scaled simulation experiment")
    p_rep.add_argument("--experiment", choices=["fig1", "table2", "table3"],
                       required=True)
    p_rep.add_argument("--scale", type=float, default=1 / 6)
    p_rep.add_argument("--seeds", type=int, default=5)
    p_rep.add_argument("--n-obs", type=_int_list, default=[1000, 5000, 10000, 50000],
                       help="comma-separated sample sizes (table experiments)")
    p_rep.add_argument("--fractions", type=_float_list, default=[0.10, 0.25],
                       help="comma-separated sampling fractions (fig1)")
    p_rep.add_argument("--workers", type=int, default=None)
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
