"""Command-line front end.

Subcommands: ``simulate``, ``fit``, ``impute``, ``predict``, and
``benchmark mse|robustness``. Exit codes form a stable contract:
0 success, 1 usage error, 2 data error, 3 numerical failure.

CSV files need a header with a ``value`` column (an optional ``t`` column is
ignored for the math); the cells NA, na, NaN, or empty mark missing values.
JSON output serializes floats with 17 significant digits so repeated seeded
runs are byte-stable and values round-trip exactly.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import backend
from .errors import DataError, NumericalError, TailarError
from .model import ObservedSeries, Params, apply_missing, simulate_ar1
from .saem import FitResult, SaemConfig, fit, gaussian_em_fit, impute
from .experiments import mc_mse, predict_one_step, robustness_experiment

__all__ = ["main", "parse_csv", "write_csv", "dumps"]

_MISSING_TOKENS = {"", "na", "nan"}


class UsageError(TailarError):
    """Bad command line; maps to exit code 1."""


def parse_csv(path: str, trim_edges: bool = False) -> ObservedSeries:
    """Load a series from CSV. Raises :class:`DataError` with the offending
    line number on malformed input."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row")
        columns = [c.strip().lower() for c in header]
        if "value" not in columns:
            raise DataError(f"{path}: header must contain a 'value' column, "
                            f"got {header}")
        unknown = [c for c in columns if c not in ("t", "value")]
        if unknown:
            raise DataError(f"{path}: unexpected column(s) {unknown}")
        value_col = columns.index("value")
        values = []
        lines = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise DataError(f"{path}: line {lineno}: expected "
                                f"{len(columns)} fields, got {len(row)}")
            cell = row[value_col].strip()
            if cell.lower() in _MISSING_TOKENS:
                values.append(math.nan)
            else:
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: line {lineno}: non-numeric "
                                    f"value {cell!r}")
            lines.append(lineno)
    arr = np.array(values)
    mask = ~np.isnan(arr)
    if trim_edges:
        keep = np.flatnonzero(mask)
        if keep.size == 0:
            raise DataError(f"{path}: no observed values")
        arr = arr[keep[0]:keep[-1] + 1]
        mask = mask[keep[0]:keep[-1] + 1]
    elif mask.size:
        if not mask[0]:
            raise DataError(f"{path}: line {lines[0]}: series starts with a "
                            "missing value; pass --trim-edges to drop it")
        if not mask[-1]:
            last = lines[int(np.flatnonzero(~mask)[-1])]
            raise DataError(f"{path}: line {last}: series ends with a "
                            "missing value; pass --trim-edges to drop it")
    return ObservedSeries(arr, mask)


def write_csv(series: ObservedSeries, path: str) -> None:
    """Write a series as ``t,value`` rows with NA at missing positions.
    Values round-trip exactly through :func:`parse_csv`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t in range(series.n):
            if series.mask[t]:
                writer.writerow([t + 1, repr(float(series.values[t]))])
            else:
                writer.writerow([t + 1, "NA"])


def _format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj) -> str:
    """Minimal JSON emitter with deterministic layout and 17-significant-
    digit floats (exact double round-trip)."""
    if obj is None:
        return "null"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{out}"'
    if isinstance(obj, dict):
        items = ", ".join(f"{dumps(str(k))}: {dumps(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _params_dict(params: Params) -> dict:
    return {"phi0": params.phi0, "phi1": params.phi1,
            "sigma2": params.sigma2, "nu": params.nu}


def _fit_result_dict(result: FitResult, series: ObservedSeries) -> dict:
    out = _params_dict(result.params)
    out["iterations"] = result.iterations
    out["converged"] = result.converged
    out["trace"] = [dict(k=i + 1, **_params_dict(p))
                    for i, p in enumerate(result.trace)]
    out["diagnostics"] = {
        "blocks": len(series.blocks),
        "missing": series.n_missing,
        "backend": result.diagnostics.backend,
        "q_values": list(result.diagnostics.q_values),
        "sigma2_clamped": list(result.diagnostics.sigma2_clamped),
        "nu_at_bracket": list(result.diagnostics.nu_at_bracket),
    }
    return out


def _gaussian_result_dict(params: Params, trace: list[Params], max_iter: int,
                          series: ObservedSeries) -> dict:
    out = _params_dict(params)
    out["iterations"] = len(trace)
    out["converged"] = len(trace) < max_iter
    out["trace"] = [dict(k=i + 1, **_params_dict(p))
                    for i, p in enumerate(trace)]
    out["diagnostics"] = {
        "blocks": len(series.blocks),
        "missing": series.n_missing,
        "backend": backend.active_backend(),
        "model": "gaussian",
    }
    return out


def _load_params(path: str) -> Params:
    import json
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read parameter file {path}: {exc}") from exc
    try:
        nu = doc["nu"]
        nu = math.inf if nu == "inf" else float(nu)
        return Params(float(doc["phi0"]), float(doc["phi1"]),
                      float(doc["sigma2"]), nu)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: expected keys phi0/phi1/sigma2/nu") from exc


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("TAILAR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"TAILAR_SEED must be an integer, got {env!r}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tailar",
                     description="Heavy-tailed AR(1) estimation with missing "
                                 "data")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a series and mask part "
                                          "of it")
    sim.add_argument("--phi0", type=float, required=True)
    sim.add_argument("--phi1", type=float, required=True)
    sim.add_argument("--sigma2", type=float, required=True)
    sim.add_argument("--nu", type=float, required=True,
                     help="degrees of freedom; 'inf' for Gaussian")
    sim.add_argument("--T", type=int, required=True)
    sim.add_argument("--rho", type=float, default=0.0,
                     help="fraction of interior samples to mask")
    sim.add_argument("--y1", type=float, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("-o", "--output", required=True,
                     help="output CSV; a companion .truth.csv keeps the "
                          "unmasked values")

    fit_p = sub.add_parser("fit", help="estimate parameters from a CSV series")
    fit_p.add_argument("-i", "--input", required=True)
    fit_p.add_argument("--model", choices=("t", "gaussian"), default="t")
    fit_p.add_argument("--variant", choices=("full", "zero-mean",
                                             "random-walk"), default="full")
    fit_p.add_argument("--L", type=int, default=10, help="parallel chains")
    fit_p.add_argument("--K", type=int, default=30,
                       help="warm-up iterations with unit step size")
    fit_p.add_argument("--max-iter", type=int, default=150)
    fit_p.add_argument("--eps", type=float, default=1e-5)
    fit_p.add_argument("--patience", type=int, default=10)
    fit_p.add_argument("--nu0", type=float, default=5.0)
    fit_p.add_argument("--nu-lo", type=float, default=2.001)
    fit_p.add_argument("--nu-hi", type=float, default=300.0)
    fit_p.add_argument("--seed", type=int, default=None)
    fit_p.add_argument("--trim-edges", action="store_true")
    fit_p.add_argument("-o", "--output", default=None,
                       help="result JSON (stdout if omitted)")

    imp = sub.add_parser("impute", help="posterior mean/sd of the missing "
                                        "values at fixed parameters")
    imp.add_argument("-i", "--input", required=True)
    imp.add_argument("--params", required=True, help="fit JSON")
    imp.add_argument("--draws", type=int, default=200)
    imp.add_argument("--burn-in", type=int, default=100)
    imp.add_argument("--seed", type=int, default=None)
    imp.add_argument("--trim-edges", action="store_true")
    imp.add_argument("-o", "--output", required=True, help="output CSV")

    prd = sub.add_parser("predict", help="one-step-ahead predictions and "
                                         "averaged squared error")
    prd.add_argument("-i", "--input", required=True)
    prd.add_argument("--params", required=True, help="fit JSON")
    prd.add_argument("--exclude", default="",
                     help="comma-separated 1-based positions to omit from "
                          "the error average")
    prd.add_argument("--format", choices=("csv", "json"), default="csv")
    prd.add_argument("--trim-edges", action="store_true")
    prd.add_argument("-o", "--output", default=None)

    bench = sub.add_parser("benchmark", help="Monte-Carlo studies")
    bench_sub = bench.add_subparsers(dest="study", required=True)

    mse = bench_sub.add_parser("mse", help="per-parameter MSE over repeated "
                                           "simulate/mask/fit runs")
    mse.add_argument("--phi0", type=float, default=1.0)
    mse.add_argument("--phi1", type=float, default=0.5)
    mse.add_argument("--sigma2", type=float, default=0.01)
    mse.add_argument("--nu", type=float, default=2.5)
    mse.add_argument("--T", type=int, default=300)
    mse.add_argument("--rho", type=float, default=0.1)
    mse.add_argument("--runs", type=int, default=20)
    mse.add_argument("--L", type=int, default=10)
    mse.add_argument("--K", type=int, default=30)
    mse.add_argument("--max-iter", type=int, default=150)
    mse.add_argument("--variant", choices=("full", "zero-mean",
                                           "random-walk"), default="full")
    mse.add_argument("--threads", type=int, default=1)
    mse.add_argument("--seed", type=int, default=None)
    mse.add_argument("--csv", default=None, help="per-run estimates CSV")
    mse.add_argument("-o", "--output", default=None, help="report JSON")

    rob = bench_sub.add_parser("robustness",
                               help="outlier robustness: heavy-tailed vs "
                                    "Gaussian zero-mean fits")
    rob.add_argument("--seeds", type=int, default=20)
    rob.add_argument("--T", type=int, default=100)
    rob.add_argument("--rho", type=float, default=0.1)
    rob.add_argument("--threads", type=int, default=1)
    rob.add_argument("--seed", type=int, default=None)
    rob.add_argument("--csv", default=None, help="per-run rows CSV")
    rob.add_argument("-o", "--output", default=None, help="report JSON")
    return parser


def _cmd_simulate(args) -> int:
    params = Params(args.phi0, args.phi1, args.sigma2, args.nu)
    seed = _resolve_seed(args.seed)
    sim_seed, mask_seed = (int(v) for v in
                           np.random.SeedSequence(seed).generate_state(2))
    y = simulate_ar1(params, args.T, y1=args.y1, seed=sim_seed)
    series = apply_missing(y, args.rho, seed=mask_seed)
    truth_path = (args.output[:-4] + ".truth.csv"
                  if args.output.endswith(".csv")
                  else args.output + ".truth.csv")
    write_csv(series, args.output)
    write_csv(ObservedSeries.complete(y), truth_path)
    return 0


def _cmd_fit(args) -> int:
    series = parse_csv(args.input, trim_edges=args.trim_edges)
    if args.model == "gaussian":
        trace: list[Params] = []
        params = gaussian_em_fit(series, max_iter=args.max_iter,
                                 variant=args.variant, trace_out=trace)
        doc = _gaussian_result_dict(params, trace, args.max_iter, series)
    else:
        config = SaemConfig(L=args.L, K=args.K, max_iter=args.max_iter,
                            eps=args.eps, patience=args.patience,
                            variant=args.variant, seed=_resolve_seed(args.seed),
                            nu0=args.nu0, nu_bracket=(args.nu_lo, args.nu_hi))
        result = fit(series, config)
        doc = _fit_result_dict(result, series)
    _emit(dumps(doc), args.output)
    return 0


def _cmd_impute(args) -> int:
    series = parse_csv(args.input, trim_edges=args.trim_edges)
    params = _load_params(args.params)
    result = impute(series, params, n_draws=args.draws,
                    seed=_resolve_seed(args.seed), burn_in=args.burn_in)
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean", "sd"])
        for idx, mean, sd in zip(result.indices, result.mean, result.sd):
            writer.writerow([int(idx) + 1, repr(float(mean)),
                             repr(float(sd))])
    return 0


def _cmd_predict(args) -> int:
    series = parse_csv(args.input, trim_edges=args.trim_edges)
    params = _load_params(args.params)
    exclude = [int(tok) for tok in args.exclude.split(",") if tok.strip()]
    result = predict_one_step(series, params, exclude=exclude)
    summary = {"avg_sq_error": result.avg_sq_error, "n": result.n}
    if args.format == "json":
        doc = {"predictions": [
            {"t": int(t), "value": float(a), "prediction": float(p)}
            for t, a, p in zip(result.positions, result.actual,
                               result.predicted)]}
        doc.update(summary)
        _emit(dumps(doc), args.output)
    else:
        if args.output is not None:
            with open(args.output, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["t", "value", "prediction", "sq_error"])
                for t, a, p in zip(result.positions, result.actual,
                                   result.predicted):
                    writer.writerow([int(t), repr(float(a)), repr(float(p)),
                                     repr(float((a - p) ** 2))])
        sys.stdout.write(dumps(summary) + "\n")
    return 0


def _cmd_benchmark_mse(args) -> int:
    theta = Params(args.phi0, args.phi1, args.sigma2, args.nu)
    config = SaemConfig(L=args.L, K=args.K, max_iter=args.max_iter,
                        variant=args.variant)
    report = mc_mse(theta, args.T, args.rho, args.runs, config,
                    seed=_resolve_seed(args.seed), threads=args.threads)
    doc = {
        "theta_true": _params_dict(theta),
        "T": args.T, "rho": args.rho, "n_runs": args.runs,
        "seed": report.seed,
        "mse": report.mse,
        "n_failures": len(report.failures),
        "failures": [{"run": i, "error": msg} for i, msg in report.failures],
        "estimates": [dict(run=i, **_params_dict(Params(*row)))
                      for i, row in zip(report.run_indices, report.estimates)],
    }
    _emit(dumps(doc), args.output)
    if args.csv is not None:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "phi0", "phi1", "sigma2", "nu"])
            for i, row in zip(report.run_indices, report.estimates):
                writer.writerow([i] + [repr(float(v)) for v in row])
    return 0


def _cmd_benchmark_robustness(args) -> int:
    report = robustness_experiment(n_seeds=args.seeds,
                                   seed=_resolve_seed(args.seed), T=args.T,
                                   rho=args.rho, threads=args.threads)
    doc = {
        "phi1_true": report.phi1_true,
        "n_seeds": args.seeds,
        "t_win_rate": report.t_win_rate,
        "mean_pred_err_t": report.mean_pred_err_t,
        "mean_pred_err_gaussian": report.mean_pred_err_gaussian,
        "reference": report.reference,
        "rows": [{
            "run": r.run,
            "outlier_positions": list(r.outlier_positions),
            "phi1_t": r.phi1_t,
            "phi1_gaussian": r.phi1_gaussian,
            "pred_err_t": r.pred_err_t,
            "pred_err_gaussian": r.pred_err_gaussian,
        } for r in report.rows],
    }
    _emit(dumps(doc), args.output)
    if args.csv is not None:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "phi1_t", "phi1_gaussian", "pred_err_t",
                             "pred_err_gaussian"])
            for r in report.rows:
                writer.writerow([r.run, repr(r.phi1_t), repr(r.phi1_gaussian),
                                 repr(r.pred_err_t),
                                 repr(r.pred_err_gaussian)])
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "impute": _cmd_impute,
    "predict": _cmd_predict,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "benchmark":
            if args.study == "mse":
                return _cmd_benchmark_mse(args)
            return _cmd_benchmark_robustness(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tailar: usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"tailar: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"tailar: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"tailar: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
