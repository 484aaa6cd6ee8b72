"""Command-line interface: ``fit``, ``bench``, ``preprocess`` and ``report``.

Exit codes: 0 success, 2 usage or configuration error, 3 input parse
error, 4 no usable fit (every grid cell degenerate), 1 any other library
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from penclust import __version__
from penclust.bench import METHODS, Design, run_benchmark, summary_tsv
from penclust.em import StopRule
from penclust.errors import ConfigError, ConstantColumn, GlobalFailure, InvalidValue, ParseError, PenclustError
from penclust.io import Orientation, fmt17, ingest_csv, preprocess_microarray, read_grouping, write_matrix_csv
from penclust.model import CovMode, PenaltyConfig, Scheme, standardize
from penclust.selection import GridSpec, adaptive_pipeline, default_lambda_grid, effective_df, grid_search

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_PARSE, EXIT_DEGENERATE = 0, 1, 2, 3, 4


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _add_stop(p):
    p.add_argument("--tol", type=float, default=1e-6, help="relative change stopping threshold")
    p.add_argument("--max-iter", type=int, default=500)


def _add_preprocess(p):
    p.add_argument("--truncate-low", type=float, default=1.0)
    p.add_argument("--truncate-high", type=float, default=16000.0)
    p.add_argument("--filter-ratio", type=float, default=5.0)
    p.add_argument("--filter-span", type=float, default=500.0)
    p.add_argument("--top-k-variance", type=int, default=2000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="penclust", description="Penalized model-based clustering.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="select and fit a penalized mixture on a CSV file")
    fit.add_argument("input")
    fit.add_argument("--out", required=True, help="run directory (created if missing)")
    fit.add_argument("--orientation", choices=[o.value for o in Orientation], default="rows")
    fit.add_argument("--cov-mode", choices=[c.value for c in CovMode], default="unequal")
    fit.add_argument("--scheme", choices=[s.value for s in Scheme], default="var1")
    fit.add_argument("--adaptive", action="store_true", help="two-stage adaptively weighted penalties")
    fit.add_argument("--groups", help="grouping CSV: variable,group")
    fit.add_argument("--group-variances", action="store_true", help="also group the variance penalty")
    fit.add_argument("--no-group-means", action="store_true", help="group only the variances")
    fit.add_argument("--lambda1-grid", type=_float_list)
    fit.add_argument("--lambda2-grid", type=_float_list)
    fit.add_argument("--g-min", type=int, default=1)
    fit.add_argument("--g-max", type=int, default=3)
    fit.add_argument("--starts", type=int, default=10)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--corrected-df", action="store_true", help="count free parameters directly in the BIC")
    fit.add_argument("--jobs", type=int, default=1, help="worker processes over grid cells")
    fit.add_argument("--preprocess", action="store_true", help="apply the microarray pipeline first")
    _add_preprocess(fit)
    _add_stop(fit)

    bench = sub.add_parser("bench", help="simulation benchmark")
    bench.add_argument("--case", type=int, default=1)
    bench.add_argument("--setup", type=int, default=2)
    bench.add_argument("--k1", type=int, default=10)
    bench.add_argument("--K", type=int, default=300, dest="K")
    bench.add_argument("--n-informative", type=int, default=21)
    bench.add_argument("--group", choices=["none", "means", "both"], default="none")
    bench.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    bench.add_argument("--reps", type=int, default=20)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--starts", type=int, default=10)
    bench.add_argument("--g-max", type=int, default=3)
    bench.add_argument("--lambda-grid", type=_float_list)
    bench.add_argument("--jobs", type=int, default=1, help="worker processes over replicates")
    bench.add_argument("--out", help="directory for summary.tsv, summary.json and replicates.tsv")
    _add_stop(bench)

    pre = sub.add_parser("preprocess", help="clamp, filter and screen a microarray CSV")
    pre.add_argument("input")
    pre.add_argument("--out", required=True, help="output CSV (observations x variables)")
    pre.add_argument("--orientation", choices=[o.value for o in Orientation], default="columns")
    _add_preprocess(pre)

    rep = sub.add_parser("report", help="print a run directory or benchmark output as tables")
    rep.add_argument("path")
    return parser


# --- fit --------------------------------------------------------------------


def _resolved_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    for k, v in cfg.items():
        if isinstance(v, tuple):
            cfg[k] = list(v)
    return cfg


def _comment(cfg: dict) -> str:
    return "# config: " + json.dumps(cfg, sort_keys=True) + "\n"


def _write_tsv(path: Path, cfg: dict, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_comment(cfg))
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(fmt17(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def run_fit(args) -> int:
    if args.g_min < 1 or args.g_max < args.g_min:
        raise ConfigError("need 1 <= g-min <= g-max")
    cfg = _resolved_config(args)
    table = ingest_csv(args.input, args.orientation)
    values = table.values
    names = list(table.variable_names) if table.variable_names else [str(k + 1) for k in range(values.shape[1])]
    kept = np.arange(values.shape[1])
    if args.preprocess:
        pre = preprocess_microarray(
            values, args.truncate_low, args.truncate_high, args.filter_ratio, args.filter_span, args.top_k_variance
        )
        values, kept = pre.values, pre.kept
        names = [names[k] for k in kept]
    data = standardize(values)

    grouping = None
    if args.groups:
        grouping = read_grouping(
            args.groups, names, group_means=not args.no_group_means, group_variances=args.group_variances
        )
    grid = default_lambda_grid(data.n)
    l1 = args.lambda1_grid or grid
    l2 = args.lambda2_grid or (grid if args.cov_mode == "unequal" else (0.0,))
    spec = GridSpec(tuple(range(args.g_min, args.g_max + 1)), tuple(sorted(l1)), tuple(sorted(l2)), args.starts, args.seed)
    stop = StopRule(args.tol, args.max_iter)
    kw = dict(corrected_df=args.corrected_df, n_jobs=args.jobs)
    if args.adaptive:
        if grouping is not None or args.cov_mode != "unequal" or args.scheme != "var1":
            raise ConfigError("--adaptive uses the unequal-covariance var1 model without groups")
        result = adaptive_pipeline(data, spec, stop, **kw)
    else:
        template = PenaltyConfig(scheme=Scheme(args.scheme), grouping=grouping)
        result = grid_search(data, spec, template, CovMode(args.cov_mode), stop, **kw)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fit = result.best
    p = fit.params
    g, lam1, lam2 = result.best_cell
    noise = set(fit.noise_variable_indices.tolist())
    model = {
        "config": cfg,
        "seed": args.seed,
        "g": g,
        "lambda1": lam1,
        "lambda2": lam2,
        "cov_mode": p.cov_mode.value,
        "scheme": args.scheme,
        "adaptive": args.adaptive,
        "bic": min(r.bic for r in result.table),
        "effective_df": effective_df(p, corrected=args.corrected_df),
        "loglik": fit.loglik,
        "penalized_loglik": fit.penalized_loglik,
        "status": fit.status.value,
        "iterations": fit.iterations,
        "n": data.n,
        "K": data.K,
        "variables": names,
        "original_variable_indices": [int(k) + 1 for k in kept],
        "column_means": data.column_means.tolist(),
        "column_sds": data.column_sds.tolist(),
        "pi": p.pi.tolist(),
        "mu": p.mu.tolist(),
        "sigma2": p.sigma2.tolist(),
        "noise_variables": [names[k] for k in sorted(noise)],
        "bic_table": [asdict(r) for r in result.table],
    }
    if result.stage1 is not None:
        model["stage1_best_cell"] = list(result.stage1.best_cell)
    with open(out / "model.json", "w", encoding="utf-8") as fh:
        json.dump(model, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")

    obs = list(table.observation_names) if table.observation_names else [str(j + 1) for j in range(data.n)]
    _write_tsv(out / "assignments.tsv", cfg, ["observation", "cluster", *[f"tau{i + 1}" for i in range(g)]],
               ([obs[j], int(fit.labels[j]) + 1, *map(float, fit.tau[j])] for j in range(data.n)))
    _write_tsv(out / "bic_table.tsv", cfg,
               ["g", "lambda1", "lambda2", "bic", "df", "status", "penalized_loglik", "loglik", "rejected_starts"],
               ([r.g, r.lambda1, r.lambda2, r.bic, r.df, r.status, r.penalized_loglik, r.loglik, r.rejected_starts]
                for r in result.table))
    _write_tsv(out / "variables.tsv", cfg, ["variable", "index", "selected", "zero_means", "unit_variances"],
               ([names[k], int(kept[k]) + 1, "noise" if k in noise else "informative",
                 int(np.count_nonzero(p.mu[:, k] == 0)), int(np.count_nonzero(p.sigma2[:, k] == 1))]
                for k in range(data.K)))
    _write_tsv(out / "plot_mean_var.tsv", cfg, ["cluster", "variable", "mean", "variance"],
               ([i + 1, names[k], float(p.mu[i, k]), float(p.sigma2[i, k])] for i in range(g) for k in range(data.K)))
    print(f"selected g={g} lambda1={lam1:.4g} lambda2={lam2:.4g} BIC={model['bic']:.4g}; "
          f"{data.K - len(noise)} informative of {data.K} variables; wrote {out}")
    return EXIT_OK


# --- bench ------------------------------------------------------------------


def _human_bench(summary) -> str:
    lines = [f"design {summary.design.label}, {summary.replications} replicates, seed {summary.seed}"]
    for name, ms in summary.methods.items():
        freq = " ".join(f"g={g}:{c}" for g, c in ms.freq.items())
        z = " ".join(f"{v:.4g}" for v in ms.mean_z)
        lines.append(f"  {name:<10} {freq}  failed:{ms.failures}  z=({z})  RI={ms.mean_ri:.4g}  aRI={ms.mean_ari:.4g}")
    return "\n".join(lines)


def run_bench(args) -> int:
    design = Design(args.case, args.setup, args.k1, args.K, args.n_informative)
    if args.methods:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    elif args.group != "none":
        methods = [f"grp-{args.group}"]
    else:
        methods = ["l1l2"]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; choose from {sorted(METHODS)}")
    if args.reps < 1:
        raise ConfigError("--reps must be at least 1")
    summary = run_benchmark(
        design, methods, args.reps, args.seed, g_values=tuple(range(1, args.g_max + 1)),
        n_starts=args.starts, lambda_grid=args.lambda_grid, stop=StopRule(args.tol, args.max_iter), n_jobs=args.jobs,
    )
    print(_human_bench(summary))
    if args.out:
        cfg = _resolved_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "summary.tsv", "w", encoding="utf-8") as fh:
            fh.write(_comment(cfg) + summary_tsv(summary))
        doc = summary.to_dict()
        doc["config"] = cfg
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True, default=_json_default)
            fh.write("\n")
        nz = max(len(r.z) for r in summary.rows)
        _write_tsv(out / "replicates.tsv", cfg,
                   ["method", "replicate", "g_hat", "lambda1", "lambda2", "bic",
                    *[f"z{b + 1}" for b in range(nz)], "RI", "aRI", "corr1", "corr2", "error"],
                   ([r.method, r.replicate, r.g_hat if r.g_hat is not None else "NA", r.lambda1, r.lambda2, r.bic,
                     *r.z, r.ri, r.ari, *r.correct, r.error or "-"] for r in summary.rows))
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# --- preprocess / report ------------------------------------------------------


def run_preprocess(args) -> int:
    table = ingest_csv(args.input, args.orientation)
    pre = preprocess_microarray(
        table.values, args.truncate_low, args.truncate_high, args.filter_ratio, args.filter_span, args.top_k_variance
    )
    names = table.variable_names or tuple(str(k + 1) for k in range(table.values.shape[1]))
    write_matrix_csv(args.out, pre.values, header=[names[k] for k in pre.kept])
    print(f"kept {pre.kept.size} of {table.values.shape[1]} variables"
          + (" (fewer than requested)" if pre.short else "") + f"; wrote {args.out}")
    return EXIT_OK


def run_report(args) -> int:
    path = Path(args.path)
    model = path / "model.json" if path.is_dir() else path
    bench = path / "summary.json" if path.is_dir() else path
    if model.name == "model.json" and model.exists():
        m = json.loads(model.read_text(encoding="utf-8"))
        print(f"g={m['g']}  lambda1={m['lambda1']:.4g}  lambda2={m['lambda2']:.4g}  BIC={m['bic']:.4g}  "
              f"df={m['effective_df']}  status={m['status']}")
        print(f"informative variables: {m['K'] - len(m['noise_variables'])} of {m['K']}")
        print("cluster  pi      mean|mu|  mean sigma2")
        for i, pi in enumerate(m["pi"]):
            mu = np.abs(np.array(m["mu"][i])).mean()
            s2 = np.array(m["sigma2"][i]).mean()
            print(f"{i + 1:<8} {pi:<7.4g} {mu:<9.4g} {s2:.4g}")
        return EXIT_OK
    if bench.name == "summary.json" and bench.exists():
        doc = json.loads(bench.read_text(encoding="utf-8"))
        print(f"design {doc['design']}, {doc['replications']} replicates, seed {doc['seed']}")
        for name, ms in doc["methods"].items():
            freq = " ".join(f"g={g}:{c}" for g, c in ms["freq"].items())
            z = " ".join(f"{v:.4g}" for v in ms["mean_z"])
            print(f"  {name:<10} {freq}  failed:{ms['failures']}  z=({z})  "
                  f"RI={ms['mean_ri']:.4g}  aRI={ms['mean_ari']:.4g}")
        return EXIT_OK
    raise ConfigError(f"{path} holds neither model.json nor summary.json")


COMMANDS = {"fit": run_fit, "bench": run_bench, "preprocess": run_preprocess, "report": run_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, InvalidValue, ConstantColumn) as exc:
        print(f"penclust: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"penclust: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GlobalFailure as exc:
        print(f"penclust: no usable fit: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (PenclustError, OSError) as exc:
        print(f"penclust: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
