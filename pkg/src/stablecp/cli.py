"""Command-line entry point: ``stablecp {select,run,online,recalibrate}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure
during a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config, with_seed
from .experiments import (
    Dataset,
    aggregate,
    base_predictors,
    run_online_scenario,
    run_online_stream,
    run_seed,
    recalibrate_split,
)
from .selection import (
    Prior,
    SizeProfile,
    StabilityBudget,
    ada_minse,
    certificate_slack,
    exponential_select,
    laplace_select,
    minse,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

PER_SEED_COLUMNS = ("seed", "method", "scenario", "coverage", "mean_length", "n_test")
TRACE_COLUMNS = ("seed", "t", "method", "chosen", "covered", "length", "weights", "p_star")
SETS_COLUMNS = ("row", "selected", "rank", "lower", "upper", "label", "covered")


class RunFailure(RuntimeError):
    def __init__(self, seed, step: str, cause: BaseException):
        super().__init__(f"seed {seed}, step {step}: {type(cause).__name__}: {cause}")


def fmt(x) -> str:
    """12 significant digits; booleans as 0/1."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def fmt_list(xs) -> str:
    return "[" + ";".join(fmt(x) for x in xs) + "]"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(fmt(x))
    return x


def _dump(record: dict) -> str:
    return json.dumps(_jsonable(record), sort_keys=False)


def _write_csv(path: Path, columns: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _field(name: str, fn: Callable):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(name, str(err)) from None


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


# --------------------------------------------------------------------------
# select


def cmd_select(args: argparse.Namespace) -> dict:
    xi = _field("sizes", lambda: SizeProfile(_floats(args.sizes), args.scale))
    prior = _field(
        "prior", lambda: Prior(_floats(args.prior)) if args.prior else Prior.uniform(xi.k)
    )
    if prior.k != xi.k:
        raise ConfigError("prior", f"has {prior.k} entries but sizes has {xi.k}")
    if args.gamma is not None:
        if args.eta is not None:
            raise ConfigError("gamma", "give either --eta or --gamma, not both")
        if not args.gamma >= 1:
            raise ConfigError("gamma", f"must be >= 1, got {args.gamma}")
        eta = math.log(args.gamma)
    else:
        eta = args.eta if args.eta is not None else 0.0
    budget = _field("eta", lambda: StabilityBudget(eta, args.tau, args.alpha, args.alpha_prime))

    record: dict = {"mechanism": args.mechanism, "sizes": xi.sizes}
    if args.mechanism == "laplace":
        rng = np.random.default_rng(args.seed)
        idx = _field("sizes", lambda: laplace_select(xi, budget.eta, rng))
        record.update(
            selected=idx,
            certificate={"reference": "uniform", "gamma": math.exp(budget.eta), "eta": budget.eta, "tau": 0.0},
        )
        return record
    if args.mechanism == "minse":
        dist = minse(xi, prior, budget.eta, budget.tau)
    elif args.mechanism == "exponential":
        dist = _field("sizes", lambda: exponential_select(xi, budget.eta))
    else:
        if budget.alpha_prime is None:
            raise ConfigError("alpha_prime", "ada_minse needs --alpha-prime")
        dist = ada_minse(xi, prior, budget.alpha, budget.alpha_prime)
    reference = dist.prior if dist.prior is not None else prior.b
    record.update(
        p=dist.p,
        expected_size=dist.expected_size(xi),
        certificate={
            "prior": reference,
            "gamma": dist.gamma,
            "eta": dist.eta,
            "tau": dist.tau,
            "slack_used": certificate_slack(dist.p, reference, dist.eta),
        },
    )
    if args.mechanism == "ada_minse":
        record.update(gamma_star=dist.gamma, tau_star=dist.tau)
    return record


# --------------------------------------------------------------------------
# run


def _map_seeds(fn, seeds, threads: int, step: str):
    def guarded(seed):
        try:
            return fn(seed)
        except ConfigError:
            raise
        except Exception as err:  # reported with the seed that failed
            raise RunFailure(seed, step, err) from err

    if threads == 1:
        return [guarded(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, seeds))


def _theory(cfg: RunConfig, method: str) -> dict:
    p = cfg.params
    if cfg.scenario.kind == "worst_case_oracle" and method == "minse":
        return {"theoretical_miscoverage": min(1.0, math.exp(p.eta) / p.K + p.tau)}
    return {}


def cmd_run(cfg: RunConfig) -> dict:
    if cfg.scenario.kind == "arma_stream":
        raise ConfigError("scenario.kind", "arma_stream is online; use the 'online' command")
    rows = []
    summary: dict = {"scenario": cfg.scenario.kind, "seeds": len(cfg.seeds), "methods": {}}
    for method in cfg.methods:
        results = _map_seeds(lambda s: run_seed(cfg.scenario, method, s), cfg.seeds, cfg.threads, f"run_seed[{method}]")
        for r in results:
            rows.append([fmt(r.seed), method, cfg.scenario.kind, fmt(r.coverage), fmt(r.mean_length), fmt(r.n_test)])
        m = aggregate(results)
        entry = {
            "coverage": m.coverage,
            "coverage_se": m.coverage_se,
            "miscoverage": m.miscoverage,
            "mean_length": m.mean_length,
            "mean_length_se": m.mean_length_se,
            "n_test": m.n_test,
        }
        for k, v in m.extra.items():
            entry[k] = float(np.mean(v))
        entry.update(_theory(cfg, method))
        summary["methods"][method] = entry
    _write_csv(cfg.out_dir / cfg.per_seed_csv, PER_SEED_COLUMNS, rows)
    (cfg.out_dir / cfg.summary_json).write_text(_dump(summary) + "\n")
    return summary


# --------------------------------------------------------------------------
# online


def read_csv_dataset(path: Path) -> Dataset:
    """Header row, feature columns, label in the last column."""
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [[float(v) for v in row] for row in reader if row]
    except FileNotFoundError:
        raise ConfigError("data", f"no such file: {path}") from None
    except ValueError as err:
        raise ConfigError("data", f"non-numeric entry: {err}") from None
    if header is None or len(header) < 2:
        raise ConfigError("data", "need a header with at least one feature column and a label column")
    if not rows:
        return Dataset(np.empty((0, len(header) - 1)), np.empty(0))
    arr = np.array(rows)
    if arr.shape[1] != len(header):
        raise ConfigError("data", "rows do not match the header width")
    return Dataset(arr[:, :-1], arr[:, -1])


def cmd_online(cfg: RunConfig) -> dict:
    p = cfg.params
    stream = read_csv_dataset(cfg.data) if cfg.data is not None else None
    if stream is None and cfg.scenario.kind != "arma_stream":
        raise ConfigError("scenario.kind", "online runs need an arma_stream scenario or a data file")

    def one(seed):
        if stream is not None:
            return run_online_stream(stream.X, stream.y, p, np.random.default_rng(seed))
        return run_online_scenario(p, seed, cfg.noise_sd)

    runs = _map_seeds(one, cfg.seeds, cfg.threads, "online")
    rows = []
    per_method: dict[str, list[dict]] = {}
    for seed, run in zip(cfg.seeds, runs):
        for r in run.records:
            rows.append([fmt(seed), fmt(r.t), r.method, fmt(r.chosen), fmt(r.covered), fmt(r.length),
                         fmt_list(r.weights), fmt_list(r.p)])
        for method, s in run.summary().items():
            per_method.setdefault(method, []).append(s)
    _write_csv(cfg.out_dir / cfg.trace_csv, TRACE_COLUMNS, rows)

    summary: dict = {"seeds": len(cfg.seeds), "empty": not rows, "methods": {}}
    gamma = math.exp(p.eta)
    for method, items in per_method.items():
        cov = np.array([s["coverage"] for s in items])
        beta = float(np.mean([s["beta_hat"] for s in items]))
        entry = {
            "coverage": float(cov.mean()),
            "coverage_se": float(cov.std(ddof=1) / math.sqrt(cov.size)) if cov.size > 1 else math.nan,
            "mean_length": float(np.mean([s["mean_length"] for s in items])),
            "beta_hat": beta,
        }
        if method == "adacoma1":
            entry["coverage_bound"] = 1 - 2 * (beta * gamma + p.tau)
        elif method == "adacoma2":
            entry["coverage_bound"] = 1 - (beta * gamma + p.tau)
        elif method == "coma":
            entry["coverage_bound"] = 1 - 2 * beta
        summary["methods"][method] = entry
    (cfg.out_dir / cfg.summary_json).write_text(_dump(summary) + "\n")
    return summary


# --------------------------------------------------------------------------
# recalibrate


def cmd_recalibrate(cfg: RunConfig) -> dict:
    if cfg.data is None:
        raise ConfigError("data", "recalibrate needs a CSV data file")
    data = read_csv_dataset(cfg.data)
    n = len(data)
    sizes = {k: int(math.floor(cfg.split[k] * n)) for k in ("train", "cal", "aux")}
    if min(sizes.values()) < 1 or n - sum(sizes.values()) < 1:
        raise ConfigError("split", f"{n} rows are too few for the requested split")
    seed = cfg.seeds[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    a = sizes["train"]
    b = a + sizes["cal"]
    c = b + sizes["aux"]
    train, cal, aux, test = (data.take(perm[i:j]) for i, j in ((0, a), (a, b), (b, c), (c, n)))
    try:
        preds = base_predictors("zoo", train, cfg.params.K, rng, cfg.params.heterogeneous)
        res = recalibrate_split(preds, cal, aux, test.X, cfg.params, rng)
    except ValueError as err:
        if "exceeds m" in str(err):
            raise ConfigError("split.cal", str(err)) from None
        raise RunFailure(seed, "recalibrate", err) from err
    except Exception as err:
        raise RunFailure(seed, "recalibrate", err) from err
    covered = (res.lower <= test.y) & (test.y <= res.upper)
    rows = [
        [fmt(int(perm[c + i])), fmt(res.chosen[i]), fmt(res.rank), fmt(res.lower[i]), fmt(res.upper[i]),
         fmt(test.y[i]), fmt(covered[i])]
        for i in range(len(test))
    ]
    _write_csv(cfg.out_dir / cfg.sets_csv, SETS_COLUMNS, rows)
    summary = {
        "seed": seed,
        "n_train": len(train),
        "m": len(cal),
        "n_aux": len(aux),
        "n_test": len(test),
        "rank": res.rank,
        "coverage": float(covered.mean()),
        "mean_length": float((res.upper - res.lower).mean()),
        "selected_counts": np.bincount(res.chosen, minlength=cfg.params.K),
    }
    (cfg.out_dir / cfg.summary_json).write_text(_dump(summary) + "\n")
    return summary


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablecp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sel = sub.add_parser("select", help="run one selection mechanism on a size vector")
    sel.add_argument("--sizes", required=True, help="comma-separated set sizes")
    sel.add_argument("--prior", help="comma-separated prior (default uniform)")
    sel.add_argument("--mechanism", choices=("minse", "ada_minse", "exponential", "laplace"), default="minse")
    sel.add_argument("--eta", type=float)
    sel.add_argument("--gamma", type=float, help="exp(eta), alternative to --eta")
    sel.add_argument("--tau", type=float, default=0.0)
    sel.add_argument("--alpha", type=float, default=0.1)
    sel.add_argument("--alpha-prime", dest="alpha_prime", type=float)
    sel.add_argument("--scale", type=float, default=1.0, help="size normaliser L")
    sel.add_argument("--seed", type=int, default=0)

    for name, helptext in (
        ("run", "batch scenarios over seeds"),
        ("online", "COMA and AdaCOMA on a stream"),
        ("recalibrate", "effective-rank recalibration on CSV data"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="restart the seed sequence here")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="parallel seeds")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "select":
            print(_dump(cmd_select(args)))
            return EXIT_OK
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be a nonnegative integer")
            cfg = with_seed(cfg, args.seed)
        if args.out is not None:
            cfg.out_dir = Path(args.out)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads", "must be >= 1")
            cfg.threads = args.threads
        command = {"run": cmd_run, "online": cmd_online, "recalibrate": cmd_recalibrate}[args.command]
        print(_dump(command(cfg)))
        return EXIT_OK
    except ConfigError as err:
        print(f"stablecp {args.command}: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as err:
        print(f"stablecp {args.command}: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
