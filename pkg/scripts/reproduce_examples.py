"""Oracle and toy-regression experiments: coverage and mean set size per method."""

import argparse
import math

from stablecp.experiments import Scenario, ScenarioParams, run_batch_scenario

ORACLE_METHODS = ("minse", "laplace", "exponential", "derandomized")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n-test", type=int, default=20_000)
    args = ap.parse_args()
    seeds = range(args.seeds)

    runs = [
        ("worst_case_oracle", ScenarioParams(K=5, eta=math.log(2), tau=0.05, n_test=args.n_test), ORACLE_METHODS),
        ("coin_flip", ScenarioParams(K=50, eta=2.0, tau=0.0, n_test=args.n_test), ORACLE_METHODS),
        (
            "toy_regression",
            ScenarioParams(K=2, alpha=0.05, eta=math.log(2), n_train=2000, m=1000, n_aux=0, n_test=args.n_test),
            ("minse", "single_model_baseline"),
        ),
    ]
    print(f"{'scenario':<20}{'method':<24}{'coverage':>10}{'se':>9}{'length':>10}")
    for kind, params, methods in runs:
        for method in methods:
            m = run_batch_scenario(Scenario(kind, params), method, seeds)
            print(f"{kind:<20}{method:<24}{m.coverage:>10.4f}{m.coverage_se:>9.4f}{m.mean_length:>10.4f}")


if __name__ == "__main__":
    main()
