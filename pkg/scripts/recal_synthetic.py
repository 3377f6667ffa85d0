"""Recalibrated selection against the stability-based methods on sin regression."""

import argparse

from stablecp.experiments import Scenario, ScenarioParams, run_batch_scenario

METHODS = ("single_model_baseline", "minse", "ada_minse", "laplace", "exponential", "derandomized", "recalibrated")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--K", type=int, default=5)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--alpha-prime", type=float, default=0.05)
    args = ap.parse_args()

    params = ScenarioParams(
        K=args.K, d=10, m=400, n_aux=200, n_train=1000, n_test=1000, alpha=0.1, eta=args.eta, alpha_prime=args.alpha_prime
    )
    sc = Scenario("sin_regression", params)
    print(f"{'method':<24}{'coverage':>10}{'se':>9}{'length':>10}{'se':>9}")
    for method in METHODS:
        m = run_batch_scenario(sc, method, range(args.seeds))
        print(f"{method:<24}{m.coverage:>10.4f}{m.coverage_se:>9.4f}{m.mean_length:>10.4f}{m.mean_length_se:>9.4f}")


if __name__ == "__main__":
    main()
