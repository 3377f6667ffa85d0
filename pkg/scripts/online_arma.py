"""COMA and AdaCOMA on an ARMA(1,1) stream, averaged over seeds."""

import argparse
import math

import numpy as np

from stablecp.experiments import ScenarioParams, run_online_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--T", type=int, default=10_000)
    args = ap.parse_args()

    eta, alpha_prime = math.log(1.5), 0.05
    params = ScenarioParams(
        K=3, T=args.T, alpha=0.1, eta=eta, tau=0.1 - alpha_prime * math.exp(eta), alpha_prime=alpha_prime
    )
    rows: dict[str, list[tuple[float, float]]] = {}
    for seed in range(args.seeds):
        for method, s in run_online_scenario(params, seed).summary().items():
            rows.setdefault(method, []).append((s["coverage"], s["mean_length"]))
    print(f"{'method':<12}{'coverage':>10}{'length':>10}")
    for method, vals in rows.items():
        cov, length = np.mean(vals, axis=0)
        print(f"{method:<12}{cov:>10.4f}{length:>10.4f}")


if __name__ == "__main__":
    main()
