"""Bar-width robustness on simulated sessions: how the flow-covariation
estimate and its own-impact component move as the observation interval grows.

    python scripts/frequency_robustness.py --paths 20000 --steps 390
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from infoval.simulation import SimParams, simulate_batch, summarize_paths


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=390)
    ap.add_argument("--multiples", type=str, default="1,2,5,10,13,30,78")
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()
    multiples = [int(x) for x in args.multiples.split(",")]

    params = SimParams(sigma_v=1.0, sigma_z=1.0, n_steps=args.steps,
                       n_paths=args.paths, seed=args.seed)
    stats = summarize_paths(params, multiples=multiples)
    nl, se = np.mean(stats.noise_loss), np.std(stats.noise_loss, ddof=1) / np.sqrt(args.paths)
    print(f"true value of information (noise loss): {nl:.5f} +- {se:.5f}")
    print(f"{'bars':>6} {'covariation':>12} {'minus true':>11}")

    # own-impact and noise components at each width, from one shared batch
    batch = simulate_batch(SimParams(sigma_v=1.0, sigma_z=1.0, n_steps=args.steps,
                                     n_paths=min(args.paths, 4000), seed=args.seed))
    for k in multiples:
        om = np.mean(stats.sweep_omega[k])
        dp = np.diff(batch.prices[:, ::k], axis=1)
        dx = np.diff(batch.informed_flow[:, ::k], axis=1)
        leak = float(np.mean(np.sum(dp * dx, axis=1)))
        print(f"{k:>6} {om:>12.5f} {om - nl:>+11.5f}   own-impact {leak:+.5f}")
    print("\nevery width stays at or above the true value; the own-impact")
    print("term grows with the width while the informed trader's response")
    print("to within-bar noise pulls the covariation the other way.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
