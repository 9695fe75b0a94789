"""Monte Carlo oracle run: simulate sessions with a known information value
and print the convergence diagnostics.

    python scripts/kyle_oracle.py --paths 20000 --steps 390 --seed 7
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from infoval.simulation import SimParams, oracle_report, summarize_paths


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=390)
    ap.add_argument("--sigma-v", type=float, default=1.0)
    ap.add_argument("--sigma-z", type=float, default=1.0)
    ap.add_argument("--sigma-w", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    params = SimParams(sigma_v=args.sigma_v, sigma_z=args.sigma_z,
                       sigma_w=args.sigma_w, n_steps=args.steps,
                       n_paths=args.paths, seed=args.seed)
    t0 = time.perf_counter()
    stats = summarize_paths(params, multiples=(1, 5, 10, 30) if args.steps % 30 == 0 else ())
    rep = oracle_report(stats)
    elapsed = time.perf_counter() - t0

    print(f"{args.paths} paths x {args.steps} steps in {elapsed:.1f}s")
    print(f"mean noise-trader loss       {rep['mean_noise_loss']:.6f} "
          f"(se {rep['se_noise_loss']:.6f})")
    if "oracle_value" in rep:
        print(f"closed-form value            {rep['oracle_value']:.6f} "
              f"(z = {rep['z_vs_oracle']:+.2f})")
    print(f"mean flow covariation        {rep['mean_omega_flow']:.6f}")
    print(f"mean own-impact (leakage)    {rep['mean_leakage']:.6f}")
    print(f"market-maker profit t-stat   {rep['mm_profit_tstat']:+.2f}")
    print(f"mean corr(dP, dY)            {rep['mean_corr_flow_price']:.3f}")
    print(f"worst identity error         {rep['max_identity_rel_err']:.2e}")
    for k, vals in sorted(stats.sweep_omega.items()):
        print(f"covariation at {k:2d}-step bars  {np.mean(vals):.6f}")
    print(f"checks: {rep['checks']}")
    return 0 if rep["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
