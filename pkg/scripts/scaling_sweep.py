"""Monte Carlo scaling experiment: log10 mean escape time against 1/D at fixed e."""
import argparse
import math

from slowfast_escape import analysis, sde
from slowfast_escape.manifold import duffing

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--invD", type=float, nargs="+", default=[15, 18, 21, 24, 27])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--overshoot", type=float, default=0.0)
    args = ap.parse_args()
    cfg = sde.IntegratorConfig(overshoot=args.overshoot)
    pts = []
    for inv_d in args.invD:
        ens = sde.run_ensemble(duffing(epsilon=args.eps, noise_D=1 / inv_d), cfg, args.trials,
                               args.seed)
        pts.append((inv_d, math.log10(ens.mean_T)))
        print(f"1/D={inv_d:<5g} mean_T={ens.mean_T:10.2f} cv={ens.cv:.3f}", flush=True)
    fit = analysis.fit_scaling(pts)
    print(f"C_S = {fit.slope:.5f} +- {fit.slope_stderr:.5f}")
