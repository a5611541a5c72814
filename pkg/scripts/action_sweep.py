"""Sweep e, print the numerically realized action and the fitted e^2 coefficient."""
import argparse

from slowfast_escape.manifold import BUILTIN_MODELS
from slowfast_escape.path import action_series, eps2_coefficient, reduced_heteroclinic

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=sorted(BUILTIN_MODELS), default="duffing")
    ap.add_argument("--eps", type=float, nargs="+", default=[0.02, 0.05, 0.1, 0.15, 0.2])
    args = ap.parse_args()
    model = BUILTIN_MODELS[args.model]()
    print("exact series:", action_series(model, order=3))
    for eps in args.eps:
        sol = reduced_heteroclinic(model, None, eps)
        print(f"eps={eps:<6g} R={sol.action:.10f}")
    print("fitted e^2 coefficient:", eps2_coefficient(model, eps_grid=tuple(args.eps)))
