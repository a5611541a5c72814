"""Write the reduced heteroclinic path (t, x, l1, y, l2) as CSV."""
import argparse
import sys

from slowfast_escape.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", default="0.1")
    ap.add_argument("-o", "--output", default="path.csv")
    args = ap.parse_args()
    sys.exit(main(["path", "--eps", args.eps, "--samples", "401", "-o", args.output]))
