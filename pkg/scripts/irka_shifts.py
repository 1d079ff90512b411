"""Real IRKA shifts of the linear part of the RC ladder.

Usage: python3 scripts/irka_shifts.py [--size 500] [--count 4]
"""

import argparse
import sys

from qbmor.bench import rc_ladder
from qbmor.reduction import irka_frequencies


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=500)
    ap.add_argument("--count", type=int, default=4)
    args = ap.parse_args(argv)
    shifts = irka_frequencies(rc_ladder(args.size), args.count)
    print(", ".join(f"{s:.4g}" for s in shifts))
    return 0


if __name__ == "__main__":
    sys.exit(main())
