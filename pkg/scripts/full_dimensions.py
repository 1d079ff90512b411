"""Reduced dimensions of the full-scale benchmark configs.

Usage: python3 scripts/full_dimensions.py [config ...] [--csv out.csv]
Without configs, all ``configs/full_*.ini`` files are run. Slow (minutes each).
"""

import argparse
import csv
import sys
import time
from pathlib import Path

from qbmor.bench import build
from qbmor.cli import load_config, run_reducer

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*")
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    paths = args.configs or sorted(str(p) for p in (ROOT / "configs").glob("full_*.ini"))
    rows = []
    for path in paths:
        cfg = load_config(path)
        S, T = build(cfg.benchmark)
        t0 = time.perf_counter()
        basis, info = run_reducer(S, T, cfg.reducer, cfg)
        dt = time.perf_counter() - t0
        parts = "/".join(str(info[k]) for k in ("n_a", "n_b", "n_1") if k in info)
        row = {"config": Path(path).stem, "N": S.N, "n": basis.n, "parts": parts, "seconds": round(dt, 1)}
        rows.append(row)
        print(f"{row['config']:32s} N={S.N:5d} n={basis.n:3d} {parts:10s} {dt:8.1f}s", flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
