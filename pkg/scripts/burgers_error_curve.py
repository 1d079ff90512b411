"""Output error curves of AssM and MultM against the full Burgers model.

Usage: python3 scripts/burgers_error_curve.py [--N 400] [--out out/burgers_error_curve.csv]
Writes one row per output sample: t, y_full, err_assm, err_multm.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from qbmor.bench import burgers, burgers_case_generator, burgers_case_input
from qbmor.qb_model import galerkin_project
from qbmor.reduction import AssmConfig, assm_reduce, multm_reduce
from qbmor.simulate import IntegratorConfig, integrate

FREQS = (0.03, 0.22)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=400)
    ap.add_argument("--tol", type=float, default=4e-4)
    ap.add_argument("--t-end", type=float, default=10.0)
    ap.add_argument("--out", default="out/burgers_error_curve.csv")
    args = ap.parse_args(argv)
    S, T = burgers(args.N), burgers_case_generator(1)
    assm, _ = assm_reduce(S, T, AssmConfig(FREQS, 2, FREQS, 3, args.tol))
    multm = multm_reduce(S, FREQS, 3, 2)
    u, _ = burgers_case_input(1)
    cfg = IntegratorConfig(t_end=args.t_end)
    uu = lambda t: np.atleast_1d(u(t))
    full = integrate(S, cfg, u=uu)
    ys = {name: integrate(galerkin_project(S, b.V), cfg, u=uu).outputs[0] for name, b in (("assm", assm), ("multm", multm))}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "y_full", "err_assm", "err_multm"])
        for k, t in enumerate(full.times):
            y = full.outputs[0, k]
            w.writerow([f"{t:.10e}", f"{y:.10e}", f"{abs(y - ys['assm'][k]):.10e}", f"{abs(y - ys['multm'][k]):.10e}"])
    print(f"AssM n={assm.n} max err {np.abs(full.outputs[0] - ys['assm']).max():.3e}")
    print(f"MultM n={multm.n} max err {np.abs(full.outputs[0] - ys['multm']).max():.3e}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
