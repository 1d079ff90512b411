"""Desk-scale reduction-quality experiments; writes a JSON summary.

Usage: python3 scripts/desk_quality.py [--out out/desk_quality.json]
"""

import argparse
import json
import sys
from pathlib import Path

from qbmor.desk import burgers_desk, burgers_forms, chafee_case_angles, rc_ordering


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/desk_quality.json")
    args = ap.parse_args(argv)
    res, _, _ = burgers_desk()
    summary = {
        "burgers_assm": {"n": res.n, "max_error": res.max_error},
        "burgers_forms": burgers_forms(),
        "rc_ordering": rc_ordering(),
        "chafee_case_angles": chafee_case_angles(),
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
