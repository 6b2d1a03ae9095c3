"""Regenerate src/gfk/data/golden.json with an M = 10^7 Monte Carlo run.

    python3 scripts/golden_sandwich.py [--M 10000000] [--seed 20240601]
"""
import argparse
import json
import time
from pathlib import Path

from gfk.golden import GOLDEN_SETUP, quadrature_middle, run_sandwich

OUT = Path(__file__).resolve().parents[1] / "src" / "gfk" / "data" / "golden.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--M", type=int, default=10_000_000)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    start = time.perf_counter()
    rep = run_sandwich(args.M, args.seed)
    wall = time.perf_counter() - start
    golden = {
        "setup": GOLDEN_SETUP,
        "M": args.M,
        "seed": args.seed,
        "outer": rep.outer,
        "middle": rep.middle,
        "std_error": rep.std_error,
        "ratio": rep.ratio,
        "ratio_std_error": rep.std_error / rep.outer,
        "band_half_width": 0.10,
        "quadrature_middle": quadrature_middle(),
        "wall_seconds": round(wall, 1),
    }
    args.out.write_text(json.dumps(golden, indent=2) + "\n")
    print(json.dumps(golden, indent=2))


if __name__ == "__main__":
    main()
