"""Command line entry point: ``gfk solve|verify|sweep-truncation|list-scenarios``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .runner import StageError, run, run_sweep
from .scenarios import get_scenario, list_scenarios


def _load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _report(rep, out):
    for r in rep.results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.check}: {r.value:.6g} (tolerance {r.tolerance_text})", file=out)
    if rep.manifest.get("assumptions_violated"):
        for w in rep.manifest["warnings"]:
            print(f"warning: {w}", file=out)
    return rep.status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gfk", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="simulate, solve and write u_compare.csv (no checks)")
    p.add_argument("config")
    p = sub.add_parser("verify", help="solve and run the configured checks")
    p.add_argument("config")
    p = sub.add_parser("sweep-truncation", help="solve at several truncation levels")
    p.add_argument("config")
    p.add_argument("--levels", nargs="+", help="levels (numbers or 'auto'); default: config")
    sub.add_parser("list-scenarios", help="print the scenario registry")
    args = ap.parse_args(argv)

    if args.command == "list-scenarios":
        for name in list_scenarios():
            sc = get_scenario(name)
            flag = f" [violates {', '.join(sc.violates)}]" if sc.violates else ""
            print(f"{name}: {sc.description}{flag}")
        return 0
    try:
        cfg = _load(args.config)
        if args.command == "solve":
            rep = run(cfg, checks=())
        elif args.command == "verify":
            rep = run(cfg)
        else:
            levels = args.levels
            if levels is not None:
                for lv in levels:
                    if lv != "auto":
                        float(lv)
            rep = run_sweep(cfg, levels)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return _report(rep, sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
