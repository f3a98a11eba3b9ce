"""Run every config in configs/ through the CLI runner; one output directory per config."""

import argparse
import sys
import time
from pathlib import Path

import yaml

from seqrpf.cli import run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "runs"))
    ap.add_argument("--only", nargs="*", help="config stems to run")
    ap.add_argument("--no-plots", action="store_true")
    args = ap.parse_args()
    failed = []
    for path in sorted((ROOT / "configs").glob("*.yaml")):
        if args.only and path.stem not in args.only:
            continue
        kind = yaml.safe_load(path.read_text())["kind"]
        t0 = time.perf_counter()
        try:
            m = run_experiment(kind, path, Path(args.out) / path.stem, plots=not args.no_plots)
            print(f"{path.stem:32s} {kind:20s} ok   {time.perf_counter() - t0:6.1f}s  {len(m.files)} files")
        except Exception as exc:  # keep going; report at the end
            failed.append(path.stem)
            print(f"{path.stem:32s} {kind:20s} FAIL {type(exc).__name__}: {exc}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
