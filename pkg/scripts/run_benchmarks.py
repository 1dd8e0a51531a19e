#!/usr/bin/env python3
"""Run the benchmark configurations and print a summary table.

    python scripts/run_benchmarks.py                       # every config in scripts/configs
    python scripts/run_benchmarks.py sqrt_tensorized corner_peak_fixed_tree --trials 2
    python scripts/run_benchmarks.py --summarize-only      # re-read existing outputs
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from ttnsel.harness.experiment import load_config, run_experiment

HERE = Path(__file__).resolve().parent
CONFIGS = HERE / "configs"


def summarize(name: str, agg: dict, seconds: float | None = None) -> str:
    if not agg.get("trials_ok"):
        return f"| {name} | failed | | | | | |"
    t = "" if seconds is None else f"{seconds:.0f}"
    return (f"| {name} | {agg['trials_ok']} | {agg['mean_C_selected']:.1f} "
            f"| {agg['mean_excess_selected']:.2e} | {agg['mean_C_oracle']:.1f} "
            f"| {agg['mean_excess_oracle']:.2e} | {agg['excess_ratio']:.2f} | {t} |")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="config names (without .yaml); default: all")
    p.add_argument("--trials", type=int, help="override the number of trials")
    p.add_argument("--out-root", default="out", help="parent directory of the outputs")
    p.add_argument("--summarize-only", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    names = args.names or sorted(f.stem for f in CONFIGS.glob("*.yaml") if f.stem != "quick_sqrt")
    rows = ["| config | trials | E(C sel) | E(excess sel) | E(C oracle) | E(excess oracle) "
            "| ratio | seconds |", "|---|---|---|---|---|---|---|---|"]
    for name in names:
        cfg = load_config(CONFIGS / f"{name}.yaml")
        if args.trials:
            cfg.trials = args.trials
        out = Path(args.out_root) / name
        if args.summarize_only:
            sel = out / "selection.json"
            if not sel.exists():
                print(f"{name}: no outputs in {out}", file=sys.stderr)
                continue
            rows.append(summarize(name, json.loads(sel.read_text())["aggregates"]))
            continue
        t0 = time.perf_counter()
        report = run_experiment(cfg, out)
        rows.append(summarize(name, report.aggregates, time.perf_counter() - t0))
        print(rows[-1], flush=True)
    print("\n".join(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
