"""Run every shipped configuration through the CLI and summarize the reports.

    python3 scripts/run_configs.py [--out results] [--only pendulum torus2]
"""

import argparse
import json
import time
from pathlib import Path

from twistorbits.cli import main

ROOT = Path(__file__).resolve().parent.parent
PLAN = {
    "pendulum": "census",
    "torus2": "census",
    "resonant13": "stability",
    "multi_resonance": "stability",
    "conformal": "decompose",
    "linking_standard": "linking",
}


def summarize(name, report):
    if "linking" in report:
        lk = report["linking"]
        return f"linked={lk['linking_satisfied']} sign={lk['uniform_sign']} fixed={len(report['fixed_points'])}"
    if "targets" in report:
        parts = []
        for t in report["targets"]:
            kinds = [o["classification"] for o in t["orbits"]]
            parts.append(f"(m={t['m']}, d={t['d']}): {t['count']} {kinds}")
        return "; ".join(parts)
    return f"N={report['decomposition']['N']}"


def cli():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*")
    args = ap.parse_args()
    for name, command in PLAN.items():
        if args.only and name not in args.only:
            continue
        out = Path(args.out) / name
        t0 = time.perf_counter()
        code = main(["--config", str(ROOT / "configs" / f"{name}.toml"), "--command", command, "--out", str(out)])
        if code:
            print(f"{name:18s} exit {code}")
            continue
        report = json.loads((out / "report.json").read_text())
        print(f"{name:18s} {time.perf_counter() - t0:6.1f}s  {summarize(name, report)}")


if __name__ == "__main__":
    cli()
