"""Fixed-point counts along H_lam = (1 - lam) H0 + lam H for the pendulum."""

import sys
from pathlib import Path

from twistorbits.cli import run
from twistorbits.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def cli(path=ROOT / "configs" / "pendulum.toml"):
    cfg = load_config(path, "lambda-sweep")
    report, timing = run(cfg, "lambda-sweep")
    print(f"{'lambda':>7} {'N':>4} {'count':>6} {'nondeg':>7} {'seconds':>8}")
    for row in report["lambda_sweep"]:
        lam = row["lambda"]
        print(f"{lam:7.2f} {row['N']:4d} {row['count']:6d} {row['nondegenerate_count']:7d} {timing[f'lambda={lam}']:8.1f}")


if __name__ == "__main__":
    cli(*sys.argv[1:])
