"""Experiment runner and command-line entry point.

    twistorbits --config run.toml --command census --out results --format json

``report.json`` (or ``orbits.csv``) depends only on the configuration and the
seed; wall-clock timings go to a separate ``timing.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .action import OrbitSequence, find_critical
from .config import COMMANDS, LAMBDA_GRID, ExperimentConfig, load_config
from .dynamics import blend
from .errors import ConfigError, InvalidInputError, TwistOrbitError
from .stability import classify, cross_validate, monodromy
from .twist import decompose

log = logging.getLogger("twistorbits")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _floats(a):
    return [float(x) for x in np.asarray(a).ravel()]


def closing_error(seq: OrbitSequence) -> float:
    """``max |F^d(z0) - z0 - (m, 0)|`` through the one-piece time-one map."""
    from .dynamics import time_one_map

    H = seq.decomposition.hamiltonian
    z = seq.phase_point()
    q, p = z.q[None, :], z.p[None, :]
    for _ in range(seq.d):
        q, p, _ = time_one_map(H, q, p)
    return float(max(np.max(np.abs(q[0] - z.q - seq.m)), np.max(np.abs(p[0] - z.p))))


def orbit_record(seq: OrbitSequence, pairing_tol=1e-4) -> dict:
    cv = cross_validate(seq, tol=pairing_tol)
    rec = {
        "m": [int(v) for v in seq.m],
        "d": seq.d,
        "W": float(seq.action),
        "residual": float(seq.residual),
        "entries": [_floats(row) for row in np.mod(seq.q, 1.0)],
        "momenta": [_floats(row) for row in seq.p],
        "closing_error": closing_error(seq),
        "floquet": cv.via_M.to_dict(),
        "floquet_monodromy": cv.monodromy.to_dict(),
        "cross_validation": cv.to_dict(),
        "classification": classify(cv.monodromy.multipliers),
        "nondegenerate": cv.via_M.nondegenerate,
        "det_monodromy": float(np.linalg.det(monodromy(seq))),
    }
    return rec


def _search(cfg: ExperimentConfig, decomp, targets, rng):
    out = []
    for m, d in targets:
        orbits = find_critical(
            decomp, m, d, grid=cfg.search.grid, jitter=cfg.search.jitter, rng=rng,
            tol=cfg.tolerances.critical, threads=cfg.threads,
        )
        out.append({
            "m": list(m),
            "d": d,
            "count": len(orbits),
            "orbits": [orbit_record(s, cfg.tolerances.pairing) for s in orbits],
        })
    return out


def _rng(cfg):
    # Philox is counter based: the stream is fixed by the 64-bit key alone
    return np.random.Generator(np.random.Philox(key=cfg.seed))


def run(cfg: ExperimentConfig, command: str) -> tuple[dict, dict]:
    """Execute ``command``; returns ``(report, timing)``."""
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {COMMANDS}, got {command!r}")
    timing = {}
    report = {
        "tool": "twistorbits",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.echo(),
    }
    t0 = time.perf_counter()
    if command == "linking":
        from .linking import fixed_points_via_diagonal, linking_condition

        lk = cfg.linking
        F = cfg.build_linking_map()
        rep = linking_condition(F, lk.C, lk.q_grid, lk.p_grid)
        report["linking"] = rep.to_dict()
        report["fixed_points"] = (
            [{"q": _floats(q), "p": _floats(p)} for q, p in fixed_points_via_diagonal(F, lk.C, report=rep)]
            if rep.linking_satisfied else []
        )
        timing["total"] = time.perf_counter() - t0
        return report, timing

    H = cfg.build_hamiltonian()
    rng = _rng(cfg)
    if command == "lambda-sweep":
        sweep = []
        zero = tuple((m, d) for m, d in cfg.search.targets if not any(m)) or (((0,) * H.n, 1),)
        for lam in LAMBDA_GRID:
            ts = time.perf_counter()
            decomp = decompose(blend(H, lam), cfg.search.N, cfg.search.mode)
            res = _search(cfg, decomp, zero[:1], rng)[0]
            sweep.append({
                "lambda": lam,
                "N": decomp.N,
                "count": res["count"],
                "nondegenerate_count": sum(o["nondegenerate"] for o in res["orbits"]),
                "orbits": res["orbits"],
            })
            timing[f"lambda={lam}"] = time.perf_counter() - ts
        report["lambda_sweep"] = sweep
        timing["total"] = time.perf_counter() - t0
        return report, timing

    decomp = decompose(H, cfg.search.N, cfg.search.mode)
    timing["decompose"] = time.perf_counter() - t0
    report["decomposition"] = decomp.summary()
    if command == "decompose":
        timing["total"] = time.perf_counter() - t0
        return report, timing
    if command == "census":
        targets = (((0,) * H.n, 1),)
    else:
        targets = cfg.search.targets
    ts = time.perf_counter()
    report["targets"] = _search(cfg, decomp, targets, rng)
    timing["search"] = time.perf_counter() - ts
    if command == "stability":
        report["stability_table"] = [
            {
                "m": t["m"],
                "d": t["d"],
                "W": o["W"],
                "classification": o["classification"],
                "nondegenerate": o["nondegenerate"],
                "max_relative_error": o["cross_validation"]["max_relative_error"],
                "kernel_agrees": o["cross_validation"]["kernel_dim_hessian"]
                == o["cross_validation"]["eigen_multiplicity_at_1"],
            }
            for t in report["targets"]
            for o in t["orbits"]
        ]
    timing["total"] = time.perf_counter() - t0
    return report, timing


def _orbits(report):
    if "targets" in report:
        return [o for t in report["targets"] for o in t["orbits"]]
    if "lambda_sweep" in report:
        return [o for s in report["lambda_sweep"] for o in s["orbits"]]
    return []


def _fmt(x) -> str:
    return format(float(x), ".17g")


def csv_header(n: int) -> list:
    cols = ["m", "d", "W", "residual"]
    for i in range(2 * n):
        cols += [f"mult{i}_re", f"mult{i}_im"]
    return cols + ["nondegenerate"]


def csv_rows(report, n):
    rows = []
    for o in _orbits(report):
        row = [";".join(str(v) for v in o["m"]), str(o["d"]), _fmt(o["W"]), _fmt(o["residual"])]
        mults = o["floquet"]["multipliers"]
        for i in range(2 * n):
            re, im = mults[i] if i < len(mults) else (float("nan"), float("nan"))
            row += [_fmt(re), _fmt(im)]
        row.append("true" if o["nondegenerate"] else "false")
        rows.append(row)
    return rows


def emit(report: dict, out_dir, fmt="json", timing: dict | None = None) -> Path:
    """Write ``report.json`` or ``orbits.csv`` (plus ``timing.json``) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / "report.json"
        path.write_text(json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n")
    elif fmt == "csv":
        metric = report["config"].get("metric") or {}
        n = metric.get("n") or 1
        path = out / "orbits.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(csv_header(n))
            w.writerows(csv_rows(report, n))
    else:
        raise InvalidInputError(f"unknown format {fmt!r}")
    if timing is not None:
        (out / "timing.json").write_text(json.dumps(timing, sort_keys=True, indent=1) + "\n")
    return path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twistorbits", description="Periodic orbits via discrete action on twist decompositions.")
    ap.add_argument("--config", required=True, help="TOML experiment configuration")
    ap.add_argument("--command", required=True, choices=COMMANDS)
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--format", choices=("json", "csv"), help="overrides output.format")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit RNG seed (overrides run.seed)")
    ap.add_argument("--threads", type=int, help="worker threads for the multi-start search")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads", "must be >= 1")
            cfg = replace(cfg, threads=args.threads)
        if args.out:
            cfg = replace(cfg, out=args.out)
        if args.format:
            cfg = replace(cfg, format=args.format)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        report, timing = run(cfg, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TwistOrbitError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = emit(report, cfg.out, cfg.format, timing)
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
