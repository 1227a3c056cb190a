"""Command-line entry point: ``dve generate | estimate | bench | report | presets``.

Exit codes: 0 success, 1 runtime error, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from dve import __version__
from dve.errors import (
    ConfigMismatch,
    DVEError,
    EmptySample,
    InvalidSpec,
    MissingSlice,
    UnknownPreset,
)
from dve.estimators import EstimateResult, EstimatorId, estimate_all
from dve.harness import (
    PRESETS,
    GridConfig,
    RecordStore,
    builtin_grid,
    load_config,
    resume,
    run_grid,
)
from dve.profile import FrequencyProfile, ZipfSpec, profile_from_values
from dve.sampler import random_master_seed
from dve.zipf import build_population, write_population

log = logging.getLogger("dve")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (InvalidSpec, EmptySample, UnknownPreset, ConfigMismatch, MissingSlice)
DEFAULT_2D_ESTIMATORS = "uj1,uj2,sj2,uj2a"


class UsageError(Exception):
    pass


def _emit(args, payload: dict, lines: Sequence[str]) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, default=float))
    else:
        for line in lines:
            print(line)


def _default_parallelism() -> int:
    raw = os.environ.get("DVE_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"DVE_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError("DVE_THREADS must be >= 1")
    return value


def _seed_or_random(seed: Optional[int]) -> int:
    return random_master_seed() if seed is None else seed


# -- generate ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    spec = ZipfSpec(args.n, args.alphabet, args.theta)
    pop = build_population(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "population.csv"
    meta = write_population(pop, csv_path, out / "population.json")
    payload = {**meta, "csv": str(csv_path), "seed": args.seed}
    _emit(args, payload, [
        f"wrote {csv_path} ({pop.D} classes)",
        f"D={meta['D']}",
        f"gamma_sq={meta['gamma_sq']!r}",
    ])
    return EXIT_OK


# -- estimate ---------------------------------------------------------------------


def read_values(path) -> FrequencyProfile:
    """Profile of a values file: one value per line, compared as raw bytes."""
    def lines():
        with open(path, "rb") as fh:
            for line in fh:
                if line.endswith(b"\n"):
                    line = line[:-1]
                    if line.endswith(b"\r"):
                        line = line[:-1]
                yield line
    return profile_from_values(lines())


def cmd_estimate(args) -> int:
    profile = read_values(args.input) if args.input else FrequencyProfile.read(args.profile)
    N = args.total
    if N < profile.n:
        raise InvalidSpec(f"--total {N} is smaller than the sample size n={profile.n}")
    q = args.q if args.q is not None else profile.n / N
    ids = EstimatorId.parse(args.estimator)
    results = estimate_all(profile, N, q, ids)

    payload = {"N": N, "q": q, "n": profile.n, "d": profile.d, "seed": args.seed, "estimates": {}}
    lines = [f"n={profile.n} d={profile.d} N={N} q={q!r}"]
    for eid, res in results.items():
        if isinstance(res, EstimateResult):
            payload["estimates"][eid.value] = {"estimate": res.estimate, "diagnostics": res.diagnostics}
            lines.append(f"{eid.value:<5} {res.estimate!r}")
        else:
            payload["estimates"][eid.value] = {"error": res.code, "message": str(res)}
            lines.append(f"{eid.value:<5} error: {res.code}: {res}")
    _emit(args, payload, lines)
    ok = any(isinstance(r, EstimateResult) for r in results.values())
    return EXIT_OK if ok else EXIT_RUNTIME


# -- bench -----------------------------------------------------------------------


def cmd_bench(args) -> int:
    config = builtin_grid(args.preset) if args.preset else load_config(args.config)
    store = RecordStore(args.out)
    seed = args.seed
    if seed is None and store.exists():
        seed = store.manifest()["config"]["master_seed"]
        log.info("reusing master seed %d from %s", seed, store.manifest_path)
    seed = _seed_or_random(seed)
    config = config.with_seed(seed)
    parallelism = args.parallelism or _default_parallelism()
    if store.exists():
        records = resume(config, store, parallelism=parallelism, timing=args.timing)
    else:
        records = run_grid(config, parallelism=parallelism, store=store, timing=args.timing)
    failures = sum(1 for r in records if r.estimate is None)
    payload = {
        "out": str(store.path),
        "seed": seed,
        "records": len(records),
        "expected_records": config.expected_records(),
        "failures": failures,
        "fingerprint": config.fingerprint,
    }
    _emit(args, payload, [
        f"seed={seed}",
        f"records={len(records)} (expected {config.expected_records()}), failed estimates={failures}",
        f"wrote {store.records_path} and {store.manifest_path}",
    ])
    return EXIT_OK


# -- report ----------------------------------------------------------------------


def cmd_report(args) -> int:
    from dve import report

    records = report.load_records(args.records)
    out = Path(args.out) if args.out else Path(args.records) / "report"
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    if args.kind == "2d":
        names = [e.value for e in EstimatorId.parse(args.estimator or DEFAULT_2D_ESTIMATORS)]
        qs = [args.q] if args.q is not None else sorted({r.q for r in records})
        for q in qs:
            path = report.emit_2d_grid(records, names, q, out / f"grid_q{q:g}.svg")
            written += [str(path), str(path.with_suffix(".csv"))]
    elif args.kind == "surface":
        for eid in EstimatorId.parse(args.estimator or "all"):
            surface = report.emit_bias_surface(records, eid.value, out)
            written += [str(p) for p in surface.csv_paths] + [str(surface.svg_path)]
    else:
        names = [e.value for e in EstimatorId.parse(args.estimator)] if args.estimator else None
        for paths in report.emit_tables(records, out, names).values():
            written += [str(p) for p in paths]
        if not args.json:
            print((out / "thresholds.txt").read_text(), end="")
    _emit(args, {"records": len(records), "seed": args.seed, "written": written},
          [f"wrote {len(written)} files under {out}"])
    return EXIT_OK


# -- presets ---------------------------------------------------------------------


def cmd_presets(args) -> int:
    payload, lines = {}, []
    for name in PRESETS:
        cfg: GridConfig = builtin_grid(name)
        regimes = cfg.scaled_regimes()
        payload[name] = {**cfg.to_dict(), "scaled_regimes": regimes,
                         "expected_records": cfg.expected_records()}
        lines.append(f"{name:<14} {len(regimes):>2} regimes, {cfg.expected_records():>6} records, "
                     f"N in {sorted({N for N, _ in regimes}, reverse=True)}")
    _emit(args, payload, lines)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--seed", type=int, default=None,
                        help="master seed (random and echoed when omitted)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dve", description="Sampling-based distinct value estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="materialise a Zipf population")
    p.add_argument("--n", type=int, required=True, help="population size N")
    p.add_argument("--alphabet", type=int, required=True, help="alphabet size A")
    p.add_argument("--theta", type=float, default=0.0, help="Zipf skew (default 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate", parents=[common], help="estimate D from a sample")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="values file, one value per line")
    src.add_argument("--profile", help="frequency profile (JSON or CSV)")
    p.add_argument("--total", type=int, required=True, help="population size N")
    p.add_argument("--q", type=float, default=None, help="sampling fraction (default n/N)")
    p.add_argument("--estimator", default="all", help="comma list or 'all'")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bench", parents=[common], help="run (or resume) an experiment grid")
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    grid.add_argument("--config", help="grid config JSON")
    p.add_argument("--out", required=True, help="record store directory")
    p.add_argument("--parallelism", type=int, default=None,
                   help="worker processes (default $DVE_THREADS or 1)")
    p.add_argument("--timing", action="store_true", help="record per-estimate wall time")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", parents=[common], help="emit figures and tables from records")
    p.add_argument("--records", required=True, help="record store directory")
    p.add_argument("--kind", choices=["2d", "surface", "tables"], required=True)
    p.add_argument("--estimator", default=None, help="comma list or 'all'")
    p.add_argument("--q", type=float, default=None, help="q slice for 2d grids (default: every q)")
    p.add_argument("--out", default=None, help="output directory (default <records>/report)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("presets", parents=[common], help="list built-in grids")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "parallelism", None) is not None and args.parallelism < 1:
            raise UsageError("--parallelism must be >= 1")
        return args.func(args)
    except (UsageError, *USAGE_ERRORS) as exc:
        print(f"dve {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DVEError, OSError, ValueError) as exc:
        print(f"dve {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
