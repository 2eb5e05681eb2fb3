"""``rrcs-bench``: generate traces, replay schemes, run attacks, reproduce curves.

Exit codes: 0 success, 1 a checked property failed, 2 usage or I/O error.
Settings resolve as: built-in defaults < ``RRCS_SEED`` (seed only) <
``--config`` file < explicit flags.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from rrcs.attacker import (
    AttackScenario,
    exact_leak,
    random_target,
    run_lri_attack,
    theoretical_leak,
)
from rrcs.experiments import FIG8_SCHEMES, expected_min_threshold, expected_rrcs_duplicate_chunks, run_fig8
from rrcs.metrics import CSV_FIELDS
from rrcs.schemes import DET_PAD, RRCS, RTS_CHUNK, RTS_FILE, SCHEMES, SOURCE, TARGET, SchemeConfig, replay_trace
from rrcs.traces import PRESET_TARGETS, PRESETS, SynthParams, TraceFormatError, generate_trace, read_trace, write_trace

SEED_ENV = "RRCS_SEED"

# which scheme(s) each option is meaningful for
OPTION_SCOPE = {
    "lam": {RRCS},
    "d": {RTS_FILE, RTS_CHUNK},
    "det_pad_l": {DET_PAD},
    "redundancy_strategy": {RRCS, DET_PAD},
}

CONFIG_KEYS = {
    "scheme": str, "lambda": float, "lam": float, "d": int, "det_pad_l": int, "redundancy_strategy": str,
    "seed": int, "chunk_size_bytes": int,
    # scenario files
    "n_chunks": int, "target_bytes": int, "chunk_size": int, "sensitive_index": int, "m": int, "L": int,
    "appended_chunks": int, "trials": int, "correct_index": int,
}


class UsageError(Exception):
    pass


def load_config(path: str | Path) -> dict:
    """Read a flat ``key = value`` file (or a JSON object) into typed settings."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        raw = json.loads(text)
    else:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep "L" distinct from "l"
        parser.read_string("[config]\n" + text)
        raw = dict(parser["config"])
    out = {}
    for key, value in raw.items():
        key = key.strip().replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r} in {path}")
        out["lam" if key == "lambda" else key] = CONFIG_KEYS[key](value)
    return out


def _resolve(args: argparse.Namespace, defaults: dict, keys) -> tuple[dict, set]:
    """Merge defaults, environment, config file and flags; report which keys were set explicitly."""
    values = dict(defaults)
    if os.environ.get(SEED_ENV) and "seed" in values:
        values["seed"] = int(os.environ[SEED_ENV])
    explicit = set()
    if getattr(args, "config", None):
        from_file = load_config(args.config)
        values.update({k: v for k, v in from_file.items() if k in values})
        explicit |= {k for k in from_file if k in values}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
            explicit.add(k)
    return values, explicit


def _check_scope(schemes: list[str], explicit: set) -> None:
    for option, scope in OPTION_SCOPE.items():
        if option in explicit and not scope & set(schemes):
            flag = "--" + option.replace("_", "-")
            raise UsageError(f"{flag} has no effect on scheme(s) {', '.join(schemes)}")


def _write_csv(path: str | Path, rows: list[dict], fields) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str)
    if path:
        Path(path).write_text(text + "\n")


# -- gen ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    base = PRESETS[args.preset] if args.preset else SynthParams()
    overrides = {
        "n_users": args.n_users, "n_unique_files": args.n_unique, "copy_p": args.copy_p, "share_p": args.share_p,
        "mean_file_bytes": args.mean_file_bytes, "size_sigma": args.size_sigma,
        "chunk_size_bytes": args.chunk_size, "intra_file_similarity": args.similarity,
    }
    fields = {k: v for k, v in overrides.items() if v is not None}
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, base.seed))
    try:
        params = SynthParams(**{**base.__dict__, **fields, "seed": seed})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.events:
        params = params.with_events(args.events)
    gen = generate_trace(params)
    write_trace(args.output, gen.events)
    stats = gen.stats.to_dict()
    out = {"params": params.__dict__, "stats": stats, "generator_fractions": gen.generator_fractions}
    targets = PRESET_TARGETS.get(args.preset or "", {})
    if targets:
        out["calibration_delta"] = {k: stats[k] - v for k, v in targets.items()}
        off = {k: d for k, d in out["calibration_delta"].items() if abs(d) > 0.015 and k.startswith("frac")}
        if off:
            print(f"warning: calibration off target by more than 1.5 points: {off}", file=sys.stderr)
    if gen.stats.capped_files:
        print(f"warning: {gen.stats.capped_files} file(s) capped at n_users copies", file=sys.stderr)
    _dump(out, args.json)
    print(json.dumps(out, indent=2, default=str))
    return 0


# -- run ---------------------------------------------------------------------

def cmd_run(args) -> int:
    schemes = list(SCHEMES) if "all" in args.scheme else list(dict.fromkeys(args.scheme))
    defaults = {k: v for k, v in SchemeConfig().to_dict().items() if k not in ("scheme",)}
    values, explicit = _resolve(args, defaults, ("lam", "d", "det_pad_l", "redundancy_strategy", "seed",
                                                 "chunk_size_bytes"))
    _check_scope(schemes, explicit)
    try:
        trace = read_trace(args.trace)
    except FileNotFoundError:
        raise UsageError(f"trace file not found: {args.trace}")
    except TraceFormatError as exc:
        raise UsageError(f"{args.trace}: {exc}")
    if "chunk_size_bytes" not in explicit and trace:
        # pad chunks default to the trace's own chunk size
        values["chunk_size_bytes"] = max(c.size_bytes for ev in trace for c in ev.manifest.chunks)
    configs = []
    for s in schemes:
        try:
            configs.append(SchemeConfig(scheme=s, **values))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    reports = [replay_trace(trace, c) for c in configs]
    reports.sort(key=lambda r: (SchemeConfig(**r.config).key, r.seed))
    rows = [r.csv_row() for r in reports]
    if args.csv:
        _write_csv(args.csv, rows, CSV_FIELDS)
    _dump([r.to_dict(args.per_upload) for r in reports], args.json)
    for r in reports:
        re = "n/a" if r.re_ratio is None else f"{r.re_ratio:.4f}"
        print(f"{SchemeConfig(**r.config).key:<32} data={r.total_data_bytes:>14} "
              f"overhead={r.normalized_bandwidth_overhead:.4f} re={re}")

    by_scheme = {r.config["scheme"]: r.normalized_bandwidth_overhead for r in reports}
    if SOURCE in by_scheme and TARGET in by_scheme:
        lo, hi = by_scheme[SOURCE], by_scheme[TARGET]
        bad = [s for s, o in by_scheme.items() if not lo - 1e-12 <= o <= hi + 1e-12]
        if bad:
            print(f"ordering violated: {bad}", file=sys.stderr)
            return 1
    return 0


# -- attack ------------------------------------------------------------------

def cmd_attack(args) -> int:
    defaults = {"scheme": RRCS, "lam": 1.0, "d": 20, "det_pad_l": 1, "redundancy_strategy": "null-pad",
                "seed": 0, "chunk_size": 8192, "n_chunks": 100, "target_bytes": None, "sensitive_index": None,
                "m": 11, "L": 0, "trials": 1000, "correct_index": 0}
    keys = [k for k in defaults]
    values, explicit = _resolve(args, defaults, keys)
    _check_scope([values["scheme"]], explicit)
    if values["m"] < 2:
        raise UsageError("m must be >= 2")
    if values["trials"] < 1:
        raise UsageError("trials must be >= 1")
    cs = values["chunk_size"]
    n = -(-values["target_bytes"] // cs) if values["target_bytes"] else values["n_chunks"]
    sens = n // 2 if values["sensitive_index"] is None else values["sensitive_index"]
    try:
        config = SchemeConfig(values["scheme"], lam=values["lam"], d=values["d"], det_pad_l=values["det_pad_l"],
                              redundancy_strategy=values["redundancy_strategy"], seed=values["seed"],
                              chunk_size_bytes=cs)
        target = random_target(n, cs, np.random.default_rng([values["seed"], 1]))
        scenario = AttackScenario(target, sens, values["m"], values["correct_index"], values["L"], cs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    started = time.perf_counter()
    stats = run_lri_attack(scenario, config, values["trials"])
    report = {
        "scenario": scenario.describe(),
        "config": config.to_dict(),
        "trials": stats.trials,
        "identification_rate": stats.identification_rate,
        "stderr": stats.stderr,
        "guess_success_rate": stats.guess_success_rate,
        "exclusion_rate": stats.exclusion_rate,
        "mode_counts": stats.mode_counts,
        "runtime_s": time.perf_counter() - started,
    }
    line = f"identification_rate={stats.identification_rate:.6f} +/- {stats.stderr:.6f} (trials={stats.trials})"
    status = 0
    if config.scheme == RRCS and scenario.appended_chunks >= 1:
        theory = theoretical_leak(config.lam, n, scenario.appended_chunks, scenario.m)
        exact = float(exact_leak(config, n, scenario.appended_chunks, scenario.m))
        # binomial spread at the reference value, so a zero-variance sample still gets a band
        band = 3 * max(stats.stderr, math.sqrt(exact * (1 - exact) / stats.trials))
        report.update(theoretical_leak=theory, exact_leak=exact,
                      theory_pass=abs(stats.identification_rate - theory) <= 3 * max(
                          stats.stderr, math.sqrt(theory * (1 - theory) / stats.trials)),
                      exact_pass=abs(stats.identification_rate - exact) <= band)
        line += (f"  theory={theory:.6f} [{'PASS' if report['theory_pass'] else 'FAIL'}]"
                 f"  exact={exact:.6f} [{'PASS' if report['exact_pass'] else 'FAIL'}]")
        if args.strict and not report["exact_pass"]:
            status = 1
    print(line)
    _dump(report, args.json)
    return status


# -- fig8 --------------------------------------------------------------------

def cmd_fig8(args) -> int:
    schemes = args.schemes or list(FIG8_SCHEMES)
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, 0))
    try:
        result = run_fig8(args.file_size, args.chunk_size, args.k_max, args.seeds, schemes, args.lam, args.d, seed,
                          args.rts_threshold)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = result.rows()
    if args.csv:
        _write_csv(args.csv, rows, rows[0].keys())
    summary = {
        "file_size": result.file_size, "chunk_size": result.chunk_size, "n_chunks": result.n_chunks,
        "k_max": result.k_max, "seeds": result.seeds, "lam": result.lam, "d": result.d, "base_seed": seed,
    }
    if RRCS in schemes:
        mean, sem = result.duplicate_upload_chunks(RRCS)
        summary["rrcs_duplicate_upload_chunks"] = {
            "mean": mean, "sem": sem, "expected": float(expected_rrcs_duplicate_chunks(result.n_chunks, args.lam))}
    if RRCS in schemes and RTS_FILE in schemes:
        summary["crossover_k"] = result.crossover(RRCS, RTS_FILE)
        if args.rts_threshold is None:
            exp_rts = [result.n_chunks * float(expected_min_threshold(k, args.d)) for k in range(1, args.k_max + 1)]
            exp_rrcs = float(expected_rrcs_duplicate_chunks(result.n_chunks, args.lam))
            summary["expected_crossover_k"] = next(
                (k for k in range(1, args.k_max + 1) if result.n_chunks + exp_rrcs * (k - 1) > exp_rts[k - 1]), None)
    _dump(summary, args.json)
    print(json.dumps(summary, indent=2))
    return 0


# -- report-merge ------------------------------------------------------------

def cmd_report_merge(args) -> int:
    rows = []
    fields: list[str] = []
    for path in args.inputs:
        try:
            with open(path, newline="") as f:
                reader = csv.DictReader(f)
                for name in reader.fieldnames or ():
                    if name not in fields:
                        fields.append(name)
                rows.extend(reader)
        except FileNotFoundError:
            raise UsageError(f"report not found: {path}")
    rows.sort(key=lambda r: tuple(str(r.get(k, "")) for k in ("scheme_key", "seed")))
    if args.output:
        _write_csv(args.output, rows, fields)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rrcs-bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic trace")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--events", type=int, help="approximate number of upload events")
    g.add_argument("--n-users", type=int)
    g.add_argument("--n-unique", type=int)
    g.add_argument("--copy-p", type=float)
    g.add_argument("--share-p", type=float)
    g.add_argument("--mean-file-bytes", type=int)
    g.add_argument("--size-sigma", type=float)
    g.add_argument("--chunk-size", type=int)
    g.add_argument("--similarity", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--json", help="write parameters and stats here")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="replay a trace under one or more schemes")
    r.add_argument("trace")
    r.add_argument("--scheme", action="append", choices=list(SCHEMES) + ["all"], required=True)
    r.add_argument("--lam", "--lambda", dest="lam", type=float)
    r.add_argument("--d", type=int)
    r.add_argument("--det-pad-l", type=int)
    r.add_argument("--redundancy-strategy", choices=["null-pad", "duplicate-pick"])
    r.add_argument("--seed", type=int)
    r.add_argument("--chunk-size", dest="chunk_size_bytes", type=int)
    r.add_argument("--config")
    r.add_argument("--csv")
    r.add_argument("--json")
    r.add_argument("--per-upload", action="store_true", help="include per-upload byte counts in JSON")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("attack", help="run the candidate-file attack")
    a.add_argument("--scheme", choices=SCHEMES)
    a.add_argument("--lam", "--lambda", dest="lam", type=float)
    a.add_argument("--d", type=int)
    a.add_argument("--det-pad-l", type=int)
    a.add_argument("--redundancy-strategy", choices=["null-pad", "duplicate-pick"])
    a.add_argument("--n-chunks", type=int)
    a.add_argument("--target-bytes", type=int)
    a.add_argument("--chunk-size", type=int)
    a.add_argument("--sensitive-index", type=int)
    a.add_argument("--m", type=int)
    a.add_argument("--L", "--appended", dest="L", type=int)
    a.add_argument("--correct-index", type=int)
    a.add_argument("--trials", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--scenario", dest="config", help="scenario file (key = value)")
    a.add_argument("--strict", action="store_true", help="exit 1 when the estimate misses the exact value")
    a.add_argument("--json")
    a.set_defaults(func=cmd_attack)

    f = sub.add_parser("fig8", help="cumulative traffic of repeated uploads of one file")
    f.add_argument("--file-size", type=int, default=800_000)
    f.add_argument("--chunk-size", type=int, default=8_000)
    f.add_argument("--k-max", type=int, default=60)
    f.add_argument("--seeds", type=int, default=200)
    f.add_argument("--schemes", nargs="+", choices=SCHEMES)
    f.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.5)
    f.add_argument("--d", type=int, default=20)
    f.add_argument("--rts-threshold", type=int, help="pin every RTS threshold to this value")
    f.add_argument("--seed", type=int)
    f.add_argument("--csv")
    f.add_argument("--json")
    f.set_defaults(func=cmd_fig8)

    m = sub.add_parser("report-merge", help="merge CSV reports, sorted by scheme and seed")
    m.add_argument("inputs", nargs="+")
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_report_merge)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
