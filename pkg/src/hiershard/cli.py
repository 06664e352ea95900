"""Command-line entry point: ``hiershard {run,compare,replay,check}``.

Machine-readable output goes to stdout as one JSON record per line; the
human summary goes to stderr. Exit codes: 0 ok, 1 safety violation or trace
divergence, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .core import Scheme
from .experiment import (
    CompareError,
    ConfigError,
    ExperimentConfig,
    compare_reports,
    load_config,
    replay_trace,
    run_experiment,
)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2

PLOT_FIELDS = ("scheme", "scheduling", "zones", "global_ratio", "seed", "throughput_tps",
               "latency_p50_ms", "abort_ratio", "mean_processing_ms", "storage_total")


def _emit(record: dict, out) -> None:
    out.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "scheme", None):
        kw["scheme"] = Scheme(args.scheme)
    if getattr(args, "no_sched", False):
        kw["scheduling"] = False
    return cfg.replace(**kw) if kw else cfg


def _summary(rep, violations: dict) -> str:
    bad = {k: len(v) for k, v in violations.items() if v}
    lat = rep.latency_ms.get("p50")
    lines = [
        f"{rep.scheme} sched={'on' if rep.scheduling else 'off'} zones={rep.zones} seed={rep.seed}",
        f"  submitted {rep.submitted}  committed {rep.committed}  aborted {rep.aborted}"
        f"  rejected {rep.rejected}  unresolved {rep.unresolved}",
        f"  throughput {rep.throughput_tps:.1f} tx/s  p50 latency "
        + (f"{lat:.1f} ms" if lat is not None else "n/a")
        + f"  abort ratio {rep.abort_ratio:.4f}",
        f"  main blocks {rep.main_blocks}  view changes {rep.view_changes}  storage {rep.storage_total} B",
        "  invariants: " + ("all hold" if not bad else ", ".join(f"{k}={n}" for k, n in sorted(bad.items()))),
    ]
    return "\n".join(lines)


def _plot_row(cfg: ExperimentConfig, rep) -> dict:
    return {
        "scheme": rep.scheme, "scheduling": rep.scheduling, "zones": rep.zones,
        "global_ratio": cfg.workload.global_ratio, "seed": rep.seed,
        "throughput_tps": rep.throughput_tps, "latency_p50_ms": rep.latency_ms.get("p50"),
        "abort_ratio": rep.abort_ratio, "mean_processing_ms": rep.mean_processing_ms,
        "storage_total": rep.storage_total,
    }


def _write_csv(path: Path, rows) -> None:
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PLOT_FIELDS)
        if new:
            w.writeheader()
        w.writerows(rows)


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    run = run_experiment(cfg, trace_path=args.trace)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        _emit({"record": "report", **run.report.as_dict()}, out)
        _emit({"record": "violations", **{k: v[:20] for k, v in sorted(run.violations.items())}}, out)
    finally:
        if args.out:
            out.close()
    if args.csv:
        _write_csv(Path(args.csv), [_plot_row(cfg, run.report)])
    _say(_summary(run.report, run.violations))
    return EXIT_VIOLATION if any(run.violations.values()) else EXIT_OK


def _read_report(path) -> dict:
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            if rec.get("record", "report") == "report":
                return rec
    raise ConfigError(f"{path}: no report record")


def cmd_compare(args) -> int:
    a, b = _read_report(args.a), _read_report(args.b)
    table = compare_reports(a, b)
    _emit({"record": "comparison", **table}, sys.stdout)
    _say(f"{table['b']} relative to {table['a']}")
    for key, row in table["rows"].items():
        ratio = "n/a" if row["ratio"] is None else f"{row['ratio']:.3f}"
        _say(f"  {key:<20} {row['a']!s:>14} {row['b']!s:>14}  x{ratio} {row['direction']}")
    return EXIT_OK


def cmd_replay(args) -> int:
    res = replay_trace(args.trace)
    _emit({"record": "replay", "lines": res.lines, "matched": res.matched,
           "first_divergence": res.first_divergence, "expected": res.expected, "got": res.got,
           "trace_digest": res.run.report.trace_digest}, sys.stdout)
    if res.matched:
        _say(f"replay matched all {res.lines} trace lines")
    else:
        _say(f"replay diverged at line {res.first_divergence}:\n  recorded {res.expected}\n  replayed {res.got}")
    _say(_summary(res.run.report, res.run.violations))
    return EXIT_OK if res.matched and not any(res.run.violations.values()) else EXIT_VIOLATION


def cmd_check(args) -> int:
    base = _apply_overrides(load_config(args.config), args)
    failed = 0
    for seed in range(args.start, args.start + args.seeds):
        run = run_experiment(base.replace(seed=seed))
        bad = {k: v[:5] for k, v in sorted(run.violations.items()) if v}
        failed += bool(bad)
        _emit({"record": "check", "seed": seed, "ok": not bad, "violations": bad,
               "view_changes": run.report.view_changes, "unresolved": run.report.unresolved}, sys.stdout)
        if bad:
            _say(f"seed {seed}: " + ", ".join(f"{k}: {v[0]}" for k, v in bad.items()))
    _say(f"{args.seeds - failed}/{args.seeds} seeds passed every invariant")
    return EXIT_VIOLATION if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hiershard", description="Hierarchical sharded blockchain simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def overrides(sp):
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--scheme", choices=[s.value for s in Scheme], help="override the sharding scheme")
        sp.add_argument("--no-sched", action="store_true", help="disable main-block scheduling")

    r = sub.add_parser("run", help="run one experiment and print its report")
    r.add_argument("config", help="TOML experiment config")
    overrides(r)
    r.add_argument("--trace", help="write the delivered-event trace here")
    r.add_argument("--out", help="write report records here instead of stdout")
    r.add_argument("--csv", help="append a plot-data row to this CSV")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("compare", help="ratio table between two reports of the same workload")
    c.add_argument("a")
    c.add_argument("b")
    c.set_defaults(fn=cmd_compare)

    rp = sub.add_parser("replay", help="re-run a recorded trace and compare event by event")
    rp.add_argument("trace")
    rp.set_defaults(fn=cmd_replay)

    ck = sub.add_parser("check", help="run the safety-invariant suite over a range of seeds")
    ck.add_argument("config")
    overrides(ck)
    ck.add_argument("--seeds", type=int, default=10)
    ck.add_argument("--start", type=int, default=0)
    ck.set_defaults(fn=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CompareError, FileNotFoundError, json.JSONDecodeError) as exc:
        _say(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
