"""Command-line front door: run, compare-discovery, emit-tables, sweep."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigInvalid, ScenarioConfig, load_config
from .discovery import Strategy, compute_metrics
from .engine import Simulation, benchmark_discovery, run_scenario
from .transport import DEFAULT_T_GRID, measure_throughput

log = logging.getLogger("cloudmanet")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
TABLE_COUNTS = (5, 10, 50)


class UsageError(Exception):
    pass


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def parse_list(text: str, kind=float) -> list:
    try:
        out = [kind(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None
    if not out:
        raise UsageError(f"empty list {text!r}")
    return out


def parse_range(spec: str) -> tuple[str, list]:
    """``key=a,b,c`` or ``key=start:stop:step`` (stop inclusive)."""
    key, sep, rhs = spec.partition("=")
    if not sep or not key or not rhs:
        raise UsageError(f"--param expects key=range, got {spec!r}")
    kind = float if any(c in rhs for c in ".eE") else int
    if ":" in rhs:
        parts = rhs.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be start:stop:step, got {rhs!r}")
        try:
            start, stop, step = (kind(p) for p in parts)
        except ValueError:
            raise UsageError(f"cannot parse range {rhs!r}") from None
        if step <= 0 or stop < start:
            raise UsageError(f"empty range {rhs!r}")
        values, k = [], 0
        while start + k * step <= stop + (1e-9 if kind is float else 0):
            values.append(start + k * step)
            k += 1
        return key, values
    return key, parse_list(rhs, kind)


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    report = run_scenario(cfg, journal=args.journal)
    write_atomic(args.out, report.to_json())
    log.info("wrote %s (%d samples)", args.out, len(report.samples))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    results = benchmark_discovery(cfg, args.trials)
    rows = []
    for s in Strategy:
        if s in results:
            m = compute_metrics(results[s])
            rows.append((s.value.upper(), m.avg_path_length, m.avg_stretch, m.success_rate))
    write_atomic(args.out, to_csv(("strategy", "avg_path_length", "avg_stretch", "success_rate"), rows))
    return EXIT_OK


def table_header(t_grid) -> list[str]:
    return ["devices", *(f"t={t}" for t in t_grid)]


def cmd_tables(args) -> int:
    cfg = _load(args)
    speeds = parse_list(args.speeds)
    counts = parse_list(args.counts, int)
    t_grid = parse_list(args.t_grid)
    samples = measure_throughput(cfg, counts, speeds, t_grid, jobs=args.jobs)
    out_dir = Path(args.out_dir)
    for speed in speeds:
        rows = [
            [count, *(s.value for s in samples if s.speed == speed and s.device_count == count)]
            for count in counts
        ]
        path = out_dir / f"throughput_{speed:g}mps.csv"
        write_atomic(path, to_csv(table_header(t_grid), rows))
        log.info("wrote %s", path)
    return EXIT_OK


def _sweep_point(cfg: ScenarioConfig) -> dict:
    sim = Simulation(cfg)
    report = sim.run()
    links = [s["active_links"] for s in report.samples]
    return {
        "delivered_messages": report.throughput["delivered_messages"],
        "dropped_messages": report.throughput["dropped_messages"],
        "throughput_mbps": report.throughput["mbps_per_load"],
        "mean_active_links": sum(links) / len(links) if links else 0.0,
    }


def cmd_sweep(args) -> int:
    cfg = _load(args)
    key, values = parse_range(args.param)
    cfgs = [cfg.replace(**{key: v}) for v in values]
    jobs = args.jobs or os.cpu_count() or 1
    if jobs == 1:
        points = [_sweep_point(c) for c in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_sweep_point, cfgs))
    cols = ["delivered_messages", "dropped_messages", "throughput_mbps", "mean_active_links"]
    text = to_csv([key, *cols], [[v, *(p[c] for c in cols)] for v, p in zip(values, points)])
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cloudmanet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def u64(text):
        v = int(text)
        if not 0 <= v < 2**64:
            raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
        return v

    r = sub.add_parser("run", help="run one scenario and write a JSON report")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=u64)
    r.add_argument("--out", required=True)
    r.add_argument("--journal", help="append relayed messages to this JSONL file")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare-discovery", help="PBM vs HMM vs GM path statistics as CSV")
    c.add_argument("--config", required=True)
    c.add_argument("--trials", type=int, required=True)
    c.add_argument("--seed", type=u64)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("emit-tables", help="one throughput CSV per speed")
    t.add_argument("--config", required=True)
    t.add_argument("--speeds", required=True, help="comma list, m/s")
    t.add_argument("--counts", default=",".join(map(str, TABLE_COUNTS)))
    t.add_argument("--t-grid", default=",".join(map(str, DEFAULT_T_GRID)))
    t.add_argument("--seed", type=u64)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical CPUs)")
    t.set_defaults(func=cmd_tables)

    s = sub.add_parser("sweep", help="vary one config key and summarise each run as CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, help="key=a,b,c or key=start:stop:step")
    s.add_argument("--seed", type=u64)
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=None)
    s.set_defaults(func=cmd_sweep)
    return p


def _setup_logging() -> None:
    level = os.environ.get("CMS_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    if level not in ("ERROR", "WARNING", "INFO", "DEBUG"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def execute(argv: list[str] | None = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigInvalid, UsageError) as exc:
        print(f"cloudmanet: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("scenario failure", exc_info=True)
        print(f"cloudmanet: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(execute())
