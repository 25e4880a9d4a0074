"""Command-line entry point for the experiment lifecycle and post-processing.

Subcommands mirror the lifecycle scripts and analysis tools: ``run``,
``console``, ``stop``, ``reset`` drive experiments; ``csv``,
``merge``, ``kml``, ``plot`` post-process logs; ``validate`` checks a
config and ``convert-plan`` turns a QGroundControl mission into the
native flight-plan format. Exit status is 0 on success, 1 on
validation or runtime failure, 2 when a csv conversion skipped
malformed lines.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import socket
import sys
from pathlib import Path

from . import flightsim, orchestrator, postproc
from .config import ConfigInvalid, load_experiment_config
from .geodesy import GeoPosition


def _default_out(config_name: str) -> Path:
    root = os.environ.get("AEROTWIN_OUT", "runs")
    return Path(root) / config_name


def _parse_ref(text: str) -> GeoPosition:
    parts = text.split(",")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError("expected lat,lon[,alt]")
    try:
        lat, lon = float(parts[0]), float(parts[1])
        alt = float(parts[2]) if len(parts) == 3 else 0.0
        return GeoPosition(lat, lon, alt)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _load_commands(path: str) -> list[tuple[float, str]]:
    entries: list[tuple[float, str]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            t_text, cmd = line.split(None, 1)
            entries.append((float(t_text), cmd))
        except ValueError as exc:
            raise ConfigInvalid(f"{path}:{lineno}: expected '<t_s> <COMMAND>'") from exc
    return entries


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.duration is not None:
        cfg = dataclasses.replace(cfg, duration_s=args.duration)
    out = Path(args.out) if args.out else Path(cfg.output_dir or _default_out(cfg.name))
    commands = _load_commands(args.commands) if args.commands else []
    console_port = args.console_port if args.realtime else None
    result = orchestrator.run_experiment(
        cfg, out, commands=commands, realtime=args.realtime, console_port=console_port
    )
    print(f"run {result.end_reason}: {len(result.log_files)} log files in {result.run_dir}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_experiment_config(args.config)
    print(f"config OK: {cfg.name}, {len(cfg.nodes)} nodes, "
          f"{len(cfg.flight_plan.waypoints)} waypoints, seed {cfg.seed}")
    return 0


def _console_port_for(out: Path) -> int:
    port_file = out / "console.port"
    if not port_file.exists():
        raise orchestrator.NotRunning(f"no console.port in {out}")
    return int(port_file.read_text().strip())


def _send_console_line(port: int, line: str) -> str:
    with socket.create_connection(("127.0.0.1", port), timeout=5.0) as conn:
        fh = conn.makefile("rw", encoding="utf-8", newline="\n")
        fh.write(line + "\n")
        fh.flush()
        reply = fh.readline().strip()
    return reply


def _cmd_stop(args: argparse.Namespace) -> int:
    out = Path(args.out)
    try:
        port = _console_port_for(out)
        reply = _send_console_line(port, "STOP")
    except (OSError, ValueError) as exc:
        raise orchestrator.NotRunning(f"no run answering in {out}: {exc}") from exc
    print(reply)
    return 0 if reply.startswith("OK") else 1


def _cmd_reset(args: argparse.Namespace) -> int:
    orchestrator.reset_experiment(args.out, archive=args.archive)
    print(f"reset {args.out}")
    return 0


def _cmd_console(args: argparse.Namespace) -> int:
    port = args.port if args.port else _console_port_for(Path(args.out))
    print(f"connected to console on port {port}; one command per line, Ctrl-D to quit",
          file=sys.stderr)
    with socket.create_connection(("127.0.0.1", port), timeout=30.0) as conn:
        fh = conn.makefile("rw", encoding="utf-8", newline="\n")
        for line in sys.stdin:
            line = line.strip()
            if not line:
                continue
            fh.write(line + "\n")
            fh.flush()
            print(fh.readline().strip())
    return 0


def _cmd_csv(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    partial = False
    for log in args.logs:
        table, bad = postproc.logs_to_csv(log)
        for issue in bad:
            partial = True
            print(f"{log}:{issue.line_number}: skipped ({issue.reason})", file=sys.stderr)
        dest = out_dir / (Path(log).stem + ".csv")
        table.write(dest)
        print(f"wrote {dest} ({len(table.rows)} rows)")
    return 2 if partial else 0


def _cmd_merge(args: argparse.Namespace) -> int:
    tables = [postproc.CsvTable.read(p) for p in args.csvs]
    merged = postproc.merge_csv(tables, tolerance_s=args.tolerance)
    merged.write(args.out)
    print(f"wrote {args.out} ({len(merged.rows)} rows)")
    return 0


def _cmd_kml(args: argparse.Namespace) -> int:
    table = postproc.CsvTable.read(args.csv)
    scale = None
    if args.scale_min is not None and args.scale_max is not None:
        scale = (args.scale_min, args.scale_max)
    doc = postproc.generate_kml(table, args.metric, scale)
    Path(args.out).write_text(doc, encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    table = postproc.CsvTable.read(args.csv)
    series = postproc.plot_series(table, args.metric, args.ref)
    csv_path, svg_path = postproc.write_plot(series, args.out_prefix)
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def _cmd_convert_plan(args: argparse.Namespace) -> int:
    native = flightsim.load_qgc_plan(Path(args.plan).read_text())
    Path(args.out).write_text(json.dumps(native, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({len(native['waypoints'])} waypoints)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aerotwin",
        description="UAV aerial base-station emulator and log post-processing tools",
        epilog="bundled scenario: run with --config ref (or ref.json)",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="run directory (default $AEROTWIN_OUT/<name>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="override duration_s")
    p.add_argument("--realtime", action="store_true",
                   help="throttle to wall clock and serve the console socket")
    p.add_argument("--console-port", type=int, default=0,
                   help="console TCP port for --realtime (0 picks a free one)")
    p.add_argument("--commands", help="scripted command file: '<t_s> <COMMAND>' per line")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("console", help="attach to a live run's console")
    p.add_argument("--out", help="run directory holding console.port")
    p.add_argument("--port", type=int, help="connect to an explicit port instead")
    p.set_defaults(func=_cmd_console)

    p = sub.add_parser("stop", help="stop a live run at the next step boundary")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stop)

    p = sub.add_parser("reset", help="clear run artifacts from a directory")
    p.add_argument("--out", required=True)
    p.add_argument("--archive", action="store_true", help="archive instead of delete")
    p.set_defaults(func=_cmd_reset)

    p = sub.add_parser("validate", help="validate an experiment config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("csv", help="convert log files to CSV tables")
    p.add_argument("logs", nargs="+", metavar="LOG")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_csv)

    p = sub.add_parser("merge", help="merge CSV tables on nearest timestamps")
    p.add_argument("csvs", nargs="+", metavar="CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--tolerance", type=float, help="join tolerance in seconds")
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("kml", help="render a merged CSV as a color-coded KML track")
    p.add_argument("--csv", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale-min", type=float)
    p.add_argument("--scale-max", type=float)
    p.set_defaults(func=_cmd_kml)

    p = sub.add_parser("plot", help="emit dual-axis plot data (CSV + SVG)")
    p.add_argument("--csv", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--ref", required=True, type=_parse_ref, metavar="LAT,LON[,ALT]",
                   help="reference position for the distance series")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("convert-plan", help="convert a QGroundControl .plan file")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_convert_plan)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, flightsim.InvalidPlan, flightsim.MalformedDocument,
            postproc.MissingColumn) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (orchestrator.OutputNotWritable, orchestrator.NotRunning,
            orchestrator.RunInProgress) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
