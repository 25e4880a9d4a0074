"""Experiment lifecycle: the fixed-step loop coupling flight, channel, MAC
and traffic models, timestamped log emission, and the operator console.

Each step of ``step_ms`` simulated milliseconds: queued console
commands are applied, the vehicle advances, the channel matrix is
recomputed, one scheduler subframe runs per millisecond, and records
are appended to per-(node, process) log files named
``<node>_<process>_<startstamp>.log``. Timestamps derive from the
configured simulated start time, never the wall clock, so a (config,
seed, command stream) triple fully determines every log byte.

Log line format (one record per line)::

    2025-01-01T12:00:00.100Z LPN1 vehicle lat=35.720000 lon=-78.690000 alt=30.0 phase=Enroute

i.e. an ISO-8601 UTC millisecond timestamp, the node id, the process
name, then space-separated ``key=value`` pairs. Vehicle records carry
lat/lon (6 decimals), alt (1 decimal) and phase; link records carry
``dist_m`` (1 decimal), ``pl_db``, ``snr_db``, ``mcs`` and
``connected``; throughput records ``thrpt_mbps`` and ``dist_m``; ping
records ``rtt_ms`` (or ``rtt_ms=timeout``) and ``dist_m``. Values
never contain spaces.

The console speaks a line protocol (stdin pipe, scripted file, or the
local TCP socket in ``--realtime`` runs): ``TAKEOFF``, ``GOTO <n>``,
``HOLD``, ``RESUME``, ``LAND``, ``ABORT``, ``STATUS``, answered with
``OK [info]`` or ``ERR <reason>``. ``STOP`` ends the run at the next
step boundary. Commands queue and apply only at step boundaries.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import math
import shutil
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .channel import channel_matrix
from .config import ExperimentConfig
from .flightsim import VehicleSim, VehicleState, mission_duration
from .mac import SchedulerState, schedule_subframe, select_mcs
from .traffic import ping_rtt


class OutputNotWritable(OSError):
    """Run directory unusable: not writable, or not empty."""


class CommandInvalid(ValueError):
    """Console command rejected (unknown verb, bad argument, wrong state)."""


class NotRunning(RuntimeError):
    """Stop requested but no run is in progress."""


class RunInProgress(RuntimeError):
    """Reset refused while a run is in progress."""


_RUN_ARTIFACT_GLOBS = ("*.log", "*.csv", "*.kml", "*.svg", "console.port")


# --------------------------------------------------------------------------
# log records


@dataclass(frozen=True)
class LogRecord:
    timestamp: dt.datetime
    node: str
    process: str
    fields: tuple[tuple[str, str], ...]

    def format(self) -> str:
        ts = self.timestamp.astimezone(dt.timezone.utc)
        stamp = ts.strftime("%Y-%m-%dT%H:%M:%S") + f".{ts.microsecond // 1000:03d}Z"
        kv = " ".join(f"{k}={v}" for k, v in self.fields)
        return f"{stamp} {self.node} {self.process} {kv}"


class _LogSet:
    """One open file per (node, process); records must arrive in time order."""

    def __init__(self, run_dir: Path, startstamp: str):
        self._dir = run_dir
        self._stamp = startstamp
        self._files: dict[tuple[str, str], object] = {}
        self._last_ts: dict[tuple[str, str], dt.datetime] = {}

    def emit(self, record: LogRecord) -> None:
        key = (record.node, record.process)
        fh = self._files.get(key)
        if fh is None:
            path = self._dir / f"{record.node}_{record.process}_{self._stamp}.log"
            fh = path.open("w", encoding="utf-8", newline="\n")
            self._files[key] = fh
        last = self._last_ts.get(key)
        if last is not None and record.timestamp < last:
            raise ValueError("log timestamps must be non-decreasing")
        self._last_ts[key] = record.timestamp
        fh.write(record.format() + "\n")

    def close(self) -> None:
        for fh in self._files.values():
            fh.close()
        self._files.clear()


# --------------------------------------------------------------------------
# console commands

_VERBS_WITH_ARG = {"GOTO"}
_VERBS_BARE = {"TAKEOFF", "HOLD", "RESUME", "LAND", "ABORT", "STATUS"}


@dataclass(frozen=True)
class ConsoleCommand:
    verb: str
    arg: int | None = None

    @property
    def wire(self) -> str:
        return self.verb if self.arg is None else f"{self.verb} {self.arg}"


def parse_console_command(line: str) -> ConsoleCommand:
    parts = line.strip().split()
    if not parts:
        raise CommandInvalid("empty command")
    verb = parts[0].upper()
    if verb in _VERBS_BARE:
        if len(parts) != 1:
            raise CommandInvalid(f"{verb} takes no argument")
        return ConsoleCommand(verb)
    if verb in _VERBS_WITH_ARG:
        if len(parts) != 2:
            raise CommandInvalid(f"{verb} needs one argument")
        try:
            return ConsoleCommand(verb, int(parts[1]))
        except ValueError as exc:
            raise CommandInvalid(f"{verb} argument must be an integer") from exc
    raise CommandInvalid(f"unknown command {parts[0]!r}")


def _format_position(state: VehicleState) -> tuple[tuple[str, str], ...]:
    p = state.position
    return (
        ("lat", f"{p.latitude_deg:.6f}"),
        ("lon", f"{p.longitude_deg:.6f}"),
        ("alt", f"{p.altitude_m:.1f}"),
        ("phase", str(state.phase)),
    )


def apply_command(cmd: ConsoleCommand, vehicle: VehicleSim) -> VehicleState:
    """Apply a console command to the vehicle; STATUS changes nothing.

    Raises CommandInvalid when the command does not fit the current
    vehicle state (e.g. RESUME without a HOLD, GOTO with an unknown
    waypoint index).
    """
    try:
        if cmd.verb == "STATUS":
            pass
        elif cmd.verb == "TAKEOFF":
            vehicle.start()
        elif cmd.verb == "HOLD":
            vehicle.hold()
        elif cmd.verb == "RESUME":
            vehicle.resume()
        elif cmd.verb == "GOTO":
            vehicle.goto(int(cmd.arg))  # type: ignore[arg-type]
        elif cmd.verb == "LAND":
            vehicle.land()
        elif cmd.verb == "ABORT":
            vehicle.land(abort=True)
        else:
            raise CommandInvalid(f"unknown verb {cmd.verb!r}")
    except ValueError as exc:
        raise CommandInvalid(str(exc)) from exc
    return vehicle.state


@dataclass
class _QueuedCommand:
    line: str
    reply: Callable[[str], None] | None = None
    at_s: float = 0.0


class CommandFeed:
    """Merges scripted (sim-timed) and live console commands.

    Scripted entries are (t_s, line) pairs applied at the first step
    boundary with sim time >= t_s; live entries apply at the next
    boundary after arrival.
    """

    def __init__(self, scripted: Iterable[tuple[float, str]] = ()):
        self._scripted = sorted(scripted, key=lambda e: e[0])
        self._idx = 0
        self._live: list[_QueuedCommand] = []
        self._lock = threading.Lock()
        self.stop_requested = threading.Event()

    def push_live(self, line: str, reply: Callable[[str], None] | None = None) -> None:
        with self._lock:
            self._live.append(_QueuedCommand(line, reply))

    def due(self, t_s: float) -> list[_QueuedCommand]:
        out: list[_QueuedCommand] = []
        while self._idx < len(self._scripted) and self._scripted[self._idx][0] <= t_s:
            at, line = self._scripted[self._idx]
            out.append(_QueuedCommand(line, None, at))
            self._idx += 1
        with self._lock:
            out.extend(self._live)
            self._live.clear()
        return out


class ConsoleServer:
    """Line-oriented console over a local TCP socket."""

    def __init__(self, feed: CommandFeed, host: str = "127.0.0.1", port: int = 0):
        self._feed = feed
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(4)
        self._sock.settimeout(0.2)
        self.port = self._sock.getsockname()[1]
        self._closing = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    def _accept_loop(self) -> None:
        while not self._closing.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.upper() == "STOP":
                    self._feed.stop_requested.set()
                    fh.write("OK\n")
                    fh.flush()
                    continue
                done = threading.Event()
                answer: list[str] = []

                def reply(text: str, _done=done, _answer=answer) -> None:
                    _answer.append(text)
                    _done.set()

                self._feed.push_live(line, reply)
                if not done.wait(timeout=10.0):
                    answer.append("ERR console timeout")
                fh.write(answer[0] + "\n")
                fh.flush()

    def close(self) -> None:
        self._closing.set()
        self._sock.close()


# --------------------------------------------------------------------------
# the run loop


@dataclass
class RunResult:
    run_dir: Path
    end_reason: str
    steps: int
    log_files: tuple[Path, ...]


def _prepare_run_dir(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    if out.exists():
        if not out.is_dir():
            raise OutputNotWritable(f"{out} is not a directory")
        if any(out.iterdir()):
            raise OutputNotWritable(f"{out} is not empty; reset it first")
    else:
        try:
            out.mkdir(parents=True)
        except OSError as exc:
            raise OutputNotWritable(f"cannot create {out}: {exc}") from exc
    return out


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    *,
    commands: Iterable[tuple[float, str]] | CommandFeed = (),
    realtime: bool = False,
    console_port: int | None = None,
    stop_event: threading.Event | None = None,
) -> RunResult:
    """Run the experiment to completion and return the log directory.

    ``commands`` may be scripted (t_s, line) pairs or a live
    CommandFeed. With ``realtime`` the loop throttles to wall-clock
    step boundaries and (when ``console_port`` is not None) serves the
    console socket, recording the port in ``<out>/console.port``.
    """
    feed = commands if isinstance(commands, CommandFeed) else CommandFeed(commands)
    out = _prepare_run_dir(out_dir)
    stop_event = stop_event or threading.Event()

    # fold the experiment seed into the per-module RNG streams
    model = dataclasses.replace(
        cfg.channel, rng_seed=cfg.seed * 1_000_003 + cfg.channel.rng_seed
    )
    ping_cfg = dataclasses.replace(
        cfg.ping, rng_seed=cfg.seed * 1_000_003 + cfg.ping.rng_seed
    )

    start = cfg.start_time
    stamp = start.strftime("%Y%m%dT%H%M%SZ")
    logs = _LogSet(out, stamp)
    server: ConsoleServer | None = None
    if console_port is not None:
        server = ConsoleServer(feed, port=console_port)
        (out / "console.port").write_text(f"{server.port}\n")

    bs = cfg.base_station
    ues = cfg.user_equipment
    step_ms = cfg.step_ms
    step_s = step_ms / 1000.0
    report_ms = round(cfg.report_interval_s * 1000.0)
    ping_ms = round(ping_cfg.interval_s * 1000.0)

    mission_s = mission_duration(cfg.flight_plan)
    duration_s = cfg.duration_s
    if duration_s is None:
        duration_s = math.ceil(mission_s + 2.0 * cfg.report_interval_s)
    n_steps = max(1, math.ceil(round(duration_s * 1000.0) / step_ms))

    def ts(t_ms: int) -> dt.datetime:
        return start + dt.timedelta(milliseconds=t_ms)

    def emit(t_ms: int, node: str, process: str, fields: Sequence[tuple[str, str]]) -> None:
        logs.emit(LogRecord(ts(t_ms), node, process, tuple(fields)))

    emit(0, bs.id, "experiment", (("event", "run_start"), ("name", cfg.name), ("seed", str(cfg.seed))))
    if duration_s < mission_s:
        emit(0, bs.id, "experiment",
             (("event", "warning"), ("detail", f"duration_{duration_s}s_truncates_mission_{mission_s:.1f}s")))

    vehicle = VehicleSim(cfg.flight_plan)
    sched = SchedulerState()
    bits_this_interval = {ue.id: 0 for ue in ues}
    next_report_ms = report_ms
    next_ping_ms = 0
    end_reason = "completed"
    end_ms = n_steps * step_ms
    wall_start = time.monotonic() if realtime else None

    try:
        for k in range(n_steps):
            t_ms = k * step_ms
            t_s = t_ms / 1000.0

            for queued in feed.due(t_s):
                try:
                    cmd = parse_console_command(queued.line)
                    state = apply_command(cmd, vehicle)
                    if cmd.verb == "STATUS":
                        info = " ".join(f"{k_}={v}" for k_, v in _format_position(state))
                        response = f"OK {info}"
                        emit(t_ms, bs.id, "experiment",
                             (("event", "status"),) + _format_position(state))
                    else:
                        response = "OK"
                        emit(t_ms, bs.id, "experiment",
                             (("event", "command"), ("cmd", queued.line.strip().replace(" ", "_")),
                              ("result", "OK")))
                except CommandInvalid as exc:
                    reason = str(exc).replace(" ", "_")
                    response = f"ERR {reason}"
                    emit(t_ms, bs.id, "experiment",
                         (("event", "command"), ("cmd", queued.line.strip().replace(" ", "_")),
                          ("result", "ERR"), ("reason", reason)))
                if queued.reply is not None:
                    queued.reply(response)

            if (stop_event.is_set() or feed.stop_requested.is_set()) and k > 0:
                end_reason = "stopped"
                end_ms = t_ms
                break

            if k > 0:
                vehicle.step(step_s)
            state = vehicle.state
            emit(t_ms, bs.id, "vehicle", _format_position(state))

            nodes_now = [(bs.id, state.position)] + [(ue.id, ue.position) for ue in ues]
            matrix = channel_matrix(
                nodes_now, model, cfg.radio,
                step=k, disconnect_snr_dB=cfg.cell.disconnect_snr_dB,
            )
            links = {}
            active = []
            for ue in ues:
                link = matrix.link(bs.id, ue.id)
                mcs = select_mcs(link.snr_dB, cfg.mcs_table, cfg.cell.disconnect_snr_dB) \
                    if link.connected else None
                links[ue.id] = (link, mcs)
                active.append((ue.id, mcs))
                emit(t_ms, ue.id, "link", (
                    ("dist_m", f"{link.distance_m:.1f}"),
                    ("pl_db", f"{link.path_loss_dB:.2f}"),
                    ("snr_db", f"{link.snr_dB:.2f}"),
                    ("mcs", mcs.name if mcs else "Disconnected"),
                    ("connected", "true" if link.connected else "false"),
                ))

            for _ in range(step_ms // cfg.cell.subframe_ms):
                alloc, sched = schedule_subframe(sched, active, cfg.cell)
                for ue in ues:
                    bits_this_interval[ue.id] += alloc.users[ue.id].bits_delivered

            if t_ms >= next_ping_ms:
                for idx, ue in enumerate(ues):
                    link, mcs = links[ue.id]
                    margin = link.snr_dB - cfg.cell.disconnect_snr_dB
                    sample = ping_rtt(link, margin, ping_cfg, k, stream=idx, t=t_s)
                    rtt = "timeout" if sample.timed_out else f"{sample.rtt_ms:.2f}"
                    emit(t_ms, ue.id, "ping",
                         (("rtt_ms", rtt), ("dist_m", f"{link.distance_m:.1f}")))
                next_ping_ms += ping_ms

            if (k + 1) * step_ms >= next_report_ms:
                for ue in ues:
                    link, _ = links[ue.id]
                    mbps = bits_this_interval[ue.id] / cfg.report_interval_s / 1e6
                    emit((k + 1) * step_ms, ue.id, "iperf",
                         (("thrpt_mbps", f"{mbps:.3f}"), ("dist_m", f"{link.distance_m:.1f}")))
                    bits_this_interval[ue.id] = 0
                next_report_ms += report_ms

            if wall_start is not None:
                delay = wall_start + (k + 1) * step_s - time.monotonic()
                if delay > 0:
                    time.sleep(delay)

        emit(end_ms, bs.id, "experiment", (("event", "run_end"), ("reason", end_reason)))
    finally:
        logs.close()
        if server is not None:
            server.close()

    files = tuple(sorted(out.glob("*.log")))
    return RunResult(out, end_reason, n_steps, files)


class RunHandle:
    """A run executing on a background thread; supports mid-run stop."""

    def __init__(self, cfg: ExperimentConfig, out_dir: str | Path, **kwargs):
        self._stop = threading.Event()
        self._result: RunResult | None = None
        self._error: BaseException | None = None
        self._done = threading.Event()
        kwargs["stop_event"] = self._stop

        def _target() -> None:
            try:
                self._result = run_experiment(cfg, out_dir, **kwargs)
            except BaseException as exc:  # surfaced via wait()
                self._error = exc
            finally:
                self._done.set()

        self._thread = threading.Thread(target=_target, daemon=True)
        self._thread.start()

    @property
    def running(self) -> bool:
        return not self._done.is_set()

    def stop(self) -> RunResult:
        if self._done.is_set():
            raise NotRunning("run already finished")
        self._stop.set()
        return self.wait()

    def wait(self, timeout: float | None = None) -> RunResult:
        self._done.wait(timeout)
        self._thread.join(timeout)
        if self._error is not None:
            raise self._error
        assert self._result is not None
        return self._result


def start_experiment(cfg: ExperimentConfig, out_dir: str | Path, **kwargs) -> RunHandle:
    """Begin a run on a background thread and return its handle."""
    return RunHandle(cfg, out_dir, **kwargs)


def stop_experiment(handle: RunHandle) -> RunResult:
    """Stop a running experiment at the next step boundary.

    Raises NotRunning when the run has already finished.
    """
    return handle.stop()


def _console_alive(out: Path) -> bool:
    port_file = out / "console.port"
    if not port_file.exists():
        return False
    try:
        port = int(port_file.read_text().strip())
    except ValueError:
        return False
    try:
        with socket.create_connection(("127.0.0.1", port), timeout=0.5):
            return True
    except OSError:
        return False


def reset_experiment(out_dir: str | Path, *, archive: bool = False) -> None:
    """Clear run artifacts so the directory is ready for a fresh run.

    Refuses with RunInProgress while a live console answers on the
    recorded port. With ``archive`` the artifacts move into a numbered
    ``archive_N`` subdirectory instead of being deleted.
    """
    out = Path(out_dir)
    if not out.exists():
        out.mkdir(parents=True)
        return
    if _console_alive(out):
        raise RunInProgress(f"a run is still serving its console in {out}")
    artifacts: list[Path] = []
    for pattern in _RUN_ARTIFACT_GLOBS:
        artifacts.extend(p for p in out.glob(pattern) if p.is_file())
    if not artifacts:
        return
    if archive:
        n = 1
        while (out / f"archive_{n}").exists():
            n += 1
        dest = out / f"archive_{n}"
        dest.mkdir()
        for p in artifacts:
            shutil.move(str(p), dest / p.name)
    else:
        for p in artifacts:
            p.unlink()
