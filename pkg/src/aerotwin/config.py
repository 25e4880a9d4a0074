"""Experiment configuration: JSON schema, validation, bundled scenarios.

An experiment config is a single JSON document::

    {
      "name": "ref",
      "seed": 42,
      "start_time": "2025-01-01T12:00:00Z",   // simulated epoch for log stamps
      "step_ms": 100,
      "duration_s": 166.0,                    // optional; defaults to mission end
      "report_interval_s": 1.0,
      "nodes": [
        {"id": "LPN1", "kind": "PortableNode", "role": "BaseStation"},
        {"id": "LW1", "kind": "FixedNode", "role": "UserEquipment",
         "position": {"lat": .., "lon": .., "alt": ..}},
        ...
      ],
      "flight_plan": { native flight-plan object },
      "radio":   { "tx_power_dbm": .., "carrier_freq_mhz": ..,
                   "bandwidth_mhz": .., "noise_figure_db": .. },
      "channel": { "model": "free_space" | "log_distance",
                   "shadowing_sigma_db": .., "rng_seed": ..,
                   "exponent": .., "reference_distance_m": ..,
                   "reference_loss_db": .. },
      "cell":    { "n_rb": .., "symbols_per_rb": .., "disconnect_snr_db": .. },
      "mcs_table": [ {"name": .., "bits_per_symbol": .., "min_snr_db": ..}, ... ],
      "ping":    { "interval_s": .., "timeout_s": .., "base_rtt_ms": ..,
                   "distance_coeff_ms_per_m": .., "marginal_snr_penalty_ms": ..,
                   "marginal_margin_db": .., "jitter_sigma_ms": .., "rng_seed": .. },
      "output_dir": "runs/ref"                 // optional, CLI can override
    }

Exactly one node has role BaseStation; it rides the flight plan. The
experiment carries a single radio configuration shared by all nodes.
There must be at least one UserEquipment node with a fixed position.
The bundled reference scenario ``ref`` flies an aerial base station
from one fixed user to the other and back.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .channel import PathLossModel, RadioConfig
from .flightsim import FlightPlan, InvalidPlan, MalformedDocument, parse_flight_plan
from .geodesy import GeoPosition
from .mac import CellConfig, Mcs
from .traffic import PingConfig

FIXED_NODE = "FixedNode"
PORTABLE_NODE = "PortableNode"
BASE_STATION = "BaseStation"
USER_EQUIPMENT = "UserEquipment"


class ConfigInvalid(ValueError):
    """Experiment configuration failed validation."""


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    role: str
    position: GeoPosition | None  # None for the node flying the plan
    radio: RadioConfig


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    nodes: tuple[NodeSpec, ...]
    flight_plan: FlightPlan
    radio: RadioConfig
    channel: PathLossModel
    cell: CellConfig
    mcs_table: tuple[Mcs, ...]
    ping: PingConfig
    step_ms: int
    duration_s: float | None
    report_interval_s: float
    seed: int
    start_time: dt.datetime
    output_dir: str | None = None

    @property
    def base_station(self) -> NodeSpec:
        return next(n for n in self.nodes if n.role == BASE_STATION)

    @property
    def user_equipment(self) -> tuple[NodeSpec, ...]:
        return tuple(n for n in self.nodes if n.role == USER_EQUIPMENT)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigInvalid(message)


def _position_from(obj: dict, where: str) -> GeoPosition:
    try:
        return GeoPosition(float(obj["lat"]), float(obj["lon"]), float(obj.get("alt", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{where}: bad position ({exc})") from exc


def parse_experiment_config(document: str | dict, *, name: str | None = None) -> ExperimentConfig:
    """Parse and fully validate an experiment config document."""
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
    else:
        data = document
    _require(isinstance(data, dict), "config must be a JSON object")

    try:
        radio = RadioConfig(
            tx_power_dBm=float(data.get("radio", {}).get("tx_power_dbm", 11.5)),
            carrier_freq_MHz=float(data.get("radio", {}).get("carrier_freq_mhz", 3500.0)),
            bandwidth_MHz=float(data.get("radio", {}).get("bandwidth_mhz", 20.0)),
            noise_figure_dB=float(data.get("radio", {}).get("noise_figure_db", 7.0)),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"radio: {exc}") from exc

    ch = data.get("channel", {})
    try:
        channel = PathLossModel(
            variant=ch.get("model", "free_space"),
            exponent=float(ch.get("exponent", 2.0)),
            reference_distance_m=float(ch.get("reference_distance_m", 1.0)),
            reference_loss_dB=float(ch.get("reference_loss_db", 0.0)),
            shadowing_sigma_dB=float(ch.get("shadowing_sigma_db", 0.0)),
            rng_seed=int(ch.get("rng_seed", 0)),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"channel: {exc}") from exc

    cl = data.get("cell", {})
    try:
        cell = CellConfig(
            n_rb=int(cl.get("n_rb", 100)),
            symbols_per_rb=int(cl.get("symbols_per_rb", 84)),
            subframe_ms=int(cl.get("subframe_ms", 1)),
            disconnect_snr_dB=float(cl.get("disconnect_snr_db", 0.0)),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"cell: {exc}") from exc

    rows = data.get("mcs_table", [
        {"name": "QAM64", "bits_per_symbol": 6, "min_snr_db": 18.0},
        {"name": "QAM16", "bits_per_symbol": 4, "min_snr_db": 8.0},
    ])
    _require(isinstance(rows, list) and rows, "mcs_table must be a non-empty list")
    try:
        mcs_table = tuple(
            Mcs(str(r["name"]), int(r["bits_per_symbol"]), float(r["min_snr_db"])) for r in rows
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"mcs_table: {exc}") from exc
    thresholds = [m.min_snr_dB for m in mcs_table]
    _require(thresholds == sorted(thresholds, reverse=True) and len(set(thresholds)) == len(thresholds),
             "mcs_table thresholds must be strictly decreasing")

    pg = data.get("ping", {})
    try:
        ping = PingConfig(
            interval_s=float(pg.get("interval_s", 1.0)),
            timeout_s=float(pg.get("timeout_s", 1.0)),
            base_rtt_ms=float(pg.get("base_rtt_ms", 30.0)),
            distance_coeff_ms_per_m=float(pg.get("distance_coeff_ms_per_m", 0.2)),
            marginal_snr_penalty_ms=float(pg.get("marginal_snr_penalty_ms", 40.0)),
            marginal_margin_dB=float(pg.get("marginal_margin_db", 18.0)),
            jitter_sigma_ms=float(pg.get("jitter_sigma_ms", 2.0)),
            rng_seed=int(pg.get("rng_seed", 0)),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"ping: {exc}") from exc

    _require("flight_plan" in data, "missing flight_plan")
    try:
        plan = parse_flight_plan(data["flight_plan"])
    except (MalformedDocument, InvalidPlan) as exc:
        raise ConfigInvalid(f"flight_plan: {exc}") from exc

    raw_nodes = data.get("nodes")
    _require(isinstance(raw_nodes, list) and len(raw_nodes) >= 2, "need at least two nodes")
    nodes: list[NodeSpec] = []
    for raw in raw_nodes:
        _require(isinstance(raw, dict) and "id" in raw, "every node needs an id")
        node_id = str(raw["id"])
        kind = raw.get("kind", FIXED_NODE)
        role = raw.get("role", USER_EQUIPMENT)
        _require(kind in (FIXED_NODE, PORTABLE_NODE), f"node {node_id}: unknown kind {kind!r}")
        _require(role in (BASE_STATION, USER_EQUIPMENT), f"node {node_id}: unknown role {role!r}")
        if role == BASE_STATION:
            _require(kind == PORTABLE_NODE, f"node {node_id}: the base station rides the portable node")
            position = None
        else:
            _require("position" in raw, f"node {node_id}: fixed node needs a position")
            position = _position_from(raw["position"], f"node {node_id}")
        nodes.append(NodeSpec(node_id, kind, role, position, radio))
    ids = [n.id for n in nodes]
    _require(len(set(ids)) == len(ids), "node ids must be unique")
    _require(sum(1 for n in nodes if n.role == BASE_STATION) == 1,
             "exactly one node must have role BaseStation")
    _require(any(n.role == USER_EQUIPMENT for n in nodes), "need at least one UserEquipment node")

    step_ms = int(data.get("step_ms", 100))
    _require(step_ms > 0, "step_ms must be positive")
    _require(step_ms % cell.subframe_ms == 0, "step_ms must be a multiple of the subframe duration")
    report_interval_s = float(data.get("report_interval_s", 1.0))
    _require(report_interval_s > 0, "report_interval_s must be positive")
    report_ms = report_interval_s * 1000.0
    _require(abs(report_ms / step_ms - round(report_ms / step_ms)) < 1e-9,
             "report_interval_s must be a whole number of steps")

    duration_s = data.get("duration_s")
    if duration_s is not None:
        duration_s = float(duration_s)
        _require(duration_s > 0, "duration_s must be positive")

    raw_start = data.get("start_time", "2025-01-01T12:00:00Z")
    try:
        start = dt.datetime.fromisoformat(str(raw_start).replace("Z", "+00:00"))
    except ValueError as exc:
        raise ConfigInvalid(f"start_time: {exc}") from exc
    if start.tzinfo is None:
        start = start.replace(tzinfo=dt.timezone.utc)

    return ExperimentConfig(
        name=str(name or data.get("name", "experiment")),
        nodes=tuple(nodes),
        flight_plan=plan,
        radio=radio,
        channel=channel,
        cell=cell,
        mcs_table=mcs_table,
        ping=ping,
        step_ms=step_ms,
        duration_s=duration_s,
        report_interval_s=report_interval_s,
        seed=int(data.get("seed", 0)),
        start_time=start.astimezone(dt.timezone.utc),
        output_dir=data.get("output_dir"),
    )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Load a config from a file path or a bundled scenario name."""
    p = Path(path)
    if p.exists():
        return parse_experiment_config(p.read_text(), name=p.stem)
    bundled = bundled_config_path(p.stem)
    if bundled is not None:
        return parse_experiment_config(bundled.read_text(), name=p.stem)
    raise ConfigInvalid(f"config file not found: {path}")


def bundled_config_path(name: str) -> Path | None:
    """Path of a bundled scenario config (e.g. ``ref``), or None."""
    candidate = resources.files("aerotwin") / "configs" / f"{name}.json"
    try:
        with resources.as_file(candidate) as real:
            return real if real.exists() else None
    except (FileNotFoundError, ModuleNotFoundError):
        return None
