"""Offline analysis pipeline: log parsing, CSV merge, KML tracks, plots.

All transforms are value-preserving: CSV cells keep the exact strings
that appeared in the logs, KML coordinate strings are copied verbatim
from the rows, and the merge never reformats a cell. CSV files are
comma-separated with a header row and ``\\n`` line endings; the first
column is always ``t_s``, seconds since run start with 3 decimals.

KML output is version 2.2 (namespace
``http://www.opengis.net/kml/2.2``), one Placemark per retained row,
colored on a 16-step linear ramp from green (``ff00ff00``) through
red (``ff0000ff``) in KML's aabbggrr hex order. Plots are written as
a CSV data set plus a self-contained 800x400 SVG with the metric
scattered against the left axis and the distance from a reference
position drawn as a line against the right axis.
"""

from __future__ import annotations

import datetime as dt
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from .geodesy import GeoPosition, haversine_distance


class MissingColumn(ValueError):
    """A required CSV column is absent."""


class NoCommonTimespan(UserWarning):
    """Merged tables share no overlapping time range."""


@dataclass
class MalformedLine:
    line_number: int
    reason: str
    text: str


@dataclass
class CsvTable:
    """Rectangular table of string cells; column 0 is ``t_s``."""

    header: list[str]
    rows: list[list[str]] = field(default_factory=list)

    def column(self, name: str) -> list[str]:
        try:
            idx = self.header.index(name)
        except ValueError as exc:
            raise MissingColumn(f"no column {name!r}") from exc
        return [row[idx] for row in self.rows]

    def write(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.header) + "\n")
            for row in self.rows:
                fh.write(",".join(row) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "CsvTable":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError(f"{path} is empty")
        header = lines[0].split(",")
        rows = [line.split(",") for line in lines[1:]]
        return cls(header, rows)


_TS_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})\.(\d{3})Z$")
_STAMP_RE = re.compile(r"_(\d{8}T\d{6}Z)\.log$")


def _parse_timestamp(token: str) -> dt.datetime | None:
    m = _TS_RE.match(token)
    if not m:
        return None
    y, mo, d, h, mi, s, ms = (int(g) for g in m.groups())
    try:
        return dt.datetime(y, mo, d, h, mi, s, ms * 1000, tzinfo=dt.timezone.utc)
    except ValueError:
        return None


def run_start_from_filename(path: str | Path) -> dt.datetime | None:
    """Recover the run start stamp embedded in a log file name."""
    m = _STAMP_RE.search(Path(path).name)
    if not m:
        return None
    return dt.datetime.strptime(m.group(1), "%Y%m%dT%H%M%SZ").replace(tzinfo=dt.timezone.utc)


def logs_to_csv(
    log_path: str | Path,
    run_start: dt.datetime | None = None,
) -> tuple[CsvTable, list[MalformedLine]]:
    """Convert one log file into a CSV table, one row per record.

    The run start (for the relative ``t_s`` column) comes from the
    file-name stamp unless given explicitly; as a last resort the
    first record's timestamp is used. Unknown keys become extra
    columns in order of first appearance. Malformed lines are skipped
    and reported, never fatal.
    """
    path = Path(log_path)
    if run_start is None:
        run_start = run_start_from_filename(path)
    header = ["t_s"]
    rows: list[list[str]] = []
    bad: list[MalformedLine] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(" ")
            if len(parts) < 4:
                bad.append(MalformedLine(lineno, "too few fields", line))
                continue
            ts = _parse_timestamp(parts[0])
            if ts is None:
                bad.append(MalformedLine(lineno, "bad timestamp", line))
                continue
            pairs = []
            ok = True
            for token in parts[3:]:
                if "=" not in token:
                    ok = False
                    break
                key, value = token.split("=", 1)
                pairs.append((key, value))
            if not ok or not pairs:
                bad.append(MalformedLine(lineno, "malformed key=value field", line))
                continue
            if run_start is None:
                run_start = ts
            row_map = dict(pairs)
            for key, _ in pairs:
                if key not in header:
                    header.append(key)
            t_s = (ts - run_start).total_seconds()
            rows.append([f"{t_s:.3f}"] + [row_map.get(k, "") for k in header[1:]])
    # earlier rows may predate late-appearing columns
    width = len(header)
    for row in rows:
        row.extend([""] * (width - len(row)))
    return CsvTable(header, rows), bad


def _suffixed(name: str, taken: list[str]) -> str:
    if name not in taken:
        return name
    n = 2
    while f"{name}_{n}" in taken:
        n += 1
    return f"{name}_{n}"


def _merge_two(left: CsvTable, right: CsvTable, tolerance_s: float) -> CsvTable:
    lt = [float(v) for v in left.column("t_s")]
    rt = [float(v) for v in right.column("t_s")]

    # mutual nearest-neighbour pairing within tolerance
    def nearest(ts: list[float], t: float) -> int | None:
        if not ts:
            return None
        best = min(range(len(ts)), key=lambda i: (abs(ts[i] - t), i))
        return best if abs(ts[best] - t) <= tolerance_s else None

    l2r = {i: nearest(rt, t) for i, t in enumerate(lt)}
    r2l = {j: nearest(lt, t) for j, t in enumerate(rt)}
    matches = {i: j for i, j in l2r.items() if j is not None and r2l.get(j) == i}

    header = list(left.header)
    for name in right.header:
        header.append(_suffixed(name, header))
    right_width = len(right.header)

    out_rows: list[tuple[float, int, list[str]]] = []
    matched_right = set(matches.values())
    for i, row in enumerate(left.rows):
        j = matches.get(i)
        extra = right.rows[j] if j is not None else [""] * right_width
        out_rows.append((lt[i], 0, row + extra))
    for j, row in enumerate(right.rows):
        if j in matched_right:
            continue
        out_rows.append((rt[j], 1, [row[0]] + [""] * (len(left.header) - 1) + row))
    out_rows.sort(key=lambda e: (e[0], e[1]))

    if lt and rt and (min(lt) > max(rt) + tolerance_s or min(rt) > max(lt) + tolerance_s):
        warnings.warn("merged tables have no common timespan", NoCommonTimespan)
    return CsvTable(header, [r for _, _, r in out_rows])


def _default_tolerance(tables: list[CsvTable]) -> float:
    intervals = []
    for t in tables:
        ts = sorted(float(v) for v in t.column("t_s"))
        gaps = [b - a for a, b in zip(ts, ts[1:]) if b > a]
        if gaps:
            intervals.append(min(gaps))
    return 0.5 * min(intervals) if intervals else 0.5


def merge_csv(tables: list[CsvTable], tolerance_s: float | None = None) -> CsvTable:
    """Join tables on nearest ``t_s`` within a tolerance.

    Rows without a partner are kept with empty cells for the missing
    side; the result is sorted by ``t_s``. The default tolerance is
    half the smallest sampling interval seen in the inputs.
    """
    if not tables:
        raise ValueError("nothing to merge")
    if tolerance_s is None:
        tolerance_s = _default_tolerance(tables)
    merged = tables[0]
    for table in tables[1:]:
        merged = _merge_two(merged, table, tolerance_s)
    return merged


# --------------------------------------------------------------------------
# KML

KML_NAMESPACE = "http://www.opengis.net/kml/2.2"
_COLOR_STEPS = 16


def _ramp_color(index: int) -> str:
    # aabbggrr; green (ff00ff00) at step 0 to red (ff0000ff) at step 15
    frac = index / (_COLOR_STEPS - 1)
    r = round(255 * frac)
    g = round(255 * (1.0 - frac))
    return f"ff00{g:02x}{r:02x}"


def _color_index(value: float, lo: float, hi: float) -> int:
    if hi <= lo:
        return 0
    frac = (value - lo) / (hi - lo)
    frac = min(1.0, max(0.0, frac))
    return min(_COLOR_STEPS - 1, int(frac * _COLOR_STEPS))


def generate_kml(
    table: CsvTable,
    metric: str,
    scale: tuple[float, float] | None = None,
    *,
    name: str = "aerotwin track",
) -> str:
    """Render a merged table as a KML document string.

    Requires lat, lon, alt and the metric column. Rows whose metric
    cell is not numeric (e.g. ping timeouts) are dropped. Metric
    values outside the scale clamp to its endpoints; a missing scale
    spans the observed values.
    """
    for col in ("lat", "lon", "alt", metric):
        if col not in table.header:
            raise MissingColumn(f"no column {col!r}")
    idx = {c: table.header.index(c) for c in ("lat", "lon", "alt", metric)}
    t_idx = table.header.index("t_s")

    kept: list[tuple[list[str], float]] = []
    for row in table.rows:
        cells = [row[idx["lat"]], row[idx["lon"]], row[idx["alt"]], row[idx[metric]], row[t_idx]]
        if any(c == "" for c in cells[:4]):
            continue
        try:
            value = float(row[idx[metric]])
        except ValueError:
            continue
        kept.append((row, value))

    if scale is None:
        values = [v for _, v in kept]
        scale = (min(values), max(values)) if values else (0.0, 1.0)
    lo, hi = scale

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<kml xmlns="{KML_NAMESPACE}">',
        "<Document>",
        f"  <name>{escape(name)}</name>",
    ]
    for i in range(_COLOR_STEPS):
        lines += [
            f'  <Style id="ramp{i}">',
            f"    <IconStyle><color>{_ramp_color(i)}</color></IconStyle>",
            "  </Style>",
        ]
    for row, value in kept:
        color = _color_index(value, lo, hi)
        coord = f"{row[idx['lon']]},{row[idx['lat']]},{row[idx['alt']]}"
        lines += [
            "  <Placemark>",
            f"    <name>t={escape(row[t_idx])}</name>",
            f"    <description>{escape(metric)}={escape(row[idx[metric]])}</description>",
            f"    <styleUrl>#ramp{color}</styleUrl>",
            f"    <Point><coordinates>{coord}</coordinates></Point>",
            "  </Placemark>",
        ]
    lines += ["</Document>", "</kml>", ""]
    return "\n".join(lines)


# --------------------------------------------------------------------------
# plotting


@dataclass
class PlotSeries:
    """Dual-axis data set: metric samples and distance-from-reference."""

    t_s: list[float]
    metric: list[float | None]  # None where the cell was non-numeric
    distance_m: list[float]
    metric_name: str

    def to_table(self) -> CsvTable:
        header = ["t_s", self.metric_name, "ref_dist_m"]
        rows = []
        for t, v, d in zip(self.t_s, self.metric, self.distance_m):
            rows.append([f"{t:.3f}", "" if v is None else f"{v:.6g}", f"{d:.9f}"])
        return CsvTable(header, rows)


def plot_series(table: CsvTable, metric: str, reference: GeoPosition) -> PlotSeries:
    """Extract the metric-vs-time and distance-vs-time series.

    The distance series is the great-circle distance from the
    reference to each row's lat/lon. Rows without a position are
    skipped; rows with a non-numeric metric keep the distance sample
    and leave a gap in the metric series.
    """
    for col in ("lat", "lon", metric):
        if col not in table.header:
            raise MissingColumn(f"no column {col!r}")
    i_lat = table.header.index("lat")
    i_lon = table.header.index("lon")
    i_m = table.header.index(metric)
    i_t = table.header.index("t_s")

    out_t: list[float] = []
    out_m: list[float | None] = []
    out_d: list[float] = []
    for row in table.rows:
        if row[i_lat] == "" or row[i_lon] == "":
            continue
        pos = GeoPosition(float(row[i_lat]), float(row[i_lon]))
        try:
            value: float | None = float(row[i_m])
        except ValueError:
            value = None
        out_t.append(float(row[i_t]))
        out_m.append(value)
        out_d.append(haversine_distance(reference, pos))
    return PlotSeries(out_t, out_m, out_d, metric)


_SVG_W, _SVG_H = 800, 400
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 60, 60, 20, 40


def _axis_range(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if hi == lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_svg(series: PlotSeries) -> str:
    """Self-contained dual-axis SVG: metric scatter (blue, left axis)
    and distance line (red, right axis) over time."""
    x0, x1 = _MARGIN_L, _SVG_W - _MARGIN_R
    y0, y1 = _SVG_H - _MARGIN_B, _MARGIN_T
    t_lo, t_hi = _axis_range(series.t_s)
    known = [v for v in series.metric if v is not None]
    m_lo, m_hi = _axis_range(known)
    d_lo, d_hi = _axis_range(series.distance_m)

    def sx(t: float) -> float:
        return x0 + (t - t_lo) / (t_hi - t_lo) * (x1 - x0)

    def sy(v: float, lo: float, hi: float) -> float:
        return y0 + (v - lo) / (hi - lo) * (y1 - y0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="blue"/>',
        f'<line x1="{x1}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="red"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        t = t_lo + frac * (t_hi - t_lo)
        m = m_lo + frac * (m_hi - m_lo)
        d = d_lo + frac * (d_hi - d_lo)
        xt = sx(t)
        ym = sy(m, m_lo, m_hi)
        parts += [
            f'<text x="{xt:.2f}" y="{y0 + 16}" font-size="10" text-anchor="middle">{t:.1f}</text>',
            f'<text x="{x0 - 6}" y="{ym:.2f}" font-size="10" text-anchor="end" fill="blue">{m:.1f}</text>',
            f'<text x="{x1 + 6}" y="{ym:.2f}" font-size="10" text-anchor="start" fill="red">{d:.1f}</text>',
        ]
    parts.append(
        f'<text x="{(x0 + x1) / 2:.2f}" y="{_SVG_H - 8}" font-size="11" text-anchor="middle">t_s</text>'
    )
    parts.append(
        f'<text x="14" y="{(y0 + y1) / 2:.2f}" font-size="11" fill="blue" '
        f'text-anchor="middle" transform="rotate(-90 14 {(y0 + y1) / 2:.2f})">'
        f"{escape(series.metric_name)}</text>"
    )
    parts.append(
        f'<text x="{_SVG_W - 10}" y="{(y0 + y1) / 2:.2f}" font-size="11" fill="red" '
        f'text-anchor="middle" transform="rotate(90 {_SVG_W - 10} {(y0 + y1) / 2:.2f})">'
        "ref_dist_m</text>"
    )
    if series.t_s:
        points = " ".join(
            f"{sx(t):.2f},{sy(d, d_lo, d_hi):.2f}" for t, d in zip(series.t_s, series.distance_m)
        )
        parts.append(f'<polyline points="{points}" fill="none" stroke="red" stroke-width="1"/>')
    for t, v in zip(series.t_s, series.metric):
        if v is None:
            continue
        parts.append(
            f'<circle cx="{sx(t):.2f}" cy="{sy(v, m_lo, m_hi):.2f}" r="2" fill="blue"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_plot(series: PlotSeries, out_prefix: str | Path) -> tuple[Path, Path]:
    """Write ``<prefix>.csv`` and ``<prefix>.svg``; returns both paths."""
    prefix = Path(out_prefix)
    csv_path = prefix.with_suffix(".csv")
    svg_path = prefix.with_suffix(".svg")
    series.to_table().write(csv_path)
    svg_path.write_text(render_svg(series), encoding="utf-8")
    return csv_path, svg_path
