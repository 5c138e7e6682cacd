"""Per-leg impact chart (SVG) and CSV summaries."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union
from xml.sax.saxutils import escape, quoteattr

from .analytics import UNKNOWN, CalibratedImpact, LegAggregate, LegStats, aggregate
from .timeutil import format_ts
from .world import JourneyLog, LegColor, LegDef

PALETTE = {
    LegColor.RED: "#d62728",
    LegColor.BLUE: "#1f77b4",
    LegColor.GREEN: "#2ca02c",
    LegColor.OTHER: "#7f7f7f",
}

WIDTH, HEIGHT = 1200, 400
PLOT_LEFT, PLOT_RIGHT, PLOT_TOP, PLOT_BOTTOM = 70.0, 1180.0, 40.0, 350.0
BAR_WIDTH = 2.0

LEG_CSV_HEADER = ["leg", "kind", "n_total", "n_high", "n_low", "max_g", "mean_g"]


@dataclass(frozen=True)
class ReportSpec:
    title: str
    device_id: str
    from_ts: int
    to_ts: int
    high_threshold_g: float = 8.0
    palette: dict[LegColor, str] = field(default_factory=lambda: dict(PALETTE))

    def __post_init__(self) -> None:
        if self.from_ts > self.to_ts:
            raise ValueError("report time range is empty (from is after to)")
        if not self.high_threshold_g > 0:
            raise ValueError("high_threshold_g must be > 0")


def _f(v: float) -> str:
    return f"{v:.2f}"


def render_impact_plot(impacts: Sequence[CalibratedImpact], legs: Sequence[LegDef], spec: ReportSpec) -> str:
    """One bar per impact at its time, height proportional to g, coloured by leg."""
    for a, b in zip(impacts, impacts[1:]):
        if b.ts < a.ts:
            raise ValueError("impacts must be sorted by ts")
    colors = {leg.label: spec.palette[leg.display_color] for leg in legs}
    other = spec.palette[LegColor.OTHER]
    t0, t1 = spec.from_ts, spec.to_ts
    span = max(t1 - t0, 1)
    g_max = 1.1 * max([spec.high_threshold_g, *(i.v_g for i in impacts)])
    plot_w = PLOT_RIGHT - PLOT_LEFT
    plot_h = PLOT_BOTTOM - PLOT_TOP

    def x_of(ts: float) -> float:
        return PLOT_LEFT + (min(max(ts, t0), t1) - t0) / span * plot_w

    def y_of(g: float) -> float:
        return PLOT_BOTTOM - min(g, g_max) / g_max * plot_h

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text class="title" x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{escape(spec.title)}</text>',
        f'<g class="axes" stroke="#000000" stroke-width="1">'
        f'<line x1="{_f(PLOT_LEFT)}" y1="{_f(PLOT_BOTTOM)}" x2="{_f(PLOT_RIGHT)}" y2="{_f(PLOT_BOTTOM)}"/>'
        f'<line x1="{_f(PLOT_LEFT)}" y1="{_f(PLOT_TOP)}" x2="{_f(PLOT_LEFT)}" y2="{_f(PLOT_BOTTOM)}"/></g>',
    ]
    ticks = ['<g class="y-ticks" font-family="sans-serif" font-size="11" text-anchor="end">']
    for k in range(6):
        g = g_max * k / 5
        y = y_of(g)
        ticks.append(
            f'<line x1="{_f(PLOT_LEFT - 4)}" y1="{_f(y)}" x2="{_f(PLOT_LEFT)}" y2="{_f(y)}" stroke="#000000"/>'
            f'<text x="{_f(PLOT_LEFT - 6)}" y="{_f(y + 4)}">{g:.1f}</text>'
        )
    ticks.append(f'<text x="16" y="{_f((PLOT_TOP + PLOT_BOTTOM) / 2)}" transform="rotate(-90 16 '
                 f'{_f((PLOT_TOP + PLOT_BOTTOM) / 2)})" text-anchor="middle">impact (g)</text></g>')
    out.extend(ticks)
    out.append(
        f'<g class="x-labels" font-family="sans-serif" font-size="11">'
        f'<text x="{_f(PLOT_LEFT)}" y="{_f(PLOT_BOTTOM + 18)}" text-anchor="start">{format_ts(t0)}</text>'
        f'<text x="{_f(PLOT_RIGHT)}" y="{_f(PLOT_BOTTOM + 18)}" text-anchor="end">{format_ts(t1)}</text></g>'
    )

    out.append('<g class="legs" font-family="sans-serif" font-size="11">')
    for leg in sorted(legs, key=lambda leg: leg.from_ts):
        if leg.to_ts < t0 or leg.from_ts > t1:
            continue
        xa, xb = x_of(leg.from_ts), x_of(leg.to_ts)
        out.append(
            f'<line class="leg-boundary" x1="{_f(xa)}" y1="{_f(PLOT_TOP)}" x2="{_f(xa)}" y2="{_f(PLOT_BOTTOM)}" '
            f'stroke="#999999" stroke-width="1"/>'
            f'<text x="{_f((xa + xb) / 2)}" y="{_f(PLOT_BOTTOM + 34)}" text-anchor="middle" '
            f'fill={quoteattr(colors[leg.label])}>{escape(leg.label)} ({leg.kind.value})</text>'
        )
    out.append("</g>")

    yt = y_of(spec.high_threshold_g)
    out.append(
        f'<line class="threshold" x1="{_f(PLOT_LEFT)}" y1="{_f(yt)}" x2="{_f(PLOT_RIGHT)}" y2="{_f(yt)}" '
        f'stroke="#000000" stroke-width="1" stroke-dasharray="6 4"/>'
    )

    out.append('<g class="impacts">')
    for imp in impacts:
        x = x_of(imp.ts) - BAR_WIDTH / 2
        y = y_of(imp.v_g)
        out.append(
            f'<rect class="impact" data-leg={quoteattr(imp.leg_label)} data-ts="{imp.ts}" '
            f'data-class="{imp.klass.value}" x="{_f(x)}" y="{_f(y)}" width="{_f(BAR_WIDTH)}" '
            f'height="{_f(PLOT_BOTTOM - y)}" fill="{colors.get(imp.leg_label, other)}"/>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _g6(v: float) -> str:
    return f"{v:.6g}"


def leg_csv_text(stats: Iterable[LegStats]) -> str:
    stats = list(stats)
    ordered = [s for s in stats if s.leg_label != UNKNOWN] + [s for s in stats if s.leg_label == UNKNOWN]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEG_CSV_HEADER)
    for s in ordered:
        w.writerow([s.leg_label, s.kind, s.n_total, s.n_high, s.n_low, _g6(s.max_g), _g6(s.mean_g)])
    return buf.getvalue()


def export_leg_csv(stats: Iterable[LegStats], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(leg_csv_text(stats), encoding="utf-8")
    return path


def read_leg_csv(path: Union[str, Path]) -> list[LegStats]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != LEG_CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            LegStats(
                leg_label=row["leg"],
                kind=row["kind"],
                n_total=int(row["n_total"]),
                n_high=int(row["n_high"]),
                n_low=int(row["n_low"]),
                max_g=float(row["max_g"]),
                mean_g=float(row["mean_g"]),
            )
            for row in reader
        ]


def impacts_csv_text(impacts: Iterable[CalibratedImpact]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ts", "leg", "class", "v_g", "lat", "lon", "x", "y", "z"])
    for i in impacts:
        w.writerow([i.ts, i.leg_label, i.klass.value, _g6(i.v_g), f"{i.lat:.6f}", f"{i.lon:.6f}", *i.raw])
    return buf.getvalue()


def battery_report(journey: JourneyLog) -> str:
    """CSV of the battery level at each connection, then one summary row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "ts", "battery_pct", "records_sent", "days_elapsed"])
    for f in journey.flushes:
        days = (f.ts - journey.start_ts) / 86_400_000
        w.writerow(["flush", f.ts, f"{f.battery_pct:.6f}", f.records_sent, f"{days:.6f}"])
    total_sent = sum(f.records_sent for f in journey.flushes if f.acked)
    days = (journey.end_ts - journey.start_ts) / 86_400_000
    w.writerow(["summary", journey.end_ts, f"{journey.final_battery_pct:.6f}", total_sent, f"{days:.6f}"])
    return buf.getvalue()


@dataclass
class Report:
    aggregates: list[LegAggregate]
    svg: str
    legs_csv: str
    impacts_csv: str

    def write(self, out_dir: Union[str, Path]) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "svg": out / "impacts.svg",
            "legs_csv": out / "legs.csv",
            "impacts_csv": out / "impacts.csv",
        }
        paths["svg"].write_text(self.svg, encoding="utf-8")
        paths["legs_csv"].write_text(self.legs_csv, encoding="utf-8")
        paths["impacts_csv"].write_text(self.impacts_csv, encoding="utf-8")
        return paths


def build_report(records, legs: Sequence[LegDef], lam: float, spec: ReportSpec) -> Report:
    aggregates = aggregate(records, legs, lam, spec.high_threshold_g)
    impacts = sorted((i for agg in aggregates for i in agg.impacts), key=lambda i: i.ts)
    return Report(
        aggregates=aggregates,
        svg=render_impact_plot(impacts, legs, spec),
        legs_csv=leg_csv_text(agg.stats for agg in aggregates),
        impacts_csv=impacts_csv_text(impacts),
    )
