"""Static SVG line charts for experiment outputs.

The charts are hand-rolled vector files: no plotting library at runtime, and
the output bytes are a pure function of the input CSV bytes, so identical
inputs re-render byte-identically. Four chart kinds are supported: the
training metrics (return plus the two penalty panels), average quotes against
the reference price, average inventories, and average P&L.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

PALETTE = ("#2b6cb0", "#c53030", "#2f855a", "#805ad5", "#b7791f")
FONT = "Helvetica, Arial, sans-serif"

PANEL_W = 640.0
PANEL_H = 220.0
MARGIN_L = 70.0
MARGIN_R = 18.0
MARGIN_T = 30.0
MARGIN_B = 42.0
TITLE_H = 28.0

CHART_FILES = {
    "learning": "learning_metrics.svg",
    "quotes": "avg_quotes.svg",
    "inventories": "avg_inventories.svg",
    "pnl": "avg_pnl.svg",
}

REQUIRED_COLUMNS = {
    "learning": ("epoch", "return", "hedge_penalty", "activity_penalty"),
    "quotes": ("time", "b_ref", "beta", "alpha"),
    "inventories": ("time", "I", "Q"),
    "pnl": ("time", "X"),
}


class MissingColumnError(ConfigError):
    """A chart input CSV lacks one or more required columns."""

    def __init__(self, path, missing):
        self.path = str(path)
        self.missing = tuple(missing)
        cols = ", ".join(self.missing)
        super().__init__(f"{self.path}: missing required columns: {cols}")


def read_columns(path) -> dict:
    """Parse a numeric CSV into {column: float array}. Header row required."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ConfigError(f"{path}: empty file, expected a header row")
    header = rows[0]
    data = {h: [] for h in header}
    for row in rows[1:]:
        for h, v in zip(header, row):
            data[h].append(float(v))
    return {h: np.asarray(v, dtype=float) for h, v in data.items()}


def _require(cols: dict, names, path) -> None:
    missing = [n for n in names if n not in cols]
    if missing:
        raise MissingColumnError(path, missing)


# ------------------------------------------------------------------- scales

def _nice_step(span: float, target: int) -> float:
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0):
        if mult * mag >= raw:
            return mult * mag
    return 10.0 * mag


def _axis_range(values) -> tuple:
    """Padded [lo, hi] covering the finite data; a unit box when empty."""
    flat = [np.asarray(v, dtype=float) for v in values]
    finite = [v[np.isfinite(v)] for v in flat]
    finite = [v for v in finite if v.size]
    if not finite:
        return 0.0, 1.0
    lo = min(float(v.min()) for v in finite)
    hi = max(float(v.max()) for v in finite)
    if hi <= lo:
        pad = 1.0 if lo == 0.0 else abs(lo) * 0.1
        return lo - pad, lo + pad
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, target: int = 5) -> tuple:
    step = _nice_step(hi - lo, target)
    first = math.ceil(lo / step - 1e-9) * step
    out = []
    k = 0
    while True:
        v = first + k * step
        if v > hi + step * 1e-9:
            break
        out.append(0.0 if abs(v) < step * 1e-9 else v)
        k += 1
    return out, step


def _fmt_tick(v: float, step: float) -> str:
    if step >= 1.0:
        return f"{v:.0f}" if abs(v) < 1e15 else f"{v:g}"
    decimals = max(0, -int(math.floor(math.log10(step))))
    return f"{v:.{decimals}f}"


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


# ------------------------------------------------------------------ panels

@dataclass(frozen=True)
class Panel:
    """One set of axes: shared x, any number of labelled series."""

    ylabel: str
    x: np.ndarray
    series: tuple        # ((label, y_array), ...)
    xlabel: str = ""


def _panel_svg(out: list, panel: Panel, y_off: float) -> None:
    left, top = MARGIN_L, y_off + MARGIN_T
    w, h = PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B
    x = np.asarray(panel.x, dtype=float)
    ys = [np.asarray(y, dtype=float) for _, y in panel.series]

    x_lo, x_hi = _axis_range([x])
    y_lo, y_hi = _axis_range(ys)

    def px(v):
        return left + (v - x_lo) / (x_hi - x_lo) * w

    def py(v):
        return top + h - (v - y_lo) / (y_hi - y_lo) * h

    out.append(f'<rect x="{left:.2f}" y="{top:.2f}" width="{w:.2f}" '
               f'height="{h:.2f}" fill="none" stroke="#444" '
               'stroke-width="1"/>')

    xticks, xstep = _ticks(x_lo, x_hi)
    for v in xticks:
        cx = px(v)
        out.append(f'<line x1="{cx:.2f}" y1="{top:.2f}" x2="{cx:.2f}" '
                   f'y2="{top + h:.2f}" stroke="#ddd" stroke-width="0.5"/>')
        out.append(f'<text x="{cx:.2f}" y="{top + h + 16:.2f}" '
                   f'font-size="11" text-anchor="middle" fill="#333" '
                   f'font-family="{FONT}">{_fmt_tick(v, xstep)}</text>')
    yticks, ystep = _ticks(y_lo, y_hi)
    for v in yticks:
        cy = py(v)
        out.append(f'<line x1="{left:.2f}" y1="{cy:.2f}" '
                   f'x2="{left + w:.2f}" y2="{cy:.2f}" stroke="#ddd" '
                   'stroke-width="0.5"/>')
        out.append(f'<text x="{left - 6:.2f}" y="{cy + 4:.2f}" '
                   f'font-size="11" text-anchor="end" fill="#333" '
                   f'font-family="{FONT}">{_fmt_tick(v, ystep)}</text>')

    if panel.xlabel:
        out.append(f'<text x="{left + w / 2:.2f}" y="{top + h + 34:.2f}" '
                   f'font-size="12" text-anchor="middle" fill="#222" '
                   f'font-family="{FONT}">{_esc(panel.xlabel)}</text>')
    out.append(f'<text x="{left - 52:.2f}" y="{top + h / 2:.2f}" '
               f'font-size="12" text-anchor="middle" fill="#222" '
               f'font-family="{FONT}" transform="rotate(-90 '
               f'{left - 52:.2f} {top + h / 2:.2f})">'
               f'{_esc(panel.ylabel)}</text>')

    for i, ((label, _), y) in enumerate(zip(panel.series, ys)):
        color = PALETTE[i % len(PALETTE)]
        keep = np.isfinite(x) & np.isfinite(y)
        if np.any(keep):
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}"
                           for a, b in zip(x[keep], y[keep]))
            out.append(f'<polyline points="{pts}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5"/>')
        lx = left + w - 118.0
        ly = top + 14.0 + 16.0 * i
        out.append(f'<line x1="{lx:.2f}" y1="{ly - 4:.2f}" '
                   f'x2="{lx + 18:.2f}" y2="{ly - 4:.2f}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 24:.2f}" y="{ly:.2f}" font-size="11" '
                   f'fill="#222" font-family="{FONT}">{_esc(label)}</text>')


def render_chart(title: str, panels) -> str:
    """Render stacked panels to a complete standalone SVG document."""
    panels = tuple(panels)
    height = TITLE_H + PANEL_H * len(panels)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {PANEL_W:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{PANEL_W:.0f}" height="{height:.0f}" '
        'fill="#ffffff"/>',
        f'<text x="{PANEL_W / 2:.2f}" y="20" font-size="14" '
        f'text-anchor="middle" fill="#111" font-family="{FONT}" '
        f'font-weight="bold">{_esc(title)}</text>',
    ]
    for i, panel in enumerate(panels):
        _panel_svg(out, panel, TITLE_H + PANEL_H * i)
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------ charts

def _learning_chart(cols: dict) -> str:
    epoch = cols["epoch"]
    panels = (
        Panel("mean return", epoch, (("return", cols["return"]),)),
        Panel("hedge penalty", epoch,
              (("hedge penalty", cols["hedge_penalty"]),)),
        Panel("activity penalty", epoch,
              (("activity penalty", cols["activity_penalty"]),),
              xlabel="epoch"),
    )
    return render_chart("Training metrics", panels)


def _quotes_chart(cols: dict) -> str:
    panel = Panel("price", cols["time"],
                  (("bid quote", cols["beta"]),
                   ("ask quote", cols["alpha"]),
                   ("reference", cols["b_ref"])),
                  xlabel="time (years)")
    return render_chart("Average quotes", (panel,))


def _inventories_chart(cols: dict) -> str:
    panel = Panel("position", cols["time"],
                  (("options held", cols["I"]),
                   ("underlying held", cols["Q"])),
                  xlabel="time (years)")
    return render_chart("Average inventories", (panel,))


def _pnl_chart(cols: dict) -> str:
    panel = Panel("cash", cols["time"], (("cash", cols["X"]),),
                  xlabel="time (years)")
    return render_chart("Average P&amp;L", (panel,))


_RENDERERS = {
    "learning": _learning_chart,
    "quotes": _quotes_chart,
    "inventories": _inventories_chart,
    "pnl": _pnl_chart,
}


def emit_charts(csvs: dict, out_dir) -> dict:
    """Render chart files for the given {kind: csv_path} inputs.

    Returns {kind: written_path}. Unknown kinds are rejected; a CSV without
    the columns its chart needs raises MissingColumnError. Empty data (header
    only) renders axes with no lines.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for kind in sorted(csvs):
        if kind not in _RENDERERS:
            raise ConfigError(f"unknown chart kind: {kind!r} (expected one "
                              f"of {sorted(_RENDERERS)})")
        path = csvs[kind]
        cols = read_columns(path)
        _require(cols, REQUIRED_COLUMNS[kind], path)
        svg = _RENDERERS[kind](cols)
        target = out_dir / CHART_FILES[kind]
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
        written[kind] = target
    return written
