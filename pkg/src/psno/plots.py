"""Minimal SVG line plots: trajectory overlays and sweep curves."""
from __future__ import annotations

import html
import math

import numpy as np

WIDTH, HEIGHT = 640, 360
MARGIN = dict(left=64, right=16, top=32, bottom=48)

BLUE = "#1f77b4"
ORANGE = "#ff7f0e"
GREEN = "#2ca02c"
RED = "#d62728"
GREY = "#444444"

#: Long series are decimated to this many vertices per polyline.
MAX_POINTS = 2000


class Panel:
    """One axes box mapping data coordinates onto a pixel rectangle."""

    def __init__(self, x0, y0, w, h, xlim, ylim, title="", xlabel="", ylabel=""):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim = _pad(xlim, 0.0)
        self.ylim = _pad(ylim, 0.05)
        self.items = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x) - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(y) - lo) / (hi - lo) * self.h

    def line(self, x, y, color, dashed=False, width=1.5, label=None):
        x, y = np.asarray(x, float), np.asarray(y, float)
        if x.size > MAX_POINTS:
            stride = int(np.ceil(x.size / MAX_POINTS))
            x, y = np.append(x[::stride], x[-1]), np.append(y[::stride], y[-1])
        keep = np.isfinite(x) & np.isfinite(y)
        # split at gaps so missing values stay missing
        segments, current = [], []
        for xi, yi, ok in zip(self.px(x), self.py(y), keep):
            if ok:
                current.append(f"{xi:.2f},{yi:.2f}")
            elif current:
                segments.append(current)
                current = []
        if current:
            segments.append(current)
        dash = ' stroke-dasharray="4,3"' if dashed else ""
        for seg in segments:
            self.items.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash} '
                              f'points="{" ".join(seg)}"/>')
        if label:
            self.items.append(("legend", label, color, dashed))

    def vline(self, x, color, label=None):
        xp = float(self.px(x))
        self.items.append(f'<line x1="{xp:.2f}" y1="{self.y0}" x2="{xp:.2f}" y2="{self.y0 + self.h}" '
                          f'stroke="{color}" stroke-width="1.2" stroke-dasharray="2,3"/>')
        if label:
            self.items.append(("legend", label, color, True))

    def render(self) -> str:
        out = [f'<rect x="{self.x0}" y="{self.y0}" width="{self.w}" height="{self.h}" '
               f'fill="none" stroke="{GREY}"/>']
        for i, tick in enumerate(np.linspace(*self.xlim, 5)):
            xp = float(self.px(tick))
            out.append(f'<text x="{xp:.1f}" y="{self.y0 + self.h + 14}" font-size="10" '
                       f'text-anchor="middle">{tick:.3g}</text>')
        for tick in np.linspace(*self.ylim, 5):
            yp = float(self.py(tick))
            out.append(f'<text x="{self.x0 - 4}" y="{yp + 3:.1f}" font-size="10" '
                       f'text-anchor="end">{tick:.3g}</text>')
        out.append(_text(self.x0 + self.w / 2, self.y0 - 8, self.title, 12, "middle"))
        out.append(_text(self.x0 + self.w / 2, self.y0 + self.h + 30, self.xlabel, 11, "middle"))
        out.append(f'<text x="{self.x0 - 44}" y="{self.y0 + self.h / 2}" font-size="11" '
                   f'text-anchor="middle" transform="rotate(-90 {self.x0 - 44} {self.y0 + self.h / 2})">'
                   f'{html.escape(self.ylabel)}</text>')
        legend_y = self.y0 + 12
        for item in self.items:
            if isinstance(item, tuple):
                _, label, color, dashed = item
                dash = ' stroke-dasharray="4,3"' if dashed else ""
                lx = self.x0 + self.w - 150
                out.append(f'<line x1="{lx}" y1="{legend_y - 4}" x2="{lx + 20}" y2="{legend_y - 4}" '
                           f'stroke="{color}" stroke-width="1.5"{dash}/>')
                out.append(_text(lx + 24, legend_y, label, 10, "start"))
                legend_y += 13
            else:
                out.append(item)
        return "\n".join(out)


def _pad(lim, frac):
    lo, hi = float(lim[0]), float(lim[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = 0.0, 1.0
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - frac * span, hi + frac * span


def _text(x, y, s, size, anchor):
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" text-anchor="{anchor}">'
            f'{html.escape(str(s))}</text>')


def _document(panels, width, height, title="") -> str:
    body = "\n".join(p.render() for p in panels)
    head = _text(width / 2, 16, title, 13, "middle") if title else ""
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n{head}\n{body}\n</svg>\n')


def _limits(*arrays):
    vals = np.concatenate([np.ravel(np.asarray(a, float)) for a in arrays])
    vals = vals[np.isfinite(vals)]
    return (vals.min(), vals.max()) if vals.size else (0.0, 1.0)


def trajectory_svg(input_t, input_y, target_t, target_y, pred_t, pred_y, title="") -> str:
    """Angle and speed panels: input segment and truth solid, prediction dotted.

    ``*_y`` arrays are (n, 2) with angle then speed.
    """
    names = ("rotor angle δ", "speed deviation ω")
    panels = []
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = (HEIGHT * 2 - 2 * (MARGIN["top"] + MARGIN["bottom"])) / 2
    for c in range(2):
        x_lim = (min(np.min(input_t), np.min(target_t)), max(np.max(target_t), np.max(pred_t)))
        y_lim = _limits(input_y[:, c], target_y[:, c], pred_y[:, c])
        p = Panel(MARGIN["left"], MARGIN["top"] + 12 + c * (ph + MARGIN["top"] + MARGIN["bottom"]),
                  pw, ph, x_lim, y_lim, names[c], "time (s)", names[c])
        p.line(input_t, input_y[:, c], BLUE, label="input")
        p.line(target_t, target_y[:, c], GREY, label="truth")
        p.line(pred_t, pred_y[:, c], ORANGE, dashed=True, label="prediction")
        panels.append(p)
    return _document(panels, WIDTH, 2 * HEIGHT, title)


def sweep_svg(pm1, series: dict, pm: float, threshold: float, title="") -> str:
    """MASE against Pm1; ``series`` maps legend label to values."""
    colors = [BLUE, ORANGE, "#9467bd", "#8c564b"]
    p = Panel(MARGIN["left"], MARGIN["top"], WIDTH - MARGIN["left"] - MARGIN["right"],
              HEIGHT - MARGIN["top"] - MARGIN["bottom"], (np.min(pm1), np.max(pm1)),
              _limits(*series.values()), title, "post-disturbance power Pm1 (pu)", "MASE")
    for color, (label, values) in zip(colors, series.items()):
        p.line(pm1, values, color, label=label)
    p.vline(pm, GREEN, "Pm1 = Pm")
    p.vline(threshold, RED, "instability threshold")
    return _document([p], WIDTH, HEIGHT)
