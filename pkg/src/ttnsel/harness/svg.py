"""Tiny deterministic SVG plots (points, lines, step functions; optional log axes)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

W, H = 520, 380
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50


@dataclass
class Series:
    x: list
    y: list
    kind: str = "points"  # points | line | step
    color: str = "#1f77b4"
    label: str = ""
    radius: float = 2.5


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlog: bool = False
    ylog: bool = False
    series: list[Series] = field(default_factory=list)
    vlines: list[tuple[float, str]] = field(default_factory=list)

    def _finite(self, v, log):
        return math.isfinite(v) and (v > 0 if log else True)

    def _range(self, vals, log):
        vals = [math.log10(v) if log else v for v in vals]
        if not vals:
            return 0.0, 1.0
        lo, hi = min(vals), max(vals)
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        pad = 0.04 * (hi - lo)
        return lo - pad, hi + pad

    def render(self) -> str:
        xs = [x for s in self.series for x in s.x if self._finite(x, self.xlog)]
        xs += [v for v, _ in self.vlines if self._finite(v, self.xlog)]
        ys = [y for s in self.series for y in s.y if self._finite(y, self.ylog)]
        x0, x1 = self._range(xs, self.xlog)
        y0, y1 = self._range(ys, self.ylog)

        def px(x):
            t = math.log10(x) if self.xlog else x
            return LEFT + (t - x0) / (x1 - x0) * (W - LEFT - RIGHT)

        def py(y):
            t = math.log10(y) if self.ylog else y
            return H - BOTTOM - (t - y0) / (y1 - y0) * (H - TOP - BOTTOM)

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
               f'<rect width="{W}" height="{H}" fill="white"/>',
               f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" '
               f'height="{H - TOP - BOTTOM}" fill="none" stroke="black"/>',
               f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="13">'
               f'{_esc(self.title)}</text>',
               f'<text x="{W / 2:.1f}" y="{H - 10}" text-anchor="middle">{_esc(self.xlabel)}</text>',
               f'<text x="14" y="{H / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {H / 2:.1f})">{_esc(self.ylabel)}</text>']
        out += _ticks(x0, x1, self.xlog, lambda t: (LEFT + (t - x0) / (x1 - x0)
                                                    * (W - LEFT - RIGHT), H - BOTTOM), "x")
        out += _ticks(y0, y1, self.ylog, lambda t: (LEFT, H - BOTTOM - (t - y0) / (y1 - y0)
                                                    * (H - TOP - BOTTOM)), "y")
        for v, color in self.vlines:
            if self._finite(v, self.xlog):
                out.append(f'<line x1="{px(v):.2f}" y1="{TOP}" x2="{px(v):.2f}" '
                           f'y2="{H - BOTTOM}" stroke="{color}" stroke-dasharray="4 3"/>')
        for s in self.series:
            pts = [(x, y) for x, y in zip(s.x, s.y)
                   if self._finite(x, self.xlog) and self._finite(y, self.ylog)]
            if s.kind == "points":
                out += [f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="{s.radius}" '
                        f'fill="{s.color}"/>' for x, y in pts]
            elif pts:
                coords = []
                for i, (x, y) in enumerate(pts):
                    if s.kind == "step" and i > 0:
                        coords.append(f"{px(x):.2f},{py(pts[i - 1][1]):.2f}")
                    coords.append(f"{px(x):.2f},{py(y):.2f}")
                out.append(f'<polyline points="{" ".join(coords)}" fill="none" '
                           f'stroke="{s.color}" stroke-width="1.5"/>')
        legend = [s for s in self.series if s.label]
        for i, s in enumerate(legend):
            yy = TOP + 14 + 14 * i
            out.append(f'<circle cx="{W - RIGHT - 110}" cy="{yy - 4}" r="4" fill="{s.color}"/>')
            out.append(f'<text x="{W - RIGHT - 100}" y="{yy}">{_esc(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, fname) -> None:
        with open(fname, "w") as fh:
            fh.write(self.render())


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _ticks(lo, hi, log, pos, axis):
    out = []
    if log:
        vals = [float(k) for k in range(math.ceil(lo), math.floor(hi) + 1)]
        labels = [f"1e{int(v)}" for v in vals]
    else:
        step = 10 ** math.floor(math.log10((hi - lo) / 4))
        for m in (1, 2, 5, 10):
            if (hi - lo) / (m * step) <= 6:
                step *= m
                break
        vals = [k * step for k in range(math.ceil(lo / step), math.floor(hi / step) + 1)]
        labels = [f"{v:g}" for v in vals]
    for v, lab in zip(vals, labels):
        x, y = pos(v)
        if axis == "x":
            out.append(f'<line x1="{x:.2f}" y1="{y}" x2="{x:.2f}" y2="{y + 4}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{y + 16}" text-anchor="middle">{lab}</text>')
        else:
            out.append(f'<line x1="{x - 4}" y1="{y:.2f}" x2="{x}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{x - 6}" y="{y + 4:.2f}" text-anchor="end">{lab}</text>')
    return out


def path_plot(path, lambda_cj=None, title="") -> Plot:
    """lambda -> C of the selected model, as a step function on a log lambda-axis."""
    bps = list(path.breakpoints)
    if bps:
        lo, hi = bps[0] / 10, bps[-1] * 10
        xs = [lo] + bps + [hi]
        ys = list(path.complexities) + [path.complexities[-1]]
    else:
        xs, ys = [1e-8, 1.0], [path.complexities[0]] * 2
    pos = [(x, y) for x, y in zip(xs, ys) if x > 0]
    plot = Plot(title, "lambda", "C of selected model", xlog=True,
                series=[Series([p[0] for p in pos], [p[1] for p in pos], "step")])
    if lambda_cj:
        plot.vlines.append((lambda_cj, "#d62728"))
    return plot


def cloud_plot(C, R, selected_index=None, oracle_index=None, title="",
               ylabel="risk") -> Plot:
    """Risk-complexity cloud with the selected (red) and oracle (green) models."""
    series = [Series(list(C), list(R), "points", "#7f7f7f", "candidates", 2.0)]
    if oracle_index is not None:
        series.append(Series([C[oracle_index]], [R[oracle_index]], "points", "#2ca02c",
                             "oracle", 5.0))
    if selected_index is not None:
        series.append(Series([C[selected_index]], [R[selected_index]], "points", "#d62728",
                             "selected", 4.0))
    return Plot(title, "complexity C", ylabel, xlog=False, ylog=True, series=series)
