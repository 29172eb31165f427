"""Minimal deterministic SVG emission for report bundles.

Pure-text SVG, no external renderer: line plots (optionally log axes),
free-boundary curves with normal quivers, and downsampled phase maps.
Every emitter is a pure function of the CSV it reads, so plot output is
byte-identical across runs.
"""

from __future__ import annotations

import os

import numpy as np

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 30, 50
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, log: bool, n: int = 5):
    if log:
        lo_e, hi_e = np.log10(lo), np.log10(hi)
        return [10.0 ** e for e in np.linspace(lo_e, hi_e, n)]
    return list(np.linspace(lo, hi, n))


class SvgPlot:
    def __init__(self, title: str, xlabel: str = "", ylabel: str = "",
                 logx: bool = False, logy: bool = False):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.logx = logx
        self.logy = logy
        self.series = []
        self.extra = []

    def add_series(self, x, y, label: str = "", dashed: bool = False):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if self.logx:
            keep &= x > 0
        if self.logy:
            keep &= y > 0
        if keep.sum() >= 1:
            self.series.append((x[keep], y[keep], label, dashed))

    def add_segments(self, segments, label: str = ""):
        """Raw line segments ((x0,y0),(x1,y1)) in data coordinates."""
        self.extra.append((segments, label))

    def _range(self):
        xs = np.concatenate([s[0] for s in self.series]) if self.series else np.array([0, 1])
        ys = np.concatenate([s[1] for s in self.series]) if self.series else np.array([0, 1])
        for segs, _ in self.extra:
            for (x0, y0), (x1, y1) in segs:
                xs = np.append(xs, [x0, x1])
                ys = np.append(ys, [y0, y1])
        if self.logx:
            xs = xs[xs > 0]
        if self.logy:
            ys = ys[ys > 0]
        pad = lambda a: (a.min(), a.max()) if a.max() > a.min() else (a.min() - 1, a.max() + 1)
        return pad(xs), pad(ys)

    def _proj(self, x, y, xr, yr):
        def t(v, lo, hi, log):
            if log:
                v, lo, hi = np.log10(v), np.log10(lo), np.log10(hi)
            return (v - lo) / (hi - lo) if hi > lo else 0.5
        px = _ML + t(x, xr[0], xr[1], self.logx) * (_W - _ML - _MR)
        py = _H - _MB - t(y, yr[0], yr[1], self.logy) * (_H - _MT - _MB)
        return px, py

    def write(self, path: str) -> None:
        xr, yr = self._range()
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
               f'viewBox="0 0 {_W} {_H}">',
               f'<rect width="{_W}" height="{_H}" fill="white"/>',
               f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="14" '
               f'font-family="monospace">{self.title}</text>',
               f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
               f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>']
        for tv in _ticks(*xr, self.logx):
            px, _ = self._proj(tv, yr[0], xr, yr)
            out.append(f'<line x1="{_fmt(px)}" y1="{_H - _MB}" x2="{_fmt(px)}" '
                       f'y2="{_H - _MB + 5}" stroke="black"/>')
            out.append(f'<text x="{_fmt(px)}" y="{_H - _MB + 18}" text-anchor="middle" '
                       f'font-size="10" font-family="monospace">{_fmt(tv)}</text>')
        for tv in _ticks(*yr, self.logy):
            _, py = self._proj(xr[0], tv, xr, yr)
            out.append(f'<line x1="{_ML - 5}" y1="{_fmt(py)}" x2="{_ML}" '
                       f'y2="{_fmt(py)}" stroke="black"/>')
            out.append(f'<text x="{_ML - 8}" y="{_fmt(py) if isinstance(py, str) else _fmt(py + 3)}" '
                       f'text-anchor="end" font-size="10" font-family="monospace">{_fmt(tv)}</text>')
        out.append(f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle" '
                   f'font-size="12" font-family="monospace">{self.xlabel}</text>')
        out.append(f'<text x="16" y="{_H / 2}" text-anchor="middle" font-size="12" '
                   f'font-family="monospace" transform="rotate(-90 16 {_H / 2})">'
                   f'{self.ylabel}</text>')
        for k, (x, y, label, dashed) in enumerate(self.series):
            color = _COLORS[k % len(_COLORS)]
            pts = " ".join(f"{_fmt(px)},{_fmt(py)}"
                           for px, py in zip(*self._proj(x, y, xr, yr)))
            dash = ' stroke-dasharray="6 4"' if dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5"{dash}/>')
            if label:
                out.append(f'<text x="{_W - _MR - 8}" y="{_MT + 16 + 14 * k}" '
                           f'text-anchor="end" font-size="11" fill="{color}" '
                           f'font-family="monospace">{label}</text>')
        for segs, _ in self.extra:
            for (x0, y0), (x1, y1) in segs:
                p0 = self._proj(x0, y0, xr, yr)
                p1 = self._proj(x1, y1, xr, yr)
                out.append(f'<line x1="{_fmt(p0[0])}" y1="{_fmt(p0[1])}" '
                           f'x2="{_fmt(p1[0])}" y2="{_fmt(p1[1])}" '
                           f'stroke="#555555" stroke-width="0.8"/>')
        out.append("</svg>")
        with open(path, "w") as fh:
            fh.write("\n".join(out) + "\n")


def _read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def plot_profile_csv(csv_path: str, svg_path: str, overlay_m=None) -> None:
    """W(r) and E(r) against r on a log-x axis, with the almost-monotone
    envelope m(r) overlaid when provided."""
    raw = _read_csv(csv_path)
    p = SvgPlot(os.path.basename(csv_path), "r", "energy", logx=True)
    p.add_series(np.atleast_1d(raw["r"]), np.atleast_1d(raw["W"]), "W(r)")
    p.add_series(np.atleast_1d(raw["r"]), np.atleast_1d(raw["E"]), "E(r)")
    p.add_series(np.atleast_1d(raw["r"]), np.atleast_1d(raw["z_W"]), "W(z_r)", dashed=True)
    if overlay_m is not None:
        p.add_series(np.atleast_1d(raw["r"]), overlay_m, "m(r)", dashed=True)
    p.write(svg_path)


def plot_curve_csv(csv_path: str, svg_path: str, quiver_scale: float = 0.08) -> None:
    """Free-boundary polyline with normal quivers, colored by point kind."""
    raw = _read_csv(csv_path)
    x = np.atleast_1d(raw["x"])
    y = np.atleast_1d(raw["y"])
    p = SvgPlot(os.path.basename(csv_path), "x", "y")
    kinds = np.genfromtxt(csv_path, delimiter=",", names=True, dtype=None,
                          encoding="utf-8")["kind"]
    kinds = np.atleast_1d(kinds)
    for k, kind in enumerate(sorted(set(kinds.tolist()))):
        sel = kinds == kind
        p.add_series(x[sel], y[sel], str(kind))
    segs = []
    nux = np.atleast_1d(raw["nu_x"])
    nuy = np.atleast_1d(raw["nu_y"])
    for k in range(0, x.size, max(1, x.size // 40)):
        if np.isfinite(nux[k]):
            segs.append(((x[k], y[k]),
                         (x[k] + quiver_scale * nux[k], y[k] + quiver_scale * nuy[k])))
    p.add_segments(segs)
    p.write(svg_path)


def plot_sweep_csv(csv_path: str, svg_path: str) -> None:
    raw = _read_csv(csv_path)
    p = SvgPlot(os.path.basename(csv_path), "family parameter", "eps_observed")
    p.add_series(np.atleast_1d(raw["family_param"]),
                 np.atleast_1d(raw["eps_observed"]), "eps")
    p.write(svg_path)


def plot_ratefit_csv(csv_path: str, svg_path: str) -> None:
    raw = _read_csv(csv_path)
    p = SvgPlot(os.path.basename(csv_path), "r", "value", logx=True, logy=True)
    p.add_series(np.atleast_1d(raw["r"]), np.atleast_1d(raw["value"]), "data")
    if "fit" in raw.dtype.names:
        p.add_series(np.atleast_1d(raw["r"]), np.atleast_1d(raw["fit"]),
                     "fit", dashed=True)
    p.write(svg_path)


def plot_phase_csv(csv_path: str, svg_path: str, max_blocks: int = 64) -> None:
    """Phase map as colored blocks (downsampled)."""
    raw = _read_csv(csv_path)
    ii = np.atleast_1d(raw["i"]).astype(int)
    jj = np.atleast_1d(raw["j"]).astype(int)
    lab = np.atleast_1d(raw["label"]).astype(int)
    n = ii.max() + 1
    m = jj.max() + 1
    grid = -np.ones((n, m), dtype=int)
    grid[ii, jj] = lab
    step = max(1, n // max_blocks, m // max_blocks)
    sub = grid[::step, ::step]
    bw = (_W - _ML - _MR) / sub.shape[0]
    bh = (_H - _MT - _MB) / sub.shape[1]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="14" '
           f'font-family="monospace">{os.path.basename(csv_path)}</text>']
    for a in range(sub.shape[0]):
        for b in range(sub.shape[1]):
            v = sub[a, b]
            if v < 0:
                continue
            color = _COLORS[v % len(_COLORS)]
            x0 = _ML + a * bw
            y0 = _H - _MB - (b + 1) * bh
            out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(bw)}" '
                       f'height="{_fmt(bh)}" fill="{color}"/>')
    out.append("</svg>")
    with open(svg_path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def emit_plots(bundle_dir: str) -> list:
    """One SVG per recognized CSV series in a report bundle.

    Empty or unrecognized series are skipped with a notice; returns the list
    of SVGs written.
    """
    written = []
    notices = []
    for name in sorted(os.listdir(bundle_dir)):
        if not name.endswith(".csv"):
            continue
        csv_path = os.path.join(bundle_dir, name)
        svg_path = csv_path[:-4] + ".svg"
        try:
            with open(csv_path) as fh:
                header = fh.readline().strip().split(",")
                has_data = bool(fh.readline().strip())
            if not has_data:
                notices.append(f"{name}: empty series, skipped")
                continue
            if header[:4] == ["r", "W", "E", "z_W"]:
                plot_profile_csv(csv_path, svg_path)
            elif header[:2] == ["x", "y"] and "nu_x" in header:
                plot_curve_csv(csv_path, svg_path)
            elif header[0] == "family_param":
                plot_sweep_csv(csv_path, svg_path)
            elif header[:2] == ["r", "value"]:
                plot_ratefit_csv(csv_path, svg_path)
            elif "label" in header:
                plot_phase_csv(csv_path, svg_path)
            else:
                notices.append(f"{name}: unrecognized series, skipped")
                continue
            written.append(svg_path)
        except Exception as exc:
            notices.append(f"{name}: plot failed ({exc})")
    if notices:
        with open(os.path.join(bundle_dir, "plot_notices.txt"), "w") as fh:
            fh.write("\n".join(notices) + "\n")
    return written
