"""Plain-text SVG line plots of MSE and RBG against frequency."""

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .metrics import DB_CEIL, DB_FLOOR

__all__ = ["emit_plots", "render_svg"]

_W, _H = 800, 450
_MARGIN = dict(left=70, right=160, top=30, bottom=50)
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo, hi, n=6):
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    return np.arange(np.ceil(lo / step) * step, hi + 0.5 * step, step)


def render_svg(freqs_hz, curves, band, title, ylabel):
    """
    One SVG document with a polyline per curve.

    Parameters
    ----------
    freqs_hz : array of shape (N,)
    curves : list of (label, values) with values of shape (N,), in dB
    band : (f_lo, f_hi) training band edges in Hz, shaded
    """
    if not curves or len(freqs_hz) == 0:
        raise ValueError("nothing to plot")
    x = np.asarray(freqs_hz, dtype=float) / 1e6
    ys = [np.clip(np.asarray(v, dtype=float), DB_FLOOR, DB_CEIL) for _, v in curves]
    finite = np.concatenate(ys)
    y_lo, y_hi = float(finite.min()), float(finite.max())
    if y_hi - y_lo < 1.0:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pw = _W - _MARGIN["left"] - _MARGIN["right"]
    ph = _H - _MARGIN["top"] - _MARGIN["bottom"]

    def sx(v):
        return _MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return _MARGIN["top"] + (y_hi - v) / (y_hi - y_lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>']
    b0, b1 = sx(band[0] / 1e6), sx(band[1] / 1e6)
    out.append(f'<rect class="training-band" x="{b0:.2f}" y="{_MARGIN["top"]}" '
               f'width="{max(b1 - b0, 1.0):.2f}" height="{ph}" fill="#dddddd"/>')
    for t in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{sx(t):.2f}" y1="{_MARGIN["top"] + ph}" x2="{sx(t):.2f}" '
                   f'y2="{_MARGIN["top"] + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{_MARGIN["top"] + ph + 18}" '
                   f'text-anchor="middle">{t:g}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{_MARGIN["left"]}" y1="{sy(t):.2f}" x2="{_MARGIN["left"] + pw}" '
                   f'y2="{sy(t):.2f}" stroke="#eeeeee"/>')
        out.append(f'<text x="{_MARGIN["left"] - 6}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<rect x="{_MARGIN["left"]}" y="{_MARGIN["top"]}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="black"/>')
    for i, ((label, _), y) in enumerate(zip(curves, ys)):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>')
        ly = _MARGIN["top"] + 15 + 18 * i
        lx = _MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{lx + 26}" y="{ly + 4}">{escape(label)}</text>')
    out.append(f'<text x="{_MARGIN["left"] + pw / 2}" y="{_H - 10}" text-anchor="middle">frequency (MHz)</text>')
    out.append(f'<text x="16" y="{_MARGIN["top"] + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_MARGIN["top"] + ph / 2})">{escape(ylabel)}</text>')
    out.append(f'<text x="{_MARGIN["left"] + pw / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(result, out_dir):
    """
    Write ``mse.svg`` and ``rbg.svg`` for an experiment result.

    Returns the list of written paths.
    """
    if not result.results:
        raise ValueError("experiment result holds no metric series")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    first = result.results[0].series
    grid, band = first.freqs, first.training_band
    edges = (grid.frequency(band.start_index), grid.frequency(band.stop_index - 1))
    labels = [f"L = {r.estimator.num_paths}" if n == 1 else f"L = {r.estimator.num_paths} (#{i})"
              for i, (r, n) in enumerate(
                  (r, sum(q.estimator.num_paths == r.estimator.num_paths for q in result.results))
                  for r in result.results)]
    written = []
    for name, attr, ylabel in (("mse", "mse_db", "MSE (dB)"), ("rbg", "rbg_db", "RBG (dB)")):
        curves = [(lab, getattr(r.series, attr)) for lab, r in zip(labels, result.results)]
        svg = render_svg(grid.values, curves, edges, name.upper(), ylabel)
        path = out / f"{name}.svg"
        path.write_text(svg)
        written.append(path)
    return written
