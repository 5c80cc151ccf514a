"""Tiny self-contained SVG scatter/line plots. No external resources."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .errors import DegenerateInputError

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 36, 48


def _axis_range(vals: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if hi <= lo:
        pad = 0.5 if lo == 0.0 else 0.1 * abs(lo)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def xy_plot(
    path_or_buf,
    xs,
    ys,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    width: int = 640,
    height: int = 440,
    line: bool = True,
    markers: bool = True,
) -> None:
    """Write one (x, y) series as a standalone SVG file."""
    xa = np.asarray(xs, dtype=float).ravel()
    ya = np.asarray(ys, dtype=float).ravel()
    if xa.size != ya.size or xa.size < 1:
        raise DegenerateInputError("plot needs equally sized, nonempty xs and ys")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise DegenerateInputError("plot data must be finite")

    x0, x1 = _axis_range(xa)
    y0, y1 = _axis_range(ya)
    pw = width - _MARGIN_L - _MARGIN_R
    ph = height - _MARGIN_T - _MARGIN_B

    def px(v: float) -> float:
        return _MARGIN_L + pw * (v - x0) / (x1 - x0)

    def py(v: float) -> float:
        return _MARGIN_T + ph * (1.0 - (v - y0) / (y1 - y0))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#444" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{escape(title)}</text>')
    if x_label:
        parts.append(
            f'<text x="{_MARGIN_L + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{escape(x_label)}</text>')
    if y_label:
        cx, cy = 18, _MARGIN_T + ph / 2
        parts.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 {cx} {cy:.1f})">{escape(y_label)}</text>')
    for v, anchor, xpix, ypix in (
        (x0, "middle", px(x0), _MARGIN_T + ph + 16),
        (x1, "middle", px(x1), _MARGIN_T + ph + 16),
        (y0, "end", _MARGIN_L - 6, py(y0) + 4),
        (y1, "end", _MARGIN_L - 6, py(y1) + 4),
    ):
        parts.append(
            f'<text x="{xpix:.1f}" y="{ypix:.1f}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="11">{v:.4g}</text>')
    if line and xa.size > 1:
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xa, ya))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>')
    if markers:
        for x, y in zip(xa, ya):
            parts.append(
                f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="#1f6fb2"/>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"

    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)
