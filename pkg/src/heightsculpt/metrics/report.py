"""CSV tables and grayscale PNG rasters for experiment outputs."""

from __future__ import annotations

import csv
import math

import numpy as np
from PIL import Image, ImageDraw


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def write_csv(path, header: list[str], rows) -> None:
    """Fixed-header CSV with full-precision floats; byte-stable across runs."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def _gray(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi - lo <= 0:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.round(255 * (v - lo) / (hi - lo)).astype(np.uint8)


def write_heatmap(path, matrix, cell_px: int = 48) -> None:
    """Matrix as value-mapped gray blocks (dark = low)."""
    img = np.kron(_gray(matrix), np.ones((cell_px, cell_px), dtype=np.uint8))
    Image.fromarray(img, mode="L").save(path, format="PNG")


def write_depth_png(path, depths: np.ndarray, d_max: float) -> None:
    """Depth map as 8-bit gray, white = near the sensor (more material)."""
    img = np.round(255 * (1 - np.clip(np.asarray(depths) / d_max, 0, 1))).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")


def write_curves(path, xs, series: list, size=(400, 300), baselines: list | None = None, log_y: bool = False) -> None:
    """Polyline plot of several y-series over shared x; baselines drawn dashed."""
    w, h = size
    pad = 20
    ys_all = [np.asarray(s, dtype=np.float64) for s in series]
    vals = np.concatenate(ys_all + [np.asarray(baselines or [], dtype=np.float64)])
    vals = vals[np.isfinite(vals)]
    if log_y:
        vals = np.log10(np.maximum(vals, 1e-300))
    lo, hi = (float(vals.min()), float(vals.max())) if len(vals) else (0.0, 1.0)
    if hi - lo <= 0:
        hi = lo + 1.0
    xs = np.asarray(xs, dtype=np.float64)
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 - x0 <= 0:
        x1 = x0 + 1.0

    def px(x, y):
        y = math.log10(max(y, 1e-300)) if log_y else y
        return pad + (x - x0) / (x1 - x0) * (w - 2 * pad), h - pad - (y - lo) / (hi - lo) * (h - 2 * pad)

    img = Image.new("L", size, 255)
    draw = ImageDraw.Draw(img)
    draw.rectangle([pad, pad, w - pad, h - pad], outline=160)
    shades = [0, 90, 150, 200]
    for k, ys in enumerate(ys_all):
        pts = [px(x, y) for x, y in zip(xs, ys) if math.isfinite(y)]
        if len(pts) > 1:
            draw.line(pts, fill=shades[k % len(shades)], width=2)
        for p in pts:
            draw.ellipse([p[0] - 2, p[1] - 2, p[0] + 2, p[1] + 2], fill=shades[k % len(shades)])
    for k, b in enumerate(baselines or []):
        _, yb = px(x0, b)
        for xa in range(pad, w - pad, 10):
            draw.line([(xa, yb), (min(xa + 5, w - pad), yb)], fill=shades[k % len(shades)], width=1)
    img.save(path, format="PNG")
