"""Zero-normalized cross-correlation block matching, the classical baseline.

The image is tiled into square windows; each source window is correlated
against every integer shift of itself in the target within a search radius,
and the best shift is kept when its correlation peak clears a threshold.
Windows without intensity variance never match.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import IntensityRaster

DEFAULT_WINDOW = 50
DEFAULT_THRESHOLD = 0.25

CSV_HEADER = ("window_center_x,window_center_y,dx_px,dy_px,"
              "dx_m_per_s,dy_m_per_s,correlation")


@dataclass(frozen=True)
class NccMatch:
    """One accepted window match: center pixel, integer shift, peak value."""

    center_x: float
    center_y: float
    dx: int
    dy: int
    correlation: float


def ncc_displacements(src: IntensityRaster, tgt: IntensityRaster,
                      window: int = DEFAULT_WINDOW,
                      search_radius: int | None = None,
                      threshold: float = DEFAULT_THRESHOLD,
                      stride: int | None = None) -> list[NccMatch]:
    """Best integer displacement per window by exhaustive ZNCC search.

    ``search_radius`` defaults to window // 2 and ``stride`` to ``window``
    (non-overlapping tiling).  Matches come back in row-major tile order;
    ties on the correlation peak keep the first shift in row-major scan
    order, so results are deterministic.
    """
    if src.geometry != tgt.geometry:
        raise ValueError("source and target must share one grid geometry")
    g = src.geometry
    if window < 8:
        raise ValueError("window must be >= 8 pixels")
    if window > min(g.width, g.height):
        raise ValueError("window exceeds image extent")
    if search_radius is None:
        search_radius = window // 2
    if search_radius < 1:
        raise ValueError("search_radius must be >= 1")
    if stride is None:
        stride = window
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not (0 < threshold <= 1):
        raise ValueError("threshold must lie in (0, 1]")

    a_img = src.values
    b_img = tgt.values
    matches = []
    for ty in range(0, g.height - window + 1, stride):
        for tx in range(0, g.width - window + 1, stride):
            a = a_img[ty:ty + window, tx:tx + window]
            a0 = a - a.mean()
            va = float((a0 * a0).sum())
            if va == 0.0:
                continue
            best_corr = -np.inf
            best = None
            for dy in range(-search_radius, search_radius + 1):
                sy = ty + dy
                if sy < 0 or sy + window > g.height:
                    continue
                for dx in range(-search_radius, search_radius + 1):
                    sx = tx + dx
                    if sx < 0 or sx + window > g.width:
                        continue
                    b = b_img[sy:sy + window, sx:sx + window]
                    b0 = b - b.mean()
                    vb = float((b0 * b0).sum())
                    if vb == 0.0:
                        continue
                    corr = float((a0 * b0).sum()) / np.sqrt(va * vb)
                    if corr > best_corr:
                        best_corr = corr
                        best = (dx, dy)
            if best is not None and best_corr >= threshold:
                half = (window - 1) / 2.0
                matches.append(NccMatch(tx + half, ty + half,
                                        best[0], best[1], best_corr))
    return matches


def matches_to_csv(matches: list[NccMatch], path: str | Path,
                   pixel_size: float, dt: float) -> None:
    """Write matches with their m/s conversion (shift * pixel_size / dt)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    scale = pixel_size / dt
    lines = [CSV_HEADER]
    for m in matches:
        lines.append(f"{m.center_x:.1f},{m.center_y:.1f},{m.dx},{m.dy},"
                     f"{m.dx * scale:.9g},{m.dy * scale:.9g},{m.correlation:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")
