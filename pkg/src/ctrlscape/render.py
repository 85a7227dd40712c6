"""Contour extraction and dependency-free image output (SVG, binary PPM)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .slices import LandscapeGrid, normalize_grid

SVG_SIZE = 400
DEFAULT_LEVEL_COUNT = 15

# viridis sampled at 9 evenly spaced points, linearly interpolated in between
_VIRIDIS = np.array([
    (68, 1, 84), (71, 44, 122), (59, 82, 139), (44, 113, 142), (33, 145, 140),
    (39, 173, 129), (92, 200, 99), (170, 220, 50), (253, 231, 37),
], dtype=float)
_FAILED_COLOR = (255, 0, 255)


@dataclass
class ContourSet:
    levels: list[float]
    polylines: list[list[np.ndarray]]
    extent: float
    closed: list[list[bool]] = field(default_factory=list)

    def chains(self):
        for k, level in enumerate(self.levels):
            for m, chain in enumerate(self.polylines[k]):
                yield k, level, chain, self.closed[k][m]


# Edges of a cell, counter-clockwise from the bottom: 0 bottom, 1 right, 2 top, 3 left.
# Corners: 0 (i, j), 1 (i+1, j), 2 (i+1, j+1), 3 (i, j+1); bit k set when corner k is above.
_SEGMENTS = {
    0: [], 15: [],
    1: [(3, 0)], 14: [(3, 0)],
    2: [(0, 1)], 13: [(0, 1)],
    3: [(3, 1)], 12: [(3, 1)],
    4: [(1, 2)], 11: [(1, 2)],
    6: [(0, 2)], 9: [(0, 2)],
    7: [(3, 2)], 8: [(3, 2)],
}
# saddles: which corners get joined depends on the cell-centre average
_SADDLE = {
    5: {True: [(3, 2), (0, 1)], False: [(3, 0), (1, 2)]},
    10: {True: [(3, 0), (1, 2)], False: [(0, 1), (3, 2)]},
}
_EDGE_CORNERS = {0: (0, 1), 1: (1, 2), 2: (3, 2), 3: (0, 3)}
_CORNER_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1))


def _edge_key(i: int, j: int, edge: int) -> tuple:
    """Global id of a cell edge, shared by the two cells that border it."""
    if edge == 0:
        return ("h", i, j)
    if edge == 2:
        return ("h", i, j + 1)
    if edge == 3:
        return ("v", i, j)
    return ("v", i + 1, j)


def _cell_segments(i, j, corner_vals, level):
    index = sum(1 << k for k, val in enumerate(corner_vals) if val > level)
    if index in _SADDLE:
        center_above = sum(corner_vals) / 4.0 > level
        return _SADDLE[index][center_above]
    return _SEGMENTS[index]


def _chain_segments(segments: list[tuple[tuple, tuple]]) -> list[tuple[list[tuple], bool]]:
    """Join segments that share edge ids into maximal chains."""
    touching: dict[tuple, list[int]] = {}
    for s, (a, b) in enumerate(segments):
        touching.setdefault(a, []).append(s)
        touching.setdefault(b, []).append(s)
    used = [False] * len(segments)

    def walk(start_seg, start_key):
        keys = [start_key]
        seg, key = start_seg, start_key
        while True:
            used[seg] = True
            a, b = segments[seg]
            key = b if a == key else a
            keys.append(key)
            nxt = [s for s in touching[key] if not used[s]]
            if not nxt:
                return keys
            seg = nxt[0]

    chains = []
    ends = sorted(k for k, segs in touching.items() if len(segs) == 1)
    for key in ends:
        seg = touching[key][0]
        if not used[seg]:
            chains.append((walk(seg, key), False))
    for s in range(len(segments)):
        if not used[s]:
            keys = walk(s, segments[s][0])
            chains.append((keys, keys[0] == keys[-1]))
    return chains


def marching_squares(grid: LandscapeGrid, levels: Optional[Sequence[float]] = None) -> ContourSet:
    """Isocontours of a grid as polylines in plane coordinates.

    Edge crossings are linearly interpolated; ambiguous saddle cells are
    resolved by comparing the mean of the four corners with the level. Cells
    with a non-finite corner are skipped.
    """
    values = grid.values
    coords = grid.plane.coords()
    if levels is None:
        levels = default_levels(grid)
    levels = [float(lv) for lv in levels]
    if not all(math.isfinite(lv) for lv in levels):
        raise InvalidArgument("contour levels must be finite")
    n = values.shape[0]
    finite = np.isfinite(values)
    all_lines, all_closed = [], []
    for level in levels:
        segments = []
        points: dict[tuple, tuple[float, float]] = {}
        for i in range(n - 1):
            for j in range(n - 1):
                corners = [(i + di, j + dj) for di, dj in _CORNER_OFFSETS]
                if not all(finite[c] for c in corners):
                    continue
                vals = [values[c] for c in corners]
                for e0, e1 in _cell_segments(i, j, vals, level):
                    keys = []
                    for edge in (e0, e1):
                        key = _edge_key(i, j, edge)
                        if key not in points:
                            ca, cb = _EDGE_CORNERS[edge]
                            (ia, ja), (ib, jb) = corners[ca], corners[cb]
                            va, vb = vals[ca], vals[cb]
                            t = (level - va) / (vb - va)
                            points[key] = (coords[ia] + t * (coords[ib] - coords[ia]),
                                           coords[ja] + t * (coords[jb] - coords[ja]))
                        keys.append(key)
                    segments.append((keys[0], keys[1]))
        lines, closed = [], []
        for keys, is_closed in _chain_segments(segments):
            lines.append(np.array([points[k] for k in keys]))
            closed.append(is_closed)
        all_lines.append(lines)
        all_closed.append(closed)
    return ContourSet(levels=levels, polylines=all_lines, extent=grid.plane.extent,
                      closed=all_closed)


def default_levels(grid: LandscapeGrid, count: int = DEFAULT_LEVEL_COUNT) -> list[float]:
    """``count`` interior quantiles of the finite grid values."""
    finite = grid.values[np.isfinite(grid.values)]
    if finite.size == 0:
        return []
    qs = np.linspace(0.0, 1.0, count + 2)[1:-1]
    return sorted(set(float(q) for q in np.quantile(finite, qs)))


def colormap_lookup(t: np.ndarray, colormap: str = "viridis") -> np.ndarray:
    """Map values in [0, 1] to uint8 RGB triples."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    if colormap == "gray":
        g = np.rint(t * 255.0)
        rgb = np.stack([g, g, g], axis=-1)
    elif colormap == "viridis":
        pos = t * (len(_VIRIDIS) - 1)
        lo = np.minimum(np.floor(pos).astype(int), len(_VIRIDIS) - 2)
        frac = (pos - lo)[..., None]
        rgb = np.rint(_VIRIDIS[lo] * (1 - frac) + _VIRIDIS[lo + 1] * frac)
    else:
        raise InvalidArgument(f"unknown colormap {colormap!r}")
    return rgb.astype(np.uint8)


def _hex(rgb) -> str:
    return "#%02x%02x%02x" % tuple(int(c) for c in rgb)


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def contour_svg(contours: ContourSet, overlays: Optional[Sequence[np.ndarray]] = None,
                size: int = SVG_SIZE) -> bytes:
    """SVG with one ``path`` per contour chain and optional ``polyline`` overlays.

    Plane coordinates in ``[-extent, extent]`` map onto a ``size x size``
    viewport with the second coordinate pointing up. Overlays are sequences
    of 2D plane points, e.g. a gradient-descent path.
    """
    r = contours.extent
    scale = size / (2.0 * r)

    def xy(p):
        return _fmt((p[0] + r) * scale), _fmt((r - p[1]) * scale)

    n_levels = max(len(contours.levels), 1)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" '
        f'height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="#ffffff"/>',
    ]
    for k, level, chain, closed in contours.chains():
        color = _hex(colormap_lookup(k / max(n_levels - 1, 1)))
        coords = [xy(p) for p in chain]
        d = "M " + " L ".join(f"{x} {y}" for x, y in coords) + (" Z" if closed else "")
        parts.append(f'<path class="level-{k}" d="{d}" fill="none" stroke="{color}" '
                     f'stroke-width="1" data-level="{level:.17g}"/>')
    for path in overlays or ():
        pts = " ".join(f"{x},{y}" for x, y in (xy(p) for p in np.asarray(path, dtype=float)))
        parts.append(f'<polyline class="overlay" points="{pts}" fill="none" '
                     f'stroke="#000000" stroke-width="1.5"/>')
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")


def heightmap_image(grid: LandscapeGrid, colormap: str = "viridis") -> bytes:
    """Binary PPM (P6) of the normalized grid; image up is plane ``p2`` up."""
    norm = normalize_grid(grid)
    values = norm.values if isinstance(norm, LandscapeGrid) else norm
    # values[i, j]: i along p1 (image x), j along p2 (image y, flipped)
    img_vals = values.T[::-1]
    failed = ~np.isfinite(img_vals)
    rgb = colormap_lookup(np.where(failed, 0.0, img_vals), colormap)
    rgb[failed] = _FAILED_COLOR
    h, w = img_vals.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """Parse a P6 file written by :func:`heightmap_image` into ``(h, w, 3)`` uint8."""
    header, _, rest = data.partition(b"\n")
    if header != b"P6":
        raise InvalidArgument("not a binary PPM")
    dims, _, rest = rest.partition(b"\n")
    maxval, _, pixels = rest.partition(b"\n")
    w, h = (int(t) for t in dims.split())
    if int(maxval) != 255:
        raise InvalidArgument("only maxval 255 is supported")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)


def line_chart_svg(series: dict[str, tuple[np.ndarray, np.ndarray]], log_y: bool = True,
                   width: int = 480, height: int = 320) -> bytes:
    """Multi-curve chart, e.g. distance-to-optimum against evaluations."""
    margin = 40
    xs_all = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()]) \
        if series else np.array([0.0, 1.0])
    ys_all = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()]) \
        if series else np.array([1.0, 2.0])
    if log_y:
        ys_all = np.log10(np.maximum(ys_all, 1e-300))
    ys_all = ys_all[np.isfinite(ys_all)]
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = (float(ys_all.min()), float(ys_all.max())) if ys_all.size else (0.0, 1.0)
    x_hi = x_hi if x_hi > x_lo else x_lo + 1.0
    y_hi = y_hi if y_hi > y_lo else y_lo + 1.0

    def px(x, y):
        if log_y:
            y = math.log10(max(y, 1e-300))
        sx = margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)
        sy = height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)
        return f"{_fmt(sx)},{_fmt(sy)}"

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="#888888"/>',
    ]
    n = max(len(series), 1)
    for k, (label, (x, y)) in enumerate(sorted(series.items())):
        color = _hex(colormap_lookup(k / max(n - 1, 1)))
        pts = " ".join(px(float(a), float(b)) for a, b in zip(x, y) if math.isfinite(b))
        parts.append(f'<polyline class="series" data-label="{label}" points="{pts}" '
                     f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{margin + 4}" y="{margin + 14 + 14 * k}" font-size="11" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")
