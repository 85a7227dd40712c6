"""Random 2D slices: basis sampling, grid evaluation, blur and normalization."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import InvalidArgument, UndefinedResult
from .objectives import ObjectiveHandle

DEFAULT_RESOLUTION = 100
DEFAULT_EPISODES = 10
DEFAULT_BLUR_SIGMA = 1.0

_MAX_RESAMPLES = 16


def sample_orthonormal_basis(d: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal directions from the rotation-invariant distribution.

    Draws two standard-normal vectors, normalizes the first and Gram-Schmidt
    orthogonalizes the second against it.
    """
    if d < 2:
        raise InvalidArgument("a 2D slice needs d >= 2")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_RESAMPLES):
        a = rng.standard_normal(d)
        b = rng.standard_normal(d)
        na = np.linalg.norm(a)
        if na < 1e-12:
            continue
        u = a / na
        r = b - u * (u @ b)
        nr = np.linalg.norm(r)
        if nr < 1e-12 * max(np.linalg.norm(b), 1.0):
            continue
        v = r / nr
        # second pass removes the rounding residue of the first projection
        v = v - u * (u @ v)
        v /= np.linalg.norm(v)
        return u, v
    raise InvalidArgument("could not draw a non-degenerate basis")


def sample_unnormalized_basis(d: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal directions whose elements start uniform on [-1, 1].

    Both vectors end up with the mean of the two originally drawn lengths,
    so the plane keeps the scale of the raw draws instead of unit length.
    The raw draws are ``default_rng(seed).uniform(-1, 1, size=(2, d))``.
    """
    if d < 2:
        raise InvalidArgument("a 2D slice needs d >= 2")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_RESAMPLES):
        u0, v0 = rng.uniform(-1.0, 1.0, size=(2, d))
        nu, nv = np.linalg.norm(u0), np.linalg.norm(v0)
        if nu < 1e-12 or nv < 1e-12:
            continue
        length = 0.5 * (nu + nv)
        u = u0 * (length / nu)
        r = v0 - u * ((u @ v0) / (u @ u))
        nr = np.linalg.norm(r)
        if nr < 1e-12 * nv:
            continue
        r = r - u * ((u @ r) / (u @ u))
        v = r * (length / np.linalg.norm(r))
        return u, v
    raise InvalidArgument("could not draw a non-degenerate basis")


def sample_basis(d: int, seed: int, mode: str = "orthonormal") -> tuple[np.ndarray, np.ndarray]:
    if mode == "orthonormal":
        return sample_orthonormal_basis(d, seed)
    if mode == "unnormalized":
        return sample_unnormalized_basis(d, seed)
    raise InvalidArgument(f"unknown basis mode {mode!r}")


@dataclass(frozen=True)
class SlicePlane:
    center: np.ndarray
    u: np.ndarray
    v: np.ndarray
    extent: float
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        center, u, v = (np.array(a, dtype=float) for a in (self.center, self.u, self.v))
        if not (center.ndim == 1 and center.shape == u.shape == v.shape):
            raise InvalidArgument("center and basis vectors must be 1-D with equal length")
        if abs(float(u @ v)) > 1e-10 * max(float(np.linalg.norm(u) * np.linalg.norm(v)), 1.0):
            raise InvalidArgument("slice basis vectors must be orthogonal")
        if not (self.extent > 0 and math.isfinite(self.extent)):
            raise InvalidArgument("extent must be positive and finite")
        if self.resolution < 2:
            raise InvalidArgument("resolution must be at least 2")
        for name, arr in (("center", center), ("u", u), ("v", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dimension(self) -> int:
        return int(self.center.shape[0])

    def coords(self) -> np.ndarray:
        """Lattice of spacing ``extent / (resolution // 2)`` with the centre at index ``resolution // 2``.

        Odd resolutions span ``[-extent, extent]`` symmetrically; even ones
        drop the last point so the plane centre is always sampled exactly.
        """
        half = self.resolution // 2
        return (np.arange(self.resolution) - half) * (self.extent / half)

    def points(self, p1, p2) -> np.ndarray:
        """Map plane coordinates (broadcastable arrays) to points in R^d."""
        p1 = np.asarray(p1, dtype=float)[..., None]
        p2 = np.asarray(p2, dtype=float)[..., None]
        return self.center + p1 * self.u + p2 * self.v

    def center_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.center, dtype="<f8").tobytes()).hexdigest()[:16]


@dataclass
class LandscapeGrid:
    """Objective values on a plane; ``values[i, j]`` sits at ``(coords[i], coords[j])``."""

    values: np.ndarray
    plane: SlicePlane
    episodes_per_point: int = 1
    seed: int = 0
    normalized: bool = False
    blurred_sigma: Optional[float] = None
    failed: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        res = self.plane.resolution
        if self.values.shape != (res, res):
            raise InvalidArgument(f"values must be {res}x{res}, got {self.values.shape}")
        if self.failed is None:
            self.failed = ~np.isfinite(self.values)

    @property
    def resolution(self) -> int:
        return self.plane.resolution

    def replace(self, **changes) -> "LandscapeGrid":
        return dataclasses.replace(self, **changes)

    def center_index(self) -> tuple[int, int]:
        mid = self.resolution // 2
        return mid, mid


def episode_seed(seed: int, i: int, j: int, episode: int) -> int:
    """Per-cell, per-episode seed that depends only on its coordinates."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(i), int(j), int(episode)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _evaluate_row(f: ObjectiveHandle, plane: SlicePlane, coords: np.ndarray, i: int,
                  episodes: int, seed: int) -> np.ndarray:
    pts = plane.points(np.full(coords.shape, coords[i]), coords)
    if f.deterministic:
        # the mean of identical episode values is that value
        try:
            return f.evaluate_many(pts)
        except (ArithmeticError, ValueError, OverflowError):
            pass
    row = np.empty(len(coords))
    for j, x in enumerate(pts):
        try:
            vals = [f.evaluate(x, episode_seed(seed, i, j, e)) for e in range(episodes)]
        except (ArithmeticError, ValueError, OverflowError):
            row[j] = np.nan
            continue
        row[j] = vals[0] if all(v == vals[0] for v in vals) else math.fsum(vals) / episodes
    return row


def evaluate_grid(f: ObjectiveHandle, plane: SlicePlane, episodes: int = DEFAULT_EPISODES,
                  seed: int = 0, workers: int = 1) -> LandscapeGrid:
    """Evaluate ``f`` over the plane's ``resolution x resolution`` grid.

    Rows are independent work units, so any worker count produces the same
    grid. Cells whose evaluation fails or is non-finite are flagged in
    ``failed`` and hold NaN.
    """
    if episodes < 1:
        raise InvalidArgument("episodes must be at least 1")
    if plane.dimension != f.dimension:
        raise InvalidArgument(
            f"plane dimension {plane.dimension} does not match objective dimension {f.dimension}")
    coords = plane.coords()
    rows = range(plane.resolution)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda i: _evaluate_row(f, plane, coords, i, episodes, seed), rows))
    else:
        values = [_evaluate_row(f, plane, coords, i, episodes, seed) for i in rows]
    values = np.array(values)
    failed = ~np.isfinite(values)
    values[failed] = np.nan
    return LandscapeGrid(values=values, plane=plane, episodes_per_point=episodes,
                         seed=int(seed), failed=failed)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=float)
    return np.exp(-offsets ** 2 / (2.0 * sigma * sigma))


def _blur_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    radius = (len(kernel) - 1) // 2
    out = np.zeros_like(a)
    for k, wgt in enumerate(kernel):
        shift = k - radius
        lo, hi = max(0, -shift), min(n, n - shift)
        if lo < hi:
            out[..., lo:hi] += wgt * a[..., lo + shift:hi + shift]
    return np.moveaxis(out, -1, axis)


def gaussian_blur(grid: Union[LandscapeGrid, np.ndarray], sigma: float = DEFAULT_BLUR_SIGMA):
    """Separable Gaussian blur with the kernel renormalized where it leaves the grid.

    Non-finite cells count as absent. The blur acts on deviations from the
    grid minimum, so constant grids come back bit-identical.
    """
    if not sigma > 0:
        raise InvalidArgument("sigma must be positive")
    values = grid.values if isinstance(grid, LandscapeGrid) else np.asarray(grid, dtype=float)
    mask = np.isfinite(values)
    if values.ndim != 2:
        raise InvalidArgument("gaussian_blur expects a 2-D grid")
    out = np.full(values.shape, np.nan)
    if mask.any():
        ref = values[mask].min()
        dev = np.where(mask, values - ref, 0.0)
        weight = mask.astype(float)
        kernel = gaussian_kernel(sigma)
        for axis in (0, 1):
            dev = _blur_axis(dev, kernel, axis)
            weight = _blur_axis(weight, kernel, axis)
        ok = mask & (weight > 0)
        out[ok] = ref + dev[ok] / weight[ok]
    if isinstance(grid, LandscapeGrid):
        return grid.replace(values=out, blurred_sigma=float(sigma), failed=grid.failed.copy())
    return out


def normalize_grid(grid: Union[LandscapeGrid, np.ndarray]):
    """Affine map of the finite values onto [0, 1]."""
    values = grid.values if isinstance(grid, LandscapeGrid) else np.asarray(grid, dtype=float)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise UndefinedResult("grid has no finite values")
    lo, hi = finite.min(), finite.max()
    if not hi > lo:
        raise UndefinedResult("cannot normalize a constant grid")
    out = (values - lo) / (hi - lo)
    if isinstance(grid, LandscapeGrid):
        return grid.replace(values=out, normalized=True, failed=grid.failed.copy())
    return out


def _second_differences(line: np.ndarray) -> np.ndarray:
    return line[2:] - 2.0 * line[1:-1] + line[:-2]


def convexity_violations(values, atol: float = 1e-9) -> int:
    """Count negative discrete second differences along rows, columns and diagonals.

    Every line through a uniform grid samples the function at equal spacing,
    so a convex function gives zero violations.
    """
    a = np.asarray(values, dtype=float)
    lines = list(a) + list(a.T)
    flipped = a[:, ::-1]
    for offset in range(-(a.shape[0] - 3), a.shape[1] - 2):
        lines.append(np.diagonal(a, offset))
        lines.append(np.diagonal(flipped, offset))
    count = 0
    for line in lines:
        if len(line) >= 3:
            count += int(np.sum(_second_differences(line) < -atol))
    return count


def is_discretely_convex(values, atol: float = 1e-9) -> bool:
    return convexity_violations(values, atol) == 0


# ---------------------------------------------------------------- serialization

def grid_metadata(grid: LandscapeGrid) -> dict:
    plane = grid.plane
    return {
        "center": plane.center.tolist(),
        "u": plane.u.tolist(),
        "v": plane.v.tolist(),
        "center_hash": plane.center_hash(),
        "extent": plane.extent,
        "resolution": plane.resolution,
        "episodes": grid.episodes_per_point,
        "seed": grid.seed,
        "normalized": grid.normalized,
        "sigma": grid.blurred_sigma,
        "failed_cells": [[int(i), int(j)] for i, j in zip(*np.nonzero(grid.failed))],
    }


def grid_to_csv(grid: LandscapeGrid) -> str:
    """CSV text with ``#`` metadata comments and rows ``i,j,p1,p2,value``."""
    meta = grid_metadata(grid)
    buf = io.StringIO()
    for key in ("center_hash", "seed", "extent", "resolution", "episodes", "sigma"):
        value = meta[key]
        buf.write(f"# {key}={'none' if value is None else repr(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["i", "j", "p1", "p2", "value"])
    coords = grid.plane.coords()
    for i in range(grid.resolution):
        for j in range(grid.resolution):
            writer.writerow([i, j, f"{coords[i]:.17g}", f"{coords[j]:.17g}",
                             f"{grid.values[i, j]:.17g}"])
    return buf.getvalue()


def write_grid(grid: LandscapeGrid, csv_path: Union[str, Path]) -> tuple[Path, Path]:
    """Write the CSV and a sibling ``.meta.json`` document; returns both paths."""
    from .io import atomic_write_text

    csv_path = Path(csv_path)
    meta_path = csv_path.with_suffix(".meta.json")
    atomic_write_text(csv_path, grid_to_csv(grid))
    atomic_write_text(meta_path, json.dumps(grid_metadata(grid), indent=1, sort_keys=True))
    return csv_path, meta_path


def read_grid(csv_path: Union[str, Path]) -> LandscapeGrid:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".meta.json").read_text())
    plane = SlicePlane(center=np.array(meta["center"]), u=np.array(meta["u"]),
                       v=np.array(meta["v"]), extent=meta["extent"],
                       resolution=meta["resolution"])
    values = np.full((plane.resolution, plane.resolution), np.nan)
    with csv_path.open() as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows)
        if header != ["i", "j", "p1", "p2", "value"]:
            raise InvalidArgument(f"unexpected grid CSV header {header}")
        for i, j, _, _, value in rows:
            values[int(i), int(j)] = float(value)
    failed = np.zeros(values.shape, dtype=bool)
    for i, j in meta["failed_cells"]:
        failed[i, j] = True
    return LandscapeGrid(values=values, plane=plane, episodes_per_point=meta["episodes"],
                         seed=meta["seed"], normalized=meta["normalized"],
                         blurred_sigma=meta["sigma"], failed=failed)
