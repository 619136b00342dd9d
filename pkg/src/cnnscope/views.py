"""Geometry builders: weight-grid, image-grid, distribution-grid, trajectory.

All builders emit PolyData: float32 points plus named float32 point scalars,
with optional vertex cells and quad cells.  Grid windows are numbered from the
lower-left corner: window k sits at row = k // cols (row 0 at the bottom) and
col = k % cols.

Layout conventions (fixed so golden files stay byte-stable):
  * weight-grid: unit-width blocks, one-block gap between windows, so a
    window of a w x w kernel has pitch w + 1; each weight becomes one quad
    whose four corners share z = weight value.
  * image-grid / distribution-grid: each window spans a unit cell with no
    gap; entries are bare points (no vertex cells -- at VGG scale explicit
    per-point cells would double the file size).
  * distribution-grid: values are scaled by the grid-global maximum so
    windows stay comparable across the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .similarity import SimilarityReport
from .tensors import as_float_array


@dataclass
class PolyData:
    """Points + vertex cells + quad cells + named per-point scalars."""

    points: np.ndarray  # (n, 3) float32
    verts: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    quads: np.ndarray = field(default_factory=lambda: np.empty((0, 4), dtype=np.int64))
    point_scalars: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float32).reshape(-1, 3)
        self.verts = np.ascontiguousarray(self.verts, dtype=np.int64).reshape(-1)
        self.quads = np.ascontiguousarray(self.quads, dtype=np.int64).reshape(-1, 4)
        self.point_scalars = {
            name: np.ascontiguousarray(arr, dtype=np.float32).reshape(-1)
            for name, arr in self.point_scalars.items()
        }

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def validate(self) -> "PolyData":
        n = self.n_points
        if not np.all(np.isfinite(self.points)):
            raise ValueError("non-finite point coordinates")
        if self.verts.size and (self.verts.min() < 0 or self.verts.max() >= n):
            raise ValueError("vertex cell index out of range")
        if self.quads.size and (self.quads.min() < 0 or self.quads.max() >= n):
            raise ValueError("quad cell index out of range")
        for name, arr in self.point_scalars.items():
            if arr.shape[0] != n:
                raise ValueError(f"scalar '{name}' has {arr.shape[0]} values for {n} points")
        return self


def polydata_equal(a: PolyData, b: PolyData) -> bool:
    return (
        np.array_equal(a.points, b.points)
        and np.array_equal(a.verts, b.verts)
        and np.array_equal(a.quads, b.quads)
        and list(a.point_scalars) == list(b.point_scalars)
        and all(np.array_equal(a.point_scalars[k], b.point_scalars[k]) for k in a.point_scalars)
    )


# ---------------------------------------------------------------------------
# Grid layout


@dataclass(frozen=True)
class GridLayout:
    rows: int
    cols: int
    window_count: int

    def position(self, k: int) -> tuple[int, int]:
        """(row, col) of window k, row 0 at the bottom."""
        if not 0 <= k < self.window_count:
            raise IndexError(f"window {k} out of range")
        return k // self.cols, k % self.cols


def grid_layout(f: int) -> GridLayout:
    """rows = largest power of two <= sqrt(f), cols = ceil(f / rows).

    Reproduces 16 -> 4x4, 32 -> 4x8 and 64 -> 8x8.
    """
    if f < 1:
        raise ValueError("window count must be positive")
    root = math.isqrt(f)
    rows = 1
    while rows * 2 <= root:
        rows *= 2
    cols = -(-f // rows)
    return GridLayout(rows=rows, cols=cols, window_count=f)


# ---------------------------------------------------------------------------
# Builders


def build_weight_grid(weights, layout: GridLayout) -> PolyData:
    """One quad per weight value, elevated to z = weight, scalar "weight".

    Windows are enumerated filter-major: window index = filter * c + channel,
    so with a single input channel the window index is the filter index.
    """
    weights = as_float_array(weights, 4, "weights")
    w, w2, c, f = weights.shape
    if w != w2:
        raise ValueError("weight windows must be square")
    if layout.window_count != c * f:
        raise ValueError(f"layout expects {layout.window_count} windows, weights give {c * f}")

    pitch = w + 1  # unit blocks plus a one-block gap between windows
    n_quads = w * w * c * f
    points = np.empty((4 * n_quads, 3), dtype=np.float64)
    scalars = np.empty(4 * n_quads, dtype=np.float64)
    quads = np.arange(4 * n_quads, dtype=np.int64).reshape(n_quads, 4)

    idx = 0
    for k in range(f):
        for r in range(c):
            row, col = layout.position(k * c + r)
            ox, oy = col * pitch, row * pitch
            for p in range(w):
                for q in range(w):
                    z = weights[p, q, r, k]
                    x0, y0 = ox + q, oy + p
                    points[idx : idx + 4] = [
                        (x0, y0, z),
                        (x0 + 1, y0, z),
                        (x0 + 1, y0 + 1, z),
                        (x0, y0 + 1, z),
                    ]
                    scalars[idx : idx + 4] = z
                    idx += 4
    return PolyData(points=points, quads=quads, point_scalars={"weight": scalars}).validate()


def build_image_grid(summed, layout: GridLayout) -> PolyData:
    """One point per pixel per window; scalar "intensity" = summed activation.

    Each window spans a unit cell; pixel (i, j) maps to the cell-local
    position ((j + 0.5)/m, (m - 0.5 - i)/m) so image row 0 displays at the
    top of its window.
    """
    summed = as_float_array(summed, 3, "summed activations")
    m, m2, f = summed.shape
    if m != m2:
        raise ValueError("feature maps must be square")
    if layout.window_count != f:
        raise ValueError(f"layout expects {layout.window_count} windows, maps give {f}")

    jj, ii = np.meshgrid(np.arange(m), np.arange(m))  # ii, jj are [m, m] row/col indices
    local_x = (jj + 0.5) / m
    local_y = (m - 0.5 - ii) / m
    points = np.empty((f * m * m, 3), dtype=np.float64)
    intensity = np.empty(f * m * m, dtype=np.float64)
    for k in range(f):
        row, col = layout.position(k)
        sl = slice(k * m * m, (k + 1) * m * m)
        points[sl, 0] = (col + local_x).ravel()
        points[sl, 1] = (row + local_y).ravel()
        points[sl, 2] = 0.0
        intensity[sl] = summed[:, :, k].ravel()
    return PolyData(points=points, point_scalars={"intensity": intensity}).validate()


def build_distribution_grid(summed, layout: GridLayout, report: SimilarityReport | None = None) -> PolyData:
    """Flattened feature maps as point rows, scaled by the grid-global maximum.

    Window k plots its m*m values at cell-local x = t/(m*m - 1) and
    y = value / global_max; scalar "group" carries the similarity group id of
    the window (0 = ungrouped).  When the whole grid is zero the y values are
    emitted as zeros along with a scalar "degenerate" = 1.
    """
    summed = as_float_array(summed, 3, "summed activations")
    m, m2, f = summed.shape
    if m != m2:
        raise ValueError("feature maps must be square")
    if layout.window_count != f:
        raise ValueError(f"layout expects {layout.window_count} windows, maps give {f}")

    group_of = np.zeros(f, dtype=np.float64)
    if report is not None:
        for gid, group in enumerate(report.groups, start=1):
            for member in group.members:
                group_of[member] = gid

    count = m * m
    local_x = np.arange(count, dtype=np.float64) / (count - 1) if count > 1 else np.zeros(1)
    global_max = float(summed.max())
    degenerate = global_max <= 0.0

    points = np.empty((f * count, 3), dtype=np.float64)
    group_scalar = np.empty(f * count, dtype=np.float64)
    for k in range(f):
        row, col = layout.position(k)
        sl = slice(k * count, (k + 1) * count)
        values = summed[:, :, k].ravel()
        points[sl, 0] = col + local_x
        points[sl, 1] = row + (0.0 if degenerate else values / global_max)
        points[sl, 2] = 0.0
        group_scalar[sl] = group_of[k]
    scalars = {"group": group_scalar}
    if degenerate:
        scalars["degenerate"] = np.ones(f * count, dtype=np.float64)
    return PolyData(points=points, point_scalars=scalars).validate()


# ---------------------------------------------------------------------------
# Trajectory


@dataclass(frozen=True)
class TrajectoryTrace:
    """Path of three chosen weight coordinates over training steps."""

    dims: tuple[int, int, int]
    points: tuple[tuple[float, float, float], ...] = ()
    steps: tuple[int, ...] = ()

    def __post_init__(self):
        if len(set(self.dims)) != 3 or any(d < 0 for d in self.dims):
            raise ValueError("dims must be three distinct non-negative indices")
        if len(self.points) != len(self.steps):
            raise ValueError("points and steps must have equal length")


def append_trajectory(trace: TrajectoryTrace, weights, step: int) -> TrajectoryTrace:
    """Append the current value of the three tracked weight coordinates."""
    if trace.steps and step <= trace.steps[-1]:
        raise ValueError(f"step {step} not after last recorded step {trace.steps[-1]}")
    flat = as_float_array(weights, 4, "weights").ravel()
    if max(trace.dims) >= flat.size:
        raise IndexError(f"dims {trace.dims} out of range for {flat.size} weights")
    point = (float(flat[trace.dims[0]]), float(flat[trace.dims[1]]), float(flat[trace.dims[2]]))
    return TrajectoryTrace(dims=trace.dims, points=trace.points + (point,), steps=trace.steps + (step,))


def trajectory_polydata(trace: TrajectoryTrace) -> PolyData:
    """Trace as vertex-cell points with a "step" scalar for time coloring."""
    n = len(trace.points)
    points = np.asarray(trace.points, dtype=np.float64).reshape(n, 3)
    return PolyData(
        points=points,
        verts=np.arange(n, dtype=np.int64),
        point_scalars={"step": np.asarray(trace.steps, dtype=np.float64)},
    ).validate()


# ---------------------------------------------------------------------------
# Accumulation across batches


def accumulate(running, summed) -> np.ndarray:
    """Elementwise running sum of batch-summed maps (accumulated image-grid)."""
    running = as_float_array(running, 3, "running total")
    summed = as_float_array(summed, 3, "summed activations")
    if running.shape != summed.shape:
        raise ValueError(f"shape mismatch: {running.shape} vs {summed.shape}")
    return running + summed
