"""Heightfield state representation and the per-field quantities derived from it.

Depth convention: every value is the distance from the sensor plane in mm, so a
larger depth means less material. ``d_max`` is the bare table plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TABLE_EPS = 0.5  # mm of slack above d_max tolerated for sensor noise

WORKSPACE_MM = 304.8  # 12 x 12 in sculpting surface
DEFAULT_GRID = 128
DEFAULT_D_MAX = 100.0
DEFAULT_SURFACE = 70.0  # depth of an untouched 30 mm slab


class FieldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HeightField:
    depths: np.ndarray
    cell_size: float
    d_max: float

    def __post_init__(self):
        d = np.array(self.depths, dtype=np.float64, copy=True)
        if d.ndim != 2 or d.size == 0:
            raise FieldError(f"depths must be a non-empty 2D grid, got shape {d.shape}")
        if not self.cell_size > 0 or not self.d_max > 0:
            raise FieldError("cell_size and d_max must be positive")
        if not np.all(np.isfinite(d)):
            raise FieldError("depths contain non-finite values")
        if d.min() < 0 or d.max() > self.d_max + TABLE_EPS:
            raise FieldError(
                f"depths outside [0, d_max + eps]: [{d.min():.3f}, {d.max():.3f}] vs d_max={self.d_max}"
            )
        d.setflags(write=False)
        object.__setattr__(self, "depths", d)
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "d_max", float(self.d_max))

    @property
    def height(self) -> int:
        return self.depths.shape[0]

    @property
    def width(self) -> int:
        return self.depths.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.depths.shape

    @property
    def extent_mm(self) -> tuple[float, float]:
        return self.width * self.cell_size, self.height * self.cell_size

    def with_depths(self, depths, clip: bool = False) -> "HeightField":
        """Same geometry, new values. ``clip`` forces them into [0, d_max]."""
        depths = np.asarray(depths, dtype=np.float64)
        if depths.shape != self.shape:
            raise FieldError(f"shape mismatch {depths.shape} vs {self.shape}")
        if clip:
            depths = np.clip(depths, 0.0, self.d_max)
        return HeightField(depths, self.cell_size, self.d_max)

    def __eq__(self, other):
        if not isinstance(other, HeightField):
            return NotImplemented
        return (
            self.cell_size == other.cell_size
            and self.d_max == other.d_max
            and self.shape == other.shape
            and np.array_equal(self.depths, other.depths)
        )

    __hash__ = None


def flat_field(
    size: int | tuple[int, int] = DEFAULT_GRID,
    surface: float = DEFAULT_SURFACE,
    cell_size: float | None = None,
    d_max: float = DEFAULT_D_MAX,
) -> HeightField:
    """Untouched slab covering the whole workspace."""
    h, w = (size, size) if isinstance(size, int) else size
    if cell_size is None:
        # f32-representable so HFD round trips are exact
        cell_size = float(np.float32(WORKSPACE_MM / max(h, w)))
    return HeightField(np.full((h, w), float(surface)), cell_size, d_max)


@dataclass(frozen=True)
class GradientField:
    """Per-cell depth slopes (mm per mm); ``dx`` runs along columns, ``dy`` along rows."""

    dx: np.ndarray
    dy: np.ndarray

    def stack(self) -> np.ndarray:
        return np.stack([self.dx, self.dy])


def gradient_array(depths: np.ndarray, cell_size: float) -> tuple[np.ndarray, np.ndarray]:
    # np.gradient: central differences inside, first-order one-sided at the border
    dy, dx = np.gradient(np.asarray(depths, dtype=np.float64), cell_size, edge_order=1)
    return dx, dy


def spatial_gradient(field: HeightField) -> GradientField:
    dx, dy = gradient_array(field.depths, field.cell_size)
    return GradientField(dx, dy)


def material_volume(field: HeightField) -> float:
    """Material above the table in mm^3."""
    return float(np.sum(field.d_max - field.depths) * field.cell_size**2)


def cell_points(field: HeightField) -> np.ndarray:
    """One (x_mm, y_mm, depth) point per cell centre, row-major."""
    h, w = field.shape
    cs = field.cell_size
    yy, xx = np.meshgrid((np.arange(h) + 0.5) * cs, (np.arange(w) + 0.5) * cs, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), field.depths.ravel()], axis=1)


def voxel_downsample(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Centroid per occupied voxel, ordered by lexicographic voxel index."""
    if not voxel_size > 0:
        raise FieldError(f"voxel_size must be positive, got {voxel_size}")
    pts = np.asarray(points, dtype=np.float64)
    keys = np.floor(pts / voxel_size).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    out = np.empty((len(uniq), 3))
    for k in range(3):
        out[:, k] = np.bincount(inverse, weights=pts[:, k], minlength=len(uniq)) / counts
    return out


def to_point_cloud(field: HeightField, voxel_size: float) -> np.ndarray:
    if not voxel_size > 0:
        raise FieldError(f"voxel_size must be positive, got {voxel_size}")
    return voxel_downsample(cell_points(field), voxel_size)


def bilinear_tolerance(depths: np.ndarray) -> float:
    """Error bound for one bilinear resampling of a grid at its own spacing.

    Uses h^2/8 * max(|f_xx| + 2|f_xy| + |f_yy|), which bounds the second
    directional derivative along any axis, with the derivatives taken as raw
    per-cell differences (so h = 1).
    """
    f = np.asarray(depths, dtype=np.float64)
    fxx = np.zeros_like(f)
    fyy = np.zeros_like(f)
    fxy = np.zeros_like(f)
    fxx[:, 1:-1] = f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]
    fyy[1:-1, :] = f[2:, :] - 2 * f[1:-1, :] + f[:-2, :]
    fxy[1:-1, 1:-1] = (f[2:, 2:] - f[2:, :-2] - f[:-2, 2:] + f[:-2, :-2]) / 4.0
    return float(np.max(np.abs(fxx) + 2 * np.abs(fxy) + np.abs(fyy)) / 8.0)


def edge_mask(shape: tuple[int, int], fraction: float = 0.1) -> np.ndarray:
    """Boolean border band covering the outer ``fraction`` of each side."""
    h, w = shape
    bh = int(round(h * fraction))
    bw = int(round(w * fraction))
    m = np.zeros((h, w), dtype=bool)
    m[:bh, :] = True
    m[h - bh :, :] = True
    m[:, :bw] = True
    m[:, w - bw :] = True
    return m
