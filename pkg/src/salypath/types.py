"""Shared domain types.

Coordinate conventions, used consistently everywhere:

* Scanpath points are (x, y) pairs normalized to [0, 1]^2, x along width.
* Pixel mapping: row = round(y * (H-1)), col = round(x * (W-1)), clamped.
  The inverse divides by (size - 1).
* Saliency maps are [H, W] float32 arrays with values in [0, 1].
* Fixation sets are integer (row, col) pixel locations on a stated grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError


def norm_to_pixel(points: np.ndarray, width: int, height: int) -> np.ndarray:
    """Map normalized (x, y) points to integer (row, col) pixels."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    cols = np.clip(np.round(pts[:, 0] * (width - 1)), 0, width - 1).astype(np.int64)
    rows = np.clip(np.round(pts[:, 1] * (height - 1)), 0, height - 1).astype(np.int64)
    return np.stack([rows, cols], axis=1)


def pixel_to_norm(xy_pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Map pixel (x, y) coordinates to normalized [0,1]^2 (x, y)."""
    pts = np.asarray(xy_pixels, dtype=np.float64).reshape(-1, 2)
    sx = max(width - 1, 1)
    sy = max(height - 1, 1)
    out = np.stack([pts[:, 0] / sx, pts[:, 1] / sy], axis=1)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


@dataclass
class Scanpath:
    """Ordered fixation sequence, normalized (x, y) in [0, 1]^2."""

    points: np.ndarray  # [N, 2] float32

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DimensionError(
                f"Scanpath: points must be [N, 2], got {pts.shape}"
            )
        if pts.shape[0] < 1:
            raise ContractError("Scanpath: need at least one point")
        if np.nanmin(pts) < 0.0 or np.nanmax(pts) > 1.0 or not np.isfinite(pts).all():
            raise ContractError(
                "Scanpath: coordinates must be finite and inside [0, 1]"
            )
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_pixels(self, width: int, height: int) -> np.ndarray:
        """Float (x, y) pixel coordinates: x*(W-1), y*(H-1)."""
        pts = self.points.astype(np.float64)
        return np.stack([pts[:, 0] * (width - 1), pts[:, 1] * (height - 1)], axis=1)

    @classmethod
    def from_pixels(cls, xy_pixels: np.ndarray, width: int, height: int) -> "Scanpath":
        return cls(pixel_to_norm(xy_pixels, width, height))


@dataclass
class SaliencyMap:
    """Single-channel saliency distribution, values in [0, 1]."""

    values: np.ndarray  # [H, W] float32

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise DimensionError(f"SaliencyMap: values must be [H, W], got {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionError(f"SaliencyMap: empty extent in shape {v.shape}")
        if not np.isfinite(v).all():
            raise ContractError("SaliencyMap: values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ContractError("SaliencyMap: values must lie in [0, 1]")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class FixationSet:
    """Discrete fixation locations as integer (row, col) pixels on an
    (H, W) grid. Duplicates are allowed and count with multiplicity."""

    points: np.ndarray  # [K, 2] int64 (row, col)
    shape: tuple[int, int]  # (H, W)

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DimensionError(
                f"FixationSet: points must be [K, 2], got {pts.shape}"
            )
        pts = pts.astype(np.int64)
        h, w = int(self.shape[0]), int(self.shape[1])
        if h < 1 or w < 1:
            raise DimensionError(f"FixationSet: bad grid shape {self.shape}")
        if pts.shape[0] > 0:
            if pts[:, 0].min() < 0 or pts[:, 0].max() >= h:
                raise ContractError(
                    f"FixationSet: row out of bounds for height {h}"
                )
            if pts[:, 1].min() < 0 or pts[:, 1].max() >= w:
                raise ContractError(
                    f"FixationSet: col out of bounds for width {w}"
                )
        self.points = pts
        self.shape = (h, w)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_scanpaths(cls, paths, width: int, height: int) -> "FixationSet":
        """Pool every point of every scanpath into one fixation multiset."""
        chunks = [norm_to_pixel(p.points if isinstance(p, Scanpath) else p, width, height)
                  for p in paths]
        pts = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 2), np.int64)
        return cls(pts, (height, width))

    def mask(self) -> np.ndarray:
        """Boolean [H, W] grid, True where at least one fixation landed."""
        m = np.zeros(self.shape, dtype=bool)
        if len(self):
            m[self.points[:, 0], self.points[:, 1]] = True
        return m

    def weights(self) -> np.ndarray:
        """Float [H, W] grid counting fixations per pixel (multiplicity)."""
        w = np.zeros(self.shape, dtype=np.float64)
        if len(self):
            np.add.at(w, (self.points[:, 0], self.points[:, 1]), 1.0)
        return w
