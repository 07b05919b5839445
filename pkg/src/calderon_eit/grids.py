"""Shared pixel-grid conventions for images on the square [-1, 1]^2.

Images are indexed [row, col] with row 0 at the top (y = +1 side) and
column 0 at the left (x = -1 side); values are sampled at pixel centers.
"""

from __future__ import annotations

import numpy as np


def pixel_coords(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Column x-coordinates (ascending) and row y-coordinates (descending)."""
    step = 2.0 / n
    xs = -1.0 + (np.arange(n) + 0.5) * step
    ys = 1.0 - (np.arange(n) + 0.5) * step
    return xs, ys


def pixel_centers(n: int) -> np.ndarray:
    """All pixel-center points, shape (n*n, 2), row-major."""
    xs, ys = pixel_coords(n)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def disk_mask(n: int) -> np.ndarray:
    """Boolean (n, n) mask of pixels whose centers lie in the unit disk."""
    xs, ys = pixel_coords(n)
    X, Y = np.meshgrid(xs, ys)
    return X**2 + Y**2 <= 1.0
