"""Deterministic image decomposition: zig-zag tiles, random 64x64 patches,
and stride-controlled sliding windows for reliability maps."""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, TilingError

PATCH_SIZE = 64


@dataclass(frozen=True)
class SubImageSpec:
    row0: int
    col0: int
    n_rows: int
    n_cols: int

    def crop(self, image):
        return image[self.row0:self.row0 + self.n_rows,
                     self.col0:self.col0 + self.n_cols]


@dataclass
class Patch:
    pixels: np.ndarray  # 64x64x3
    origin: tuple       # absolute (row, col) in the parent image
    parent: str = ""


def split_zigzag(image, n=PATCH_SIZE, m=PATCH_SIZE):
    """Non-overlapping n x m tile grid in boustrophedon order.

    Row 0 runs left-to-right, row 1 right-to-left, alternating. Remainder
    pixels on the right/bottom edges are dropped.
    """
    if n < PATCH_SIZE or m < PATCH_SIZE:
        raise ParameterError(
            f"tile size must be at least {PATCH_SIZE}, got {n}x{m}")
    h, w = image.shape[:2]
    rows, cols = h // n, w // m
    if rows < 1 or cols < 1:
        raise TilingError(f"image {h}x{w} is smaller than one {n}x{m} tile")
    specs = []
    for r in range(rows):
        cs = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        for c in cs:
            specs.append(SubImageSpec(r * n, c * m, n, m))
    return specs


def extract_random_patch(sub, image, rng_seed):
    """Seeded uniform 64x64 crop from within a sub-image."""
    if sub.n_rows < PATCH_SIZE or sub.n_cols < PATCH_SIZE:
        raise TilingError(f"sub-image {sub} too small for a patch")
    rng = np.random.default_rng(rng_seed)
    dr = int(rng.integers(0, sub.n_rows - PATCH_SIZE + 1))
    dc = int(rng.integers(0, sub.n_cols - PATCH_SIZE + 1))
    r0, c0 = sub.row0 + dr, sub.col0 + dc
    pixels = image[r0:r0 + PATCH_SIZE, c0:c0 + PATCH_SIZE]
    return Patch(np.ascontiguousarray(pixels), (r0, c0))


def _axis_origins(dim, size, stride):
    origins = list(range(0, dim - size + 1, stride))
    if origins[-1] != dim - size:
        origins.append(dim - size)  # clamped flush window covers the border
    return origins


def sliding_windows(image, size=PATCH_SIZE, stride=PATCH_SIZE):
    """Row-major sliding windows at multiples of stride.

    When (dim - size) is not a multiple of stride, one extra origin is
    clamped to dim - size so the boundary stays covered.
    """
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    h, w = image.shape[:2]
    if h < size or w < size:
        raise TilingError(f"image {h}x{w} is smaller than window size {size}")
    return [SubImageSpec(r, c, size, size)
            for r in _axis_origins(h, size, stride)
            for c in _axis_origins(w, size, stride)]
