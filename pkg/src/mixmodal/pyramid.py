"""Three-level image pyramid and non-overlapping patch extraction.

The bottom ("down") level is the original image; "mid" and "up" come from
one and two rounds of 2x2 mean pooling. Each level is cut row-major into
B x B patches with level-relative box coordinates in [0, 1] and a per-level
scale tag in {1.0, 0.5, 0.25}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

LEVELS = ("up", "mid", "down")
LEVEL_SCALE = {"up": 0.25, "mid": 0.5, "down": 1.0}


@dataclass
class PatchSequence:
    """Flattened patches of one pyramid level.

    Attributes:
        patches: (U, B*B) float64 intensities in [0, 1], row-major per patch.
        boxes: (U, 4) float64 [x_start, y_start, x_end, y_end] in [0, 1].
        scales: (U, 2) float64 (x_scale, y_scale), constant per level.
        level: "up" | "mid" | "down".
        block_size: B.
        grid: (rows, cols) of the patch grid.
    """

    patches: np.ndarray
    boxes: np.ndarray
    scales: np.ndarray
    level: str
    block_size: int
    grid: tuple[int, int]


def mean_pool_2x2(image: np.ndarray) -> np.ndarray:
    """Average non-overlapping 2x2 blocks; halves each dimension."""
    h, w = image.shape
    if h % 2 or w % 2:
        raise GeometryError(f"cannot 2x2-pool a {h}x{w} image")
    return image.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def patchify(level_image: np.ndarray, block_size: int, level: str) -> PatchSequence:
    """Cut one level into non-overlapping B x B patches, row-major."""
    h, w = level_image.shape
    b = block_size
    if h % b or w % b:
        raise GeometryError(f"{h}x{w} level not divisible by block size {b}")
    rows, cols = h // b, w // b
    patches = (
        level_image.reshape(rows, b, cols, b).transpose(0, 2, 1, 3).reshape(rows * cols, b * b)
    )
    r_idx, c_idx = np.divmod(np.arange(rows * cols), cols)
    boxes = np.stack(
        [c_idx / cols, r_idx / rows, (c_idx + 1) / cols, (r_idx + 1) / rows], axis=1
    )
    scale = LEVEL_SCALE[level]
    scales = np.full((rows * cols, 2), scale, dtype=np.float64)
    return PatchSequence(patches, boxes, scales, level, b, (rows, cols))


def build_pyramid(image: np.ndarray, block_size: int) -> dict[str, PatchSequence]:
    """Build the (up, mid, down) patch sequences for one image.

    The image is scaled to [0, 1] intensities (float64) before pooling so the
    level means agree exactly with the original image mean.
    """
    h, w = image.shape
    div = 4 * block_size
    if h % div or w % div:
        raise GeometryError(f"image {h}x{w} must be divisible by 4*B={div}")
    down = np.asarray(image, dtype=np.float64) / 255.0
    mid = mean_pool_2x2(down)
    up = mean_pool_2x2(mid)
    return {
        "up": patchify(up, block_size, "up"),
        "mid": patchify(mid, block_size, "mid"),
        "down": patchify(down, block_size, "down"),
    }


def build_single_scale(image: np.ndarray, block_size: int) -> PatchSequence:
    """Down-level patches only, for the single-scale baseline."""
    h, w = image.shape
    if h % block_size or w % block_size:
        raise GeometryError(f"image {h}x{w} must be divisible by B={block_size}")
    return patchify(np.asarray(image, dtype=np.float64) / 255.0, block_size, "down")


def pyramid_patch_counts(image_hw: tuple[int, int], block_size: int) -> tuple[int, int, int]:
    """(down, mid, up) patch counts for a given geometry."""
    h, w = image_hw
    b = block_size
    return (h // b) * (w // b), (h // 2 // b) * (w // 2 // b), (h // 4 // b) * (w // 4 // b)


def tiles_exactly(boxes: np.ndarray, grid: tuple[int, int]) -> bool:
    """True iff `boxes` are exactly the row-major tiling of [0,1]^2 on `grid`."""
    rows, cols = grid
    if boxes.shape != (rows * cols, 4):
        return False
    r_idx, c_idx = np.divmod(np.arange(rows * cols), cols)
    expected = np.stack(
        [c_idx / cols, r_idx / rows, (c_idx + 1) / cols, (r_idx + 1) / rows], axis=1
    )
    return bool(np.array_equal(boxes, expected))


def reassemble(patches: np.ndarray, grid: tuple[int, int], block_size: int) -> np.ndarray:
    """Inverse of patchify: write patches back into a full raster (float in [0,1]).

    Raises GeometryError unless the patches tile the raster exactly once.
    """
    rows, cols = grid
    b = block_size
    if patches.shape != (rows * cols, b * b):
        raise GeometryError(
            f"expected {(rows * cols, b * b)} patch array, got {patches.shape}"
        )
    return (
        patches.reshape(rows, cols, b, b).transpose(0, 2, 1, 3).reshape(rows * b, cols * b)
    )
