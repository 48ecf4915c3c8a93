"""Fixed-size tiling of large images, reassembly, and adjacent-slice triplets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Mapping, Sequence, Tuple, Union

import numpy as np

from edgerestore.errors import PlanError, ShapeError

BLEND_NONE = "none"
BLEND_AVERAGE = "average"


@dataclass(frozen=True)
class TilePlan:
    image_h: int
    image_w: int
    tile: int
    overlap: int
    entries: Tuple[Tuple[int, int], ...]
    blend: str = BLEND_NONE

    def __len__(self) -> int:
        return len(self.entries)

    def coverage(self) -> np.ndarray:
        counts = np.zeros((self.image_h, self.image_w), dtype=np.int32)
        for r, c in self.entries:
            counts[r : r + self.tile, c : c + self.tile] += 1
        return counts


def _axis_offsets(size: int, tile: int, stride: int) -> List[int]:
    offsets = list(range(0, size - tile, stride))
    offsets.append(size - tile)
    return sorted(set(offsets))


def plan_tiles(h: int, w: int, tile: int = 64, overlap: int = 0, blend: str = None) -> TilePlan:
    """Row-major grid of ``tile``-sized windows stepping by ``tile - overlap``.

    The last window on each axis is clamped to end at the image edge. Blending
    defaults to averaging whenever tiles overlap.
    """
    if tile < 1:
        raise PlanError("tile must be >= 1")
    if not 0 <= overlap < tile or overlap % 2:
        raise PlanError(f"overlap must be even and in [0, tile), got {overlap}")
    if h < tile or w < tile:
        raise PlanError(f"image {h}x{w} is smaller than tile {tile}")
    if blend is None:
        blend = BLEND_AVERAGE if overlap else BLEND_NONE
    if blend not in (BLEND_NONE, BLEND_AVERAGE):
        raise PlanError(f"unknown blend mode {blend!r}")
    stride = tile - overlap
    entries = tuple(
        (r, c) for r in _axis_offsets(h, tile, stride) for c in _axis_offsets(w, tile, stride)
    )
    return TilePlan(h, w, tile, overlap, entries, blend)


def _as_nhwc(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        return image[None, :, :, None]
    if image.ndim == 3:
        return image[None]
    if image.ndim == 4 and image.shape[0] == 1:
        return image
    raise ShapeError(f"expected a single HxW[xC] image, got shape {image.shape}")


def extract_tiles(image: np.ndarray, plan: TilePlan) -> List[np.ndarray]:
    """Copy each planned window into its own 1 x tile x tile x C array, in plan order."""
    img = _as_nhwc(image)
    if img.shape[1:3] != (plan.image_h, plan.image_w):
        raise ShapeError(f"image {img.shape[1:3]} does not match plan {plan.image_h}x{plan.image_w}")
    t = plan.tile
    return [img[:, r : r + t, c : c + t, :].copy() for r, c in plan.entries]


def stitch(tiles: Union[Sequence[np.ndarray], Mapping[int, np.ndarray]], plan: TilePlan) -> np.ndarray:
    """Reassemble tiles into a 1 x H x W x C image.

    ``tiles`` may be a list in plan order or a mapping from plan index to tile,
    e.g. filled by workers completing out of order. Without blending, later
    plan entries overwrite earlier ones where they overlap.
    """
    if isinstance(tiles, Mapping):
        if sorted(tiles) != list(range(len(plan))):
            raise ShapeError(f"tile indices do not match the {len(plan)}-entry plan")
        items = [tiles[i] for i in range(len(plan))]
    else:
        items = list(tiles)
        if len(items) != len(plan):
            raise ShapeError(f"got {len(items)} tiles for a {len(plan)}-entry plan")
    t = plan.tile
    channels = None
    for k, tile in enumerate(items):
        if tile.ndim != 4 or tile.shape[:3] != (1, t, t):
            raise ShapeError(f"tile {k} has shape {tile.shape}, expected (1, {t}, {t}, C)")
        if channels is None:
            channels = tile.shape[3]
        elif tile.shape[3] != channels:
            raise ShapeError("tiles disagree on channel count")
    dtype = items[0].dtype
    if plan.blend == BLEND_NONE:
        out = np.zeros((1, plan.image_h, plan.image_w, channels), dtype=dtype)
        for (r, c), tile in zip(plan.entries, items):
            out[:, r : r + t, c : c + t, :] = tile
        return out
    acc = np.zeros((1, plan.image_h, plan.image_w, channels), dtype=np.float64)
    for (r, c), tile in zip(plan.entries, items):
        acc[:, r : r + t, c : c + t, :] += tile
    acc /= plan.coverage()[None, :, :, None]
    return acc.astype(dtype)


def make_triplet(stack: Sequence[np.ndarray], i: int) -> np.ndarray:
    """Stack slices (i-1, i, i+1) as channels, replicating at the ends of the stack."""
    n = len(stack)
    if n == 0:
        raise IndexError("empty stack")
    if not 0 <= i < n:
        raise IndexError(f"slice index {i} out of range for stack of {n}")
    picks = (max(i - 1, 0), i, min(i + 1, n - 1))
    chans = [_as_nhwc(stack[k])[..., :1] for k in picks]
    return np.ascontiguousarray(np.concatenate(chans, axis=-1), dtype=np.float32)
