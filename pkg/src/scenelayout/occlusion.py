"""Depth-ordered occlusion classification over instance masks, plus the
crop-normalization rule applied to object images before downstream processing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError


@dataclass(frozen=True)
class MaskSet:
    """Instance masks over one image with each object's mean visible depth."""

    masks: tuple
    per_object_mean_depth: tuple

    def __post_init__(self):
        masks = tuple(np.asarray(m, dtype=bool) for m in self.masks)
        depths = tuple(float(d) for d in self.per_object_mean_depth)
        if len(masks) != len(depths):
            raise ValueError("one mean depth per mask is required")
        if not masks:
            raise ValueError("mask set must not be empty")
        shape = masks[0].shape
        for m in masks:
            if m.shape != shape:
                raise ValueError("all masks must share dimensions")
        for m, d in zip(masks, depths):
            if m.any() and not d > 0:
                raise ValueError("non-empty masks need a positive mean depth")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "per_object_mean_depth", depths)


def adjacency_pairs(masks: MaskSet, dilation_radius: int = 3) -> set:
    """Index pairs (i, j), i < j, whose masks touch after dilating by the radius.

    Dilation uses a square structuring element of side 2 * radius + 1.
    """
    if len(masks.masks) < 2:
        raise ValueError("need at least two masks")
    if dilation_radius < 0:
        raise ValueError("dilation radius must be non-negative")
    footprint = np.ones((2 * dilation_radius + 1,) * 2, dtype=bool)
    dilated = [ndimage.binary_dilation(m, structure=footprint) if m.any() else m
               for m in masks.masks]
    pairs = set()
    n = len(masks.masks)
    for i in range(n):
        for j in range(i + 1, n):
            if np.any(dilated[i] & masks.masks[j]):
                pairs.add((i, j))
    return pairs


def occlusion_flags(masks: MaskSet, pairs: set) -> list:
    """Mark the deeper member of each adjacent pair as occluded.

    Depths equal within 1e-6 relative mark neither. Objects adjacent to
    nothing are never marked occluded.
    """
    flags = [False] * len(masks.masks)
    depths = masks.per_object_mean_depth
    for i, j in pairs:
        di, dj = depths[i], depths[j]
        if abs(di - dj) <= 1e-6 * max(abs(di), abs(dj)):
            continue
        if di < dj:
            flags[j] = True
        else:
            flags[i] = True
    return flags


def normalize_crop_bbox(col_min, col_max, row_min, row_max, image_dims,
                        alpha: float = 0.6):
    """Similarity (scale, offset) centering a pixel bbox at alpha of the image.

    The bbox spans columns [col_min, col_max] and rows [row_min, row_max]
    inclusive; its larger side is scaled to alpha * max(width, height) and its
    center mapped to the image center. Coordinates map as p -> scale * p + offset.
    """
    width, height = image_dims
    bw = col_max - col_min + 1
    bh = row_max - row_min + 1
    scale = alpha * max(width, height) / max(bw, bh)
    bbox_center = np.array([(col_min + col_max + 1) / 2.0,
                            (row_min + row_max + 1) / 2.0])
    image_center = np.array([width / 2.0, height / 2.0])
    offset = image_center - scale * bbox_center
    return float(scale), offset


def normalize_crop(mask, image_dims, alpha: float = 0.6):
    """Similarity placing the mask's tight bbox centered at alpha of the image."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMaskError("cannot normalize an empty mask")
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    return normalize_crop_bbox(cols[0], cols[-1], rows[0], rows[-1],
                               image_dims, alpha)
