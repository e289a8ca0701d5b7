"""Label-raster and binary-mask primitives: PNG I/O, class masks, connected
components, Chebyshev dilation, sliding-window tiling, and nearest-neighbor
label resampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage


class RasterError(Exception):
    pass


class DecodeError(RasterError):
    pass


class UnknownClassId(RasterError):
    def __init__(self, value: int, row: int, col: int):
        super().__init__(f"pixel value {value} at (row={row}, col={col}) is not in the taxonomy")
        self.value = value
        self.row = row
        self.col = col


class EmptyIdSet(RasterError):
    pass


class WindowTooLarge(RasterError):
    pass


class NonSquareInput(RasterError):
    pass


@dataclass(eq=False)
class LabelMap:
    """Dense grid of class identifiers, row-major uint8."""

    pixels: np.ndarray  # shape (height, width), dtype uint8

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 2 or self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError(f"label map must be a non-empty 2-D grid, got shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelMap) and np.array_equal(self.pixels, other.pixels)


@dataclass(eq=False)
class BinaryMask:
    """Row-major foreground flags over the same grid as the source LabelMap."""

    bits: np.ndarray  # shape (height, width), dtype bool

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.bits.shape}")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def is_empty(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)


@dataclass
class InstanceSet:
    """Disjoint connected regions of one mask, each a sorted array of flat
    row-major pixel indices; ordered by minimum index."""

    instances: list[np.ndarray]
    connectivity: int
    dims: tuple[int, int]  # (height, width)

    def instance_mask(self, i: int) -> BinaryMask:
        bits = np.zeros(self.dims, dtype=bool)
        bits.flat[self.instances[i]] = True
        return BinaryMask(bits)

    def __len__(self) -> int:
        return len(self.instances)


@dataclass(frozen=True)
class TileSpec:
    """Square sliding-window crop scheme: window side, stride, resampled output side."""

    window: int
    stride: int
    output_side: int

    def __post_init__(self):
        if not (0 < self.stride <= self.window):
            raise ValueError(f"stride must satisfy 0 < stride <= window, got {self.stride}/{self.window}")
        if self.output_side <= 0:
            raise ValueError(f"output_side must be positive, got {self.output_side}")


def load_label_map(path: str | Path, taxonomy) -> LabelMap:
    """Decode a single-channel 8-bit PNG of class ids and validate against the taxonomy."""
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    if img.mode != "L":
        raise DecodeError(f"{path}: expected single-channel 8-bit raster, got mode {img.mode!r}")
    pixels = np.asarray(img, dtype=np.uint8)
    known = np.zeros(256, dtype=bool)
    known[sorted(taxonomy.class_ids())] = True
    bad = ~known[pixels]
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise UnknownClassId(int(pixels[row, col]), int(row), int(col))
    return LabelMap(pixels)


def save_label_map(label_map: LabelMap, path: str | Path) -> None:
    Image.fromarray(label_map.pixels, mode="L").save(path, format="PNG")


def load_mask(path: str | Path) -> BinaryMask:
    """Decode an 8-bit single-channel PNG mask (0 background, nonzero foreground)."""
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    if img.mode != "L":
        raise DecodeError(f"{path}: expected single-channel 8-bit mask, got mode {img.mode!r}")
    return BinaryMask(np.asarray(img) > 0)


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write a mask as 8-bit single-channel PNG, 0 background / 255 foreground."""
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def class_mask(label_map: LabelMap, ids: set[int]) -> BinaryMask:
    """Foreground iff the pixel's class id is in `ids` (union of subcategory masks)."""
    if not ids:
        raise EmptyIdSet("class id set must be non-empty")
    lut = np.zeros(256, dtype=bool)
    lut[sorted(ids)] = True
    return BinaryMask(lut[label_map.pixels])


_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


def connected_components(mask: BinaryMask, connectivity: int = 8) -> InstanceSet:
    """Partition mask foreground into connected regions, ordered by minimum
    row-major pixel index."""
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, count = ndimage.label(mask.bits, structure=_STRUCTURES[connectivity])
    if count == 0:
        return InstanceSet(instances=[], connectivity=connectivity, dims=(mask.height, mask.width))
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    order = order[flat[order] > 0]  # drop background, grouped by label
    boundaries = np.searchsorted(flat[order], np.arange(1, count + 1))
    groups = np.split(order, boundaries[1:])
    groups.sort(key=lambda idx: idx[0])
    return InstanceSet(instances=groups, connectivity=connectivity, dims=(mask.height, mask.width))


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Chebyshev dilation: foreground within distance <= radius of a source pixel
    (square structuring element); radius 0 is the identity."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0 or mask.is_empty():
        return BinaryMask(mask.bits.copy())
    side = 2 * radius + 1
    grown = ndimage.maximum_filter(mask.bits.astype(np.uint8), size=side, mode="constant", cval=0)
    return BinaryMask(grown > 0)


def tile_crops(map_dims: tuple[int, int], spec: TileSpec) -> list[tuple[int, int, int]]:
    """Full sliding-window crop rectangles (x, y, side) at stride offsets, row-major;
    partial edge windows are discarded."""
    width, height = map_dims
    if spec.window > width or spec.window > height:
        raise WindowTooLarge(f"window {spec.window} exceeds map dims {map_dims}")
    xs = range(0, width - spec.window + 1, spec.stride)
    ys = range(0, height - spec.window + 1, spec.stride)
    return [(x, y, spec.window) for y in ys for x in xs]


def crop_label_map(label_map: LabelMap, rect: tuple[int, int, int]) -> LabelMap:
    x, y, side = rect
    return LabelMap(label_map.pixels[y : y + side, x : x + side].copy())


def resample_labels(label_map: LabelMap, out_side: int) -> LabelMap:
    """Nearest-neighbor resample of a square map: output (r, c) takes source
    (floor(r*in/out), floor(c*in/out)). Labels are categorical, so no interpolation."""
    if label_map.width != label_map.height:
        raise NonSquareInput(f"map is {label_map.width}x{label_map.height}, expected square")
    if out_side <= 0:
        raise ValueError(f"out_side must be positive, got {out_side}")
    in_side = label_map.width
    src = (np.arange(out_side) * in_side) // out_side
    return LabelMap(label_map.pixels[np.ix_(src, src)])
