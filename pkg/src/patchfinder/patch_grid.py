"""Overlapping patch grids over a document image.

A grid is parameterized by an area fraction (patch area / image area), an
aspect mode, and an overlap fraction. Grids are pure data: building one never
touches pixels, so the geometry can be tested and reasoned about without
image I/O. Cropping is the only operation here that reads an image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from PIL import Image

ASPECT_MODES = ("square", "image-proportional", "full-width-strip")


class GridGeometryError(ValueError):
    """Invalid grid parameters or a rectangle outside the image bounds."""


def _round_half_up(x: float) -> int:
    # Ties round away from zero (0.5 -> 1), unlike Python's bankers rounding.
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise GridGeometryError(f"image dims must be >= 1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class PatchRect:
    index: int  # 0-based, row-major within its grid
    x0: int
    y0: int
    w: int
    h: int

    def validate_within(self, dims: ImageDims) -> None:
        if self.w < 1 or self.h < 1:
            raise GridGeometryError(f"patch {self.index}: extent must be >= 1, got {self.w}x{self.h}")
        if self.x0 < 0 or self.y0 < 0 or self.x0 + self.w > dims.width or self.y0 + self.h > dims.height:
            raise GridGeometryError(
                f"patch {self.index}: rect ({self.x0},{self.y0},{self.w},{self.h}) "
                f"outside {dims.width}x{dims.height} image"
            )

    def to_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class GridSpec:
    """How to tile an image: patch area fraction, patch shape, and overlap.

    ``overlap`` is the fraction of a patch's extent shared with its neighbor
    along each axis; the stride between patch origins is
    ``max(1, floor(extent * (1 - overlap)))``.
    """

    area_fraction: float = 0.25
    aspect_mode: str = "square"
    overlap: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.area_fraction <= 1.0:
            raise GridGeometryError(f"area_fraction must be in (0, 1], got {self.area_fraction}")
        if not 0.0 <= self.overlap < 1.0:
            raise GridGeometryError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.aspect_mode not in ASPECT_MODES:
            raise GridGeometryError(f"aspect_mode must be one of {ASPECT_MODES}, got {self.aspect_mode!r}")

    def to_dict(self) -> dict:
        return {"area_fraction": self.area_fraction, "aspect_mode": self.aspect_mode, "overlap": self.overlap}


@dataclass(frozen=True)
class PatchGrid:
    dims: ImageDims
    spec: GridSpec
    patches: tuple[PatchRect, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.patches)

    def to_dict(self) -> dict:
        return {
            "dims": {"width": self.dims.width, "height": self.dims.height},
            "spec": self.spec.to_dict(),
            "patch_count": len(self.patches),
        }


def patch_dims(dims: ImageDims, spec: GridSpec) -> tuple[int, int]:
    """Pixel extent (w, h) of one patch for the given spec.

    Pixel conversions round half up; results are clamped to [1, image extent].
    At area_fraction == 1.0 the patch is the whole image in every aspect mode
    (the only rectangle of that area that fits).
    """
    w_img, h_img = dims.width, dims.height
    s = spec.area_fraction
    if s == 1.0:
        return w_img, h_img
    if spec.aspect_mode == "square":
        side = _round_half_up(math.sqrt(s * w_img * h_img))
        side = min(side, w_img, h_img)
        w, h = side, side
    elif spec.aspect_mode == "image-proportional":
        w = _round_half_up(w_img * math.sqrt(s))
        h = _round_half_up(h_img * math.sqrt(s))
    else:  # full-width-strip
        w = w_img
        h = _round_half_up(s * h_img)
    w = max(1, min(w, w_img))
    h = max(1, min(h, h_img))
    return w, h


def _axis_offsets(extent: int, patch_extent: int, overlap: float) -> list[int]:
    """Patch origins along one axis: 0, stride, 2*stride, ... plus a final
    origin clamped so the last patch ends exactly at the image edge."""
    stride = max(1, math.floor(patch_extent * (1.0 - overlap)))
    offsets = []
    pos = 0
    while pos + patch_extent < extent:
        offsets.append(pos)
        pos += stride
    offsets.append(extent - patch_extent)
    return offsets


def build_grid(dims: ImageDims, spec: GridSpec) -> PatchGrid:
    """Tile the image with overlapping patches, row-major by (y0, x0).

    Every pixel is covered: strides never exceed the patch extent and the last
    patch on each axis is clamped to the image edge rather than padded past it.
    Pure function; identical inputs give identical output.
    """
    w, h = patch_dims(dims, spec)
    xs = _axis_offsets(dims.width, w, spec.overlap)
    ys = _axis_offsets(dims.height, h, spec.overlap)
    patches = []
    index = 0
    for y0 in ys:
        for x0 in xs:
            rect = PatchRect(index=index, x0=x0, y0=y0, w=w, h=h)
            rect.validate_within(dims)
            patches.append(rect)
            index += 1
    return PatchGrid(dims=dims, spec=spec, patches=tuple(patches))


def crop(image: Image.Image, rect: PatchRect) -> Image.Image:
    """Extract exactly the rect's pixel region, losslessly."""
    dims = ImageDims(width=image.width, height=image.height)
    rect.validate_within(dims)
    return image.crop((rect.x0, rect.y0, rect.x0 + rect.w, rect.y0 + rect.h))
