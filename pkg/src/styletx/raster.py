"""Multi-channel float raster images, pyramids, and PNG/EXR file I/O.

Every image in the pipeline is a :class:`RasterImage`: float32 samples in
row-major (height, width, channels) layout, normally in [0, 1]. EXR-loaded
render passes may carry values outside [0, 1] until they are normalized by
the guide stage. Images are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    CorruptDataError,
    InputOutputError,
    MissingFileError,
    UnsupportedFormatError,
    ValidationError,
)
from .exr import read_exr, write_exr

#: Shortest image side allowed at the coarsest pyramid level. Coarser levels
#: destroy the sphere structure of lit-sphere exemplars.
DEFAULT_MIN_LEVEL_SIZE = 32

PNG8 = "PNG8"
PNG16 = "PNG16"
EXR = "EXR"


@dataclass(frozen=True)
class RasterImage:
    """Immutable float32 raster with 1 to 4 channels."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValidationError(f"raster data must be (h, w, c), got shape {arr.shape}")
        if not 1 <= arr.shape[2] <= 4:
            raise ValidationError(f"channel count must be 1..4, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"image dimensions must be >= 1, got {arr.shape[:2]}")
        converted = np.ascontiguousarray(arr, dtype=np.float32)
        if converted is arr:
            converted = converted.copy()
        converted.flags.writeable = False
        object.__setattr__(self, "data", converted)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def same_size(self, other: "RasterImage") -> bool:
        return self.width == other.width and self.height == other.height

    @staticmethod
    def constant(width: int, height: int, values) -> "RasterImage":
        values = np.atleast_1d(np.asarray(values, dtype=np.float32))
        return RasterImage(np.broadcast_to(values, (height, width, values.size)).copy())


@dataclass(frozen=True)
class ImagePyramid:
    """Image at successive 2x box-filtered resolutions, finest first."""

    levels: list[RasterImage] = field(default_factory=list)

    def __post_init__(self):
        if not self.levels:
            raise ValidationError("pyramid needs at least one level")
        channels = self.levels[0].channels
        if any(lv.channels != channels for lv in self.levels):
            raise ValidationError("all pyramid levels must share a channel count")

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, i: int) -> RasterImage:
        return self.levels[i]


def load_image(path) -> RasterImage:
    """Load a PNG (8/16-bit) or EXR (float) file.

    PNG samples are mapped to [0, 1] by dividing by the bit-depth maximum.
    EXR samples are passed through unchanged.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such image file: {path}")
    suffix = path.suffix.lower()
    if suffix == ".exr":
        return RasterImage(read_exr(path))
    if suffix != ".png":
        raise UnsupportedFormatError(f"unsupported image format {suffix!r}: {path}")
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise CorruptDataError(f"corrupt PNG file: {path}")
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    else:
        raise UnsupportedFormatError(f"unsupported PNG sample type {arr.dtype}: {path}")
    if arr.ndim == 3 and arr.shape[2] >= 3:
        arr = arr[:, :, [2, 1, 0] + ([3] if arr.shape[2] == 4 else [])]
    return RasterImage(arr.astype(np.float32) / scale)


def save_image(img: RasterImage, path, format: str) -> None:
    """Write an image as PNG8, PNG16, or EXR.

    PNG output clamps to [0, 1] and quantizes round-half-up so golden tests
    are bit-exact. EXR output preserves float32 samples.
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise InputOutputError(f"output directory does not exist: {path.parent}")
    if format == EXR:
        try:
            write_exr(path, img.data)
        except OSError as exc:
            raise InputOutputError(f"cannot write {path}: {exc}") from exc
        return
    if format not in (PNG8, PNG16):
        raise ValueError(f"unknown image format {format!r}")
    if img.channels == 2:
        raise UnsupportedFormatError("PNG output supports 1, 3, or 4 channels")
    maxval = 255 if format == PNG8 else 65535
    dtype = np.uint8 if format == PNG8 else np.uint16
    quantized = np.floor(np.clip(img.data.astype(np.float64), 0.0, 1.0) * maxval + 0.5)
    arr = quantized.astype(dtype)
    if img.channels == 1:
        arr = arr[:, :, 0]
    else:
        arr = arr[:, :, [2, 1, 0] + ([3] if img.channels == 4 else [])]
    ok = cv2.imwrite(str(path), arr)
    if not ok:
        raise InputOutputError(f"cannot write {path}")


def downsample2x(img: RasterImage) -> RasterImage:
    """Halve both dimensions with an edge-truncated 2x2 box filter."""
    h, w, c = img.data.shape
    nh, nw = (h + 1) // 2, (w + 1) // 2
    acc = np.zeros((nh, nw, c), dtype=np.float64)
    cnt = np.zeros((nh, nw, 1), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            block = img.data[dy::2, dx::2]
            acc[: block.shape[0], : block.shape[1]] += block
            cnt[: block.shape[0], : block.shape[1]] += 1.0
    return RasterImage((acc / cnt).astype(np.float32))


def build_pyramid(
    img: RasterImage, max_levels: int, min_level_size: int = DEFAULT_MIN_LEVEL_SIZE
) -> ImagePyramid:
    """Build a coarse-to-fine pyramid by repeated 2x box downsampling.

    Level 0 is the input. Construction stops at ``max_levels`` or when the
    next level's shortest side would drop below ``min_level_size``.
    """
    if max_levels < 1:
        raise ValidationError(f"max_levels must be >= 1, got {max_levels}")
    levels = [img]
    while len(levels) < max_levels:
        prev = levels[-1]
        if min((prev.height + 1) // 2, (prev.width + 1) // 2) < min_level_size:
            break
        levels.append(downsample2x(prev))
    return ImagePyramid(levels)


def pyramid_depth(width: int, height: int, min_level_size: int) -> int:
    """Number of pyramid levels an image of this size supports."""
    depth = 1
    w, h = width, height
    while min((w + 1) // 2, (h + 1) // 2) >= min_level_size:
        w, h = (w + 1) // 2, (h + 1) // 2
        depth += 1
    return depth
