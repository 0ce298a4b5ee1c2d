"""Render-pass ingestion and guide-set assembly.

Guides are the auxiliary channels (diffuse, normal, world position, outline,
shadow, coverage) that establish correspondence between the exemplar scene
and the target scene. Both sides of a transfer carry a :class:`GuideSet`
whose channels must match pairwise in kind, order, and weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NumericError, ValidationError
from .raster import RasterImage

COVERAGE_THRESHOLD = 0.5


class GuideKind(str, Enum):
    DIFFUSE = "diffuse"
    NORMAL = "normal"
    WORLD_POSITION = "world_position"
    OUTLINE = "outline"
    SHADOW = "shadow"
    COVERAGE = "coverage"
    TEMPORAL = "temporal"
    CUSTOM = "custom"


class GuideSide(str, Enum):
    EXEMPLAR = "exemplar_side"
    TARGET = "target_side"


@dataclass(frozen=True)
class GuideChannel:
    """One guide image with its matching weight.

    ``modulation`` optionally scales this channel's contribution per target
    pixel; it is only meaningful on target-side channels and is how the
    temporal guide gets suppressed in disoccluded regions.
    """

    kind: GuideKind
    image: RasterImage
    weight: float
    modulation: RasterImage | None = None

    def __post_init__(self):
        if self.weight < 0:
            raise ValidationError(f"guide weight must be >= 0, got {self.weight}")
        data = self.image.data
        if not np.isfinite(data).all():
            raise NumericError(f"{self.kind.value} guide contains non-finite samples")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError(
                f"{self.kind.value} guide samples must lie in [0, 1] "
                f"(range {data.min():.4g}..{data.max():.4g}); normalize the pass first"
            )
        if self.modulation is not None and not self.modulation.same_size(self.image):
            raise ValidationError("modulation mask must match the guide image size")


@dataclass(frozen=True)
class GuideSet:
    """Ordered, weighted guide channels for one side of the analogy."""

    channels: tuple[GuideChannel, ...]
    side: GuideSide

    def __post_init__(self):
        if not self.channels:
            raise ValidationError("guide set needs at least one channel")
        first = self.channels[0].image
        for ch in self.channels[1:]:
            if not ch.image.same_size(first):
                raise ValidationError(
                    f"guide dimension mismatch: {ch.kind.value} is "
                    f"{ch.image.width}x{ch.image.height}, expected "
                    f"{first.width}x{first.height}"
                )
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def width(self) -> int:
        return self.channels[0].image.width

    @property
    def height(self) -> int:
        return self.channels[0].image.height

    def with_channel(self, channel: GuideChannel) -> "GuideSet":
        return GuideSet(self.channels + (channel,), self.side)


@dataclass(frozen=True)
class SceneAABB:
    """World-space box used to normalize world-position passes."""

    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        if any(hi < lo for lo, hi in zip(self.min, self.max)):
            raise ValidationError(f"invalid AABB: min {self.min} exceeds max {self.max}")

    def to_dict(self) -> dict:
        return {"min": list(self.min), "max": list(self.max)}

    @staticmethod
    def from_dict(d: dict) -> "SceneAABB":
        return SceneAABB(tuple(float(v) for v in d["min"]), tuple(float(v) for v in d["max"]))


@dataclass(frozen=True)
class StyleExemplar:
    """Hand-authored touch image plus the guides of its reference scene."""

    name: str
    touch: RasterImage
    guides: GuideSet

    def __post_init__(self):
        if self.touch.channels != 1:
            raise ValidationError(
                f"exemplar {self.name!r}: touch must be single-channel, "
                f"got {self.touch.channels}"
            )
        if not self.touch.same_size(self.guides.channels[0].image):
            raise ValidationError(
                f"exemplar {self.name!r}: touch dimensions must equal guide dimensions"
            )


def normalize_world_position(
    world_pass: RasterImage, aabb: SceneAABB, coverage: RasterImage
) -> GuideChannel:
    """Map a raw XYZ pass into a [0, 1] RGB guide using the scene box.

    Covered pixels become (xyz - min) / extent, clamped to [0, 1]; axes with
    zero extent map to 0.5; uncovered pixels map to 0.
    """
    if world_pass.channels != 3:
        raise ValidationError(
            f"world position pass must have 3 channels, got {world_pass.channels}"
        )
    if not world_pass.same_size(coverage):
        raise ValidationError(
            "world position / coverage dimension mismatch: "
            f"{world_pass.width}x{world_pass.height} vs {coverage.width}x{coverage.height}"
        )
    lo = np.asarray(aabb.min, dtype=np.float64)
    hi = np.asarray(aabb.max, dtype=np.float64)
    extent = hi - lo
    degenerate = extent == 0.0
    safe_extent = np.where(degenerate, 1.0, extent)
    normalized = (world_pass.data.astype(np.float64) - lo) / safe_extent
    normalized = np.clip(normalized, 0.0, 1.0)
    normalized[:, :, degenerate] = 0.5
    covered = coverage.data[:, :, 0] > COVERAGE_THRESHOLD
    normalized[~covered] = 0.0
    return GuideChannel(GuideKind.WORLD_POSITION, RasterImage(normalized), weight=1.0)


def compute_sequence_aabb(
    world_passes: list[RasterImage], coverages: list[RasterImage]
) -> SceneAABB:
    """World box over every covered pixel of every frame.

    Computed once per shot so that normalized world positions stay aligned
    across frames; per-frame boxes would break the advection guide.
    """
    if not world_passes or len(world_passes) != len(coverages):
        raise ValidationError("need matching, nonempty pass and coverage lists")
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for world_pass, coverage in zip(world_passes, coverages):
        if not world_pass.same_size(coverage):
            raise ValidationError("world position / coverage dimension mismatch")
        covered = coverage.data[:, :, 0] > COVERAGE_THRESHOLD
        if not covered.any():
            continue
        xyz = world_pass.data[covered].astype(np.float64)
        lo = np.minimum(lo, xyz.min(axis=0))
        hi = np.maximum(hi, xyz.max(axis=0))
    if not np.all(np.isfinite(lo)):
        raise ValidationError("no covered pixels in the entire sequence")
    return SceneAABB(tuple(lo), tuple(hi))


def assemble_guide_set(
    channels: list[tuple[GuideKind, RasterImage, float]], side: GuideSide
) -> GuideSet:
    """Build a guide set from (kind, image, weight) triples, preserving order."""
    if not channels:
        raise ValidationError("cannot assemble an empty guide set")
    return GuideSet(
        tuple(GuideChannel(kind, image, weight) for kind, image, weight in channels),
        side,
    )


def validate_guide_pair(a: GuideSet, b: GuideSet) -> None:
    """Check that two guide sets correspond channel for channel.

    Kinds and weights must match pairwise in order. The two sides may have
    different image dimensions, but each side must be internally consistent
    (enforced by GuideSet itself).
    """
    if len(a.channels) != len(b.channels):
        raise ValidationError(
            f"guide channel count mismatch: {len(a.channels)} vs {len(b.channels)}"
        )
    for i, (ca, cb) in enumerate(zip(a.channels, b.channels)):
        if ca.kind != cb.kind:
            raise ValidationError(
                f"guide kind mismatch at index {i}: {ca.kind.value} vs {cb.kind.value}"
            )
        if ca.weight != cb.weight:
            raise ValidationError(
                f"guide weight mismatch at index {i}: {ca.weight} vs {cb.weight}"
            )
        if ca.image.channels != cb.image.channels:
            raise ValidationError(
                f"guide channel-depth mismatch at index {i}: "
                f"{ca.image.channels} vs {cb.image.channels}"
            )
