"""Per-layer transfer configs, colorization, and final-frame assembly.

Transfers produce single-channel touch layers; color enters only here, in
the compositing stage: base and shadow touches modulate flat palette colors
looked up through a color-ID pass, outlines are drawn as a tinted over-blend
whose alpha is the touch itself. Layers are mutually independent until they
are blended, bottom to top.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

import numpy as np

from .errors import UnmappedColorError, ValidationError
from .guides import GuideKind
from .raster import RasterImage
from .synthesis import SynthesisParams
from .temporal import TemporalParams

if TYPE_CHECKING:  # pragma: no cover
    from .config import ShotConfig
    from .temporal import FrameResult

#: ID passes are 8-bit indexed images; sample value times this is the ID.
ID_SCALE = 255


class LayerKind(str, Enum):
    BASE = "base"
    OUTLINE = "outline"
    SHADOW = "shadow"


class BlendMode(str, Enum):
    MULTIPLY = "multiply"
    OVER = "over"
    SCREEN = "screen"


DEFAULT_BLEND = {
    LayerKind.BASE: BlendMode.OVER,
    LayerKind.OUTLINE: BlendMode.OVER,
    LayerKind.SHADOW: BlendMode.MULTIPLY,
}

#: pass a layer kind must have to be transferable
REQUIRED_PASS = {LayerKind.OUTLINE: "outline", LayerKind.SHADOW: "shadow"}


@dataclass(frozen=True)
class LayerSpec:
    """One independently synthesized stylization layer."""

    name: str
    kind: LayerKind
    exemplar: str
    guides: tuple[tuple[GuideKind, float], ...]
    synthesis: SynthesisParams = field(default_factory=SynthesisParams)
    temporal: TemporalParams = field(default_factory=TemporalParams)
    blend: Optional[BlendMode] = None
    opacity: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.guides:
            raise ValidationError(f"layer {self.name!r} selects no guide channels")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValidationError(f"layer {self.name!r}: opacity must be in [0, 1]")
        if self.blend is None:
            object.__setattr__(self, "blend", DEFAULT_BLEND[self.kind])

    @property
    def uses_world_position(self) -> bool:
        return any(kind == GuideKind.WORLD_POSITION for kind, _ in self.guides)


@dataclass(frozen=True)
class Palette:
    """Color-ID lookup plus per-layer tints and the canvas background."""

    colors: dict[int, tuple[float, float, float]] = field(default_factory=dict)
    tints: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def tint_for(self, layer_name: str, kind: LayerKind) -> tuple[float, float, float]:
        if layer_name in self.tints:
            return self.tints[layer_name]
        return self.tints.get(kind.value, (0.0, 0.0, 0.0))


@dataclass(frozen=True)
class LayerStack:
    """Bottom-to-top layers with their per-frame touch images, plus the
    per-frame ID passes consumed by colorization."""

    layers: tuple[tuple[LayerSpec, tuple[RasterImage, ...]], ...]
    id_passes: tuple[RasterImage, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("empty layer stack")
        n = len(self.layers[0][1])
        if len(self.id_passes) != n:
            raise ValidationError("need one ID pass per frame")
        for layer, frames in self.layers:
            if len(frames) != n:
                raise ValidationError(f"layer {layer.name!r} has {len(frames)} frames, expected {n}")
            for img in frames:
                if not img.same_size(frames[0]) or not img.same_size(self.layers[0][1][0]):
                    raise ValidationError(f"layer {layer.name!r} frame dimensions differ")

    @property
    def frame_count(self) -> int:
        return len(self.layers[0][1])


def id_values(id_pass: RasterImage) -> np.ndarray:
    """Integer color IDs of an ID pass (8-bit indexed convention)."""
    return np.rint(id_pass.data[:, :, 0].astype(np.float64) * ID_SCALE).astype(np.int64)


def colorize(
    touch: RasterImage, id_pass: RasterImage, palette: Palette, kind: LayerKind,
    tint: Optional[tuple[float, float, float]] = None,
) -> RasterImage:
    """Turn a single-channel touch into RGB.

    Base and shadow layers modulate the palette color of each pixel's ID by
    the touch intensity. Outline layers return the flat tint; the composite
    step uses their touch as alpha instead.
    """
    if touch.channels != 1:
        raise ValidationError(f"touch must be single-channel, got {touch.channels}")
    if kind == LayerKind.OUTLINE:
        rgb = tint if tint is not None else palette.tint_for("", kind)
        return RasterImage(
            np.broadcast_to(
                np.asarray(rgb, dtype=np.float32), (touch.height, touch.width, 3)
            ).copy()
        )
    if not touch.same_size(id_pass):
        raise ValidationError("touch and ID pass dimensions differ")
    ids = id_values(id_pass)
    unique = np.unique(ids)
    missing = [int(i) for i in unique if int(i) not in palette.colors]
    if missing:
        ys, xs = np.nonzero(ids == missing[0])
        raise UnmappedColorError(
            f"color ID {missing[0]} at pixel ({int(xs[0])}, {int(ys[0])}) "
            f"has no palette entry"
        )
    lut = np.zeros((int(unique.max()) + 1, 3), dtype=np.float32)
    for i in unique:
        lut[int(i)] = palette.colors[int(i)]
    return RasterImage(lut[ids] * touch.data)


def blend(mode: BlendMode, dst: np.ndarray, src: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Apply one blend mode; alpha broadcasts per pixel."""
    if mode == BlendMode.OVER:
        return src * alpha + dst * (1.0 - alpha)
    if mode == BlendMode.MULTIPLY:
        return dst * (1.0 - alpha * (1.0 - src))
    if mode == BlendMode.SCREEN:
        return 1.0 - (1.0 - dst) * (1.0 - alpha * src)
    raise ValidationError(f"unknown blend mode {mode}")


def composite_frame(stack: LayerStack, frame: int, palette: Palette) -> RasterImage:
    """Blend one frame bottom to top over the palette background color."""
    if not 0 <= frame < stack.frame_count:
        raise ValidationError(f"frame {frame} outside stack range 0..{stack.frame_count - 1}")
    id_pass = stack.id_passes[frame]
    base = stack.layers[0][1][0]
    canvas = np.broadcast_to(
        np.asarray(palette.background, dtype=np.float32), (base.height, base.width, 3)
    ).astype(np.float32)
    for layer, frames in stack.layers:
        touch = frames[frame]
        if layer.kind == LayerKind.OUTLINE:
            src = colorize(touch, id_pass, palette, layer.kind,
                           tint=palette.tint_for(layer.name, layer.kind)).data
            alpha = touch.data * np.float32(layer.opacity)
        else:
            src = colorize(touch, id_pass, palette, layer.kind).data
            alpha = np.float32(layer.opacity)
        canvas = blend(layer.blend, canvas, src, alpha)
    return RasterImage(np.clip(canvas, 0.0, 1.0))


def transfer_layer(shot: "ShotConfig", layer: LayerSpec) -> "list[FrameResult]":
    """Run one layer's full sequence with its own guides and parameters."""
    from .temporal import run_sequence

    required = REQUIRED_PASS.get(layer.kind)
    if required is not None and required not in shot.passes:
        raise ValidationError(
            f"layer {layer.name!r} ({layer.kind.value}) requires a {required!r} pass "
            f"template in the shot config"
        )
    return run_sequence(shot, layer.name)


def naive_multicolor_frame(shot: "ShotConfig", frame: int) -> RasterImage:
    """The rejected per-color pipeline, kept as a demonstration.

    Each palette color is transferred independently against a region-masked
    target and the pieces are stitched; expect bumps and gaps along region
    boundaries. Not part of the supported pipeline.
    """
    from dataclasses import replace

    from .config import frame_guides, load_exemplar_assets, load_id_pass
    from .guides import GuideChannel, GuideSet
    from .synthesis import synthesize
    from .temporal import derive_seed

    base = next(l for l in shot.layers if l.kind == LayerKind.BASE)
    a_guides, a_style = load_exemplar_assets(shot, base)
    b_guides = frame_guides(shot, base, frame, None)
    id_pass = load_id_pass(shot, frame)
    ids = id_values(id_pass)
    out = np.zeros((id_pass.height, id_pass.width, 3), dtype=np.float32)
    palette = shot.palette
    for color_id in sorted(int(i) for i in np.unique(ids)):
        if color_id not in palette.colors:
            raise UnmappedColorError(f"color ID {color_id} has no palette entry")
        region = (ids == color_id).astype(np.float32)[:, :, None]
        masked = GuideSet(
            tuple(
                GuideChannel(ch.kind, RasterImage(ch.image.data * region), ch.weight)
                for ch in b_guides.channels
            ),
            b_guides.side,
        )
        params = replace(
            base.synthesis, seed=derive_seed(shot.seed, "naive", frame, color_id)
        )
        piece = synthesize(a_guides, a_style, masked, params).image
        color = np.asarray(palette.colors[color_id], dtype=np.float32)
        out += region * piece.data * color
    return RasterImage(np.clip(out, 0.0, 1.0))
