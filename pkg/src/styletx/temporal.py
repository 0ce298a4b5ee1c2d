"""Temporal coherence via an advection style-transfer step.

Frame-by-frame synthesis flickers because each frame re-solves placement
from scratch. The cure implemented here: warp the previous frame's result
into the current frame by running a small style transfer over world-position
guides, then inject that warped image as one extra guide channel (paired
with the exemplar touch on the exemplar side) in the current frame's main
transfer. Exemplar-side inputs stay identical across every frame of a shot.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ValidationError
from .guides import GuideChannel, GuideKind, GuideSet, GuideSide
from .raster import EXR, RasterImage, load_image, save_image
from .synthesis import EnergyRecord, SynthesisParams, synthesize

if TYPE_CHECKING:  # pragma: no cover
    from .config import ShotConfig

DISOCCLUSION_WINDOW = 7


def _default_advection_params() -> SynthesisParams:
    # a warp, not a synthesis: cheap solve, and the world-position guide
    # (not the style term) must dominate or the warp locks onto blur; the
    # lower level floor keeps the coarse level available on small frames
    return SynthesisParams(
        patch_size=5, pyramid_levels=2, em_iterations_per_level=2,
        style_weight=0.25, min_level_size=16,
    )


@dataclass(frozen=True)
class TemporalParams:
    """Weights and thresholds of the temporal guide."""

    temporal_weight: float = 2.0
    disocclusion_threshold: float = 0.05
    advection: SynthesisParams = field(default_factory=_default_advection_params)

    def __post_init__(self):
        if self.temporal_weight < 0:
            raise ValidationError("temporal_weight must be >= 0")
        if self.disocclusion_threshold < 0:
            raise ValidationError("disocclusion_threshold must be >= 0")


@dataclass(frozen=True)
class FrameResult:
    """Output of one frame of a sequence run."""

    frame_index: int
    stylized: RasterImage
    advected: Optional[RasterImage]
    trace: tuple[EnergyRecord, ...]


def derive_seed(base_seed: int, *tokens) -> int:
    """Stable 64-bit seed for a named sub-task of a run."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base_seed)).encode())
    for token in tokens:
        h.update(b"\x1f" + str(token).encode())
    return int.from_bytes(h.digest(), "little")


def _require_world(channel: GuideChannel, name: str) -> RasterImage:
    if channel.kind != GuideKind.WORLD_POSITION:
        raise ValidationError(f"{name} must be a world_position guide, got {channel.kind.value}")
    return channel.image


def advect(
    prev_stylized: RasterImage,
    worldpos_prev: GuideChannel,
    worldpos_cur: GuideChannel,
    tparams: TemporalParams,
) -> RasterImage:
    """Warp the previous frame's result into the current frame.

    Runs a style transfer whose only guide is the normalized world position
    of each frame and whose exemplar is the previous result itself; both
    world-position channels must have been normalized with the same scene
    box or the correspondence is meaningless.
    """
    prev_img = _require_world(worldpos_prev, "worldpos_prev")
    cur_img = _require_world(worldpos_cur, "worldpos_cur")
    if not prev_stylized.same_size(prev_img):
        raise ValidationError(
            f"previous result is {prev_stylized.width}x{prev_stylized.height} but its "
            f"world-position guide is {prev_img.width}x{prev_img.height}"
        )
    a_guides = GuideSet(
        (GuideChannel(GuideKind.WORLD_POSITION, prev_img, 1.0),), GuideSide.EXEMPLAR
    )
    b_guides = GuideSet(
        (GuideChannel(GuideKind.WORLD_POSITION, cur_img, 1.0),), GuideSide.TARGET
    )
    return synthesize(a_guides, prev_stylized, b_guides, tparams.advection).image


def build_disocclusion_mask(
    worldpos_prev: GuideChannel,
    worldpos_cur: GuideChannel,
    threshold: float,
    window: int = DISOCCLUSION_WINDOW,
) -> RasterImage:
    """1 where the current pixel's world position appears somewhere in the
    previous frame's local neighborhood, 0 where it was revealed this frame."""
    prev_img = _require_world(worldpos_prev, "worldpos_prev")
    cur_img = _require_world(worldpos_cur, "worldpos_cur")
    if not prev_img.same_size(cur_img):
        raise ValidationError("world-position guides differ in size")
    mask = _kernels.disocclusion_kernel(
        prev_img.data, cur_img.data, float(threshold), window // 2
    )
    return RasterImage(mask)


def synthesize_frame_with_temporal(
    a_guides: GuideSet,
    a_style: RasterImage,
    b_guides_t: GuideSet,
    b_adv: RasterImage,
    mask: Optional[RasterImage],
    tparams: TemporalParams,
    params: SynthesisParams,
) -> FrameResult:
    """Main transfer of one frame with the advected result injected as an
    extra guide pair: exemplar side gets the touch itself, target side gets
    the advected image, weighted by temporal_weight and zeroed wherever the
    disocclusion mask is 0. Base channels are untouched."""
    if b_adv.width != b_guides_t.width or b_adv.height != b_guides_t.height:
        raise ValidationError(
            f"advected image is {b_adv.width}x{b_adv.height} but frame guides are "
            f"{b_guides_t.width}x{b_guides_t.height}"
        )
    if mask is not None and not mask.same_size(b_adv):
        raise ValidationError("disocclusion mask size differs from the advected image")
    if tparams.temporal_weight == 0.0:
        result = synthesize(a_guides, a_style, b_guides_t, params)
    else:
        clipped = RasterImage(np.clip(b_adv.data, 0.0, 1.0))
        a_aug = a_guides.with_channel(
            GuideChannel(GuideKind.TEMPORAL, a_style, tparams.temporal_weight)
        )
        b_aug = b_guides_t.with_channel(
            GuideChannel(
                GuideKind.TEMPORAL, clipped, tparams.temporal_weight, modulation=mask
            )
        )
        result = synthesize(a_aug, a_style, b_aug, params)
    return FrameResult(-1, result.image, b_adv, result.trace)


def flicker_metric(
    frames: Sequence[RasterImage], masks: Optional[Sequence[RasterImage]] = None
) -> float:
    """Mean over consecutive pairs of the masked mean absolute pixel
    difference; 0 for identical frames. ``masks[t]`` gates the (t-1, t) pair."""
    if len(frames) < 2:
        raise ValidationError("flicker metric needs at least 2 frames")
    if masks is not None and len(masks) != len(frames):
        raise ValidationError("need one mask per frame")
    total = 0.0
    for t in range(1, len(frames)):
        a, b = frames[t - 1], frames[t]
        if not a.same_size(b) or a.channels != b.channels:
            raise ValidationError(f"frame {t} differs in shape from frame {t - 1}")
        diff = np.abs(a.data.astype(np.float64) - b.data.astype(np.float64)).mean(axis=2)
        if masks is None:
            total += float(diff.mean())
        else:
            m = masks[t].data[:, :, 0].astype(np.float64)
            denom = float(m.sum())
            total += float((diff * m).sum() / denom) if denom > 0 else 0.0
    return total / (len(frames) - 1)


def _hash_exemplar(a_guides: GuideSet, a_style: RasterImage) -> str:
    h = hashlib.sha256()
    for ch in a_guides.channels:
        h.update(ch.kind.value.encode())
        h.update(np.float64(ch.weight).tobytes())
        h.update(ch.image.data.tobytes())
    h.update(a_style.data.tobytes())
    return h.hexdigest()


def run_sequence(shot: "ShotConfig", layer_id: str) -> list[FrameResult]:
    """Drive one layer through every frame of a shot, strictly sequential.

    Frame 0 is synthesized plain; each later frame is advected from its
    predecessor, masked for disocclusions, and synthesized with the temporal
    guide. Existing B_prime outputs before the first gap are reused so an
    aborted run resumes where it stopped; everything from the first missing
    frame onward is recomputed.
    """
    from .config import frame_guides, load_exemplar_assets, shot_aabb, world_channel

    layer = shot.layer(layer_id)
    out_dir = shot.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    a_guides, a_style = load_exemplar_assets(shot, layer)
    exemplar_hash = _hash_exemplar(a_guides, a_style)

    frames = list(shot.frame_range)
    layer_seed = layer.seed if layer.seed is not None else shot.seed
    tparams = layer.temporal
    use_temporal = tparams.temporal_weight > 0.0 and len(frames) > 1
    aabb = shot_aabb(shot) if (use_temporal or layer.uses_world_position) else None

    def out_path(kind: str, frame: int) -> Path:
        return out_dir / f"{kind}.{layer.name}.{frame:04d}.exr"

    first_missing = len(frames)
    for t, frame in enumerate(frames):
        if not out_path("B_prime", frame).is_file():
            first_missing = t
            break

    results: list[FrameResult] = []
    metrics_frames: list[dict] = []
    prev_stylized: Optional[RasterImage] = None
    prev_world: Optional[GuideChannel] = None

    for t, frame in enumerate(frames):
        world_cur = world_channel(shot, frame, aabb) if use_temporal else None
        if t < first_missing:
            stylized = load_image(out_path("B_prime", frame))
            result = FrameResult(frame, stylized, None, ())
        else:
            b_guides_t = frame_guides(shot, layer, frame, aabb)
            frame_seed = derive_seed(layer_seed, layer.name, frame)
            params = replace(layer.synthesis, seed=frame_seed)
            if t == 0 or not use_temporal:
                solved = synthesize(a_guides, a_style, b_guides_t, params)
                result = FrameResult(frame, solved.image, None, solved.trace)
            else:
                adv_seed = derive_seed(layer_seed, layer.name, frame, "advect")
                adv_params = replace(tparams.advection, seed=adv_seed)
                advected = advect(
                    prev_stylized,
                    prev_world,
                    world_cur,
                    replace(tparams, advection=adv_params),
                )
                mask = build_disocclusion_mask(
                    prev_world, world_cur, tparams.disocclusion_threshold
                )
                result = synthesize_frame_with_temporal(
                    a_guides, a_style, b_guides_t, advected, mask, tparams, params
                )
                result = FrameResult(frame, result.stylized, result.advected, result.trace)
                save_image(result.advected, out_path("B_adv", frame), EXR)
            save_image(result.stylized, out_path("B_prime", frame), EXR)
        metrics_frames.append(
            {
                "frame": frame,
                "exemplar_hash": exemplar_hash,
                "trace": [
                    {"level": r.level, "iteration": r.iteration, "energy": r.energy}
                    for r in result.trace
                ],
            }
        )
        results.append(result)
        prev_stylized = result.stylized
        prev_world = world_cur

    flicker = (
        flicker_metric([r.stylized for r in results]) if len(results) > 1 else None
    )
    metrics = {
        "layer": layer.name,
        "temporal_weight": tparams.temporal_weight,
        "exemplar_hash": exemplar_hash,
        "flicker": flicker,
        "frames": metrics_frames,
    }
    with open(out_dir / f"metrics.{layer.name}.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    return results
