"""Guided patch-match synthesis.

Minimizes a weighted sum-of-squares patch energy over a nearest-neighbor
field with EM-style iterations: PatchMatch search (propagation plus random
search) alternating with voting, coarse to fine over image pyramids. The
solver is a pure function of its inputs and seed; thread count never changes
the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ValidationError
from .guides import GuideSet, validate_guide_pair
from .raster import DEFAULT_MIN_LEVEL_SIZE, RasterImage, pyramid_depth

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SynthesisParams:
    """Solver hyperparameters; the reproducibility contract of a transfer."""

    patch_size: int = 5
    pyramid_levels: Optional[int] = None  # None = as deep as min_level_size allows
    em_iterations_per_level: int = 6
    search_iterations_per_em: int = 4
    style_weight: float = 1.0
    random_search_radius_decay: float = 0.5
    seed: int = 0
    min_level_size: int = DEFAULT_MIN_LEVEL_SIZE

    def __post_init__(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise ValidationError(f"patch_size must be odd and >= 3, got {self.patch_size}")
        if self.pyramid_levels is not None and self.pyramid_levels < 1:
            raise ValidationError("pyramid_levels must be >= 1")
        if self.em_iterations_per_level < 1 or self.search_iterations_per_em < 1:
            raise ValidationError("iteration counts must be >= 1")
        if self.style_weight < 0:
            raise ValidationError("style_weight must be >= 0")
        if not 0.0 < self.random_search_radius_decay < 1.0:
            raise ValidationError("random_search_radius_decay must be in (0, 1)")
        if self.min_level_size < 1:
            raise ValidationError("min_level_size must be >= 1")

    @property
    def half(self) -> int:
        return self.patch_size // 2


@dataclass(frozen=True)
class NearestNeighborField:
    """Per-target-pixel (source_x, source_y) assignment."""

    entries: np.ndarray  # int32 (height, width, 2)
    source_width: int
    source_height: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.entries, dtype=np.int32)
        if arr is self.entries:
            arr = arr.copy()
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValidationError(f"NNF entries must be (h, w, 2), got {arr.shape}")
        if arr[:, :, 0].min() < 0 or arr[:, :, 0].max() >= self.source_width:
            raise ValidationError("NNF x entries out of source bounds")
        if arr[:, :, 1].min() < 0 or arr[:, :, 1].max() >= self.source_height:
            raise ValidationError("NNF y entries out of source bounds")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def height(self) -> int:
        return self.entries.shape[0]

    @property
    def width(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class EnergyRecord:
    """Total energy after one EM iteration at one pyramid level."""

    level: int
    iteration: int
    energy: float


@dataclass(frozen=True)
class SynthesisResult:
    image: RasterImage
    field: NearestNeighborField
    trace: tuple[EnergyRecord, ...]


@dataclass
class _Stacked:
    """Guide planes flattened for the kernels."""

    planes: np.ndarray  # float32 (h, w, P)
    weights: np.ndarray  # float64 (P,)
    modulation: np.ndarray  # float32 (h, w, P), target side only

    @property
    def height(self) -> int:
        return self.planes.shape[0]

    @property
    def width(self) -> int:
        return self.planes.shape[1]

    def downsampled(self) -> "_Stacked":
        return _Stacked(
            _box_down(self.planes), self.weights, _box_down(self.modulation)
        )


def _box_down(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    nh, nw = (h + 1) // 2, (w + 1) // 2
    acc = np.zeros((nh, nw) + arr.shape[2:], dtype=np.float64)
    cnt = np.zeros((nh, nw) + (1,) * (arr.ndim - 2), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            block = arr[dy::2, dx::2]
            acc[: block.shape[0], : block.shape[1]] += block
            cnt[: block.shape[0], : block.shape[1]] += 1.0
    return (acc / cnt).astype(np.float32)


def _stack(guides: GuideSet) -> _Stacked:
    planes = []
    weights = []
    mods = []
    for ch in guides.channels:
        n = ch.image.channels
        planes.append(ch.image.data)
        weights.extend([ch.weight] * n)
        if ch.modulation is not None:
            mods.append(np.repeat(ch.modulation.data[:, :, :1], n, axis=2))
        else:
            mods.append(np.ones((ch.image.height, ch.image.width, n), dtype=np.float32))
    return _Stacked(
        np.ascontiguousarray(np.concatenate(planes, axis=2), dtype=np.float32),
        np.asarray(weights, dtype=np.float64),
        np.ascontiguousarray(np.concatenate(mods, axis=2), dtype=np.float32),
    )


def _check_pair(a_guides: GuideSet, a_style: RasterImage, b_guides: GuideSet) -> None:
    validate_guide_pair(a_guides, b_guides)
    if a_style.width != a_guides.width or a_style.height != a_guides.height:
        raise ValidationError(
            f"style image is {a_style.width}x{a_style.height} but exemplar guides are "
            f"{a_guides.width}x{a_guides.height}"
        )


def patch_distance(
    a_guides: GuideSet,
    a_style: RasterImage,
    b_guides: GuideSet,
    b_style: RasterImage,
    p: tuple[int, int],
    q: tuple[int, int],
    params: SynthesisParams,
) -> float:
    """Weighted squared distance between the source patch at p=(x, y) and the
    target patch at q=(x, y); edge samples replicate."""
    _check_pair(a_guides, a_style, b_guides)
    px, py = p
    qx, qy = q
    if not (0 <= px < a_guides.width and 0 <= py < a_guides.height):
        raise ValidationError(f"source coordinate {p} out of bounds")
    if not (0 <= qx < b_guides.width and 0 <= qy < b_guides.height):
        raise ValidationError(f"target coordinate {q} out of bounds")
    sa, sb = _stack(a_guides), _stack(b_guides)
    return float(
        _kernels.patch_dist(
            sa.planes, a_style.data, sb.planes, b_style.data, sb.modulation,
            sa.weights, float(params.style_weight),
            px, py, qx, qy, params.half, np.inf,
        )
    )


def init_nnf(
    target_dims: tuple[int, int], source_dims: tuple[int, int], seed: int
) -> NearestNeighborField:
    """Seeded uniform random field; identical output for identical inputs on
    any platform (counter-based generator keyed by seed and pixel index)."""
    tw, th = target_dims
    sw, sh = source_dims
    if tw < 1 or th < 1 or sw < 1 or sh < 1:
        raise ValidationError("image dimensions must be >= 1")
    entries = _kernels.init_nnf_kernel(th, tw, sw, sh, seed & _SEED_MASK)
    return NearestNeighborField(entries, sw, sh)


def patchmatch_pass(
    nnf: NearestNeighborField,
    a_guides: GuideSet,
    a_style: RasterImage,
    b_guides: GuideSet,
    b_style: RasterImage,
    pass_index: int,
    params: SynthesisParams,
) -> NearestNeighborField:
    """One propagation sweep (forward on even pass_index, reverse on odd)
    followed by per-pixel random search. Entries are replaced only when the
    patch distance strictly decreases; ties keep the incumbent."""
    _check_pair(a_guides, a_style, b_guides)
    sa, sb = _stack(a_guides), _stack(b_guides)
    entries = nnf.entries.copy()
    dist = _kernels.all_distances(
        sa.planes, a_style.data, sb.planes, b_style.data, sb.modulation,
        sa.weights, float(params.style_weight), entries, params.half,
    )
    _run_pass(sa, a_style.data, sb, b_style.data, entries, dist, pass_index, params)
    return NearestNeighborField(entries, nnf.source_width, nnf.source_height)


def _run_pass(sa, a_style_arr, sb, b_style_arr, entries, dist, pass_index, params):
    style_weight = float(params.style_weight)
    _kernels.propagate(
        sa.planes, a_style_arr, sb.planes, b_style_arr, sb.modulation, sa.weights,
        style_weight, entries, dist, params.half, pass_index % 2 == 0,
    )
    _kernels.random_search(
        sa.planes, a_style_arr, sb.planes, b_style_arr, sb.modulation, sa.weights,
        style_weight, entries, dist, params.half,
        np.uint64(params.seed & _SEED_MASK), pass_index,
        params.random_search_radius_decay,
    )


def vote(
    nnf: NearestNeighborField,
    a_style: RasterImage,
    target_dims: tuple[int, int],
    params: SynthesisParams,
) -> RasterImage:
    """Reconstruct the target as the unweighted mean of all exemplar samples
    contributed by the patch windows covering each pixel."""
    tw, th = target_dims
    if nnf.width != tw or nnf.height != th:
        raise ValidationError(
            f"field is {nnf.width}x{nnf.height}, target dims are {tw}x{th}"
        )
    out = _kernels.vote_kernel(nnf.entries, a_style.data, params.half, th, tw)
    return RasterImage(out)


def total_energy(
    nnf: NearestNeighborField,
    a_guides: GuideSet,
    a_style: RasterImage,
    b_guides: GuideSet,
    b_style: RasterImage,
    params: SynthesisParams,
) -> float:
    """Sum of patch distances over all target pixels under the field."""
    _check_pair(a_guides, a_style, b_guides)
    sa, sb = _stack(a_guides), _stack(b_guides)
    dist = _kernels.all_distances(
        sa.planes, a_style.data, sb.planes, b_style.data, sb.modulation,
        sa.weights, float(params.style_weight), nnf.entries, params.half,
    )
    return float(dist.sum())


def upsample_nnf(
    nnf: NearestNeighborField,
    new_target_dims: tuple[int, int],
    new_source_dims: tuple[int, int],
) -> NearestNeighborField:
    """Scale a coarse field to the next finer level: entry at q becomes
    2 * coarse(q // 2) + (q mod 2), clamped to the new source bounds."""
    tw, th = new_target_dims
    sw, sh = new_source_dims
    ys = np.arange(th)[:, None]
    xs = np.arange(tw)[None, :]
    coarse = nnf.entries[np.minimum(ys // 2, nnf.height - 1),
                         np.minimum(xs // 2, nnf.width - 1)]
    fine = np.empty((th, tw, 2), dtype=np.int32)
    fine[:, :, 0] = np.minimum(2 * coarse[:, :, 0] + (xs % 2), sw - 1)
    fine[:, :, 1] = np.minimum(2 * coarse[:, :, 1] + (ys % 2), sh - 1)
    return NearestNeighborField(fine, sw, sh)


def synthesize(
    a_guides: GuideSet,
    a_style: RasterImage,
    b_guides: GuideSet,
    params: SynthesisParams,
) -> SynthesisResult:
    """Run the full coarse-to-fine solve and return the stylized target image,
    the final field, and the per-iteration energy trace.

    Bit-identical outputs for identical inputs and seed.
    """
    _check_pair(a_guides, a_style, b_guides)
    if min(a_guides.width, a_guides.height) < params.min_level_size:
        raise ValidationError(
            f"exemplar {a_guides.width}x{a_guides.height} is below "
            f"min_level_size {params.min_level_size} at level 0"
        )
    if min(b_guides.width, b_guides.height) < params.min_level_size:
        raise ValidationError(
            f"target {b_guides.width}x{b_guides.height} is below "
            f"min_level_size {params.min_level_size} at level 0"
        )

    depth = min(
        pyramid_depth(a_guides.width, a_guides.height, params.min_level_size),
        pyramid_depth(b_guides.width, b_guides.height, params.min_level_size),
    )
    if params.pyramid_levels is not None:
        depth = min(depth, params.pyramid_levels)

    sa_levels = [_stack(a_guides)]
    sb_levels = [_stack(b_guides)]
    a_style_levels = [np.ascontiguousarray(a_style.data)]
    for _ in range(depth - 1):
        sa_levels.append(sa_levels[-1].downsampled())
        sb_levels.append(sb_levels[-1].downsampled())
        a_style_levels.append(_box_down(a_style_levels[-1]))

    seed = np.uint64(params.seed & _SEED_MASK)
    style_weight = float(params.style_weight)
    half = params.half
    trace: list[EnergyRecord] = []
    pass_counter = 0
    entries = None

    for level in range(depth - 1, -1, -1):
        sa, sb = sa_levels[level], sb_levels[level]
        a_style_arr = a_style_levels[level]
        if entries is None:
            entries = _kernels.init_nnf_kernel(
                sb.height, sb.width, sa.width, sa.height, seed
            )
        b_style_arr = _kernels.vote_kernel(entries, a_style_arr, half, sb.height, sb.width)
        dist = _kernels.all_distances(
            sa.planes, a_style_arr, sb.planes, b_style_arr, sb.modulation,
            sa.weights, style_weight, entries, half,
        )
        trace.append(EnergyRecord(level, 0, float(dist.sum())))
        for iteration in range(1, params.em_iterations_per_level + 1):
            for _ in range(params.search_iterations_per_em):
                _kernels.propagate(
                    sa.planes, a_style_arr, sb.planes, b_style_arr, sb.modulation,
                    sa.weights, style_weight, entries, dist, half,
                    pass_counter % 2 == 0,
                )
                _kernels.random_search(
                    sa.planes, a_style_arr, sb.planes, b_style_arr, sb.modulation,
                    sa.weights, style_weight, entries, dist, half,
                    seed, pass_counter, params.random_search_radius_decay,
                )
                pass_counter += 1
            b_style_arr = _kernels.vote_kernel(
                entries, a_style_arr, half, sb.height, sb.width
            )
            dist = _kernels.all_distances(
                sa.planes, a_style_arr, sb.planes, b_style_arr, sb.modulation,
                sa.weights, style_weight, entries, half,
            )
            trace.append(EnergyRecord(level, iteration, float(dist.sum())))
        if level > 0:
            finer_a = sa_levels[level - 1]
            finer_b = sb_levels[level - 1]
            nnf = NearestNeighborField(entries, sa.width, sa.height)
            entries = upsample_nnf(
                nnf, (finer_b.width, finer_b.height), (finer_a.width, finer_a.height)
            ).entries.copy()

    nnf = NearestNeighborField(entries, sa_levels[0].width, sa_levels[0].height)
    image = RasterImage(b_style_arr)
    return SynthesisResult(image, nnf, tuple(trace))
