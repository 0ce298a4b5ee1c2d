import json
import os

import numpy as np
import pytest

from conftest import BASE_SELECTION, build_guides
from styletx.config import parse_config
from styletx.errors import ValidationError
from styletx.guides import GuideChannel, GuideKind, GuideSide
from styletx.raster import RasterImage
from styletx.synthesis import SynthesisParams, synthesize
from styletx.synthetic import translating_shot_frames, value_noise, write_shot
from styletx.temporal import (
    TemporalParams,
    advect,
    build_disocclusion_mask,
    derive_seed,
    flicker_metric,
    run_sequence,
    synthesize_frame_with_temporal,
)

TOL = 2.0 / 255.0


def _world_channel(arr):
    return GuideChannel(GuideKind.WORLD_POSITION, RasterImage(arr), 1.0)


@pytest.fixture(scope="module")
def world64(unique_world):
    return unique_world(64)


@pytest.fixture(scope="module")
def texture64():
    noise = value_noise(64, 64, 9.0, seed=31)
    return RasterImage((0.2 + 0.6 * noise[:, :, None]).astype(np.float32))


def test_params_validation():
    with pytest.raises(ValidationError):
        TemporalParams(temporal_weight=-1.0)
    with pytest.raises(ValidationError):
        TemporalParams(disocclusion_threshold=-0.1)


def test_derive_seed_stable():
    assert derive_seed(1, "base", 3) == derive_seed(1, "base", 3)
    assert derive_seed(1, "base", 3) != derive_seed(1, "base", 4)
    assert derive_seed(1, "base", 3) != derive_seed(2, "base", 3)


def test_advect_static_scene(world64, texture64):
    wp = _world_channel(world64)
    advected = advect(texture64, wp, wp, TemporalParams())
    assert np.abs(advected.data - texture64.data).mean() <= TOL


def test_advect_translated_scene(world64, texture64):
    wp_prev = _world_channel(world64)
    wp_cur = _world_channel(np.ascontiguousarray(np.roll(world64, 4, axis=1)))
    advected = advect(texture64, wp_prev, wp_cur, TemporalParams())
    expected = np.roll(texture64.data, 4, axis=1)
    interior = np.abs(advected.data - expected)[4:-4, 4:-4]
    assert interior.mean() <= 4.0 / 255.0


def test_advect_constant_image_stays_constant(world64):
    wp = _world_channel(world64)
    constant = RasterImage(np.full((64, 64, 1), 0.37, np.float32))
    advected = advect(constant, wp, wp, TemporalParams())
    assert np.allclose(advected.data, 0.37, atol=1e-6)


def test_advect_requires_world_position(texture64):
    bad = GuideChannel(GuideKind.DIFFUSE, texture64, 1.0)
    with pytest.raises(ValidationError, match="world_position"):
        advect(texture64, bad, bad, TemporalParams())


def test_disocclusion_identical_frames(world64):
    wp = _world_channel(world64)
    mask = build_disocclusion_mask(wp, wp, 0.05)
    assert (mask.data == 1.0).all()


def test_disocclusion_isolated_jump(world64):
    moved = world64.copy()
    moved[20, 20] += np.float32(0.4)
    moved = np.clip(moved, 0.0, 1.0)
    mask = build_disocclusion_mask(
        _world_channel(world64), _world_channel(moved), 0.05
    ).data[:, :, 0]
    assert mask[20, 20] == 0.0
    far = mask.copy()
    far[17:24, 17:24] = 1.0
    assert (far == 1.0).all()


def test_disocclusion_translating_sphere_ground_truth():
    # step wide enough that the core of the revealed strip sits beyond the
    # threshold's matching reach on the smooth backdrop
    frames = translating_shot_frames(64, 2, step_px=8)
    prev, cur = frames[0], frames[1]
    from styletx.guides import compute_sequence_aabb, normalize_world_position

    aabb = compute_sequence_aabb(
        [RasterImage(prev["world_position"]), RasterImage(cur["world_position"])],
        [RasterImage(prev["coverage"]), RasterImage(cur["coverage"])],
    )
    wp_prev = normalize_world_position(
        RasterImage(prev["world_position"]), aabb, RasterImage(prev["coverage"])
    )
    wp_cur = normalize_world_position(
        RasterImage(cur["world_position"]), aabb, RasterImage(cur["coverage"])
    )
    mask = build_disocclusion_mask(wp_prev, wp_cur, 0.03).data[:, :, 0]
    inside_prev = prev["_inside"]
    inside_cur = cur["_inside"]
    revealed = inside_prev & ~inside_cur
    import scipy.ndimage as ndi

    revealed_core = ndi.binary_erosion(revealed, iterations=3)
    assert revealed_core.any()
    assert (mask[revealed_core] == 0.0).all()
    # static backdrop far from the sphere stays trusted
    far = ~ndi.binary_dilation(inside_prev | inside_cur, iterations=5)
    assert (mask[far] == 1.0).all()


def _small_instance(ex64, crop=slice(0, 40)):
    images = {k: np.ascontiguousarray(ex64[k][crop, crop]) for k in ("diffuse", "normal", "coverage")}
    a_guides = build_guides(ex64, GuideSide.EXEMPLAR, BASE_SELECTION)
    b_guides = build_guides(images, GuideSide.TARGET, BASE_SELECTION)
    return a_guides, RasterImage(ex64["touch_base"]), b_guides


def test_zero_temporal_weight_is_plain_synthesis(ex64):
    a_guides, style, b_guides = _small_instance(ex64)
    params = SynthesisParams(seed=13, min_level_size=16, em_iterations_per_level=2)
    plain = synthesize(a_guides, style, b_guides, params)
    b_adv = RasterImage(np.full((40, 40, 1), 0.5, np.float32))
    result = synthesize_frame_with_temporal(
        a_guides, style, b_guides, b_adv, None,
        TemporalParams(temporal_weight=0.0), params,
    )
    assert (result.stylized.data == plain.image.data).all()


def test_all_zero_mask_matches_zero_weight(ex64):
    a_guides, style, b_guides = _small_instance(ex64)
    params = SynthesisParams(seed=13, min_level_size=16, em_iterations_per_level=2)
    plain = synthesize(a_guides, style, b_guides, params)
    rng = np.random.RandomState(0)
    b_adv = RasterImage(rng.rand(40, 40, 1).astype(np.float32))
    zero_mask = RasterImage(np.zeros((40, 40, 1), np.float32))
    result = synthesize_frame_with_temporal(
        a_guides, style, b_guides, b_adv, zero_mask,
        TemporalParams(temporal_weight=2.0), params,
    )
    assert (result.stylized.data == plain.image.data).all()


def test_temporal_channel_requires_matching_dims(ex64):
    a_guides, style, b_guides = _small_instance(ex64)
    bad = RasterImage(np.zeros((8, 8, 1), np.float32))
    with pytest.raises(ValidationError):
        synthesize_frame_with_temporal(
            a_guides, style, b_guides, bad, None, TemporalParams(), SynthesisParams()
        )


def test_flicker_metric_cases():
    a = RasterImage(np.full((4, 4, 1), 0.5, np.float32))
    b = RasterImage(np.full((4, 4, 1), 0.6, np.float32))
    assert flicker_metric([a, a, a]) == 0.0
    assert flicker_metric([a, b]) == pytest.approx(0.1, abs=1e-7)
    with pytest.raises(ValidationError):
        flicker_metric([a])


def test_flicker_metric_matches_loop_oracle():
    rng = np.random.RandomState(3)
    frames = [RasterImage(rng.rand(5, 6, 2).astype(np.float32)) for _ in range(4)]
    masks = [RasterImage((rng.rand(5, 6, 1) > 0.4).astype(np.float32)) for _ in range(4)]
    got = flicker_metric(frames, masks)
    total = 0.0
    for t in range(1, 4):
        diff = np.abs(
            frames[t - 1].data.astype(np.float64) - frames[t].data.astype(np.float64)
        ).mean(axis=2)
        m = masks[t].data[:, :, 0]
        total += (diff * m).sum() / m.sum()
    assert got == pytest.approx(total / 3, rel=1e-12)


@pytest.fixture(scope="module")
def mini_shot(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini_static")
    config = write_shot(
        root, kind="static", size=48, n_frames=5, exemplar_size=64,
        layers=("base",), em_iterations=3,
    )
    return parse_config(config)


def test_run_sequence_single_frame(tmp_path):
    config = write_shot(
        tmp_path, kind="static", size=48, n_frames=1, exemplar_size=64,
        layers=("base",), em_iterations=2,
    )
    shot = parse_config(config)
    results = run_sequence(shot, "base")
    assert len(results) == 1
    assert results[0].advected is None
    assert not list(shot.output_dir.glob("B_adv.*"))


def test_run_sequence_outputs_and_exemplar_constancy(mini_shot):
    results = run_sequence(mini_shot, "base")
    assert len(results) == 5
    for t, result in enumerate(results):
        assert result.stylized.channels == 1
        assert (mini_shot.output_dir / f"B_prime.base.{t:04d}.exr").is_file()
        if t > 0:
            assert result.advected is not None
            assert (mini_shot.output_dir / f"B_adv.base.{t:04d}.exr").is_file()
    metrics = json.loads((mini_shot.output_dir / "metrics.base.json").read_text())
    hashes = {f["exemplar_hash"] for f in metrics["frames"]}
    assert len(hashes) == 1
    assert metrics["flicker"] is not None


def test_run_sequence_resume_recomputes_from_gap(mini_shot):
    out = mini_shot.output_dir
    run_sequence(mini_shot, "base")
    originals = {p.name: p.read_bytes() for p in out.glob("B_prime.base.*.exr")}
    mtimes_before = {p.name: os.stat(p).st_mtime_ns for p in out.glob("B_prime.base.*.exr")}
    (out / "B_prime.base.0003.exr").unlink()
    results = run_sequence(mini_shot, "base")
    assert len(results) == 5
    for name, blob in originals.items():
        assert (out / name).read_bytes() == blob, f"{name} changed after resume"
    mtimes_after = {p.name: os.stat(p).st_mtime_ns for p in out.glob("B_prime.base.*.exr")}
    for t in (0, 1, 2):
        assert mtimes_after[f"B_prime.base.{t:04d}.exr"] == mtimes_before[f"B_prime.base.{t:04d}.exr"]
    for t in (3, 4):
        assert mtimes_after[f"B_prime.base.{t:04d}.exr"] > mtimes_before[f"B_prime.base.{t:04d}.exr"]


def test_two_frame_static_pair_beats_baseline(tmp_path):
    # paired-run comparison on a 2-frame static shot, identical seeds
    flicker = {}
    for tag, weight in (("temporal", 2.0), ("baseline", 0.0)):
        root = tmp_path / tag
        config = write_shot(
            root, kind="static", size=64, n_frames=2, exemplar_size=128,
            layers=("base",), temporal_weight=weight,
        )
        frames = [r.stylized for r in run_sequence(parse_config(config), "base")]
        flicker[tag] = flicker_metric(frames)
    assert flicker["temporal"] <= 0.5 * flicker["baseline"]


def test_zero_weight_sequence_equals_frame_by_frame(tmp_path):
    from dataclasses import replace

    from styletx.config import frame_guides, load_exemplar_assets

    config = write_shot(
        tmp_path, kind="static", size=48, n_frames=3, exemplar_size=64,
        layers=("base",), em_iterations=2, temporal_weight=0.0,
    )
    shot = parse_config(config)
    results = run_sequence(shot, "base")
    layer = shot.layer("base")
    a_guides, a_style = load_exemplar_assets(shot, layer)
    for t, frame in enumerate(shot.frame_range):
        b_guides = frame_guides(shot, layer, frame, None)
        params = replace(layer.synthesis, seed=derive_seed(shot.seed, "base", frame))
        plain = synthesize(a_guides, a_style, b_guides, params)
        assert (plain.image.data == results[t].stylized.data).all()
