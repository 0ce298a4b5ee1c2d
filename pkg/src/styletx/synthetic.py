"""Procedural lit-sphere exemplar and synthetic test shots.

Real production passes come from a renderer; this module fabricates small
stand-ins so tests, the acceptance suite, and first-time users have a shot
to run end to end. Everything is a pure function of its seed.

Run ``python -m styletx.synthetic OUTDIR`` to write a ready-to-run shot
directory with passes, exemplars, and a ``shot.toml``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .raster import EXR, PNG8, PNG16, RasterImage, save_image

_MASK = (1 << 64) - 1


def _mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _hash01(xi: np.ndarray, yi: np.ndarray, seed: int) -> np.ndarray:
    """Uniform [0, 1) value per lattice point, pure function of inputs."""
    h = _mix64(np.uint64(seed & _MASK) ^ np.uint64(0x9E3779B97F4A7C15))
    h = _mix64(h ^ xi.astype(np.uint64))
    h = _mix64(h ^ (yi.astype(np.uint64) * np.uint64(0x100000001B3)))
    return (h >> np.uint64(11)).astype(np.float64) / 9007199254740992.0


def value_noise(height: int, width: int, cell: float, seed: int) -> np.ndarray:
    """Smooth lattice noise in [0, 1], shape (height, width)."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64) / cell
    x0, y0 = np.floor(xs).astype(np.int64), np.floor(ys).astype(np.int64)
    fx, fy = xs - x0, ys - y0
    sx = fx * fx * (3 - 2 * fx)
    sy = fy * fy * (3 - 2 * fy)
    v00 = _hash01(x0, y0, seed)
    v10 = _hash01(x0 + 1, y0, seed)
    v01 = _hash01(x0, y0 + 1, seed)
    v11 = _hash01(x0 + 1, y0 + 1, seed)
    top = v00 * (1 - sx) + v10 * sx
    bot = v01 * (1 - sx) + v11 * sx
    return top * (1 - sy) + bot * sy


def fbm(height: int, width: int, cell: float, seed: int, octaves: int = 3) -> np.ndarray:
    total = np.zeros((height, width))
    amp, norm = 1.0, 0.0
    for o in range(octaves):
        total += amp * value_noise(height, width, max(cell / (2**o), 1.0), seed + o)
        norm += amp
        amp *= 0.5
    return total / norm


_LIGHT = np.array([-0.45, -0.55, 0.7])
_LIGHT = _LIGHT / np.linalg.norm(_LIGHT)


def sphere_scene(
    size: int,
    center: tuple[float, float] = (0.5, 0.47),
    radius: float = 0.34,
    wp_offset: tuple[float, float, float] = (0.0, 0.0, 0.0),
    backdrop: bool = False,
    backdrop_seed: int = 101,
    backdrop_texture: bool = True,
) -> dict[str, np.ndarray]:
    """Render the passes of a lit sphere, optionally over a covered backdrop.

    World positions are rest positions (material coordinates), so they travel
    with the sphere when ``center`` moves between frames.
    """
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    u = (xs + 0.5) / size
    v = (ys + 0.5) / size
    dx = (u - center[0]) / radius
    dy = (center[1] - v) / radius
    rho2 = dx * dx + dy * dy
    inside = rho2 <= 1.0
    nz = np.sqrt(np.clip(1.0 - rho2, 0.0, 1.0))

    normal = np.zeros((size, size, 3))
    normal[inside, 0] = dx[inside]
    normal[inside, 1] = dy[inside]
    normal[inside, 2] = nz[inside]

    lambert = np.clip(
        normal[:, :, 0] * _LIGHT[0] + normal[:, :, 1] * _LIGHT[1] + normal[:, :, 2] * _LIGHT[2],
        0.0,
        1.0,
    )

    world = np.zeros((size, size, 3))
    world[inside] = normal[inside] + np.asarray(wp_offset)

    coverage = inside.astype(np.float64)
    diffuse = np.where(inside, lambert, 0.0)
    normal_enc = np.where(inside[:, :, None], normal * 0.5 + 0.5, 0.0)

    rho = np.sqrt(rho2)
    outline = np.exp(-(((rho - 1.0) * radius * size) ** 2) / (2.0 * 1.2**2))

    # soft elliptical ground shadow under the sphere
    sdx = (u - center[0] - radius * 0.55) / (radius * 1.15)
    sdy = (v - center[1] - radius * 1.25) / (radius * 0.45)
    shadow = np.exp(-(sdx * sdx + sdy * sdy) * 2.2) * (~inside)
    shadow = np.clip(shadow, 0.0, 1.0)

    ids = inside.astype(np.float64)

    if backdrop:
        plane = np.stack([u * 2.0 - 1.0, v * 2.0 - 1.0, np.zeros_like(u)], axis=2)
        world = np.where(inside[:, :, None], world, plane)
        coverage = np.ones_like(coverage)
        if backdrop_texture:
            wall = 0.18 + 0.22 * fbm(size, size, size / 6.5, backdrop_seed)
        else:
            wall = np.full_like(u, 0.3)
        diffuse = np.where(inside, lambert, wall)
        flat = np.array([0.5, 0.5, 1.0])
        normal_enc = np.where(inside[:, :, None], normal_enc, flat)

    def f32(a):
        return np.ascontiguousarray(a if a.ndim == 3 else a[:, :, None], dtype=np.float32)

    return {
        "coverage": f32(coverage),
        "normal": f32(normal_enc),
        "diffuse": f32(diffuse),
        "world_position": f32(world),
        "outline": f32(np.clip(outline, 0.0, 1.0)),
        "shadow": f32(shadow),
        "id": f32(ids),
        "_angle": np.arctan2(dy, dx),
        "_rho": rho,
        "_inside": inside,
    }


def exemplar_images(size: int = 128, seed: int = 7) -> dict[str, np.ndarray]:
    """Sphere-scene guides plus hand-drawn-like touch layers.

    The base touch strokes follow the shading bands but wobble with angle, so
    misplaced patches are visible; outside the sphere the touch is flat paper,
    which keeps background matches unambiguous.
    """
    scene = sphere_scene(size)
    inside = scene["_inside"]
    angle = scene["_angle"]
    diffuse = scene["diffuse"][:, :, 0].astype(np.float64)
    noise = fbm(size, size, size / 9.0, seed)

    band = 0.5 + 0.5 * np.sin(diffuse * 6.0 * np.pi + 2.5 * angle + 2.2 * noise)
    stroke = 0.30 + 0.58 * band * (0.72 + 0.28 * np.sin(4.0 * angle + 4.0 * noise))
    touch_base = np.where(inside, stroke, 0.15)

    wobble = 0.55 + 0.45 * np.sin(7.0 * angle + 5.0 * noise)
    touch_outline = np.clip(scene["outline"][:, :, 0].astype(np.float64) * wobble, 0.0, 1.0)

    ys, xs = np.mgrid[0:size, 0:size]
    hatch = 0.5 + 0.5 * np.sin((xs + ys) * (2.0 * np.pi / 7.0) + 3.0 * noise)
    touch_shadow = 1.0 - 0.75 * scene["shadow"][:, :, 0].astype(np.float64) * (0.4 + 0.6 * hatch)

    def f32(a):
        return np.ascontiguousarray(np.clip(a, 0.0, 1.0)[:, :, None], dtype=np.float32)

    return {
        "diffuse": scene["diffuse"],
        "normal": scene["normal"],
        "coverage": scene["coverage"],
        "outline": scene["outline"],
        "shadow": scene["shadow"],
        "touch_base": f32(touch_base),
        "touch_outline": f32(touch_outline),
        "touch_shadow": f32(touch_shadow),
    }


def static_shot_frames(size: int, n_frames: int) -> list[dict[str, np.ndarray]]:
    """Static camera, static scene: every frame carries identical passes.

    The sphere sits in front of a covered, featureless wall; placement on the
    wall is deliberately ambiguous, the regime where frame-by-frame synthesis
    flickers worst."""
    frame = sphere_scene(size, backdrop=True, backdrop_texture=False)
    return [frame] * n_frames


def translating_shot_frames(
    size: int, n_frames: int, step_px: int = 1
) -> list[dict[str, np.ndarray]]:
    """A small sphere sliding over a static textured backdrop, full coverage."""
    frames = []
    for t in range(n_frames):
        cx = 0.32 + step_px * t / size
        frames.append(
            sphere_scene(
                size,
                center=(cx, 0.5),
                radius=0.17,
                wp_offset=(0.0, 0.0, 1.2),
                backdrop=True,
            )
        )
    return frames


_SHOT_KINDS = {"static": static_shot_frames, "translating": translating_shot_frames}

_LAYER_GUIDES = {
    "base": [("diffuse", 1.0), ("normal", 1.0), ("coverage", 0.5)],
    "outline": [("outline", 2.0), ("coverage", 0.25)],
    "shadow": [("shadow", 1.0), ("coverage", 0.25)],
}

# backdrop shots are matched without the normal guide: a flat wall normal
# would pin every wall pixel to the exemplar sphere's front pole, and the
# remaining ambiguity is exactly what the temporal guide exists to stabilize
_SHOT_LAYER_GUIDES = {
    "static": {**_LAYER_GUIDES, "base": [("diffuse", 1.0), ("coverage", 0.5)]},
    "translating": {**_LAYER_GUIDES, "base": [("diffuse", 1.0), ("coverage", 0.5)]},
}

_LAYER_TOUCH = {"base": "touch_base", "outline": "touch_outline", "shadow": "touch_shadow"}


def write_shot(
    root,
    kind: str = "static",
    size: int = 64,
    n_frames: int = 8,
    exemplar_size: int = 128,
    layers: tuple[str, ...] = ("base",),
    seed: int = 42,
    em_iterations: int = 6,
    temporal_weight: float = 2.0,
) -> Path:
    """Write passes, exemplars, and shot.toml under ``root``; return the
    config path."""
    root = Path(root)
    (root / "passes").mkdir(parents=True, exist_ok=True)
    layer_guides = _SHOT_LAYER_GUIDES[kind]
    frames = _SHOT_KINDS[kind](size, n_frames)
    pass_kinds = ["diffuse", "normal", "coverage", "world_position", "outline", "shadow"]
    for t, frame in enumerate(frames):
        for name in pass_kinds:
            save_image(RasterImage(frame[name]), root / "passes" / f"{name}.{t:04d}.exr", EXR)
        ids = (frame["id"][:, :, 0] * (1.0 / 255.0)).astype(np.float32)
        save_image(RasterImage(ids), root / "passes" / f"id.{t:04d}.png", PNG8)

    ex = exemplar_images(exemplar_size)
    guide_dir = root / "exemplars" / "sphere"
    guide_dir.mkdir(parents=True, exist_ok=True)
    for name in ["diffuse", "normal", "coverage", "outline", "shadow"]:
        save_image(RasterImage(ex[name]), guide_dir / f"{name}.exr", EXR)
    for layer_kind in ("base", "outline", "shadow"):
        style_dir = root / "exemplars" / layer_kind
        style_dir.mkdir(parents=True, exist_ok=True)
        save_image(
            RasterImage(ex[_LAYER_TOUCH[layer_kind]]), style_dir / "touch.png", PNG16
        )

    lines = [
        "[shot]",
        f'name = "{kind}-demo"',
        f"frames = [0, {n_frames - 1}]",
        'output_root = "out"',
        f"seed = {seed}",
        "",
        "[passes]",
    ]
    for name in pass_kinds:
        lines.append(f'{name} = "passes/{name}.{{frame:04d}}.exr"')
    lines.append('id = "passes/id.{frame:04d}.png"')
    lines += [
        "",
        "[synthesis]",
        "patch_size = 5",
        f"em_iterations_per_level = {em_iterations}",
        "search_iterations_per_em = 4",
        "",
        "[temporal]",
        f"temporal_weight = {temporal_weight}",
        "",
    ]
    for layer_kind in ("base", "outline", "shadow"):
        lines += [
            f"[exemplars.{layer_kind}]",
            f'touch = "exemplars/{layer_kind}/touch.png"',
            f"[exemplars.{layer_kind}.guides]",
        ]
        for guide_kind, _ in layer_guides[layer_kind]:
            lines.append(f'{guide_kind} = "exemplars/sphere/{guide_kind}.exr"')
        lines.append("")
    for layer_kind in layers:
        lines += [
            "[[layers]]",
            f'name = "{layer_kind}"',
            f'kind = "{layer_kind}"',
            f'exemplar = "{layer_kind}"',
        ]
        if layer_kind == "shadow":
            lines.append("opacity = 0.65")
        lines.append("[layers.guides]")
        for guide_kind, weight in layer_guides[layer_kind]:
            lines.append(f"{guide_kind} = {weight}")
        lines.append("")
    lines += [
        "[palette]",
        "background = [0.97, 0.95, 0.90]",
        "[palette.colors]",
        '0 = [0.93, 0.91, 0.86]',
        '1 = [0.42, 0.55, 0.78]',
        "[palette.tints]",
        "outline = [0.13, 0.10, 0.16]",
        "shadow = [0.45, 0.42, 0.55]",
    ]
    config_path = root / "shot.toml"
    config_path.write_text("\n".join(lines) + "\n")
    return config_path


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="generate a synthetic demo shot")
    parser.add_argument("outdir")
    parser.add_argument("--kind", choices=sorted(_SHOT_KINDS), default="static")
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--frames", type=int, default=8)
    parser.add_argument("--layers", default="base,outline,shadow")
    args = parser.parse_args(argv)
    config = write_shot(
        args.outdir,
        kind=args.kind,
        size=args.size,
        n_frames=args.frames,
        layers=tuple(args.layers.split(",")),
    )
    print(config)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
