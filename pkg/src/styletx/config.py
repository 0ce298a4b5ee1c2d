"""Declarative shot configs: TOML parsing, strict validation, asset loading.

A shot config names every input of a batch run: frame range, pass path
templates, exemplars, layer specs, palette, and solver defaults. Parsing
materializes all defaults (so manifests record effective values), rejects
unknown keys outright, and checks that every referenced file resolves.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .compositing import BlendMode, LayerKind, LayerSpec, Palette
from .errors import ConfigError, MissingFileError
from .guides import (
    GuideChannel,
    GuideKind,
    GuideSet,
    GuideSide,
    SceneAABB,
    StyleExemplar,
    assemble_guide_set,
    compute_sequence_aabb,
    normalize_world_position,
)
from .raster import RasterImage, load_image
from .synthesis import SynthesisParams
from .temporal import TemporalParams, _default_advection_params

_PASS_NAMES = {k.value for k in GuideKind if k != GuideKind.TEMPORAL} | {"id"}
_SYNTHESIS_KEYS = {
    "patch_size",
    "pyramid_levels",
    "em_iterations_per_level",
    "search_iterations_per_em",
    "style_weight",
    "random_search_radius_decay",
    "min_level_size",
}
_TOP_KEYS = {"shot", "passes", "synthesis", "temporal", "exemplars", "layers", "palette"}
_SHOT_KEYS = {"name", "frames", "output_root", "seed"}
_TEMPORAL_KEYS = {"temporal_weight", "disocclusion_threshold", "advection"}
_LAYER_KEYS = {
    "name", "kind", "exemplar", "guides", "blend", "opacity", "synthesis", "temporal", "seed",
}
_EXEMPLAR_KEYS = {"touch", "guides"}
_PALETTE_KEYS = {"background", "colors", "tints"}


@dataclass(frozen=True)
class ExemplarConfig:
    name: str
    touch: Path
    guides: dict[GuideKind, Path]


@dataclass(frozen=True)
class ShotConfig:
    """Fully validated, defaults-materialized description of one shot."""

    name: str
    frame_start: int
    frame_end: int
    seed: int
    root: Path
    output_root: str
    passes: dict[str, str]
    exemplars: dict[str, ExemplarConfig]
    layers: tuple[LayerSpec, ...]
    palette: Palette
    synthesis_defaults: SynthesisParams = field(default_factory=SynthesisParams)
    temporal_defaults: TemporalParams = field(default_factory=TemporalParams)

    @property
    def frame_range(self) -> range:
        return range(self.frame_start, self.frame_end + 1)

    @property
    def output_dir(self) -> Path:
        return self.root / self.output_root

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise ConfigError(
            f"no layer named {name!r}; available: {', '.join(l.name for l in self.layers)}"
        )

    def pass_path(self, pass_name: str, frame: int) -> Path:
        template = self.passes.get(pass_name)
        if template is None:
            raise ConfigError(f"shot declares no {pass_name!r} pass template")
        return self.root / template.format(frame=frame)

    def to_manifest(self) -> dict:
        def params_dict(p: SynthesisParams) -> dict:
            return {f.name: getattr(p, f.name) for f in fields(SynthesisParams)}

        def temporal_dict(t: TemporalParams) -> dict:
            return {
                "temporal_weight": t.temporal_weight,
                "disocclusion_threshold": t.disocclusion_threshold,
                "advection": params_dict(t.advection),
            }

        return {
            "name": self.name,
            "frames": [self.frame_start, self.frame_end],
            "seed": self.seed,
            "output_root": self.output_root,
            "passes": dict(self.passes),
            "synthesis": params_dict(self.synthesis_defaults),
            "temporal": temporal_dict(self.temporal_defaults),
            "exemplars": {
                name: {
                    "touch": str(ex.touch),
                    "guides": {k.value: str(p) for k, p in ex.guides.items()},
                }
                for name, ex in self.exemplars.items()
            },
            "layers": [
                {
                    "name": l.name,
                    "kind": l.kind.value,
                    "exemplar": l.exemplar,
                    "guides": [[k.value, w] for k, w in l.guides],
                    "blend": l.blend.value,
                    "opacity": l.opacity,
                    "seed": l.seed,
                    "synthesis": params_dict(l.synthesis),
                    "temporal": temporal_dict(l.temporal),
                }
                for l in self.layers
            ],
            "palette": {
                "background": list(self.palette.background),
                "colors": {str(i): list(c) for i, c in sorted(self.palette.colors.items())},
                "tints": {n: list(c) for n, c in sorted(self.palette.tints.items())},
            },
        }


def _check_keys(table: dict, allowed: set, context: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {context}")


def _require(table: dict, key: str, context: str) -> Any:
    if key not in table:
        raise ConfigError(f"missing required key {key!r} in {context}")
    return table[key]


def _expect(value: Any, types, what: str) -> Any:
    if not isinstance(value, types) or isinstance(value, bool):
        raise ConfigError(f"{what} has wrong type ({type(value).__name__})")
    return value


def _rgb(value: Any, what: str) -> tuple[float, float, float]:
    if (
        not isinstance(value, list)
        or len(value) != 3
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise ConfigError(f"{what} must be a list of 3 numbers")
    rgb = tuple(float(v) for v in value)
    if any(not 0.0 <= v <= 1.0 for v in rgb):
        raise ConfigError(f"{what} components must be in [0, 1]")
    return rgb


def _guide_kind(name: str, context: str) -> GuideKind:
    try:
        kind = GuideKind(name)
    except ValueError:
        raise ConfigError(f"invalid guide kind {name!r} in {context}") from None
    if kind == GuideKind.TEMPORAL:
        raise ConfigError(f"the temporal guide is injected automatically ({context})")
    return kind


def _synthesis_params(table: dict, base: SynthesisParams, context: str) -> SynthesisParams:
    _check_keys(table, _SYNTHESIS_KEYS, context)
    overrides = {}
    for key, value in table.items():
        if key in ("style_weight", "random_search_radius_decay"):
            overrides[key] = float(_expect(value, (int, float), f"{context}.{key}"))
        else:
            overrides[key] = _expect(value, int, f"{context}.{key}")
    try:
        return replace(base, **overrides)
    except Exception as exc:
        raise ConfigError(f"invalid {context}: {exc}") from exc


def _temporal_params(table: dict, base: TemporalParams, context: str) -> TemporalParams:
    _check_keys(table, _TEMPORAL_KEYS, context)
    overrides: dict[str, Any] = {}
    if "temporal_weight" in table:
        overrides["temporal_weight"] = float(
            _expect(table["temporal_weight"], (int, float), f"{context}.temporal_weight")
        )
    if "disocclusion_threshold" in table:
        overrides["disocclusion_threshold"] = float(
            _expect(
                table["disocclusion_threshold"], (int, float),
                f"{context}.disocclusion_threshold",
            )
        )
    if "advection" in table:
        adv = _expect(table["advection"], dict, f"{context}.advection")
        overrides["advection"] = _synthesis_params(adv, base.advection, f"{context}.advection")
    try:
        return replace(base, **overrides)
    except Exception as exc:
        raise ConfigError(f"invalid {context}: {exc}") from exc


def parse_config(path) -> ShotConfig:
    """Parse and fully validate a shot TOML; all referenced files must exist."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such config file: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error in {path}: {exc}") from exc
    root = path.parent

    _check_keys(data, _TOP_KEYS, "config")
    shot_tbl = _expect(_require(data, "shot", "config"), dict, "[shot]")
    _check_keys(shot_tbl, _SHOT_KEYS, "[shot]")
    name = _expect(_require(shot_tbl, "name", "[shot]"), str, "shot.name")
    frames = _require(shot_tbl, "frames", "[shot]")
    if (
        not isinstance(frames, list)
        or len(frames) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in frames)
    ):
        raise ConfigError("shot.frames must be [first, last]")
    frame_start, frame_end = frames
    if frame_end < frame_start:
        raise ConfigError(f"empty frame range {frames}")
    seed = _expect(shot_tbl.get("seed", 0), int, "shot.seed")
    output_root = _expect(shot_tbl.get("output_root", "out"), str, "shot.output_root")

    passes_tbl = _expect(data.get("passes", {}), dict, "[passes]")
    for pass_name, template in passes_tbl.items():
        if pass_name not in _PASS_NAMES:
            raise ConfigError(f"unknown key {pass_name!r} in [passes]")
        _expect(template, str, f"passes.{pass_name}")
        try:
            template.format(frame=frame_start)
        except (KeyError, IndexError, ValueError) as exc:
            raise ConfigError(
                f"passes.{pass_name} template {template!r} must use a "
                f"{{frame}} placeholder only: {exc}"
            ) from exc

    synthesis_defaults = _synthesis_params(
        _expect(data.get("synthesis", {}), dict, "[synthesis]"),
        SynthesisParams(),
        "[synthesis]",
    )
    temporal_defaults = _temporal_params(
        _expect(data.get("temporal", {}), dict, "[temporal]"),
        TemporalParams(advection=_default_advection_params()),
        "[temporal]",
    )

    exemplars: dict[str, ExemplarConfig] = {}
    for ex_name, ex_tbl in _expect(
        _require(data, "exemplars", "config"), dict, "[exemplars]"
    ).items():
        ex_tbl = _expect(ex_tbl, dict, f"[exemplars.{ex_name}]")
        _check_keys(ex_tbl, _EXEMPLAR_KEYS, f"[exemplars.{ex_name}]")
        touch = root / _expect(
            _require(ex_tbl, "touch", f"[exemplars.{ex_name}]"), str, "touch"
        )
        guides_tbl = _expect(
            _require(ex_tbl, "guides", f"[exemplars.{ex_name}]"), dict, "guides"
        )
        guide_paths = {}
        for kind_name, rel in guides_tbl.items():
            kind = _guide_kind(kind_name, f"exemplars.{ex_name}.guides")
            guide_paths[kind] = root / _expect(rel, str, f"guide path {kind_name}")
        exemplars[ex_name] = ExemplarConfig(ex_name, touch, guide_paths)
    if not exemplars:
        raise ConfigError("config defines no exemplars")

    layers_raw = _require(data, "layers", "config")
    if not isinstance(layers_raw, list) or not layers_raw:
        raise ConfigError("config needs at least one [[layers]] entry")
    layers: list[LayerSpec] = []
    for i, layer_tbl in enumerate(layers_raw):
        ctx = f"[[layers]] #{i}"
        layer_tbl = _expect(layer_tbl, dict, ctx)
        _check_keys(layer_tbl, _LAYER_KEYS, ctx)
        kind_name = _expect(_require(layer_tbl, "kind", ctx), str, f"{ctx}.kind")
        try:
            kind = LayerKind(kind_name)
        except ValueError:
            raise ConfigError(f"invalid layer kind {kind_name!r} in {ctx}") from None
        layer_name = _expect(layer_tbl.get("name", kind_name), str, f"{ctx}.name")
        exemplar_name = _expect(
            _require(layer_tbl, "exemplar", ctx), str, f"{ctx}.exemplar"
        )
        if exemplar_name not in exemplars:
            raise ConfigError(f"{ctx} references unknown exemplar {exemplar_name!r}")
        guides_tbl = _expect(_require(layer_tbl, "guides", ctx), dict, f"{ctx}.guides")
        if not guides_tbl:
            raise ConfigError(f"{ctx} selects no guides")
        selection = []
        for kind_name2, weight in guides_tbl.items():
            gkind = _guide_kind(kind_name2, f"{ctx}.guides")
            weight = float(_expect(weight, (int, float), f"{ctx}.guides.{kind_name2}"))
            if weight < 0:
                raise ConfigError(f"{ctx}.guides.{kind_name2} must be >= 0")
            selection.append((gkind, weight))
        blend = None
        if "blend" in layer_tbl:
            blend_name = _expect(layer_tbl["blend"], str, f"{ctx}.blend")
            try:
                blend = BlendMode(blend_name)
            except ValueError:
                raise ConfigError(f"invalid blend mode {blend_name!r} in {ctx}") from None
        opacity = float(_expect(layer_tbl.get("opacity", 1.0), (int, float), f"{ctx}.opacity"))
        layer_seed = layer_tbl.get("seed")
        if layer_seed is not None:
            layer_seed = _expect(layer_seed, int, f"{ctx}.seed")
        layer_synthesis = _synthesis_params(
            _expect(layer_tbl.get("synthesis", {}), dict, f"{ctx}.synthesis"),
            synthesis_defaults,
            f"{ctx}.synthesis",
        )
        layer_temporal = _temporal_params(
            _expect(layer_tbl.get("temporal", {}), dict, f"{ctx}.temporal"),
            temporal_defaults,
            f"{ctx}.temporal",
        )
        try:
            layers.append(
                LayerSpec(
                    name=layer_name,
                    kind=kind,
                    exemplar=exemplar_name,
                    guides=tuple(selection),
                    synthesis=layer_synthesis,
                    temporal=layer_temporal,
                    blend=blend,
                    opacity=opacity,
                    seed=layer_seed,
                )
            )
        except Exception as exc:
            raise ConfigError(f"invalid {ctx}: {exc}") from exc

    names = [l.name for l in layers]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate layer names: {names}")
    base_count = sum(1 for l in layers if l.kind == LayerKind.BASE)
    if base_count != 1:
        raise ConfigError(f"config must declare exactly one base layer, found {base_count}")

    palette_tbl = _expect(data.get("palette", {}), dict, "[palette]")
    _check_keys(palette_tbl, _PALETTE_KEYS, "[palette]")
    background = (
        _rgb(palette_tbl["background"], "palette.background")
        if "background" in palette_tbl
        else (1.0, 1.0, 1.0)
    )
    colors = {}
    for key, value in _expect(palette_tbl.get("colors", {}), dict, "palette.colors").items():
        try:
            color_id = int(key)
        except ValueError:
            raise ConfigError(f"palette color key {key!r} is not an integer ID") from None
        colors[color_id] = _rgb(value, f"palette.colors.{key}")
    tints = {
        tname: _rgb(tvalue, f"palette.tints.{tname}")
        for tname, tvalue in _expect(
            palette_tbl.get("tints", {}), dict, "palette.tints"
        ).items()
    }
    palette = Palette(colors=colors, tints=tints, background=background)

    shot = ShotConfig(
        name=name,
        frame_start=frame_start,
        frame_end=frame_end,
        seed=seed,
        root=root,
        output_root=output_root,
        passes=dict(passes_tbl),
        exemplars=exemplars,
        layers=tuple(layers),
        palette=palette,
        synthesis_defaults=synthesis_defaults,
        temporal_defaults=temporal_defaults,
    )
    _validate_references(shot)
    return shot


def _validate_references(shot: ShotConfig) -> None:
    for ex in shot.exemplars.values():
        if not ex.touch.is_file():
            raise ConfigError(f"exemplar {ex.name!r}: unresolvable path {ex.touch}")
        for kind, guide_path in ex.guides.items():
            if not guide_path.is_file():
                raise ConfigError(
                    f"exemplar {ex.name!r} guide {kind.value}: unresolvable path {guide_path}"
                )
    for layer in shot.layers:
        for kind, _ in layer.guides:
            if layer.exemplar and kind not in shot.exemplars[layer.exemplar].guides:
                raise ConfigError(
                    f"layer {layer.name!r} uses guide {kind.value!r} but exemplar "
                    f"{layer.exemplar!r} provides no such guide image"
                )
            if kind.value not in shot.passes:
                raise ConfigError(
                    f"layer {layer.name!r} uses guide {kind.value!r} but the shot "
                    f"declares no such pass template"
                )
    for pass_name in shot.passes:
        for frame in shot.frame_range:
            p = shot.pass_path(pass_name, frame)
            if not p.is_file():
                raise ConfigError(f"unresolvable path for pass {pass_name!r}: {p}")


def load_pass(shot: ShotConfig, pass_name: str, frame: int) -> RasterImage:
    path = shot.pass_path(pass_name, frame)
    try:
        return load_image(path)
    except MissingFileError:
        raise MissingFileError(f"frame {frame}: missing {pass_name} pass {path}") from None


def load_exemplar_assets(shot: ShotConfig, layer: LayerSpec) -> tuple[GuideSet, RasterImage]:
    """Exemplar-side guide set (in the layer's order and weights) plus touch."""
    ex = shot.exemplars[layer.exemplar]
    touch = load_image(ex.touch)
    channels = []
    for kind, weight in layer.guides:
        channels.append((kind, load_image(ex.guides[kind]), weight))
    guides = assemble_guide_set(channels, GuideSide.EXEMPLAR)
    StyleExemplar(ex.name, touch, guides)  # dimension/channel invariants
    return guides, touch


_AABB_CACHE: dict[tuple, SceneAABB] = {}


def shot_aabb(shot: ShotConfig) -> SceneAABB:
    """Sequence AABB over all frames; persisted next to the outputs."""
    key = (
        str(shot.root), shot.name, shot.frame_start, shot.frame_end,
        shot.passes.get("world_position"), shot.passes.get("coverage"),
    )
    aabb = _AABB_CACHE.get(key)
    if aabb is None:
        if "world_position" not in shot.passes or "coverage" not in shot.passes:
            raise ConfigError(
                "temporal guides need 'world_position' and 'coverage' pass templates"
            )
        world = [load_pass(shot, "world_position", f) for f in shot.frame_range]
        cover = [load_pass(shot, "coverage", f) for f in shot.frame_range]
        aabb = compute_sequence_aabb(world, cover)
        _AABB_CACHE[key] = aabb
    shot.output_dir.mkdir(parents=True, exist_ok=True)
    text = (
        "[aabb]\n"
        f"min = [{aabb.min[0]!r}, {aabb.min[1]!r}, {aabb.min[2]!r}]\n"
        f"max = [{aabb.max[0]!r}, {aabb.max[1]!r}, {aabb.max[2]!r}]\n"
    )
    fd, tmp = tempfile.mkstemp(dir=shot.output_dir, suffix=".toml")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, shot.output_dir / "aabb.toml")
    return aabb


def world_channel(shot: ShotConfig, frame: int, aabb: SceneAABB) -> GuideChannel:
    world = load_pass(shot, "world_position", frame)
    cover = load_pass(shot, "coverage", frame)
    return normalize_world_position(world, aabb, cover)


def frame_guides(
    shot: ShotConfig, layer: LayerSpec, frame: int, aabb: Optional[SceneAABB]
) -> GuideSet:
    """Target-side guide set for one frame of one layer."""
    channels = []
    for kind, weight in layer.guides:
        if kind == GuideKind.WORLD_POSITION:
            if aabb is None:
                aabb = shot_aabb(shot)
            image = world_channel(shot, frame, aabb).image
        else:
            image = load_pass(shot, kind.value, frame)
        channels.append((kind, image, weight))
    return assemble_guide_set(channels, GuideSide.TARGET)


def load_id_pass(shot: ShotConfig, frame: int) -> RasterImage:
    return load_pass(shot, "id", frame)
