"""Batch front end.

Commands take a shot TOML and write deterministic artifacts plus a manifest
(effective config, input hashes, scene box, version) beside the outputs, so
any run can be reproduced from the manifest alone. Exit codes: 0 success,
2 config, 3 I/O, 4 validation, 5 numeric.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .compositing import LayerKind, LayerStack, composite_frame, naive_multicolor_frame, transfer_layer
from .config import (
    ShotConfig,
    frame_guides,
    load_exemplar_assets,
    load_id_pass,
    parse_config,
    shot_aabb,
)
from .errors import ConfigError, StyleTxError
from .raster import EXR, PNG16, load_image, save_image
from .synthesis import synthesize
from .temporal import derive_seed, flicker_metric

COMMANDS = ("transfer", "sequence", "composite", "metrics", "demo-naive-multicolor")


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_hashes(shot: ShotConfig) -> dict[str, str]:
    hashes = {}
    for ex in shot.exemplars.values():
        for p in [ex.touch, *ex.guides.values()]:
            hashes[str(p.relative_to(shot.root))] = _hash_file(p)
    for pass_name in sorted(shot.passes):
        for frame in shot.frame_range:
            p = shot.pass_path(pass_name, frame)
            hashes[str(p.relative_to(shot.root))] = _hash_file(p)
    return hashes


def _write_manifest(shot: ShotConfig, command: str, extra: dict | None = None) -> None:
    manifest = {
        "version": __version__,
        "command": command,
        "config": shot.to_manifest(),
        "inputs": _input_hashes(shot),
    }
    aabb_file = shot.output_dir / "aabb.toml"
    if aabb_file.is_file():
        manifest["aabb"] = aabb_file.read_text()
    if extra:
        manifest.update(extra)
    shot.output_dir.mkdir(parents=True, exist_ok=True)
    with open(shot.output_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _select_layers(shot: ShotConfig, layer_name: str | None):
    if layer_name is None:
        return list(shot.layers)
    return [shot.layer(layer_name)]


def _thread_count(flag_value: int | None) -> int:
    if flag_value is not None:
        return max(1, flag_value)
    env = os.environ.get("STYLETX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"STYLETX_THREADS must be an integer, got {env!r}") from None
    return 1


def cmd_transfer(shot: ShotConfig, args) -> int:
    """One frame of one layer, no temporal guide."""
    layers = _select_layers(shot, args.layer)
    if len(layers) != 1:
        raise ConfigError("transfer needs --layer when the shot has several layers")
    layer = layers[0]
    frame = args.frame if args.frame is not None else shot.frame_start
    if frame not in shot.frame_range:
        raise ConfigError(f"frame {frame} outside shot range {shot.frame_start}..{shot.frame_end}")
    a_guides, a_style = load_exemplar_assets(shot, layer)
    aabb = shot_aabb(shot) if layer.uses_world_position else None
    b_guides = frame_guides(shot, layer, frame, aabb)
    layer_seed = layer.seed if layer.seed is not None else shot.seed
    params = replace(layer.synthesis, seed=derive_seed(layer_seed, layer.name, frame))
    result = synthesize(a_guides, a_style, b_guides, params)
    shot.output_dir.mkdir(parents=True, exist_ok=True)
    save_image(result.image, shot.output_dir / f"B_prime.{layer.name}.{frame:04d}.exr", EXR)
    _write_manifest(shot, "transfer", {"layer": layer.name, "frame": frame})
    return 0


def cmd_sequence(shot: ShotConfig, args) -> int:
    """All frames of all selected layers; layers run in parallel."""
    layers = _select_layers(shot, args.layer)
    threads = _thread_count(args.threads)
    if threads > 1 and len(layers) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(transfer_layer, shot, layer): layer for layer in layers}
            for future in concurrent.futures.as_completed(futures):
                future.result()
    else:
        for layer in layers:
            transfer_layer(shot, layer)
    merged = {}
    for layer in layers:
        metrics_path = shot.output_dir / f"metrics.{layer.name}.json"
        if metrics_path.is_file():
            merged[layer.name] = json.loads(metrics_path.read_text())
    with open(shot.output_dir / "metrics.json", "w") as fh:
        json.dump(merged, fh, indent=2, sort_keys=True)
    _write_manifest(shot, "sequence", {"layers": [l.name for l in layers]})
    return 0


def _layer_frame_path(shot: ShotConfig, layer_name: str, frame: int) -> Path:
    return shot.output_dir / f"B_prime.{layer_name}.{frame:04d}.exr"


def cmd_composite(shot: ShotConfig, args) -> int:
    """Colorize and blend existing layer outputs into final frames."""
    frames = list(shot.frame_range)
    id_passes = tuple(load_id_pass(shot, f) for f in frames)
    ordered = sorted(shot.layers, key=lambda l: 0 if l.kind == LayerKind.BASE else 1)
    stacked = []
    for layer in ordered:
        images = tuple(load_image(_layer_frame_path(shot, layer.name, f)) for f in frames)
        stacked.append((layer, images))
    stack = LayerStack(tuple(stacked), id_passes)
    for i, frame in enumerate(frames):
        final = composite_frame(stack, i, shot.palette)
        save_image(final, shot.output_dir / f"final.{frame:04d}.png", PNG16)
    _write_manifest(shot, "composite")
    return 0


def cmd_metrics(shot: ShotConfig, args) -> int:
    """Print flicker and energy metrics as JSON on stdout."""
    report = {"shot": shot.name, "layers": {}}
    for layer in shot.layers:
        entry = {}
        metrics_path = shot.output_dir / f"metrics.{layer.name}.json"
        if metrics_path.is_file():
            entry["sequence"] = json.loads(metrics_path.read_text())
        frames = []
        for frame in shot.frame_range:
            p = _layer_frame_path(shot, layer.name, frame)
            if not p.is_file():
                frames = []
                break
            frames.append(load_image(p))
        if len(frames) >= 2:
            entry["flicker"] = flicker_metric(frames)
        elif len(frames) == 1:
            entry["flicker"] = 0.0
        if entry:
            report["layers"][layer.name] = entry
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    _write_manifest(shot, "metrics")
    return 0


def cmd_demo_naive(shot: ShotConfig, args) -> int:
    """Write one frame of the rejected per-color pipeline for comparison."""
    frame = args.frame if args.frame is not None else shot.frame_start
    image = naive_multicolor_frame(shot, frame)
    shot.output_dir.mkdir(parents=True, exist_ok=True)
    save_image(image, shot.output_dir / f"naive_multicolor.{frame:04d}.png", PNG16)
    _write_manifest(shot, "demo-naive-multicolor", {"frame": frame})
    return 0


_HANDLERS = {
    "transfer": cmd_transfer,
    "sequence": cmd_sequence,
    "composite": cmd_composite,
    "metrics": cmd_metrics,
    "demo-naive-multicolor": cmd_demo_naive,
}


def dispatch(command: str, config_path, args) -> int:
    shot = parse_config(config_path)
    return _HANDLERS[command](shot, args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="styletx",
        description="guided patch-based style transfer over render passes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", required=True, help="shot TOML")
        p.add_argument("--layer", default=None, help="restrict to one layer")
        p.add_argument("--frame", type=int, default=None, help="frame number")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: STYLETX_THREADS or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args.command, args.config, args)
    except StyleTxError as exc:
        record = {
            "error": {
                "type": type(exc).__name__,
                "message": str(exc),
                "exit_code": exc.exit_code,
            }
        }
        print(json.dumps(record), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
