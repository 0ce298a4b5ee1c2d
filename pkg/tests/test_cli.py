import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from styletx.cli import main
from styletx.raster import load_image
from styletx.synthetic import write_shot


@pytest.fixture(scope="module")
def shot(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_shot")
    config = write_shot(
        root, kind="static", size=40, n_frames=3, exemplar_size=64,
        layers=("base", "outline", "shadow"), em_iterations=2,
    )
    return root, config


def _outputs(root):
    return sorted(p.name for p in (root / "out").iterdir())


def test_sequence_then_composite_counts(shot):
    root, config = shot
    assert main(["sequence", "--config", str(config)]) == 0
    assert main(["composite", "--config", str(config)]) == 0
    finals = sorted((root / "out").glob("final.*.png"))
    assert len(finals) == 3
    first = load_image(finals[0])
    assert first.channels == 3
    assert (root / "out" / "manifest.json").is_file()
    assert (root / "out" / "aabb.toml").is_file()


def test_metrics_zero_for_duplicated_frames(shot, capsys):
    root, config = shot
    src = root / "out" / "B_prime.base.0000.exr"
    for t in (1, 2):
        shutil.copyfile(src, root / "out" / f"B_prime.base.{t:04d}.exr")
    assert main(["metrics", "--config", str(config)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["layers"]["base"]["flicker"] == 0.0


def test_rerun_bit_identical(shot):
    root, config = shot
    shutil.rmtree(root / "out", ignore_errors=True)
    main(["sequence", "--config", str(config)])
    before = {p.name: p.read_bytes() for p in (root / "out").iterdir()}
    for p in (root / "out").iterdir():
        p.unlink()
    main(["sequence", "--config", str(config)])
    after = {p.name: p.read_bytes() for p in (root / "out").iterdir()}
    assert before.keys() == after.keys()
    for name in before:
        assert before[name] == after[name], f"{name} differs between reruns"


def test_transfer_single_frame(shot):
    root, config = shot
    assert main(["transfer", "--config", str(config), "--layer", "base", "--frame", "1"]) == 0
    assert (root / "out" / "B_prime.base.0001.exr").is_file()


def test_transfer_requires_layer_when_ambiguous(shot, capsys):
    root, config = shot
    code = main(["transfer", "--config", str(config)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["exit_code"] == 2


def test_exit_code_config_error(tmp_path, capsys):
    config = tmp_path / "bad.toml"
    config.write_text("[shot]\nname = 'x'\n")
    assert main(["sequence", "--config", str(config)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "ConfigError"


def test_exit_code_io_error(tmp_path, capsys):
    config = write_shot(tmp_path, kind="static", size=32, n_frames=1,
                        exemplar_size=32, layers=("base",), em_iterations=1)
    # corrupt one pass after validation-time existence checks would pass
    (tmp_path / "passes" / "diffuse.0000.exr").write_bytes(b"garbage" * 10)
    code = main(["sequence", "--config", str(config)])
    assert code == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "CorruptDataError"


def test_exit_code_validation_error(tmp_path, capsys):
    import numpy as np

    from styletx.raster import PNG16, RasterImage, save_image

    config = write_shot(tmp_path, kind="static", size=32, n_frames=1,
                        exemplar_size=32, layers=("base",), em_iterations=1)
    # exemplar touch with mismatched dimensions passes existence checks but
    # violates the exemplar invariant at load time
    save_image(RasterImage(np.zeros((8, 8, 1), np.float32)),
               tmp_path / "exemplars" / "base" / "touch.png", PNG16)
    code = main(["sequence", "--config", str(config)])
    assert code == 4
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "ValidationError"


def test_shot_mixes_exemplars(shot):
    from styletx.config import parse_config

    root, config = shot
    parsed = parse_config(config)
    assert len({layer.exemplar for layer in parsed.layers}) == 3


def test_exit_code_numeric_error(tmp_path, capsys):
    import numpy as np

    from styletx.raster import EXR, RasterImage, save_image

    config = write_shot(tmp_path, kind="static", size=32, n_frames=1,
                        exemplar_size=32, layers=("base",), em_iterations=1)
    nan_pass = RasterImage(np.full((32, 32, 1), np.nan, np.float32))
    save_image(nan_pass, tmp_path / "passes" / "diffuse.0000.exr", EXR)
    code = main(["sequence", "--config", str(config)])
    assert code == 5
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "NumericError"


def test_threads_env_fallback(shot, monkeypatch):
    root, config = shot
    monkeypatch.setenv("STYLETX_THREADS", "2")
    assert main(["sequence", "--config", str(config), "--layer", "base"]) == 0
    monkeypatch.setenv("STYLETX_THREADS", "zebra")
    assert main(["sequence", "--config", str(config), "--layer", "base"]) == 2


def test_demo_naive_multicolor(shot):
    root, config = shot
    assert main(["demo-naive-multicolor", "--config", str(config), "--frame", "0"]) == 0
    demo = load_image(root / "out" / "naive_multicolor.0000.png")
    assert demo.channels == 3


def test_demo_generator_cli(tmp_path):
    from styletx.synthetic import main as synthetic_main

    assert synthetic_main([str(tmp_path / "d"), "--size", "32", "--frames", "2",
                           "--layers", "base"]) == 0
    from styletx.config import parse_config

    shot = parse_config(tmp_path / "d" / "shot.toml")
    assert len(list(shot.frame_range)) == 2


def test_console_entry_point(shot):
    root, config = shot
    result = subprocess.run(
        [sys.executable, "-m", "styletx.cli", "metrics", "--config", str(config)],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert json.loads(result.stdout)["shot"] == "static-demo"


def test_manifest_reproducible(shot):
    root, config = shot
    main(["sequence", "--config", str(config), "--layer", "base"])
    first = (root / "out" / "manifest.json").read_bytes()
    main(["sequence", "--config", str(config), "--layer", "base"])
    assert (root / "out" / "manifest.json").read_bytes() == first
