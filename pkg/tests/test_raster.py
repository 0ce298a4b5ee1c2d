import numpy as np
import pytest

from styletx.errors import (
    CorruptDataError,
    InputOutputError,
    MissingFileError,
    UnsupportedFormatError,
    ValidationError,
)
from styletx.raster import (
    EXR,
    PNG8,
    PNG16,
    RasterImage,
    build_pyramid,
    load_image,
    pyramid_depth,
    save_image,
)


def test_raster_invariants():
    img = RasterImage(np.zeros((3, 4, 2), np.float32))
    assert (img.width, img.height, img.channels) == (4, 3, 2)
    assert img.data.flags.writeable is False
    with pytest.raises(ValidationError):
        RasterImage(np.zeros((2, 2, 5), np.float32))
    with pytest.raises(ValidationError):
        RasterImage(np.zeros((0, 2, 1), np.float32))


def test_png8_white_maps_to_one(tmp_path):
    path = tmp_path / "w.png"
    save_image(RasterImage(np.ones((2, 2, 3), np.float32)), path, PNG8)
    img = load_image(path)
    assert img.channels == 3
    assert (img.data == 1.0).all()


def test_png8_zero_grayscale(tmp_path):
    path = tmp_path / "z.png"
    save_image(RasterImage(np.zeros((1, 1, 1), np.float32)), path, PNG8)
    img = load_image(path)
    assert img.channels == 1 and img.data[0, 0, 0] == 0.0


def test_png16_round_trip_error_bound(tmp_path):
    rng = np.random.RandomState(3)
    for channels in (1, 3, 4):
        img = RasterImage(rng.rand(9, 7, channels).astype(np.float32))
        path = tmp_path / f"r{channels}.png"
        save_image(img, path, PNG16)
        back = load_image(path)
        assert back.channels == channels
        assert np.abs(back.data - img.data).max() <= 1.0 / 65535 + 1e-9


def test_png8_quantization_round_half_up(tmp_path):
    import cv2

    path = tmp_path / "q.png"
    save_image(RasterImage(np.full((1, 1, 1), 0.5, np.float32)), path, PNG8)
    assert cv2.imread(str(path), cv2.IMREAD_UNCHANGED)[0, 0] == 128


def test_png8_clamps_above_one(tmp_path):
    import cv2

    path = tmp_path / "c.png"
    save_image(RasterImage(np.full((1, 1, 1), 1.2, np.float32)), path, PNG8)
    assert cv2.imread(str(path), cv2.IMREAD_UNCHANGED)[0, 0] == 255


def test_exr_preserves_out_of_range(tmp_path):
    path = tmp_path / "f.exr"
    save_image(RasterImage(np.full((2, 3, 1), 1.2, np.float32)), path, EXR)
    back = load_image(path)
    assert (back.data == np.float32(1.2)).all()


def test_exr_round_trip_random(tmp_path):
    rng = np.random.RandomState(11)
    img = RasterImage((rng.rand(5, 6, 3) * 4 - 2).astype(np.float32))
    path = tmp_path / "r.exr"
    save_image(img, path, EXR)
    assert (load_image(path).data == img.data).all()


def test_load_errors(tmp_path):
    with pytest.raises(MissingFileError):
        load_image(tmp_path / "absent.png")
    bad = tmp_path / "bad.jpg"
    bad.write_bytes(b"xx")
    with pytest.raises(UnsupportedFormatError):
        load_image(bad)
    corrupt = tmp_path / "corrupt.png"
    corrupt.write_bytes(b"not a png at all")
    with pytest.raises(CorruptDataError):
        load_image(corrupt)


def test_save_errors(tmp_path):
    img = RasterImage(np.zeros((2, 2, 2), np.float32))
    with pytest.raises(UnsupportedFormatError):
        save_image(img, tmp_path / "two.png", PNG8)
    with pytest.raises(InputOutputError):
        save_image(img, tmp_path / "no" / "dir.exr", EXR)


def test_pyramid_constant_preserved():
    pyr = build_pyramid(RasterImage(np.full((4, 4, 1), 0.3, np.float32)), 3, 1)
    assert len(pyr) == 3
    for level in pyr.levels:
        assert np.allclose(level.data, 0.3)


def test_pyramid_two_by_two_mean():
    img = RasterImage(np.array([[0.0, 1.0], [1.0, 0.0]], np.float32))
    pyr = build_pyramid(img, 2, 1)
    assert pyr[1].data.shape == (1, 1, 1)
    assert pyr[1].data[0, 0, 0] == 0.5


def test_pyramid_min_size_stop():
    img = RasterImage(np.random.RandomState(0).rand(64, 64, 1).astype(np.float32))
    pyr = build_pyramid(img, 10, 32)
    assert len(pyr) == 2
    assert (pyr[1].width, pyr[1].height) == (32, 32)


def test_pyramid_ceil_dimensions():
    rng = np.random.RandomState(4)
    for w, h in [(13, 7), (33, 64), (5, 5)]:
        pyr = build_pyramid(RasterImage(rng.rand(h, w, 1).astype(np.float32)), 4, 1)
        for level, img in enumerate(pyr.levels):
            assert img.width == -(-w // (2**level))
            assert img.height == -(-h // (2**level))
    assert pyramid_depth(64, 64, 32) == 2


def test_constructor_does_not_freeze_caller_array():
    arr = np.zeros((3, 3, 1), np.float32)
    img = RasterImage(arr)
    arr[0, 0, 0] = 1.0  # caller's buffer stays writable
    assert img.data[0, 0, 0] == 0.0


def test_operations_do_not_mutate_inputs(tmp_path):
    data = np.random.RandomState(1).rand(8, 8, 3).astype(np.float32)
    img = RasterImage(data.copy())
    build_pyramid(img, 3, 1)
    save_image(img, tmp_path / "p.png", PNG16)
    save_image(img, tmp_path / "p.exr", EXR)
    assert (img.data == data).all()
