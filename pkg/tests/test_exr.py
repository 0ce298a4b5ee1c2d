import struct

import numpy as np
import pytest

from styletx.errors import CorruptDataError, UnsupportedFormatError
from styletx.exr import read_exr, write_exr


@pytest.mark.parametrize("channels", [1, 2, 3, 4])
@pytest.mark.parametrize("compression", ["none", "zip", "zips"])
def test_round_trip(tmp_path, channels, compression):
    rng = np.random.RandomState(channels)
    img = (rng.rand(21, 13, channels) * 6 - 3).astype(np.float32)
    path = tmp_path / f"rt_{channels}_{compression}.exr"
    write_exr(path, img, compression)
    back = read_exr(path)
    assert back.shape == img.shape
    assert (back == img).all()


def test_round_trip_tall_image_multiple_zip_chunks(tmp_path):
    img = np.random.RandomState(0).rand(40, 5, 3).astype(np.float32)
    path = tmp_path / "tall.exr"
    write_exr(path, img, "zip")
    assert (read_exr(path) == img).all()


def test_special_values_survive(tmp_path):
    img = np.array([[[0.0, -0.0, 1e-20], [3e8, -7.25, 1.5]]], np.float32)
    path = tmp_path / "s.exr"
    write_exr(path, img)
    assert (read_exr(path) == img).all()


def _attr(name, attr_type, payload):
    return name.encode() + b"\x00" + attr_type.encode() + b"\x00" + struct.pack("<i", len(payload)) + payload


def test_reads_half_pixels(tmp_path):
    # hand-built single-channel HALF file, one scanline chunk
    width, height = 3, 2
    values = np.array([[0.5, 1.25, -2.0], [0.0, 3.5, 0.125]], np.float16)
    chlist = b"Y\x00" + struct.pack("<i", 1) + b"\x00\x00\x00\x00" + struct.pack("<ii", 1, 1) + b"\x00"
    box = struct.pack("<4i", 0, 0, width - 1, height - 1)
    header = struct.pack("<ii", 20000630, 2)
    header += _attr("channels", "chlist", chlist)
    header += _attr("compression", "compression", b"\x00")
    header += _attr("dataWindow", "box2i", box)
    header += _attr("displayWindow", "box2i", box)
    header += _attr("lineOrder", "lineOrder", b"\x00")
    header += _attr("pixelAspectRatio", "float", struct.pack("<f", 1.0))
    header += _attr("screenWindowCenter", "v2f", struct.pack("<2f", 0, 0))
    header += _attr("screenWindowWidth", "float", struct.pack("<f", 1.0))
    header += b"\x00"
    chunks = []
    for y in range(height):
        raw = values[y].tobytes()
        chunks.append(struct.pack("<ii", y, len(raw)) + raw)
    offset = len(header) + 8 * height
    table = b""
    for chunk in chunks:
        table += struct.pack("<Q", offset)
        offset += len(chunk)
    path = tmp_path / "half.exr"
    path.write_bytes(header + table + b"".join(chunks))
    img = read_exr(path)
    assert img.shape == (2, 3, 1)
    assert (img[:, :, 0] == values.astype(np.float32)).all()


def test_decreasing_line_order(tmp_path):
    # same chunks, stored bottom-up with the lineOrder flag set
    img = np.arange(12, dtype=np.float32).reshape(4, 3, 1)
    good = tmp_path / "inc.exr"
    write_exr(good, img)
    data = bytearray(good.read_bytes())
    marker = b"lineOrder\x00lineOrder\x00"
    idx = data.find(marker) + len(marker) + 4
    data[idx] = 1
    dec = tmp_path / "dec.exr"
    dec.write_bytes(bytes(data))
    assert (read_exr(dec) == img).all()


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.exr"
    path.write_bytes(b"\x00" * 32)
    with pytest.raises(CorruptDataError):
        read_exr(path)


def test_rejects_truncated_file(tmp_path):
    good = tmp_path / "good.exr"
    write_exr(good, np.zeros((4, 4, 1), np.float32))
    bad = tmp_path / "trunc.exr"
    bad.write_bytes(good.read_bytes()[:-20])
    with pytest.raises(CorruptDataError):
        read_exr(bad)


def test_rejects_unsupported_compression(tmp_path):
    good = tmp_path / "good.exr"
    write_exr(good, np.zeros((4, 4, 1), np.float32))
    data = bytearray(good.read_bytes())
    marker = b"compression\x00compression\x00"
    idx = data.find(marker) + len(marker) + 4
    data[idx] = 4  # PIZ
    bad = tmp_path / "piz.exr"
    bad.write_bytes(bytes(data))
    with pytest.raises(UnsupportedFormatError):
        read_exr(bad)


def test_rejects_tiled_flag(tmp_path):
    good = tmp_path / "good.exr"
    write_exr(good, np.zeros((4, 4, 1), np.float32))
    data = bytearray(good.read_bytes())
    version = struct.unpack("<i", data[4:8])[0] | 0x200
    data[4:8] = struct.pack("<i", version)
    bad = tmp_path / "tiled.exr"
    bad.write_bytes(bytes(data))
    with pytest.raises(UnsupportedFormatError):
        read_exr(bad)
