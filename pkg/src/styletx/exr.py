"""Minimal OpenEXR scanline codec.

Covers exactly what the pipeline needs from render passes and its own
intermediates: single-part scanline images, 1 to 4 channels, HALF or FLOAT
pixels, NONE / ZIP / ZIPS compression. Tiled, deep, and multi-part files are
rejected. Written files always use FLOAT pixels so save/load round trips are
lossless for float32 data.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CorruptDataError, UnsupportedFormatError

_MAGIC = 20000630
_PIXEL_UINT = 0
_PIXEL_HALF = 1
_PIXEL_FLOAT = 2

_COMPRESSION_NONE = 0
_COMPRESSION_RLE = 1
_COMPRESSION_ZIPS = 2
_COMPRESSION_ZIP = 3

# scanlines per chunk
_LINES_PER_CHUNK = {_COMPRESSION_NONE: 1, _COMPRESSION_ZIPS: 1, _COMPRESSION_ZIP: 16}

# canonical channel naming for 1..4 channel images
_CHANNEL_NAMES = {1: ["Y"], 2: ["Y", "A"], 3: ["R", "G", "B"], 4: ["R", "G", "B", "A"]}


def _corrupt(path, msg: str) -> CorruptDataError:
    return CorruptDataError(f"corrupt EXR file {path}: {msg}")


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise _corrupt(self.path, "unexpected end of file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def cstring(self, limit: int = 256) -> str:
        end = self.data.find(b"\x00", self.pos, self.pos + limit)
        if end < 0:
            raise _corrupt(self.path, "unterminated string")
        out = self.data[self.pos : end]
        self.pos = end + 1
        return out.decode("ascii", errors="replace")

    def int32(self) -> int:
        return struct.unpack("<i", self.take(4))[0]


def _parse_chlist(raw: bytes, path) -> list[tuple[str, int]]:
    """Return [(name, pixel_type), ...] in file (alphabetical) order."""
    rd = _Reader(raw, path)
    channels = []
    while True:
        if rd.pos >= len(raw):
            raise _corrupt(path, "channel list not terminated")
        if raw[rd.pos] == 0:
            break
        name = rd.cstring()
        pixel_type = rd.int32()
        rd.take(4)  # pLinear + reserved
        x_sampling = rd.int32()
        y_sampling = rd.int32()
        if x_sampling != 1 or y_sampling != 1:
            raise UnsupportedFormatError(
                f"unsupported EXR file {path}: subsampled channel {name!r}"
            )
        channels.append((name, pixel_type))
    return channels


def _zip_decompress(raw: bytes, expected: int, path) -> bytes:
    # If the data did not shrink, the writer stored it raw.
    if len(raw) == expected:
        return raw
    try:
        buf = np.frombuffer(zlib.decompress(raw), dtype=np.uint8)
    except zlib.error as exc:
        raise _corrupt(path, f"zlib failure: {exc}") from exc
    if len(buf) != expected:
        raise _corrupt(path, "decompressed chunk has wrong size")
    # undo delta predictor, then re-interleave the two halves
    restored = np.cumsum(buf.astype(np.int64) - 128, dtype=np.int64) + 128
    restored = (restored % 256).astype(np.uint8)
    restored[0] = buf[0]
    half = (expected + 1) // 2
    out = np.empty(expected, dtype=np.uint8)
    out[0::2] = restored[:half]
    out[1::2] = restored[half:]
    return out.tobytes()


def _zip_compress(raw: bytes) -> bytes:
    buf = np.frombuffer(raw, dtype=np.uint8)
    half = (len(buf) + 1) // 2
    split = np.empty(len(buf), dtype=np.uint8)
    split[:half] = buf[0::2]
    split[half:] = buf[1::2]
    delta = np.empty(len(buf), dtype=np.uint8)
    delta[0] = split[0]
    delta[1:] = (split[1:].astype(np.int16) - split[:-1].astype(np.int16) + 128).astype(
        np.uint8
    )
    packed = zlib.compress(delta.tobytes(), 6)
    return packed if len(packed) < len(raw) else raw


def _order_channels(names: list[str], path) -> list[str]:
    """Map stored channel names to output plane order."""
    name_set = set(names)
    if len(name_set) != len(names):
        raise _corrupt(path, "duplicate channel names")
    for want in _CHANNEL_NAMES.values():
        if name_set == set(want):
            return list(want)
    if len(names) > 4:
        raise UnsupportedFormatError(
            f"unsupported EXR file {path}: {len(names)} channels (max 4)"
        )
    return sorted(names)


def read_exr(path) -> np.ndarray:
    """Read a scanline EXR into a float32 array of shape (height, width, channels)."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 8 or struct.unpack("<i", data[:4])[0] != _MAGIC:
        raise _corrupt(path, "bad magic number")
    version = struct.unpack("<i", data[4:8])[0]
    if version & 0xFF not in (1, 2):
        raise _corrupt(path, f"unknown version {version & 0xFF}")
    if version & 0x200:
        raise UnsupportedFormatError(f"unsupported EXR file {path}: tiled image")
    if version & 0x1800:
        raise UnsupportedFormatError(f"unsupported EXR file {path}: deep or multi-part")

    rd = _Reader(data, path)
    rd.pos = 8
    channels = None
    compression = None
    data_window = None
    line_order = 0
    while True:
        if rd.pos >= len(data):
            raise _corrupt(path, "header not terminated")
        if data[rd.pos] == 0:
            rd.pos += 1
            break
        name = rd.cstring()
        attr_type = rd.cstring()
        size = rd.int32()
        payload = rd.take(size)
        if name == "channels" and attr_type == "chlist":
            channels = _parse_chlist(payload, path)
        elif name == "compression" and attr_type == "compression":
            compression = payload[0]
        elif name == "dataWindow" and attr_type == "box2i":
            data_window = struct.unpack("<4i", payload)
        elif name == "lineOrder" and attr_type == "lineOrder":
            line_order = payload[0]

    if channels is None or compression is None or data_window is None:
        raise _corrupt(path, "missing required header attribute")
    if compression not in _LINES_PER_CHUNK:
        raise UnsupportedFormatError(
            f"unsupported EXR file {path}: compression code {compression}"
        )
    if line_order not in (0, 1):
        raise UnsupportedFormatError(f"unsupported EXR file {path}: random line order")

    x_min, y_min, x_max, y_max = data_window
    width = x_max - x_min + 1
    height = y_max - y_min + 1
    if width < 1 or height < 1:
        raise _corrupt(path, "empty data window")

    types = dict(channels)
    for name, pixel_type in channels:
        if pixel_type not in (_PIXEL_HALF, _PIXEL_FLOAT):
            raise UnsupportedFormatError(
                f"unsupported EXR file {path}: channel {name!r} is not HALF/FLOAT"
            )
    file_order = [name for name, _ in channels]
    out_order = _order_channels(file_order, path)

    lines_per_chunk = _LINES_PER_CHUNK[compression]
    n_chunks = (height + lines_per_chunk - 1) // lines_per_chunk
    offsets = struct.unpack(f"<{n_chunks}Q", rd.take(8 * n_chunks))

    bpp = {name: (2 if types[name] == _PIXEL_HALF else 4) for name in file_order}
    line_bytes = sum(width * bpp[name] for name in file_order)

    planes = {name: np.empty((height, width), dtype=np.float32) for name in file_order}
    for offset in offsets:
        rd.pos = int(offset)
        chunk_y = rd.int32()
        chunk_size = rd.int32()
        row0 = chunk_y - y_min
        n_lines = min(lines_per_chunk, height - row0)
        if row0 < 0 or row0 >= height or n_lines < 1:
            raise _corrupt(path, f"chunk y {chunk_y} outside data window")
        raw = rd.take(chunk_size)
        if compression in (_COMPRESSION_ZIP, _COMPRESSION_ZIPS):
            raw = _zip_decompress(raw, line_bytes * n_lines, path)
        elif len(raw) != line_bytes * n_lines:
            raise _corrupt(path, "chunk size mismatch")
        pos = 0
        for line in range(n_lines):
            for name in file_order:
                n = width * bpp[name]
                dtype = "<f2" if types[name] == _PIXEL_HALF else "<f4"
                row = np.frombuffer(raw[pos : pos + n], dtype=dtype)
                planes[name][row0 + line] = row.astype(np.float32)
                pos += n

    # chunks carry absolute y coordinates, so decreasing line order only
    # changes their file position, not the reconstruction
    img = np.stack([planes[name] for name in out_order], axis=2)
    return np.ascontiguousarray(img)


def write_exr(path, img: np.ndarray, compression: str = "none") -> None:
    """Write a float32 (height, width, channels) array as a scanline EXR."""
    path = Path(path)
    if img.ndim != 3 or img.shape[2] not in _CHANNEL_NAMES:
        raise UnsupportedFormatError(
            f"cannot write EXR {path}: need (h, w, 1..4) array, got {img.shape}"
        )
    comp_code = {"none": _COMPRESSION_NONE, "zip": _COMPRESSION_ZIP, "zips": _COMPRESSION_ZIPS}.get(
        compression
    )
    if comp_code is None:
        raise ValueError(f"unknown EXR compression {compression!r}")
    img = np.ascontiguousarray(img, dtype=np.float32)
    height, width, n_ch = img.shape
    names = _CHANNEL_NAMES[n_ch]
    file_order = sorted(range(n_ch), key=lambda i: names[i])

    chlist = b""
    for i in file_order:
        chlist += names[i].encode("ascii") + b"\x00"
        chlist += struct.pack("<i", _PIXEL_FLOAT) + b"\x00\x00\x00\x00"
        chlist += struct.pack("<ii", 1, 1)
    chlist += b"\x00"

    def attr(name: str, attr_type: str, payload: bytes) -> bytes:
        return (
            name.encode("ascii") + b"\x00" + attr_type.encode("ascii") + b"\x00"
            + struct.pack("<i", len(payload)) + payload
        )

    box = struct.pack("<4i", 0, 0, width - 1, height - 1)
    header = struct.pack("<ii", _MAGIC, 2)
    header += attr("channels", "chlist", chlist)
    header += attr("compression", "compression", bytes([comp_code]))
    header += attr("dataWindow", "box2i", box)
    header += attr("displayWindow", "box2i", box)
    header += attr("lineOrder", "lineOrder", b"\x00")
    header += attr("pixelAspectRatio", "float", struct.pack("<f", 1.0))
    header += attr("screenWindowCenter", "v2f", struct.pack("<2f", 0.0, 0.0))
    header += attr("screenWindowWidth", "float", struct.pack("<f", 1.0))
    header += b"\x00"

    lines_per_chunk = _LINES_PER_CHUNK[comp_code]
    n_chunks = (height + lines_per_chunk - 1) // lines_per_chunk
    chunks = []
    for c in range(n_chunks):
        row0 = c * lines_per_chunk
        n_lines = min(lines_per_chunk, height - row0)
        parts = []
        for line in range(n_lines):
            for i in file_order:
                parts.append(img[row0 + line, :, i].tobytes())
        raw = b"".join(parts)
        if comp_code in (_COMPRESSION_ZIP, _COMPRESSION_ZIPS):
            raw = _zip_compress(raw)
        chunks.append(struct.pack("<ii", row0, len(raw)) + raw)

    offset = len(header) + 8 * n_chunks
    table = []
    for chunk in chunks:
        table.append(struct.pack("<Q", offset))
        offset += len(chunk)

    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"".join(table))
        fh.write(b"".join(chunks))
