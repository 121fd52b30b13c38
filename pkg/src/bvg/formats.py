"""Reading and writing images.

Two formats are supported:

* binary PGM (P5), 8 or 16 bit, mapped affinely between pixel codes and the
  value range [0, 1];
* the package's own raw-float sidecar format (extension ``.bvgf``) which
  preserves float64 values and the grid metadata exactly.

The sidecar layout is: magic bytes ``BVGF``, then little-endian u32 width,
u32 height, f64 spacing, f64 origin x, f64 origin y, followed by
width*height float64 values in row-major order.

All writes go through a temporary file in the target directory followed by
an atomic rename.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .grid import GridError, Image

__all__ = [
    "FormatError",
    "read_pgm",
    "write_pgm",
    "read_bvgf",
    "write_bvgf",
    "read_image",
    "write_image",
    "atomic_write_bytes",
]

_BVGF_MAGIC = b"BVGF"
_BVGF_HEADER = struct.Struct("<4sIIddd")


class FormatError(ValueError):
    """Malformed or unsupported image file."""


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write bytes to path via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Parse `count` whitespace/comment separated integers after the magic."""
    tokens: list[int] = []
    pos = 2  # after "P5"
    current = b""
    while len(tokens) < count:
        if pos >= len(data):
            raise FormatError("truncated PGM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            if current:
                tokens.append(int(current))
                current = b""
        elif ch.isdigit():
            current += ch
        else:
            raise FormatError(f"unexpected byte {ch!r} in PGM header")
        pos += 1
    return tokens, pos


def read_pgm(
    path: str | os.PathLike,
    spacing: float = 1.0,
    origin: tuple[float, float] = (0.0, 0.0),
    raw: bool = False,
) -> Image:
    """Read a binary (P5) PGM file.

    Values are mapped to [0, 1] by dividing by the declared maxval, unless
    ``raw`` is true in which case the integer codes are kept.  PGM carries
    no physical metadata, so spacing and origin must be supplied by the
    caller (a ``.bvgf`` sidecar is the lossless alternative).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (P5) file")
    (width, height, maxval), pos = _read_pgm_tokens(data, 3)
    if width < 1 or height < 1:
        raise FormatError(f"bad PGM dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise FormatError(f"bad PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    body = data[pos:pos + need]
    if len(body) < need:
        raise FormatError("truncated PGM pixel data")
    values = np.frombuffer(body, dtype=dtype).reshape(height, width).astype(np.float64)
    if not raw:
        values = values / float(maxval)
    return Image(values, spacing, origin)


def write_pgm(path: str | os.PathLike, image: Image, bits: int = 8) -> None:
    """Write an image as binary PGM, mapping [0, 1] onto the code range.

    Values outside [0, 1] are clipped.  Use 16 bits when quantization at
    1/255 matters.
    """
    if bits not in (8, 16):
        raise FormatError(f"bits must be 8 or 16, got {bits}")
    maxval = 255 if bits == 8 else 65535
    codes = np.rint(np.clip(image.values, 0.0, 1.0) * maxval)
    codes = codes.astype("u1" if bits == 8 else ">u2")
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(path, header + codes.tobytes())


def read_bvgf(path: str | os.PathLike) -> Image:
    """Read the raw-float sidecar format (exact values and grid metadata)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _BVGF_HEADER.size:
        raise FormatError("truncated bvgf header")
    magic, width, height, spacing, x0, y0 = _BVGF_HEADER.unpack_from(data)
    if magic != _BVGF_MAGIC:
        raise FormatError("bad bvgf magic")
    need = width * height * 8
    body = data[_BVGF_HEADER.size:_BVGF_HEADER.size + need]
    if len(body) < need:
        raise FormatError("truncated bvgf pixel data")
    values = np.frombuffer(body, dtype="<f8").reshape(height, width)
    try:
        return Image(values, spacing, (x0, y0))
    except GridError as exc:
        raise FormatError(f"invalid bvgf contents: {exc}") from exc


def write_bvgf(path: str | os.PathLike, image: Image) -> None:
    """Write the raw-float sidecar format; round-trips bit for bit."""
    header = _BVGF_HEADER.pack(
        _BVGF_MAGIC,
        image.width,
        image.height,
        image.spacing,
        image.origin[0],
        image.origin[1],
    )
    body = np.ascontiguousarray(image.values, dtype="<f8").tobytes()
    atomic_write_bytes(path, header + body)


def read_image(path: str | os.PathLike, **pgm_kwargs) -> Image:
    """Dispatch on extension: .bvgf is exact, anything else is read as PGM."""
    if os.fspath(path).lower().endswith(".bvgf"):
        return read_bvgf(path)
    return read_pgm(path, **pgm_kwargs)


def write_image(path: str | os.PathLike, image: Image, bits: int = 8) -> None:
    if os.fspath(path).lower().endswith(".bvgf"):
        write_bvgf(path, image)
    else:
        write_pgm(path, image, bits=bits)
