"""8-bit grayscale image container and PGM/PNG file IO.

PGM (P2 ASCII and P5 binary, maxval 255) is parsed by hand so that format
errors can report the byte offset at which parsing failed. PNG goes through
Pillow and must already be 8-bit grayscale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ImageFormatError, InvalidInputError

__all__ = ["Grayscale8Image", "make_image", "read_image", "write_image"]

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class Grayscale8Image:
    """Row-major 8-bit grayscale raster."""

    width: int
    height: int
    pixels: np.ndarray  # uint8, shape (width*height,)

    def pixels2d(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)


def make_image(width, height, pixels) -> Grayscale8Image:
    """Validate and build a Grayscale8Image from any integer array-like."""
    if width < 1 or height < 1:
        raise InvalidInputError(f"image dimensions must be positive, got {width}x{height}")
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        if arr.shape != (height, width):
            raise InvalidInputError(
                f"pixel array shape {arr.shape} does not match {height} rows x {width} cols"
            )
        arr = arr.reshape(-1)
    if arr.size != width * height:
        raise InvalidInputError(
            f"expected {width * height} pixels, got {arr.size}"
        )
    if arr.dtype != np.uint8:
        if np.any((arr < 0) | (arr > 255)):
            raise InvalidInputError("pixel values outside [0, 255]")
        arr = arr.astype(np.uint8)
    return Grayscale8Image(int(width), int(height), np.ascontiguousarray(arr))


class _Tokens:
    """Whitespace/comment-aware token scanner over PGM header bytes."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.last_start = 0  # offset of the most recent token

    def skip_separators(self):
        d = self.data
        while self.pos < len(d):
            c = d[self.pos]
            if c in b" \t\r\n":
                self.pos += 1
            elif c == ord("#"):
                while self.pos < len(d) and d[self.pos] not in b"\r\n":
                    self.pos += 1
            else:
                return

    def next_int(self, what: str) -> int:
        self.skip_separators()
        start = self.pos
        self.last_start = start
        d = self.data
        while self.pos < len(d) and d[self.pos : self.pos + 1].isdigit():
            self.pos += 1
        if self.pos == start:
            if start >= len(d):
                raise ImageFormatError(f"truncated file while reading {what}", start)
            raise ImageFormatError(f"expected integer for {what}", start)
        return int(d[start : self.pos])


def _read_pgm(data: bytes) -> Grayscale8Image:
    magic = data[:2]
    toks = _Tokens(data)
    toks.pos = 2
    width = toks.next_int("width")
    height = toks.next_int("height")
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad dimensions {width}x{height}", 2)
    maxval = toks.next_int("maxval")
    if maxval != 255:
        raise ImageFormatError(f"maxval must be 255, got {maxval}", toks.last_start)
    n = width * height
    if magic == b"P5":
        # exactly one separator byte between maxval and the raster
        if toks.pos >= len(data) or data[toks.pos] not in b" \t\r\n":
            raise ImageFormatError("missing separator after maxval", toks.pos)
        start = toks.pos + 1
        raster = data[start : start + n]
        if len(raster) < n:
            raise ImageFormatError(
                f"truncated raster: expected {n} bytes, got {len(raster)}", len(data)
            )
        px = np.frombuffer(raster, dtype=np.uint8)
    else:
        px = np.empty(n, dtype=np.uint8)
        for i in range(n):
            v = toks.next_int(f"pixel {i}")
            if v > 255:
                raise ImageFormatError(f"pixel value {v} exceeds 255", toks.last_start)
            px[i] = v
    return make_image(width, height, px)


def _read_png(path) -> Grayscale8Image:
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise ImageFormatError(
                    f"PNG mode {im.mode!r} unsupported, need 8-bit grayscale (mode L)", 0
                )
            arr = np.asarray(im, dtype=np.uint8)
    except ImageFormatError:
        raise
    except OSError as exc:
        raise ImageFormatError(f"unreadable PNG: {exc}", 0) from exc
    h, w = arr.shape
    return make_image(w, h, arr)


def read_image(path) -> Grayscale8Image:
    """Read an 8-bit grayscale PGM (P2/P5) or PNG file.

    The format is detected from the file's magic bytes, not its extension.

    Raises
    ------
    ImageFormatError
        On unsupported formats, maxval != 255, or truncated data; the byte
        offset of the failure is attached.
    """
    with open(path, "rb") as fh:
        head = fh.read(8)
        rest = fh.read()
    data = head + rest
    if head[:2] in (b"P2", b"P5"):
        return _read_pgm(data)
    if head == _PNG_MAGIC:
        return _read_png(path)
    raise ImageFormatError("unsupported format (need PGM P2/P5 or grayscale PNG)", 0)


def write_image(img: Grayscale8Image, path) -> None:
    """Write as binary PGM, or PNG when the path ends in .png.

    The PGM header is exactly "P5\\n<w> <h>\\n255\\n" so written files are
    byte-reproducible.
    """
    if str(path).lower().endswith(".png"):
        from PIL import Image

        im = Image.fromarray(img.pixels2d(), mode="L")
        im.save(path, format="PNG")
        return
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.pixels.tobytes())
