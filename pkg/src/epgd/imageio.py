"""Reading and writing 8-bit RGB images (PNG and binary PPM).

Images are handled as ``float64`` arrays of shape ``(height, width, 3)``
holding intensities on the ``[0, 255]`` scale.
"""

from __future__ import annotations

import io
import os
import re

import numpy as np
from PIL import Image as _PILImage

from .errors import DimensionError, ImageFormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

_PNG_COLOR_TYPES = {0: "grayscale", 2: "RGB", 3: "palette", 4: "grayscale+alpha", 6: "RGBA"}
_PPM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def as_image(pixels, *, min_side: int = 1) -> np.ndarray:
    """Validate ``pixels`` as an ``H x W x 3`` finite float image and return it as float64."""
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"expected an H x W x 3 image, got shape {img.shape}")
    if img.shape[0] < min_side or img.shape[1] < min_side:
        raise DimensionError(
            f"image of size {img.shape[0]}x{img.shape[1]} is smaller than {min_side}x{min_side}"
        )
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def to_bytes(img) -> np.ndarray:
    """Clamp to ``[0, 255]`` and round half-up to ``uint8``."""
    img = np.asarray(img, dtype=np.float64)
    return np.floor(np.clip(img, 0.0, 255.0) + 0.5).astype(np.uint8)


def _read_ppm(data: bytes, path) -> np.ndarray:
    fields = []
    pos = 0
    for _ in range(4):
        m = _PPM_TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError(f"{path}: truncated PPM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, width, height, maxval = fields
    if magic != b"P6":
        raise ImageFormatError(f"{path}: unsupported PPM magic {magic!r}; expected b'P6'")
    try:
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported bit depth (maxval {maxval}); expected maxval 255")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError(f"{path}: malformed PPM header")
    raster = data[pos + 1:]
    expected = width * height * 3
    if len(raster) < expected:
        raise ImageFormatError(f"{path}: truncated PPM raster ({len(raster)} of {expected} bytes)")
    arr = np.frombuffer(raster[:expected], dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float64)


def _read_png(data: bytes, path) -> np.ndarray:
    # IHDR is always the first chunk: length(4) type(4) width height depth colortype ...
    if len(data) < 33 or data[12:16] != b"IHDR":
        raise ImageFormatError(f"{path}: PNG without a leading IHDR chunk")
    bit_depth, color_type = data[24], data[25]
    if bit_depth != 8:
        raise ImageFormatError(f"{path}: unsupported bit depth {bit_depth}; expected 8")
    if color_type != 2:
        name = _PNG_COLOR_TYPES.get(color_type, str(color_type))
        raise ImageFormatError(f"{path}: unsupported channel layout {name}; expected RGB")
    try:
        with _PILImage.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"{path}: cannot decode PNG ({exc})") from exc
    return arr.astype(np.float64)


def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG or binary PPM (P6) file.

    Returns a ``float64`` array of shape ``(H, W, 3)`` with values in ``[0, 255]``.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if data.startswith(PNG_SIGNATURE):
        return _read_png(data, path)
    if data.startswith(b"P"):
        return _read_ppm(data, path)
    raise ImageFormatError(f"{path}: not a PNG or PPM file")


def encode_ppm(img) -> bytes:
    """Encode an image as binary PPM with the canonical ``P6\\n<w> <h>\\n255\\n`` header."""
    img = as_image(img)
    raw = to_bytes(img)
    h, w, _ = raw.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + raw.tobytes()


def encode_png(img) -> bytes:
    img = as_image(img)
    buf = io.BytesIO()
    _PILImage.fromarray(to_bytes(img)).save(buf, format="PNG")
    return buf.getvalue()


def save_image(img, path) -> None:
    """Write ``img`` to ``path``; ``.png`` selects PNG, anything else binary PPM.

    Values are clamped to ``[0, 255]`` and rounded half-up to 8 bits.
    """
    ext = os.path.splitext(str(path))[1].lower()
    payload = encode_png(img) if ext == ".png" else encode_ppm(img)
    with open(path, "wb") as fh:
        fh.write(payload)


__all__ = ["as_image", "encode_png", "encode_ppm", "load_image", "save_image", "to_bytes"]
