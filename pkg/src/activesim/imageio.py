"""PFM / PGM / PPM readers and writers.

PFM follows the de-facto layout: ``Pf`` (1 channel) or ``PF`` (3 channels),
a ``width height`` line, a scale line whose sign encodes endianness
(negative = little-endian), then float32 scanlines stored bottom-up.
We always write little-endian (scale ``-1.0``). NaN is stored verbatim and
marks invalid pixels in disparity/depth maps.

PGM (P5) and PPM (P6) are binary netpbm files; 8-bit on write, 8- or 16-bit
on read.
"""

from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def write_pfm(path, image):
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim == 2:
        header = b"Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        header = b"PF"
    else:
        raise ImageFormatError(f"PFM needs 1 or 3 channels, got shape {image.shape}")
    height, width = image.shape[:2]
    data = np.flipud(image).astype("<f4", copy=False)
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(data).tobytes())


def read_pfm(path):
    """Return a float32 array, (H, W) for ``Pf`` and (H, W, 3) for ``PF``."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ImageFormatError(f"{path}: not a PFM file (magic {magic!r})")
        dims = f.readline().split()
        while dims and dims[0].startswith(b"#"):
            dims = f.readline().split()
        if len(dims) != 2:
            raise ImageFormatError(f"{path}: malformed PFM dimension line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        data = np.frombuffer(f.read(count * 4), dtype=dtype)
    if data.size != count:
        raise ImageFormatError(f"{path}: truncated PFM payload")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def _read_token(f):
    token = b""
    while True:
        c = f.read(1)
        if not c:
            raise ImageFormatError("unexpected end of netpbm header")
        if c == b"#":
            f.readline()
            continue
        if c.isspace():
            if token:
                return token
            continue
        token += c


def read_pnm(path):
    """Read a binary PGM (P5) or PPM (P6). Returns uint8 or uint16 array."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic not in (b"P5", b"P6"):
            raise ImageFormatError(f"{path}: expected P5 or P6, got {magic!r}")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        channels = 3 if magic == b"P6" else 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        count = width * height * channels
        data = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype)
    if data.size != count:
        raise ImageFormatError(f"{path}: truncated netpbm payload")
    shape = (height, width, 3) if channels == 3 else (height, width)
    out = data.reshape(shape)
    return out.astype(np.uint16) if maxval > 255 else out.copy()


def write_pgm(path, image):
    image = np.asarray(image)
    if image.ndim != 2:
        raise ImageFormatError("PGM needs a 2-D array")
    _write_pnm(path, b"P5", image)


def write_ppm(path, image):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError("PPM needs an (H, W, 3) array")
    _write_pnm(path, b"P6", image)


def _write_pnm(path, magic, image):
    if image.dtype != np.uint8:
        image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + f"\n{width} {height}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(image).tobytes())


def read_image(path):
    """Dispatch on extension: ``.pfm`` -> float32, ``.pgm``/``.ppm`` -> integer."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix in (".pgm", ".ppm", ".pnm"):
        return read_pnm(path)
    raise ImageFormatError(f"unsupported image extension: {path}")


def write_image(path, image):
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        write_pfm(path, image)
    elif suffix == ".pgm":
        write_pgm(path, image)
    elif suffix == ".ppm":
        write_ppm(path, image)
    else:
        raise ImageFormatError(f"unsupported image extension: {path}")


def to_unit_float(image):
    """Integer netpbm data to float in [0, 1]; float data passes through."""
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image.astype(np.float32) / 255.0
    if image.dtype == np.uint16:
        return image.astype(np.float32) / 65535.0
    return image.astype(np.float32)
