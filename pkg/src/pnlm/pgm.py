"""Reading and writing 8-bit PGM (P2 ASCII / P5 binary) files."""

import numpy as np

from .image import as_image


class PGMError(ValueError):
    pass


class PGMHeaderError(PGMError):
    pass


class PGMMaxvalError(PGMError):
    pass


class PGMTruncatedError(PGMError):
    pass


def _header_tokens(data):
    """Yield (token, end_position) for the magic, width, height and maxval."""
    pos = 0
    n = len(data)
    tokens = []
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise PGMHeaderError("unexpected end of file inside the header")
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pgm(data):
    """Decode PGM bytes into a float64 image."""
    if len(data) < 2 or data[:2] not in (b"P2", b"P5"):
        raise PGMHeaderError("not a P2/P5 PGM file (bad magic number)")
    tokens, pos = _header_tokens(data)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise PGMHeaderError(f"bad magic number {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PGMHeaderError(f"non-integer header field in {tokens[1:]!r}") from None
    if width < 1 or height < 1:
        raise PGMHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise PGMMaxvalError(f"only maxval 255 is supported, got {maxval}")
    count = width * height

    if magic == b"P5":
        # exactly one whitespace byte separates maxval from the raster
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise PGMTruncatedError("missing raster data")
        raster = data[pos + 1 : pos + 1 + count]
        if len(raster) < count:
            raise PGMTruncatedError(f"expected {count} samples, found {len(raster)}")
        values = np.frombuffer(raster, dtype=np.uint8)
    else:
        body = data[pos:]
        lines = [ln.split(b"#", 1)[0] for ln in body.splitlines()]
        fields = b" ".join(lines).split()
        if len(fields) < count:
            raise PGMTruncatedError(f"expected {count} samples, found {len(fields)}")
        try:
            values = np.array([int(f) for f in fields[:count]], dtype=np.int64)
        except ValueError:
            raise PGMHeaderError("non-integer sample in ASCII raster") from None
        if values.min() < 0 or values.max() > maxval:
            raise PGMError("sample value outside [0, maxval]")
    return values.astype(np.float64).reshape(height, width)


def load_pgm(path):
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def quantize(img):
    """Clamp to [0, 255] and round half away from zero to uint8."""
    img = as_image(img)
    clamped = np.clip(img, 0.0, 255.0)
    return np.floor(clamped + 0.5).astype(np.uint8)


def encode_pgm(img, binary=True):
    q = quantize(img)
    height, width = q.shape
    if binary:
        return f"P5\n{width} {height}\n255\n".encode("ascii") + q.tobytes()
    rows = [" ".join(str(v) for v in row) for row in q]
    return (f"P2\n{width} {height}\n255\n" + "\n".join(rows) + "\n").encode("ascii")


def save_pgm(img, path, binary=True):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img, binary))
