"""File formats: MAT1 text matrices, PGM images, key=value configs, CSV.

MAT1 is a plain-text matrix container: a header line ``MAT1 <rows>
<cols>`` followed by rows*cols whitespace-separated decimal reals in
row-major order, written with 17 significant digits so float64 values
round-trip exactly. PGM covers both ASCII (P2) and binary (P5) variants
with maxval up to 65535. Config files are ``key = value`` lines with
``#`` comments.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError
from .model import as_matrix


def write_matrix(path, m: np.ndarray) -> None:
    """Write a matrix in the MAT1 text format (17 significant digits)."""
    m = as_matrix(m, "matrix")
    rows, cols = m.shape
    lines = [f"MAT1 {rows} {cols}"]
    for r in range(rows):
        lines.append(" ".join(f"{v:.17g}" for v in m[r]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    """Read a MAT1 matrix; raises :class:`ParseError` with line numbers."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    header = lines[0].split()
    if len(header) != 3 or header[0] != "MAT1":
        raise ParseError("expected header 'MAT1 <rows> <cols>'", line=1)
    try:
        rows, cols = int(header[1]), int(header[2])
    except ValueError:
        raise ParseError("rows and cols must be integers", line=1) from None
    if rows < 1 or cols < 1:
        raise ParseError("rows and cols must be positive", line=1)
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise ParseError(f"bad number {tok!r}", line=lineno) from None
    if len(values) != rows * cols:
        raise DimensionMismatch(
            f"expected {rows * cols} values, found {len(values)}"
        )
    m = np.array(values).reshape(rows, cols)
    if not np.all(np.isfinite(m)):
        raise ParseError("matrix contains non-finite values")
    return m


def write_pgm(path, image: np.ndarray, maxval: int = 255, binary: bool = True) -> None:
    """Write an integer grayscale image as P5 (binary) or P2 (ASCII).

    Values must already lie in [0, maxval]; maxval up to 65535 (two
    bytes per pixel, big-endian, in the binary variant).
    """
    image = as_matrix(image, "image")
    if not 1 <= maxval <= 65535:
        raise ValueError("maxval must be in [1, 65535]")
    pixels = np.rint(image).astype(np.int64)
    if pixels.min() < 0 or pixels.max() > maxval:
        raise ValueError("image values outside [0, maxval]")
    rows, cols = image.shape
    header = f"{'P5' if binary else 'P2'}\n{cols} {rows}\n{maxval}\n"
    path = Path(path)
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        path.write_bytes(header.encode("ascii") + pixels.astype(dtype).tobytes())
    else:
        body = "\n".join(" ".join(str(v) for v in row) for row in pixels)
        path.write_text(header + body + "\n")


def _pgm_tokens(data: bytes):
    """Header tokens with '#' comments stripped; yields (token, offset_after)."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c in b" \t\r\n":
            i += 1
        elif c == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
        else:
            j = i
            while j < n and data[j : j + 1] not in b" \t\r\n":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a P2 or P5 image; returns (float matrix, maxval), values unscaled."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
    except StopIteration:
        raise ParseError("empty file", line=1) from None
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"unsupported magic {magic!r}", line=1)
    try:
        cols = int(next(tokens)[0])
        rows = int(next(tokens)[0])
        maxval_tok, offset = next(tokens)
        maxval = int(maxval_tok)
    except (StopIteration, ValueError):
        raise ParseError("malformed dimensions/maxval header") from None
    if rows < 1 or cols < 1:
        raise ParseError("image dimensions must be positive")
    if not 1 <= maxval <= 65535:
        raise ParseError("maxval must be in [1, 65535]")
    if magic == b"P5":
        start = offset + 1  # single whitespace byte after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        npix = rows * cols
        itemsize = 2 if maxval > 255 else 1
        if len(data) - start < npix * itemsize:
            raise DimensionMismatch("truncated pixel data")
        raw = np.frombuffer(data, dtype=dtype, count=npix, offset=start)
        img = raw.astype(float).reshape(rows, cols)
    else:
        vals = []
        for tok, _ in tokens:
            try:
                vals.append(int(tok))
            except ValueError:
                raise ParseError(f"bad pixel value {tok!r}") from None
        if len(vals) != rows * cols:
            raise DimensionMismatch(
                f"expected {rows * cols} pixels, found {len(vals)}"
            )
        img = np.array(vals, dtype=float).reshape(rows, cols)
    if img.max(initial=0) > maxval:
        raise ParseError("pixel value exceeds maxval")
    return img, maxval


def read_config(path) -> dict[str, str]:
    """Parse a ``key = value`` file with ``#`` comments into raw strings."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", line=lineno)
        key, value = stripped.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ParseError("empty key", line=lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        out[key] = value
    return out


_BOOL_NAMES = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(key, value, kind):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            return _BOOL_NAMES[value.lower()]
        if kind == "str":
            return value
        if kind == "int_list":
            return [int(v) for v in value.split(",") if v.strip() != ""]
        if kind == "float_list":
            return [float(v) for v in value.split(",") if v.strip() != ""]
    except (ValueError, KeyError):
        raise ParseError(f"key {key!r}: cannot parse {value!r} as {kind}") from None
    raise ValueError(f"unknown kind {kind!r}")


def apply_schema(raw: dict[str, str], schema: dict[str, tuple]) -> dict:
    """Validate raw config values against ``{key: (kind, default)}``.

    A default of ``None`` marks the key as required. Unknown keys are
    rejected, naming the offending key.
    """
    for key in raw:
        if key not in schema:
            raise ParseError(f"unknown key {key!r}")
    out = {}
    for key, (kind, default) in schema.items():
        if key in raw:
            out[key] = _convert(key, raw[key], kind)
        elif default is None:
            raise ParseError(f"missing required key {key!r}")
        else:
            out[key] = default
    return out


def config_hash(values: dict) -> str:
    """Short stable hash of a config mapping, for output metadata."""
    canon = "\n".join(f"{k}={values[k]!r}" for k in sorted(values))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def write_csv(path, header: list[str], rows: list, meta: dict) -> None:
    """CSV with one leading metadata comment line and a header row.

    Floats are written with 17 significant digits so outputs are
    byte-stable across runs.
    """

    def fmt(v):
        if isinstance(v, float):
            return f"{v:.17g}"
        return str(v)

    lines = ["# " + " ".join(f"{k}={fmt(v)}" for k, v in meta.items())]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
