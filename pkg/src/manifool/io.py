"""On-disk formats: MFTN tensors, binary PGM/PPM images, flat config, CSV.

Tensor format: magic ``MFTN``, u32 version (1), u32 rank, rank u32 dims,
then the payload as little-endian 32-bit floats in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError

_MAGIC = b"MFTN"
_VERSION = 1


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = _MAGIC + struct.pack("<II", _VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    version, rank = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported tensor version {version}")
    dims = struct.unpack_from(f"<{rank}I", data, 12)
    offset = 12 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    flat = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    if flat.size != count:
        raise ValueError(f"{path}: truncated tensor payload")
    return flat.reshape(dims).astype(np.float64)


def write_image(path: str | Path, img: np.ndarray) -> None:
    """Write a [0, 1] float image as binary PGM (1 channel) or PPM (3)."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    if c not in (1, 3):
        raise ValueError(f"images must have 1 or 3 channels, got {c}")
    magic = b"P5" if c == 1 else b"P6"
    quantized = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    payload = quantized[:, :, 0] if c == 1 else quantized
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + payload.tobytes())


def _read_pnm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace/comment-separated integer header tokens."""
    tokens: list[int] = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise ValueError("truncated PNM header")
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            pos = data.index(b"\n", pos) + 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(int(data[pos:end]))
            pos = end
    return tokens, pos + 1  # eat the single whitespace after the last token


def read_image(path: str | Path) -> np.ndarray:
    """Read a binary PGM/PPM into an (H, W, C) float array in [0, 1]."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported image magic {magic!r}")
    channels = 1 if magic == b"P5" else 3
    (w, h, maxval), offset = _read_pnm_tokens(data[2:], 3)
    offset += 2
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit images are supported (maxval {maxval})")
    count = h * w * channels
    raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset)
    if raw.size != count:
        raise ValueError(f"{path}: truncated pixel payload")
    return raw.reshape(h, w, channels).astype(np.float64) / 255.0


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` configuration text.

    Blank lines and ``#`` comments are ignored. Keys may repeat; the last
    assignment wins.
    """
    result: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        result[key.strip()] = value.strip()
    return result


def read_config(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def write_config(path: str | Path, items: dict[str, object]) -> None:
    lines = [f"{key} = {value}" for key, value in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_csv(path: str | Path, header: list[str], rows: list[tuple]) -> None:
    """Write a CSV with mandatory header, comma separator, '.' decimal point."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(cell) for cell in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _format_cell(cell: object) -> str:
    if isinstance(cell, float):
        return repr(cell)
    return str(cell)
