"""On-disk formats: binary PGM, raw complex arrays and key=value text."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["write_pgm", "read_pgm", "write_cplx", "read_cplx",
           "write_keyvalue", "read_keyvalue", "CPLX_MAGIC"]

CPLX_MAGIC = b"CPLX"
_CPLX_HEADER = struct.Struct("<4sIII")  # magic, M, N, reserved -> 16 bytes


def write_pgm(path, img: np.ndarray, maxval: int) -> None:
    """Binary (P5) PGM; 16-bit samples are big-endian per the format."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in 1..65535")
    if img.min() < 0 or img.max() > maxval:
        raise ValueError("pixel values outside [0, maxval]")
    dt = ">u2" if maxval > 255 else "u1"
    M, N = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{N} {M}\n{maxval}\n".encode("ascii"))
        fh.write(img.astype(dt).tobytes())


def _tokens(buf: bytes, count: int):
    """First ``count`` whitespace-separated header tokens and the data offset."""
    toks, pos = [], 0
    while len(toks) < count:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        toks.append(buf[start:pos])
    return toks, pos + 1


def read_pgm(path):
    """Returns ``(image, maxval)``."""
    buf = Path(path).read_bytes()
    (magic, w, h, maxval), off = _tokens(buf, 4)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(w), int(h), int(maxval)
    dt = ">u2" if maxval > 255 else "u1"
    img = np.frombuffer(buf, dtype=dt, count=w * h, offset=off).reshape(h, w)
    return img.astype(np.int64), maxval


def write_cplx(path, arr: np.ndarray) -> None:
    """16-byte header (``CPLX``, u32 M, u32 N, u32 0) then little-endian
    interleaved float64 real/imag, row-major."""
    arr = np.asarray(arr, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError("cplx files hold one 2-D array")
    M, N = arr.shape
    with open(path, "wb") as fh:
        fh.write(_CPLX_HEADER.pack(CPLX_MAGIC, M, N, 0))
        fh.write(arr.astype("<c16").tobytes())


def read_cplx(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic, M, N, _ = _CPLX_HEADER.unpack_from(buf)
    if magic != CPLX_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(buf, dtype="<c16", count=M * N, offset=_CPLX_HEADER.size)
    return data.reshape(M, N).astype(np.complex128)


def write_keyvalue(path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k}={v}\n")


def read_keyvalue(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out
