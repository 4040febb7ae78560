"""MPS file formats.

Binary container (little endian)::

    magic  b"FTNMPS\\x00\\x01"      8 bytes
    version                      uint32   (currently 1)
    n_sites                      uint32
    len(left), left data         uint64, complex128[len]
    len(right), right data       uint64, complex128[len]
    per site: dl, d, dr, data    3 x uint64, complex128[dl*d*dr] (C order)

The text dump holds the same numbers as ``repr`` of floats, which round-trips
exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .mps import MatrixProductState

MAGIC = b"FTNMPS\x00\x01"
VERSION = 1
_C16 = np.dtype("<c16")


class FormatError(ValueError):
    pass


def dumps(s: MatrixProductState) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(s))]
    for vec in (s.left, s.right):
        parts.append(struct.pack("<Q", vec.shape[0]))
        parts.append(np.ascontiguousarray(vec, dtype=_C16).tobytes())
    for t in s.tensors:
        parts.append(struct.pack("<QQQ", *t.shape))
        parts.append(np.ascontiguousarray(t, dtype=_C16).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> MatrixProductState:
    if buf[:8] != MAGIC:
        raise FormatError("not an MPS container")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise FormatError("truncated header")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    def array(count, shape):
        nonlocal pos
        nbytes = count * _C16.itemsize
        if pos + nbytes > len(buf):
            raise FormatError("truncated data")
        a = np.frombuffer(buf, dtype=_C16, count=count, offset=pos).astype(complex).reshape(shape)
        pos += nbytes
        return a

    version, n = take("<II")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (nl,) = take("<Q")
    left = array(nl, (nl,))
    (nr,) = take("<Q")
    right = array(nr, (nr,))
    tensors = []
    for _ in range(n):
        shape = take("<QQQ")
        tensors.append(array(int(np.prod(shape)), shape))
    if pos != len(buf):
        raise FormatError("trailing bytes after the last tensor")
    return MatrixProductState(tensors, left, right)


def save(s: MatrixProductState, path) -> None:
    Path(path).write_bytes(dumps(s))


def load(path) -> MatrixProductState:
    return loads(Path(path).read_bytes())


def _fmt(values) -> str:
    return " ".join(f"{repr(float(z.real))},{repr(float(z.imag))}" for z in np.ravel(values))


def _parse(line: str, count: int) -> np.ndarray:
    toks = line.split()
    if len(toks) != count:
        raise FormatError(f"expected {count} numbers, found {len(toks)}")
    out = np.empty(count, dtype=complex)
    for k, tok in enumerate(toks):
        re, im = tok.split(",")
        out[k] = complex(float(re), float(im))
    return out


def to_text(s: MatrixProductState) -> str:
    lines = [f"mps {VERSION} {len(s)}", f"left {s.left.shape[0]}", _fmt(s.left),
             f"right {s.right.shape[0]}", _fmt(s.right)]
    for k, t in enumerate(s.tensors):
        lines.append(f"site {k} {t.shape[0]} {t.shape[1]} {t.shape[2]}")
        lines.append(_fmt(t))
    return "\n".join(lines) + "\n"


def from_text(text: str) -> MatrixProductState:
    lines = text.splitlines()
    head = lines[0].split()
    if head[0] != "mps" or int(head[1]) != VERSION:
        raise FormatError("not an MPS text dump")
    n = int(head[2])
    nl = int(lines[1].split()[1])
    left = _parse(lines[2], nl)
    nr = int(lines[3].split()[1])
    right = _parse(lines[4], nr)
    tensors = []
    for k in range(n):
        _, _, a, b, c = lines[5 + 2 * k].split()
        shape = (int(a), int(b), int(c))
        tensors.append(_parse(lines[6 + 2 * k], int(np.prod(shape))).reshape(shape))
    return MatrixProductState(tensors, left, right)
