"""Binary snapshot files.

Layout (little-endian): b"CKNF", version u32, N u32, L f64, nu f64, t f64,
kind u8 (0 scalar, 1 velocity), then complex coefficients as f64 pairs over
the full lattice n1, n2, n3 in [-N/2, N/2), row-major. Velocity files hold
the three components one after another.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .leray_solver import Snapshot
from .torus_field import SCALAR, VELOCITY, Grid, SpectralField, make_grid

MAGIC = b"CKNF"
VERSION = 1
_HEADER = struct.Struct("<4sIIdddB")
_KIND_TAGS = {SCALAR: 0, VELOCITY: 1}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


class SnapshotFormatError(ValueError):
    """File does not follow the snapshot layout."""


@dataclass(frozen=True)
class SnapshotHeader:
    version: int
    N: int
    L: float
    nu: float
    t: float
    kind: str


def _half_to_full(c: np.ndarray, N: int) -> np.ndarray:
    """rfft half-space (N, N, N/2+1) -> full lattice ordered from -N/2 (fftshifted)."""
    full = np.empty((N, N, N), dtype=complex)
    h = N // 2
    full[:, :, :h] = c[:, :, :h]
    # n3 < 0 (including -N/2) from conjugate symmetry: c(n) = conj c(-n)
    neg = np.arange(h, N)            # fft index of n3 = m - N
    mirror = (N - neg) % N           # fft index of -n3, in (0, N/2]
    idx = (-np.arange(N)) % N
    full[:, :, neg] = np.conj(c[idx][:, idx][:, :, mirror])
    return np.fft.fftshift(full)


def _full_to_half(full_shifted: np.ndarray, N: int) -> np.ndarray:
    full = np.fft.ifftshift(full_shifted)
    h = N // 2
    c = np.empty((N, N, h + 1), dtype=complex)
    c[:, :, :h] = full[:, :, :h]
    idx = (-np.arange(N)) % N
    c[:, :, h] = np.conj(full[idx][:, idx][:, :, h])
    return c


def encode_snapshot(s: Snapshot, nu: float) -> bytes:
    u = s.u
    g = u.grid
    header = _HEADER.pack(MAGIC, VERSION, g.N, float(g.L), float(nu), float(s.t), _KIND_TAGS[u.kind])
    comps = u.coeffs if u.kind == VELOCITY else u.coeffs[None]
    body = np.concatenate([_half_to_full(c, g.N).ravel() for c in comps])
    return header + body.astype("<c16").tobytes()


def decode_snapshot(data: bytes) -> tuple[Snapshot, SnapshotHeader]:
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("truncated header")
    magic, version, N, L, nu, t, tag = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version} (reader handles {VERSION})")
    if tag not in _TAG_KINDS:
        raise SnapshotFormatError(f"unknown kind tag {tag}")
    kind = _TAG_KINDS[tag]
    ncomp = 3 if kind == VELOCITY else 1
    expected = _HEADER.size + ncomp * N**3 * 16
    if len(data) != expected:
        raise SnapshotFormatError(f"file has {len(data)} bytes, expected {expected}")
    try:
        grid: Grid = make_grid(N, L)
    except ValueError as e:
        raise SnapshotFormatError(str(e)) from None
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(ncomp, N, N, N)
    halves = np.stack([_full_to_half(b, N) for b in body])
    coeffs = halves if kind == VELOCITY else halves[0]
    snap = Snapshot(t, SpectralField(grid, coeffs, kind))
    return snap, SnapshotHeader(version, N, L, nu, t, kind)


def save_snapshot(s: Snapshot, path: str, nu: float) -> None:
    """Write atomically (temp file in the target directory, then rename)."""
    atomic_write_bytes(path, encode_snapshot(s, nu))


def load_snapshot(path: str) -> Snapshot:
    return load_snapshot_with_header(path)[0]


def load_snapshot_with_header(path: str) -> tuple[Snapshot, SnapshotHeader]:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())


def atomic_write_bytes(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


__all__ = [
    "MAGIC", "VERSION", "SnapshotFormatError", "SnapshotHeader", "encode_snapshot",
    "decode_snapshot", "save_snapshot", "load_snapshot", "load_snapshot_with_header",
    "atomic_write_bytes", "atomic_write_text",
]
