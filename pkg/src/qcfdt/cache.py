"""On-disk cache of eigensystems keyed by a content hash of the Hamiltonian.

File layout (little-endian): magic ``b"QFDT"``, format version (u32),
dimension (u64), energies (f64 x dim), eigenvectors (f64 x dim^2,
column-major).  Files are written to a temporary name and renamed, so
concurrent writers never expose partial files.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .spectral import EigenSystem, as_dense, diagonalize

MAGIC = b"QFDT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")
ENV_VAR = "QFDT_CACHE_DIR"


class CacheFormatError(ValueError):
    pass


def default_cache_dir() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "qcfdt"


def matrix_key(H) -> str:
    dense = np.ascontiguousarray(as_dense(H), dtype="<f8")
    h = hashlib.sha256()
    h.update(struct.pack("<QQ", *dense.shape))
    h.update(dense.tobytes())
    return h.hexdigest()


def write_eigensystem(path, eig: EigenSystem):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, eig.dimension))
            fh.write(np.asarray(eig.energies, dtype="<f8").tobytes())
            fh.write(np.asarray(eig.vectors, dtype="<f8").tobytes(order="F"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_eigensystem(path, basis_tag: str = "noninteracting") -> EigenSystem:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    magic, version, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CacheFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CacheFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * (dim + dim * dim)
    if len(raw) != expected:
        raise CacheFormatError(f"{path}: size {len(raw)} != expected {expected}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    energies = body[:dim].astype(np.float64)
    vectors = body[dim:].reshape((dim, dim), order="F").astype(np.float64)
    return EigenSystem(energies, vectors, basis_tag)


class EigenCache:
    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.qfdt"

    def get_or_compute(self, H, basis_tag: str = "noninteracting") -> EigenSystem:
        key = matrix_key(H)
        path = self.path(key)
        if path.exists():
            try:
                return read_eigensystem(path, basis_tag)
            except CacheFormatError:
                path.unlink(missing_ok=True)
        eig = diagonalize(H, basis_tag)
        write_eigensystem(path, eig)
        return eig

    def stats(self) -> dict:
        files = sorted(self.directory.glob("*.qfdt")) if self.directory.exists() else []
        return {
            "directory": str(self.directory),
            "entries": len(files),
            "bytes": sum(f.stat().st_size for f in files),
        }

    def clear(self) -> int:
        files = list(self.directory.glob("*.qfdt")) if self.directory.exists() else []
        for f in files:
            f.unlink(missing_ok=True)
        return len(files)
