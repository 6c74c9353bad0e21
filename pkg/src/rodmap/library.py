"""Shape library: sampled activations paired with precomputed centerlines.

A library holds N (gamma, R) tuples sharing one z-grid, generated through a
pluggable shape source so the rod integrator can later be swapped for a
loaded boundary-value solver without touching the planning stack.

On disk a library is a single little-endian binary file

    magic "SSGL" | version u32 | N u64 | n_z u32 | L f64 | seed u64 | digest 32B
    then N records of 3 f64 (gamma) followed by n_z*3 f64 (row-major points)

mirrored by a JSON manifest at <path>.manifest.json.  Floats round-trip
bit-exactly.  Activation sampling uses numpy's PCG64 generator, so a seed
reproduces the same library on any platform.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .rod import (
    GAMMA_MAX,
    GAMMA_MIN,
    ActivationBoundsError,
    ActivationVector,
    ActuationMap,
    CenterlineShape,
    _integrate_batch,
    actuation_to_intrinsic,
)

MAGIC = b"SSGL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQId Q32s")

# records are processed in fixed-size chunks; chunk boundaries never affect
# the computed values, only peak memory
_CHUNK = 4096


class LibraryFormatError(Exception):
    """Base class for shape-library file errors."""


class MalformedHeaderError(LibraryFormatError):
    """File too short for a header, bad magic bytes, or unknown version."""


class TruncatedRecordsError(LibraryFormatError):
    """File size does not match the record count declared in the header."""


class GridMismatchError(LibraryFormatError):
    """Library n_z differs from what the caller requires."""


class ShapeSourceError(RuntimeError):
    """A shape source failed; carries the offending activation."""

    def __init__(self, message: str, gamma):
        super().__init__(message)
        self.gamma = np.asarray(gamma, dtype=np.float64)


@runtime_checkable
class ShapeSource(Protocol):
    """Deterministic map from an activation vector to a centerline shape."""

    n_z: int
    length: float

    def __call__(self, gamma) -> CenterlineShape: ...

    def digest(self) -> bytes:
        """32 bytes pinning the source configuration."""
        ...


class RodShapeSource:
    """Shape source backed by the unloaded-rod RK4 integrator."""

    def __init__(self, actuation_map: ActuationMap, length: float = 1.0, n_z: int = 100):
        self.actuation_map = actuation_map
        self.length = float(length)
        self.n_z = int(n_z)
        self._arc = np.linspace(0.0, self.length, self.n_z)

    def __call__(self, gamma) -> CenterlineShape:
        state = actuation_to_intrinsic(self.actuation_map, gamma)
        points, _ = _integrate_batch(
            state.u_hat[None, :], np.array([state.zeta_hat]), self.length, self.n_z
        )
        return CenterlineShape(points=points[0], arc_params=self._arc)

    def batch(self, gammas: np.ndarray) -> np.ndarray:
        """Integrate many activations at once; rows match one-at-a-time calls
        bit for bit."""
        gammas = np.asarray(gammas, dtype=np.float64)
        if np.any(gammas < GAMMA_MIN) or np.any(gammas > GAMMA_MAX):
            bad = int(np.argmax(np.any((gammas < GAMMA_MIN) | (gammas > GAMMA_MAX), axis=1)))
            raise ActivationBoundsError(f"activation {gammas[bad].tolist()} out of bounds")
        u_hat = gammas @ self.actuation_map.curvature_matrix.T
        zeta = 1.0 + gammas @ self.actuation_map.extension_coeffs
        points, _ = _integrate_batch(u_hat, zeta, self.length, self.n_z)
        return points

    def digest(self) -> bytes:
        h = hashlib.sha256(b"rodmap/rod-source/rk4-gs/v1")
        h.update(self.actuation_map.digest())
        h.update(struct.pack("<dI", self.length, self.n_z))
        return h.digest()


@dataclass
class ShapeLibrary:
    """N activation-shape tuples on a shared z-grid, plus generation metadata."""

    gammas: np.ndarray       # (N, 3)
    points: np.ndarray       # (N, n_z, 3)
    arc_params: np.ndarray   # (n_z,)
    seed: int
    source_digest: bytes
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.gammas.shape != (self.points.shape[0], 3):
            raise ValueError("gammas and points disagree on N")
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ValueError(f"points must be (N, n_z, 3), got {self.points.shape}")
        if self.arc_params.shape != (self.points.shape[1],):
            raise ValueError("arc_params length does not match n_z")
        if len(self.source_digest) != 32:
            raise ValueError("source digest must be 32 bytes")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def n_z(self) -> int:
        return self.points.shape[1]

    @property
    def length(self) -> float:
        return float(self.arc_params[-1])

    def shape(self, i: int) -> CenterlineShape:
        return CenterlineShape(points=self.points[i], arc_params=self.arc_params)

    def entry(self, i: int):
        return ActivationVector(self.gammas[i]), self.shape(i)

    def tips(self) -> np.ndarray:
        """(N, 3) view of all tip positions."""
        return self.points[:, -1, :]

    def header_bytes(self) -> bytes:
        return _HEADER.pack(
            MAGIC, self.version, self.n, self.n_z, self.length, self.seed, self.source_digest
        )

    def content_digest(self) -> bytes:
        """sha256 over the exact serialized file content."""
        h = hashlib.sha256()
        h.update(self.header_bytes())
        for lo in range(0, self.n, _CHUNK):
            h.update(self._record_block(lo, min(self.n, lo + _CHUNK)))
        return h.digest()

    def _record_block(self, lo: int, hi: int) -> bytes:
        block = np.empty((hi - lo, 3 + 3 * self.n_z))
        block[:, :3] = self.gammas[lo:hi]
        block[:, 3:] = self.points[lo:hi].reshape(hi - lo, -1)
        return block.astype("<f8", copy=False).tobytes()


def sample_activations(n: int, seed: int) -> np.ndarray:
    """Draw n activation vectors i.i.d. uniform over the activation box.

    Uses PCG64 seeded with `seed`; a fixed (n, seed) pair reproduces the
    same (n, 3) array everywhere.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.uniform(GAMMA_MIN, GAMMA_MAX, size=(n, 3))


def generate_library(source: ShapeSource, n: int, n_z: int, seed: int) -> ShapeLibrary:
    """Generate a library of n entries through `source`.

    Entry 0 is always the zero-activation steady state (scenarios start
    there); entries 1..n-1 come from sample_activations(n-1, seed).
    Shapes are written to preassigned slots, so the result does not depend
    on evaluation order.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if source.n_z != n_z:
        raise GridMismatchError(f"source produces n_z={source.n_z}, requested {n_z}")

    gammas = np.zeros((n, 3))
    if n > 1:
        gammas[1:] = sample_activations(n - 1, seed)

    points = np.empty((n, n_z, 3))
    batch = getattr(source, "batch", None)
    for lo in range(0, n, _CHUNK):
        hi = min(n, lo + _CHUNK)
        if batch is not None:
            try:
                points[lo:hi] = batch(gammas[lo:hi])
                continue
            except Exception:
                pass  # re-run one at a time to locate the offending activation
        for i in range(lo, hi):
            try:
                points[i] = source(gammas[i]).points
            except Exception as exc:
                raise ShapeSourceError(
                    f"shape source failed for gamma={gammas[i].tolist()}: {exc}", gammas[i]
                ) from exc

    arc = np.linspace(0.0, source.length, n_z)
    return ShapeLibrary(
        gammas=gammas, points=points, arc_params=arc, seed=int(seed),
        source_digest=source.digest(),
    )


def save_library(lib: ShapeLibrary, path) -> Path:
    """Write the binary library file and its JSON manifest sidecar."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(lib.header_bytes())
        for lo in range(0, lib.n, _CHUNK):
            fh.write(lib._record_block(lo, min(lib.n, lo + _CHUNK)))
    manifest = {
        "magic": MAGIC.decode(),
        "version": lib.version,
        "n": lib.n,
        "n_z": lib.n_z,
        "length": lib.length,
        "seed": lib.seed,
        "source_digest": lib.source_digest.hex(),
    }
    manifest_path = library_manifest_path(path)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def library_manifest_path(path) -> Path:
    return Path(str(path) + ".manifest.json")


def load_library(path, expect_n_z: int | None = None) -> ShapeLibrary:
    """Load a library file; floats come back bit-exact.

    Raises MalformedHeaderError, TruncatedRecordsError, or (when
    expect_n_z is given) GridMismatchError.
    """
    path = Path(path)
    size = path.stat().st_size
    if size < _HEADER.size:
        raise MalformedHeaderError(f"{path}: only {size} bytes, header needs {_HEADER.size}")
    with open(path, "rb") as fh:
        magic, version, n, n_z, length, seed, digest = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise MalformedHeaderError(f"{path}: unsupported version {version}")
    if n < 1 or n_z < 2 or not np.isfinite(length) or length <= 0:
        raise MalformedHeaderError(f"{path}: implausible header (n={n}, n_z={n_z}, L={length})")
    expected = _HEADER.size + n * (3 + 3 * n_z) * 8
    if size != expected:
        raise TruncatedRecordsError(f"{path}: expected {expected} bytes for {n} records, got {size}")
    if expect_n_z is not None and n_z != expect_n_z:
        raise GridMismatchError(f"{path}: library n_z={n_z}, expected {expect_n_z}")

    records = np.memmap(path, mode="r", dtype="<f8", offset=_HEADER.size, shape=(n, 3 + 3 * n_z))
    gammas = np.ascontiguousarray(records[:, :3], dtype=np.float64)
    points = np.empty((n, n_z, 3))
    for lo in range(0, n, _CHUNK):
        hi = min(n, lo + _CHUNK)
        points[lo:hi] = records[lo:hi, 3:].reshape(hi - lo, n_z, 3)
    del records
    return ShapeLibrary(
        gammas=gammas, points=points,
        arc_params=np.linspace(0.0, float(length), int(n_z)),
        seed=int(seed), source_digest=digest, version=int(version),
    )


def library_file_digest(path) -> bytes:
    """sha256 of the raw library file, used to bind graphs to libraries."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.digest()
