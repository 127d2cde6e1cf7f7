"""Binary container formats exchanged between pipeline stages.

All integers little-endian. Magics: SYMS (sampled shape), SYMP (patch index
sets), SYMB (normalized patch batches), SYMD (distance matrices), SYME
(embedding sets).
"""

import hashlib
import json
import struct

import numpy as np

from .errors import ParseError

PATCH_POINTS = 512

_MODE_COUNT = 0
_MODE_RADIUS = 1


def config_fingerprint(obj) -> int:
    """Stable u64 fingerprint of a JSON-serializable configuration."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _expect(fh, magic, path):
    got = fh.read(4)
    if got != magic:
        raise ParseError(f"{path}: expected magic {magic!r}, got {got!r}")
    version = struct.unpack("<I", fh.read(4))[0]
    if version != 1:
        raise ParseError(f"{path}: unsupported version {version}")


def write_syms(path, points, centers, seed):
    points = np.asarray(points, dtype="<f4").reshape(-1, 3)
    centers = np.asarray(centers, dtype="<u8").ravel()
    with open(path, "wb") as fh:
        fh.write(b"SYMS" + struct.pack("<I", 1))
        fh.write(struct.pack("<Q", len(points)))
        fh.write(points.tobytes())
        fh.write(struct.pack("<Q", len(centers)))
        fh.write(centers.tobytes())
        fh.write(struct.pack("<Q", seed))


def read_syms(path):
    """Returns (points (n,3) f64, centers (c,) i64, seed)."""
    with open(path, "rb") as fh:
        _expect(fh, b"SYMS", path)
        (n,) = struct.unpack("<Q", fh.read(8))
        pts = np.frombuffer(fh.read(n * 12), dtype="<f4")
        if pts.size != n * 3:
            raise ParseError(f"{path}: truncated point data")
        (c,) = struct.unpack("<Q", fh.read(8))
        ctr = np.frombuffer(fh.read(c * 8), dtype="<u8")
        if ctr.size != c:
            raise ParseError(f"{path}: truncated center data")
        (seed,) = struct.unpack("<Q", fh.read(8))
    return pts.reshape(n, 3).astype(np.float64), ctr.astype(np.int64), int(seed)


def write_symp(path, patches):
    """patches: iterable of (center:int, mode:'count'|'radius', size:float, indices)."""
    with open(path, "wb") as fh:
        fh.write(b"SYMP" + struct.pack("<I", 1))
        patches = list(patches)
        fh.write(struct.pack("<Q", len(patches)))
        for center, mode, size, indices in patches:
            indices = np.asarray(indices, dtype="<u8").ravel()
            m = _MODE_COUNT if mode == "count" else _MODE_RADIUS
            fh.write(struct.pack("<QBdQ", center, m, float(size), len(indices)))
            fh.write(indices.tobytes())


def read_symp(path):
    out = []
    with open(path, "rb") as fh:
        _expect(fh, b"SYMP", path)
        (count,) = struct.unpack("<Q", fh.read(8))
        for _ in range(count):
            raw = fh.read(25)
            if len(raw) != 25:
                raise ParseError(f"{path}: truncated patch header")
            center, m, size, k = struct.unpack("<QBdQ", raw)
            idx = np.frombuffer(fh.read(k * 8), dtype="<u8")
            if idx.size != k:
                raise ParseError(f"{path}: truncated patch indices")
            mode = "count" if m == _MODE_COUNT else "radius"
            out.append((int(center), mode, float(size), idx.astype(np.int64)))
    return out


def write_symb(path, batches):
    """batches: array (count, PATCH_POINTS, 3)."""
    arr = np.asarray(batches, dtype="<f4")
    if arr.ndim != 3 or arr.shape[1:] != (PATCH_POINTS, 3):
        raise ValueError(f"SYMB batch must be (n, {PATCH_POINTS}, 3), got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(b"SYMB" + struct.pack("<I", 1))
        fh.write(struct.pack("<Q", len(arr)))
        fh.write(arr.tobytes())


def read_symb(path):
    with open(path, "rb") as fh:
        _expect(fh, b"SYMB", path)
        (count,) = struct.unpack("<Q", fh.read(8))
        arr = np.frombuffer(fh.read(count * PATCH_POINTS * 12), dtype="<f4")
        if arr.size != count * PATCH_POINTS * 3:
            raise ParseError(f"{path}: truncated batch data")
    return arr.reshape(count, PATCH_POINTS, 3).astype(np.float64)


def write_symd(path, values, kind, fingerprint):
    """values: symmetric (n,n) matrix; stores the upper triangle row-major."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    iu = np.triu_indices(n, k=1)
    with open(path, "wb") as fh:
        fh.write(b"SYMD" + struct.pack("<I", 1))
        fh.write(struct.pack("<BQQ", 0 if kind == "icp" else 1, n, fingerprint))
        fh.write(values[iu].astype("<f8").tobytes())


def read_symd(path):
    """Returns (matrix (n,n) f64 with zero diagonal, kind, fingerprint)."""
    with open(path, "rb") as fh:
        _expect(fh, b"SYMD", path)
        k, n, fp = struct.unpack("<BQQ", fh.read(17))
        m = n * (n - 1) // 2
        tri = np.frombuffer(fh.read(m * 8), dtype="<f8")
        if tri.size != m:
            raise ParseError(f"{path}: truncated matrix data")
    mat = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    mat[iu] = tri
    mat += mat.T
    return mat, ("icp" if k == 0 else "cosine"), int(fp)


def write_syme(path, vectors, patch_ids):
    vectors = np.asarray(vectors, dtype="<f4")
    patch_ids = np.asarray(patch_ids, dtype="<u8").ravel()
    if vectors.ndim != 2 or len(vectors) != len(patch_ids):
        raise ValueError("SYME vectors must be (n, dim) aligned with patch ids")
    with open(path, "wb") as fh:
        fh.write(b"SYME" + struct.pack("<I", 1))
        fh.write(struct.pack("<QQ", vectors.shape[0], vectors.shape[1]))
        fh.write(vectors.tobytes())
        fh.write(patch_ids.tobytes())


def read_syme(path):
    """Returns (vectors (n,dim) f64, patch_ids (n,) i64)."""
    with open(path, "rb") as fh:
        _expect(fh, b"SYME", path)
        n, dim = struct.unpack("<QQ", fh.read(16))
        vec = np.frombuffer(fh.read(n * dim * 4), dtype="<f4")
        if vec.size != n * dim:
            raise ParseError(f"{path}: truncated embedding data")
        ids = np.frombuffer(fh.read(n * 8), dtype="<u8")
        if ids.size != n:
            raise ParseError(f"{path}: truncated patch ids")
    return vec.reshape(n, dim).astype(np.float64), ids.astype(np.int64)
