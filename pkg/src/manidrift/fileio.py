"""Feature-matrix files and small text inputs.

Binary layout (little-endian, 40-byte header followed by a row-major payload)::

    magic       4s   b"MFTB"
    version     u32  1
    n_rows      u64
    dim         u64
    dtype_code  u8   1 = float64, 2 = float32
    normalized  u8   0 or 1
    reserved    14s  all zero

A CSV import path accepts a first line ``dim=<d>`` followed by one
comma-separated row per line.
"""

import os
import struct

import numpy as np

from .drift import FeatureMatrix
from .errors import BadHeader, BadMagic, BadVersion, IoFailure, NotNormalized, TruncatedPayload
from .losses import build_prototypes

MAGIC = b"MFTB"
VERSION = 1
HEADER = struct.Struct("<4sIQQBB14s")
DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}
LOAD_UNIT_TOL = 1e-5


def save_feature_matrix(matrix, path, dtype_code=1):
    if isinstance(matrix, FeatureMatrix):
        rows, normalized = matrix.rows, matrix.normalized
    else:
        rows, normalized = np.asarray(matrix, dtype=np.float64), False
    if rows.ndim != 2:
        raise BadHeader(f"feature matrix must be 2-D, got shape {rows.shape}")
    if dtype_code not in DTYPES:
        raise BadHeader(f"unknown dtype code {dtype_code}")
    n, d = rows.shape
    header = HEADER.pack(MAGIC, VERSION, n, d, dtype_code, int(bool(normalized)), bytes(14))
    payload = np.ascontiguousarray(rows, dtype=DTYPES[dtype_code]).tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def load_feature_matrix(path) -> FeatureMatrix:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: magic {raw[:4]!r} is not {MAGIC!r}")
    if len(raw) < HEADER.size:
        raise TruncatedPayload(f"{path}: header truncated ({len(raw)} bytes)")
    magic, version, n, d, code, norm_flag, reserved = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"{path}: magic {magic!r} is not {MAGIC!r}")
    if version != VERSION:
        raise BadVersion(f"{path}: version {version} is not {VERSION}")
    if code not in DTYPES:
        raise BadHeader(f"{path}: unknown dtype code {code}")
    if norm_flag not in (0, 1) or any(reserved):
        raise BadHeader(f"{path}: malformed flag or reserved bytes")
    expected = n * d * DTYPES[code].itemsize
    payload = raw[HEADER.size :]
    if len(payload) < expected:
        raise TruncatedPayload(f"{path}: payload holds {len(payload)} bytes, header declares {expected}")
    if len(payload) > expected:
        raise BadHeader(f"{path}: {len(payload) - expected} bytes beyond the declared payload")
    rows = np.frombuffer(payload, dtype=DTYPES[code]).reshape(n, d).astype(np.float64)
    if norm_flag:
        norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
        bad = np.flatnonzero(np.abs(norms - 1.0) > LOAD_UNIT_TOL)
        if bad.size:
            raise NotNormalized(f"{path}: row {bad[0]} has norm {norms[bad[0]]!r}")
        # the file-level check is looser than the in-memory invariant
        return FeatureMatrix(rows, normalized=bool(np.all(np.abs(norms - 1.0) <= 1e-6)))
    return FeatureMatrix(rows, normalized=False)


def load_feature_csv(path) -> FeatureMatrix:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    if not lines or not lines[0].startswith("dim="):
        raise BadHeader(f"{path}: first line must be 'dim=<d>'")
    try:
        d = int(lines[0][4:])
    except ValueError:
        raise BadHeader(f"{path}: bad dim line {lines[0]!r}") from None
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        vals = ln.split(",")
        if len(vals) != d:
            raise BadHeader(f"{path}:{i}: expected {d} values, got {len(vals)}")
        try:
            rows.append([float(v) for v in vals])
        except ValueError:
            raise BadHeader(f"{path}:{i}: non-numeric value") from None
    return FeatureMatrix(np.array(rows, dtype=np.float64).reshape(len(rows), d))


def load_features(path, fmt=None) -> FeatureMatrix:
    if fmt is None:
        fmt = "csv" if os.fspath(path).endswith(".csv") else "bin"
    return load_feature_csv(path) if fmt == "csv" else load_feature_matrix(path)


def load_labels(path):
    """Integer labels, one per line."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            vals = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return np.array([int(v) for v in vals], dtype=np.int64)
    except ValueError:
        raise BadHeader(f"{path}: labels must be integers") from None


def load_prototype_bank(features_path, labels_path, num_classes=None, fmt=None):
    """Description features grouped by class label into a PrototypeBank."""
    fm = load_features(features_path, fmt)
    labels = load_labels(labels_path)
    if labels.shape[0] != fm.rows.shape[0]:
        raise BadHeader(f"{labels.shape[0]} labels for {fm.rows.shape[0]} description features")
    C = num_classes if num_classes is not None else int(labels.max()) + 1
    groups = [fm.rows[labels == c] for c in range(C)]
    return build_prototypes(groups, provenance=tuple(f"{os.fspath(features_path)}#class{c}" for c in range(C)))
