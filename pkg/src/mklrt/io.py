"""Kernel, label, model and report files.

Kernel matrices are stored either as CSV (numeric grid, no header, one row
per line) or in a little-endian binary layout::

    b"MKLK"  uint32 version (=1)  uint32 rows  uint32 cols
    rows*cols float64 values, row-major
    [uint32 n, n * (uint32 byte_length, utf-8 bytes)]   row ids, optional
    [uint32 n, n * (uint32 byte_length, utf-8 bytes)]   column ids, optional

A square file with only a row-id table uses the same ids for its columns.
Models are JSON documents; floats are written with their shortest
round-trip representation so a load/save cycle is bit-exact.
"""
from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .instances import RatioTraceModel
from .kernels import CrossKernelMatrix, KernelMatrix

MAGIC = b"MKLK"
KERNEL_FORMAT_VERSION = 1
MODEL_FORMAT = "mklrt-model"
MODEL_FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")


def _pack_ids(ids: Sequence[str]) -> bytes:
    out = [_U32.pack(len(ids))]
    for i in ids:
        raw = str(i).encode("utf-8")
        out.append(_U32.pack(len(raw)))
        out.append(raw)
    return b"".join(out)


def _unpack_ids(buf: bytes, pos: int) -> tuple[tuple[str, ...], int]:
    (n,) = _U32.unpack_from(buf, pos)
    pos += _U32.size
    ids = []
    for _ in range(n):
        (length,) = _U32.unpack_from(buf, pos)
        pos += _U32.size
        if pos + length > len(buf):
            raise InvalidInputError("truncated id table")
        ids.append(buf[pos:pos + length].decode("utf-8"))
        pos += length
    return tuple(ids), pos


def encode_kernel(values, row_ids: Sequence[str] = (), col_ids: Sequence[str] = ()) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise InvalidInputError("kernel must be 2-D")
    rows, cols = values.shape
    parts = [_HEADER.pack(MAGIC, KERNEL_FORMAT_VERSION, rows, cols), values.tobytes()]
    if row_ids or col_ids:
        row_ids = tuple(row_ids) or tuple(str(i) for i in range(rows))
        if len(row_ids) != rows:
            raise InvalidInputError("row id count does not match rows")
        parts.append(_pack_ids(row_ids))
        if col_ids and (rows != cols or tuple(col_ids) != row_ids):
            if len(col_ids) != cols:
                raise InvalidInputError("column id count does not match columns")
            parts.append(_pack_ids(col_ids))
    return b"".join(parts)


def decode_kernel(buf: bytes) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...]]:
    if len(buf) < _HEADER.size:
        raise InvalidInputError("file too short for a kernel header")
    magic, version, rows, cols = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise InvalidInputError(f"bad magic {magic!r}")
    if version != KERNEL_FORMAT_VERSION:
        raise InvalidInputError(f"unsupported kernel format version {version}")
    pos = _HEADER.size
    end = pos + 8 * rows * cols
    if end > len(buf):
        raise InvalidInputError("truncated kernel values")
    values = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=pos)
    values = values.reshape(rows, cols).astype(float)
    pos = end
    row_ids: tuple[str, ...] = ()
    col_ids: tuple[str, ...] = ()
    if pos < len(buf):
        row_ids, pos = _unpack_ids(buf, pos)
    if pos < len(buf):
        col_ids, pos = _unpack_ids(buf, pos)
    if pos != len(buf):
        raise InvalidInputError("trailing bytes after id tables")
    if row_ids and len(row_ids) != rows:
        raise InvalidInputError("row id table does not match row count")
    if row_ids and not col_ids and rows == cols:
        col_ids = row_ids
    if col_ids and len(col_ids) != cols:
        raise InvalidInputError("column id table does not match column count")
    return values, row_ids, col_ids


def _is_csv(path: Path) -> bool:
    return path.suffix.lower() in (".csv", ".txt")


def write_matrix(path, values, row_ids: Sequence[str] = (), col_ids: Sequence[str] = ()) -> None:
    """Write a kernel (or cross kernel) as CSV or binary, chosen by extension."""
    path = Path(path)
    values = np.asarray(values, dtype=float)
    if _is_csv(path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in values:
                w.writerow([repr(float(v)) for v in row])
    else:
        path.write_bytes(encode_kernel(values, row_ids, col_ids))


def read_matrix(path) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...]]:
    """Return ``(values, row_ids, col_ids)``; id tuples are empty when absent."""
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw[:4] == MAGIC:
        return decode_kernel(raw)
    try:
        values = np.loadtxt(_io.StringIO(raw.decode("utf-8")), delimiter=",", ndmin=2)
    except (ValueError, UnicodeDecodeError) as exc:
        raise InvalidInputError(f"{path}: not a kernel file ({exc})") from exc
    return values, (), ()


def load_kernel(path) -> KernelMatrix:
    values, row_ids, _ = read_matrix(path)
    try:
        return KernelMatrix(values, row_ids)
    except InvalidInputError as exc:
        raise InvalidInputError(f"{path}: {exc}") from exc


def load_cross_kernel(path) -> CrossKernelMatrix:
    values, row_ids, col_ids = read_matrix(path)
    return CrossKernelMatrix(values, row_ids, col_ids)


def has_ids(path) -> bool:
    return bool(read_matrix(path)[1])


def read_labels(path) -> tuple[list[str], list[str]]:
    """Two-column ``item_id,class_id`` CSV; a header row is skipped if present."""
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"no such file: {path}")
    ids, labels = [], []
    with open(path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh)):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise InvalidInputError(f"{path}:{n + 1}: expected item_id,class_id")
            if n == 0 and row[0].strip().lower() == "item_id":
                continue
            ids.append(row[0].strip())
            labels.append(row[1].strip())
    if not ids:
        raise InvalidInputError(f"{path}: no labels")
    return ids, labels


def write_labels(path, ids: Iterable, labels: Iterable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "class_id"])
        for i, c in zip(ids, labels):
            w.writerow([i, c])


def align_labels(label_ids: Sequence[str], labels: Sequence[str],
                 item_ids: Sequence[str], by_id: bool) -> np.ndarray:
    """Labels in kernel item order.

    With ``by_id`` every kernel item must appear in the label file; otherwise
    labels are taken in file order and only the count is checked.
    """
    if not by_id:
        if len(labels) != len(item_ids):
            raise InvalidInputError(
                f"{len(labels)} labels for {len(item_ids)} kernel items")
        return np.asarray(labels)
    lookup = dict(zip(label_ids, labels))
    missing = [i for i in item_ids if i not in lookup]
    if missing:
        raise InvalidInputError(f"no label for items {missing[:5]}")
    return np.asarray([lookup[i] for i in item_ids])


def write_csv(path, rows: list[dict], header: Sequence[str] | None = None) -> None:
    header = list(header or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_latent(path, latent, ids: Sequence[str]) -> None:
    """Latent coordinates with a leading ``item_id`` column."""
    latent = np.atleast_2d(np.asarray(latent, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id"] + [f"z{j + 1}" for j in range(latent.shape[1])])
        for i, row in zip(ids, latent):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_latent(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0] != "item_id":
        raise InvalidInputError(f"{path}: missing item_id header")
    ids = [r[0] for r in rows[1:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    return ids, values.reshape(len(ids), len(rows[0]) - 1)


def _tolist(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def model_to_dict(model: RatioTraceModel, *, selected=(), combination: str = "linear",
                  transforms=None, transform_z=None, combined_transform=None,
                  config=None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "task": model.task,
        "sigma": float(model.sigma),
        "combination": combination,
        "mu": _tolist(model.mu),
        "selected": [int(i) for i in selected],
        "lambdas": _tolist(model.lambdas),
        "gamma": _tolist(model.gamma),
        "xi": _tolist(model.xi),
        "train_ids": list(model.train_ids),
        "second_ids": list(model.second_ids),
        "transforms": transforms or [],
        "transform_z": transform_z,
        "combined_transform": combined_transform,
        "meta": _jsonable(model.meta),
        "config": config or {},
    }


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (np.floating,)):
            v = float(v)
        elif isinstance(v, np.bool_):
            v = bool(v)
        out[k] = v
    return out


def model_from_dict(doc: dict) -> tuple[RatioTraceModel, dict]:
    if doc.get("format") != MODEL_FORMAT:
        raise InvalidInputError("not an mklrt model file")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise InvalidInputError(f"unsupported model version {doc.get('version')}")
    n = len(doc["train_ids"]) or None
    gamma = np.asarray(doc["gamma"], dtype=float).reshape(n or -1, len(doc["lambdas"]))
    xi = doc.get("xi")
    if xi is not None:
        xi = np.asarray(xi, dtype=float).reshape(-1, len(doc["lambdas"]))
    model = RatioTraceModel(task=doc["task"], sigma=doc["sigma"],
                            mu=np.asarray(doc["mu"], dtype=float), gamma=gamma,
                            lambdas=np.asarray(doc["lambdas"], dtype=float), xi=xi,
                            train_ids=tuple(doc["train_ids"]),
                            second_ids=tuple(doc["second_ids"]), meta=dict(doc.get("meta", {})))
    return model, doc


def save_model(path, model: RatioTraceModel, **extra) -> dict:
    doc = model_to_dict(model, **extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return doc


def load_model(path) -> tuple[RatioTraceModel, dict]:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid model file ({exc})") from exc
    return model_from_dict(doc)
