"""Header-plus-blob container used for checkpoints and graph caches.

Layout: one JSON header line (format tag, free-form metadata, and an array
manifest with names/dtypes/shapes/byte offsets), a newline, then the raw
little-endian array bytes concatenated in manifest order.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError, ShapeError

_ALLOWED_DTYPES = ("<f4", "<f8", "<i8", "|u1")


def write_blob(path: str | Path, format_tag: str, meta: dict, arrays: Mapping[str, np.ndarray]) -> None:
    """Write named arrays plus metadata as a single header+blob file."""
    manifest = []
    payload = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)  # note: ascontiguousarray would promote 0-d to 1-d
        dtype = arr.dtype.newbyteorder("<").str if arr.dtype.byteorder == ">" else arr.dtype.str
        if dtype == "|b1":
            arr = arr.astype("|u1")
            dtype = "|u1"
        if dtype not in _ALLOWED_DTYPES:
            raise DataError(f"array {name!r} has unsupported dtype {arr.dtype}")
        raw = arr.astype(dtype).tobytes(order="C")
        manifest.append({"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset})
        payload.append(raw)
        offset += len(raw)
    header = {"format": format_tag, "meta": meta, "arrays": manifest}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for raw in payload:
            fh.write(raw)


def read_blob(path: str | Path, expected_format: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a header+blob file back into (meta, {name: array})."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable container header: {exc}") from None
    if expected_format is not None and header.get("format") != expected_format:
        raise DataError(f"{path}: expected format {expected_format!r}, found {header.get('format')!r}")
    arrays: dict[str, np.ndarray] = {}
    for entry in header.get("arrays", []):
        dtype = entry["dtype"]
        if dtype not in _ALLOWED_DTYPES:
            raise DataError(f"{path}: array {entry['name']!r} has unsupported dtype {dtype}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * np.dtype(dtype).itemsize
        if end > len(blob):
            raise ShapeError(f"{path}: array {entry['name']!r} extends past end of file")
        arr = np.frombuffer(blob[start:end], dtype=dtype).reshape(shape)
        arrays[entry["name"]] = arr.copy()
    return header.get("meta", {}), arrays
