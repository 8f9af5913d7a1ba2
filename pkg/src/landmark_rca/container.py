"""Versioned binary container for model artifacts.

Layout: magic (4 bytes) | u32 version | u64 header length | header JSON |
concatenated raw little-endian array buffers. The header indexes every array
by name, dtype, shape and offset. Nothing in the file depends on wall-clock
time, so identical content always produces identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"LRCA"
VERSION = 1

_ALLOWED_DTYPES = {"<f8", "<f4", "<i8", "<i4", "<i1", "<u4", "|b1", "|u1"}


@dataclass
class Container:
    kind: str
    schema_digest: str
    meta: dict
    arrays: dict[str, np.ndarray]


def _canonical(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_container(
    path: str | Path,
    kind: str,
    schema_digest: str,
    meta: dict,
    arrays: dict[str, np.ndarray],
) -> None:
    index = []
    buffers = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        arr = arr.astype(dtype, copy=False)
        dtype_str = arr.dtype.str
        if dtype_str not in _ALLOWED_DTYPES:
            raise DataError(f"unsupported array dtype {dtype_str} for {name!r}")
        raw = arr.tobytes()
        index.append(
            {
                "name": name,
                "dtype": dtype_str,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        buffers.append(raw)
        offset += len(raw)
    header = _canonical(
        {
            "kind": kind,
            "schema_digest": schema_digest,
            "meta": meta,
            "arrays": index,
        }
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION.to_bytes(4, "little"))
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in buffers:
            fh.write(raw)


def load_container(path: str | Path, expect_kind: str | None = None) -> Container:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read container {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: not a model container")
    version = int.from_bytes(blob[4:8], "little")
    if version != VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    header_len = int.from_bytes(blob[8:16], "little")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt container header: {exc}") from exc
    data = blob[16 + header_len :]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(data):
            raise DataError(f"{path}: truncated container (array {entry['name']!r})")
        arr = np.frombuffer(data[start : start + nbytes], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise DataError(f"{path}: container holds a {kind!r} model, expected {expect_kind!r}")
    return Container(
        kind=kind,
        schema_digest=header["schema_digest"],
        meta=header["meta"],
        arrays=arrays,
    )


def check_digest(container: Container, digest: str, what: str) -> None:
    if container.schema_digest != digest:
        raise DataError(
            f"schema digest mismatch: {what} was built against a different feature layout"
        )
