"""DFX1 field files, canonical JSON / CSV reports and run manifests.

DFX1 layout: the 8-byte magic ``DFLXv001``, a little-endian ``u32`` header
length, a UTF-8 JSON header ``{dims, domain_length, components, dtype: "f64le",
order: "C"}``, then one C-ordered little-endian float64 array per component.

All writes go to a temporary file in the target directory which is then
renamed over the destination, so readers never see a partial file.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import struct
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np

from . import __version__
from .errors import FormatError, InvalidInputError
from .spectral import GridSpec, ScalarField, VectorField

MAGIC = b"DFLXv001"
HEADER_KEYS = ("components", "dims", "domain_length", "dtype", "order")
Field = Union[ScalarField, VectorField]


# ---------------------------------------------------------------------------
# atomic writes
# ---------------------------------------------------------------------------


def atomic_write(path: Union[str, Path], data: Union[bytes, str]) -> Path:
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    except OSError as exc:
        raise InvalidInputError(f"cannot write to {path}: {exc.strerror}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------------------
# DFX1
# ---------------------------------------------------------------------------


def encode_field(f: Field) -> bytes:
    values = f.values if isinstance(f, VectorField) else f.values[None]
    header = {
        "components": int(values.shape[0]),
        "dims": list(f.grid.dims),
        "domain_length": float(f.grid.domain_length),
        "dtype": "f64le",
        "order": "C",
    }
    head = canonical_json(header).encode("utf-8")
    payload = np.ascontiguousarray(values, dtype="<f8").tobytes(order="C")
    return MAGIC + struct.pack("<I", len(head)) + head + payload


def write_field(path: Union[str, Path], f: Field) -> Path:
    return atomic_write(path, encode_field(f))


def decode_field(data: bytes, source: str = "<bytes>") -> Field:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{source}: magic mismatch (expected {MAGIC.decode()})")
    if len(data) < len(MAGIC) + 4:
        raise FormatError(f"{source}: header_length field truncated")
    (n,) = struct.unpack("<I", data[len(MAGIC): len(MAGIC) + 4])
    start = len(MAGIC) + 4
    if len(data) < start + n:
        raise FormatError(f"{source}: header_length {n} exceeds file size {len(data)}")
    try:
        header = json.loads(data[start: start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: header is not valid JSON ({exc})") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{source}: header is not a JSON object")
    for key in HEADER_KEYS:
        if key not in header:
            raise FormatError(f"{source}: header field {key!r} missing")
    if header["dtype"] != "f64le":
        raise FormatError(f"{source}: header field 'dtype' must be 'f64le', got {header['dtype']!r}")
    if header["order"] != "C":
        raise FormatError(f"{source}: header field 'order' must be 'C', got {header['order']!r}")
    comps = header["components"]
    if comps not in (1, 3):
        raise FormatError(f"{source}: header field 'components' must be 1 or 3, got {comps!r}")
    try:
        grid = GridSpec(tuple(header["dims"]), header["domain_length"])
    except InvalidInputError as exc:
        raise FormatError(f"{source}: header field 'dims'/'domain_length' invalid: {exc}") from exc
    expected = comps * grid.size * 8
    payload = data[start + n:]
    if len(payload) != expected:
        raise FormatError(
            f"{source}: payload has {len(payload)} bytes, header fields 'dims' x 'components' need {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape((comps,) + grid.shape)
    try:
        if comps == 1:
            return ScalarField(grid, arr[0])
        return VectorField(grid, arr)
    except InvalidInputError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def read_field(path: Union[str, Path]) -> Field:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    return decode_field(data, str(path))


def file_hash(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# canonical JSON / CSV
# ---------------------------------------------------------------------------


def _format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return "%.17g" % x


def _encode(obj: Any, out: list) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        out.append("{")
        for i, (k, v) in enumerate(items):
            if i:
                out.append(",")
            out.append(json.dumps(k, ensure_ascii=False))
            out.append(":")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray, range)):
        out.append("[")
        for i, v in enumerate(list(obj)):
            if i:
                out.append(",")
            _encode(v, out)
        out.append("]")
    elif hasattr(obj, "to_dict"):
        _encode(obj.to_dict(), out)
    else:
        raise InvalidInputError(f"cannot serialise {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    """Sorted keys, no whitespace, floats as ``%.17g``; non-finite floats become strings."""
    out: list = []
    _encode(obj, out)
    return "".join(out)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]], comment: Optional[str] = None) -> str:
    buf = _io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([_format_float(float(v)).strip('"') if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    """Provenance of one CLI run.

    ``manifest_id`` hashes every field except the timestamp, so two runs with
    identical inputs and parameters share it; reports embed
    :meth:`reproducible` (the manifest without timestamp) and the full record is
    written next to them.
    """

    subcommand: str
    parameters: dict
    input_hashes: dict = field(default_factory=dict)
    grid: Optional[dict] = None
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))

    def reproducible(self) -> dict:
        body = {
            "tool_version": self.tool_version,
            "subcommand": self.subcommand,
            "parameters": self.parameters,
            "input_hashes": self.input_hashes,
            "grid": self.grid,
        }
        body["manifest_id"] = hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()
        return body

    @property
    def manifest_id(self) -> str:
        return self.reproducible()["manifest_id"]

    def to_dict(self) -> dict:
        d = self.reproducible()
        d["timestamp"] = self.timestamp
        return d


def emit_json(path: Union[str, Path], report: Any, manifest: RunManifest) -> Path:
    """Write a report with its manifest embedded, plus ``<path>.manifest.json``."""
    body = {"manifest": manifest.reproducible(), "report": report}
    out = atomic_write(path, canonical_json(body) + "\n")
    atomic_write(str(path) + ".manifest.json", canonical_json(manifest.to_dict()) + "\n")
    return out


def emit_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]], manifest: RunManifest) -> Path:
    """CSV with a leading ``# manifest <id>`` comment and a header row."""
    return atomic_write(path, csv_text(header, rows, f"manifest {manifest.manifest_id}"))
