"""Series output (NDJSON and CSV) and binary checkpoints.

Checkpoint layout, all little-endian::

    b"FRAGKINv1"
    <I dim> <d extent> <I points> <d xi_min> <d xi_max> <I sizes>
    <d t> <q step_count> <d underflow> <d overflow> <d clamped_mass> <q rejections>
    field values as <f8, space-major and size-minor (C order of (*space, m))
    <I crc32 of everything above>
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
import zlib
from pathlib import Path
from typing import IO, Any

import numpy as np

from .diagnostics import DiagnosticsSeries, NormSpec
from .grids import Field, SizeGrid, SpaceGrid
from .integrator import RunState

MAGIC = b"FRAGKINv1"
_GRID = struct.Struct("<IdIddI")
_STATE = struct.Struct("<dqdddq")
_CRC = struct.Struct("<I")
SERIES_FORMAT = "fragkin-series"
SERIES_VERSION = 1


class CheckpointCorrupt(ValueError):
    """The checkpoint failed a structural or checksum test; no state was produced."""


# --------------------------------------------------------------------------
# NDJSON / CSV


def _dumps(obj: Any) -> str:
    # json renders floats with repr, the shortest round-trip decimal
    return json.dumps(obj, separators=(",", ":"), allow_nan=True)


def series_header(series: DiagnosticsSeries, config_hash: str | None = None,
                  extra: dict[str, Any] | None = None) -> dict[str, Any]:
    sp, sg = series.space, series.size
    head = {
        "format": SERIES_FORMAT,
        "version": SERIES_VERSION,
        "config_sha256": config_hash,
        "grids": {"dim": sp.dim, "extent": sp.extent, "points": sp.points,
                  "xi_min": sg.xi_min, "xi_max": sg.xi_max, "sizes": sg.count},
        "norms": [s.key for s in series.specs],
    }
    if extra:
        head.update(extra)
    return head


def series_lines(series: DiagnosticsSeries, config_hash: str | None = None,
                 extra: dict[str, Any] | None = None) -> list[str]:
    lines = [_dumps(series_header(series, config_hash, extra))]
    lines += [_dumps(rec) for rec in series.records()]
    if series.abort is not None:
        lines.append(_dumps({"event": "abort", **series.abort}))
    return lines


def emit_series(series: DiagnosticsSeries, sink: IO[Any], config_hash: str | None = None,
                extra: dict[str, Any] | None = None) -> int:
    """Write the header object and one NDJSON object per sample; returns the byte count."""
    data = ("\n".join(series_lines(series, config_hash, extra)) + "\n").encode("utf-8")
    _write(sink, data)
    return len(data)


def emit_csv(series: DiagnosticsSeries, sink: IO[Any]) -> int:
    """Flattened table: one column per scalar and per tracked norm."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    keys = list(series.norms)
    writer.writerow(["t", "mass", "number", *[f"norm[{k}]" for k in keys], "posmin", "underflow", "overflow"])
    for rec in series.records():
        writer.writerow([repr(rec["t"]), repr(rec["mass"]), repr(rec["number"]),
                         *[repr(rec["norms"][k]) for k in keys],
                         repr(rec["posmin"]), repr(rec["underflow"]), repr(rec["overflow"])])
    data = buf.getvalue().encode("utf-8")
    _write(sink, data)
    return len(data)


def _write(sink: IO[Any], data: bytes) -> None:
    try:
        if isinstance(sink, io.TextIOBase):
            sink.write(data.decode("utf-8"))
        else:
            sink.write(data)
        if hasattr(sink, "flush"):
            sink.flush()
    except (OSError, ValueError) as exc:
        raise OSError(f"sink write failure: {exc}") from exc


def read_series(text: str) -> tuple[dict[str, Any], DiagnosticsSeries]:
    """Parse NDJSON written by :func:`emit_series` back into a series."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty series stream")
    header = json.loads(lines[0])
    if header.get("format") != SERIES_FORMAT:
        raise ValueError("not a fragkin series stream")
    g = header["grids"]
    space = SpaceGrid(g["dim"], g["extent"], g["points"])
    size = SizeGrid(g["xi_min"], g["xi_max"], g["sizes"])
    series = DiagnosticsSeries(space, size, [NormSpec.from_key(k) for k in header["norms"]])
    for ln in lines[1:]:
        rec = json.loads(ln)
        if rec.get("event") == "abort":
            series.abort = {k: v for k, v in rec.items() if k != "event"}
            continue
        series.times.append(rec["t"])
        series.mass.append(rec["mass"])
        series.number.append(rec["number"])
        for key, val in rec["norms"].items():
            series.norms.setdefault(key, []).append(val)
        series.posmin.append(rec["posmin"])
        series.underflow.append(rec["underflow"])
        series.overflow.append(rec["overflow"])
    return header, series


# --------------------------------------------------------------------------
# checkpoints


def checkpoint_bytes(state: RunState) -> bytes:
    sp, sg = state.u.space, state.u.size
    parts = [
        MAGIC,
        _GRID.pack(sp.dim, sp.extent, sp.points, sg.xi_min, sg.xi_max, sg.count),
        _STATE.pack(state.t, state.step_count, state.underflow, state.overflow, state.clamped_mass, state.rejections),
        np.ascontiguousarray(state.u.values, dtype="<f8").tobytes(order="C"),
    ]
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def checkpoint_write(state: RunState, path: str | Path) -> None:
    """Write atomically: a temporary sibling is renamed over ``path``."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(state))
    tmp.replace(path)


def checkpoint_from_bytes(data: bytes) -> RunState:
    head = len(MAGIC) + _GRID.size + _STATE.size
    if len(data) < head + _CRC.size:
        raise CheckpointCorrupt("checkpoint truncated")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointCorrupt("bad magic: not a fragkin v1 checkpoint")
    dim, extent, points, xi_min, xi_max, sizes = _GRID.unpack_from(data, len(MAGIC))
    try:
        space = SpaceGrid(dim, extent, points)
        size = SizeGrid(xi_min, xi_max, sizes)
    except ValueError as exc:
        raise CheckpointCorrupt(f"invalid grid descriptor: {exc}") from None
    count = space.ncells * size.count
    expected = head + 8 * count + _CRC.size
    if len(data) < expected:
        raise CheckpointCorrupt(f"checkpoint truncated: {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise CheckpointCorrupt(f"trailing bytes: {len(data)} bytes, expected {expected}")
    body, trailer = data[:-_CRC.size], data[-_CRC.size:]
    if _CRC.unpack(trailer)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise CheckpointCorrupt("CRC mismatch")
    t, steps, under, over, clamped, rejections = _STATE.unpack_from(data, len(MAGIC) + _GRID.size)
    payload = body[head:]
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(space.shape + (size.count,))
    if not all(math.isfinite(v) for v in (t, under, over, clamped)):
        raise CheckpointCorrupt("non-finite scalars")
    return RunState(t, Field(values, space, size), under, over, steps, rejections, clamped)


def checkpoint_read(path: str | Path) -> RunState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointCorrupt(f"cannot read checkpoint: {exc}") from None
    return checkpoint_from_bytes(data)
