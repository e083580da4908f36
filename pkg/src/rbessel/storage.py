"""Disk formats for paths, surfaces and reports.

One columnar binary container serves every array-bearing type; CSV is
the plotting-oriented export; a JSON sidecar carries scalar metadata and
estimator diagnostics.  All numbers are 64-bit floats, all text UTF-8,
and the binary layout is fixed little-endian so files move across
machines unchanged.

Container layout (RBC1):

    bytes 0..3    magic b"RBC1"
    bytes 4..7    uint32, number of columns C
    bytes 8..15   uint64, number of rows N
    C descriptors uint16 byte length of the name, then the UTF-8 name
    C blocks      N float64 values each, column after column

A container written to ``foo.rbc`` always gets a sidecar
``foo.rbc.json`` holding one JSON object, so type tags and diagnostics
survive the trip; readers tolerate a missing sidecar and return empty
metadata.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .localtime import LocalTimeSurface, MonotonePath
from .pathsim import SampledPath, TimeGrid
from .reporting import StatReport, canonical_json
from .ssmp import JumpPath

__all__ = [
    "jump_path_to_csv",
    "load_jump_path",
    "load_path",
    "load_surface",
    "path_to_csv",
    "read_columns",
    "save_jump_path",
    "save_path",
    "save_surface",
    "sidecar_path",
    "surface_to_csv",
    "write_columns",
    "write_csv",
    "write_report",
]

_MAGIC = b"RBC1"


def sidecar_path(dest) -> Path:
    """Location of the JSON sidecar belonging to a container file."""
    dest = Path(dest)
    return dest.with_name(dest.name + ".json")


def write_columns(dest, columns: dict[str, np.ndarray],
                  meta: dict | None = None) -> Path:
    """Write named float64 columns to an RBC1 container plus sidecar."""
    if not columns:
        raise ValueError("at least one column required")
    arrays, n_rows = {}, None
    for name, col in columns.items():
        a = np.ascontiguousarray(col, dtype=np.float64)
        if a.ndim != 1:
            raise ValueError(f"column {name!r} must be 1-d")
        if not name or len(name.encode()) > 0xFFFF:
            raise ValueError("column names must be 1 to 65535 bytes")
        if n_rows is None:
            n_rows = a.shape[0]
        elif a.shape[0] != n_rows:
            raise ValueError("columns must share one length")
        arrays[name] = a

    dest = Path(dest)
    with open(dest, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", len(arrays), n_rows))
        for name in arrays:
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for a in arrays.values():
            fh.write(a.astype("<f8", copy=False).tobytes())
    sidecar_path(dest).write_text(
        canonical_json(meta if meta is not None else {}) + "\n",
        encoding="utf-8")
    return dest


def read_columns(src) -> tuple[dict[str, np.ndarray], dict]:
    """Read an RBC1 container; returns (columns, sidecar metadata)."""
    buf = Path(src).read_bytes()
    if buf[:4] != _MAGIC:
        raise ValueError(f"{src} is not an RBC1 container")
    n_cols, n_rows = struct.unpack_from("<IQ", buf, 4)
    pos, names = 16, []
    for _ in range(n_cols):
        (ln,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        names.append(buf[pos:pos + ln].decode())
        pos += ln
    if len(buf) - pos != 8 * n_cols * n_rows:
        raise ValueError(f"{src} is truncated or padded")
    columns = {}
    for name in names:
        columns[name] = np.frombuffer(buf, dtype="<f8", count=n_rows,
                                      offset=pos).copy()
        pos += 8 * n_rows
    side = sidecar_path(src)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() \
        else {}
    return columns, meta


def write_csv(dest, columns: dict[str, np.ndarray]) -> Path:
    """Comma-separated UTF-8 export with a header row.

    Values are written through Python's float formatting, which is the
    shortest digit string that parses back to the same double.
    """
    dest = Path(dest)
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns.keys())
        writer.writerows(zip(*(np.asarray(c, dtype=np.float64).tolist()
                               for c in columns.values())))
    return dest


def _merged_meta(reserved: dict, diagnostics: dict | None) -> dict:
    if not diagnostics:
        return reserved
    clash = reserved.keys() & diagnostics.keys()
    if clash:
        raise ValueError(f"diagnostics keys {sorted(clash)} are reserved")
    return {**diagnostics, **reserved}


# ---------------------------------------------------------------------------
# grid-indexed paths (sampled processes, local times and their inverses)

def save_path(dest, path: SampledPath | MonotonePath,
              diagnostics: dict | None = None) -> Path:
    """Persist a grid-indexed path losslessly; the tag restores its type."""
    if isinstance(path, SampledPath):
        reserved = {"type": "sampled-path", "kind": path.kind,
                    "scheme": path.grid.scheme}
    elif isinstance(path, MonotonePath):
        reserved = {"type": "monotone-path", "continuity": path.continuity,
                    "scheme": path.grid.scheme}
    else:
        raise TypeError("save_path takes a SampledPath or MonotonePath")
    return write_columns(dest, {"t": path.grid.times, "value": path.values},
                         _merged_meta(reserved, diagnostics))


def load_path(src) -> SampledPath | MonotonePath:
    columns, meta = read_columns(src)
    tag = meta.get("type")
    if tag not in ("sampled-path", "monotone-path"):
        raise ValueError(f"{src} does not hold a grid-indexed path "
                         f"(type tag {tag!r})")
    grid = TimeGrid(columns["t"], scheme=meta.get("scheme", "uniform"))
    if tag == "sampled-path":
        return SampledPath(grid, columns["value"], kind=meta["kind"])
    return MonotonePath(grid, columns["value"],
                        continuity=meta["continuity"])


def path_to_csv(dest, path: SampledPath | MonotonePath) -> Path:
    return write_csv(dest, {"t": path.grid.times, "value": path.values})


# ---------------------------------------------------------------------------
# jump paths

def save_jump_path(dest, jp: JumpPath,
                   diagnostics: dict | None = None) -> Path:
    """Persist the exact decomposition: jump columns, drift in the sidecar."""
    reserved = {"type": "jump-path", "horizon": jp.horizon,
                "drift_rate": jp.drift_rate}
    return write_columns(dest, {"jump_time": jp.jump_times,
                                "jump_size": jp.jump_sizes},
                         _merged_meta(reserved, diagnostics))


def load_jump_path(src) -> JumpPath:
    columns, meta = read_columns(src)
    if meta.get("type") != "jump-path":
        raise ValueError(f"{src} does not hold a jump path")
    return JumpPath(horizon=meta["horizon"], drift_rate=meta["drift_rate"],
                    jump_times=columns["jump_time"],
                    jump_sizes=columns["jump_size"])


def jump_path_to_csv(dest, jp: JumpPath) -> Path:
    """Cadlag skeleton (t, value) at 0, each jump, and the horizon.

    Consecutive points are joined by the drift line, so a straight-line
    plot of these rows is the exact path.
    """
    t = np.concatenate(([0.0], jp.jump_times, [jp.horizon]))
    return write_csv(dest, {"t": t, "value": jp.values_at(t)})


# ---------------------------------------------------------------------------
# occupation-density surfaces

def save_surface(dest, surf: LocalTimeSurface,
                 diagnostics: dict | None = None) -> Path:
    """Persist a surface in level-major long form (x, t, value)."""
    n_x, n_t = surf.values.shape
    reserved = {"type": "surface", "bandwidth": surf.bandwidth,
                "scheme": surf.grid.scheme, "n_levels": n_x}
    return write_columns(dest, {
        "x": np.repeat(surf.x_levels, n_t),
        "t": np.tile(surf.grid.times, n_x),
        "value": surf.values.reshape(-1),
    }, _merged_meta(reserved, diagnostics))


def load_surface(src) -> LocalTimeSurface:
    columns, meta = read_columns(src)
    if meta.get("type") != "surface":
        raise ValueError(f"{src} does not hold a surface")
    n_x = int(meta["n_levels"])
    n_t = columns["t"].size // n_x
    grid = TimeGrid(columns["t"][:n_t], scheme=meta.get("scheme", "uniform"))
    return LocalTimeSurface(x_levels=columns["x"][::n_t], grid=grid,
                            values=columns["value"].reshape(n_x, n_t),
                            bandwidth=meta["bandwidth"])


def surface_to_csv(dest, surf: LocalTimeSurface) -> Path:
    n_x, n_t = surf.values.shape
    return write_csv(dest, {"x": np.repeat(surf.x_levels, n_t),
                            "t": np.tile(surf.grid.times, n_x),
                            "value": surf.values.reshape(-1)})


# ---------------------------------------------------------------------------
# reports

def write_report(dest, report: StatReport, *,
                 include_runtime: bool = False) -> Path:
    """Serialize a report to canonical JSON (stable key order, newline end)."""
    dest = Path(dest)
    dest.write_text(report.to_json(include_runtime=include_runtime) + "\n",
                    encoding="utf-8")
    return dest
