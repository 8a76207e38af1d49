"""Plain-text and binary artifacts: CSV tables, key/value reports, grid dumps."""

from __future__ import annotations

import enum
import struct
from dataclasses import fields, is_dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import Rejection

FIELD_MAGIC = b"ESHF1"


def fmt_real(x: float) -> str:
    return format(float(x), ".17g")


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_real(v + 0.0)
    if isinstance(v, enum.Enum):
        return str(v.value)
    return str(v)


def _open(path_or_file, mode):
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        return open(path_or_file, mode, newline="" if "b" not in mode else None), True
    return path_or_file, False


def write_csv(path_or_file, header: Sequence[str], rows: Iterable[Sequence[Any]],
              preamble: Sequence[str] = ()) -> None:
    """Comma separated, header row, LF endings, reals with 17 significant digits.

    ``preamble`` lines are written first, each prefixed with ``# ``.
    """
    fh, own = _open(path_or_file, "w")
    try:
        for line in preamble:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")
    finally:
        if own:
            fh.close()


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:] if ln]


def flatten_record(obj: Any, prefix: str = "") -> dict[str, Any]:
    """Flatten a report (dataclass / mapping / arrays) into scalar key/value pairs.

    Vectors and matrices expand to ``key.1``, ``key.1.2`` (1-based indices).
    """
    out: dict[str, Any] = {}

    def put(key, val):
        if is_dataclass(val) and not isinstance(val, type):
            for f in fields(val):
                put(f"{key}.{f.name}" if key else f.name, getattr(val, f.name))
        elif isinstance(val, Mapping):
            for k, v in val.items():
                put(f"{key}.{k}" if key else str(k), v)
        elif isinstance(val, np.ndarray) or (isinstance(val, (list, tuple)) and val and
                                              all(isinstance(v, (int, float, np.number)) for v in val)):
            arr = np.asarray(val)
            for idx in np.ndindex(arr.shape):
                put(key + "".join(f".{i + 1}" for i in idx), arr[idx].item())
        elif val is None:
            out[key] = "none"
        else:
            out[key] = val

    put(prefix, obj)
    return out


def format_report(record: Mapping[str, Any], header: Mapping[str, Any] = ()) -> str:
    lines = [f"{k} = {_cell(v)}" for k, v in dict(header).items()]
    lines += [f"{k} = {_cell(v)}" for k, v in record.items()]
    return "\n".join(lines) + "\n"


def write_report(path, record: Mapping[str, Any], header: Mapping[str, Any] = ()) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_report(record, header))


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        k, sep, v = line.partition(" = ")
        if not sep:
            raise Rejection(f"malformed report line {line!r}")
        out[k] = v
    return out


def write_grid_dump(path, grid, channels: np.ndarray, magic: bytes = FIELD_MAGIC) -> None:
    """Grid header as for voxel masks, then a uint32 channel count and float32 data.

    ``channels`` has shape (C, n1, n2, n3); data is channel-major, C order.
    """
    ch = np.asarray(channels)
    if ch.shape[1:] != tuple(grid.resolution):
        raise Rejection("channel arrays do not match grid resolution")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<3i", *grid.resolution))
        fh.write(struct.pack("<3d", *grid.origin))
        fh.write(struct.pack("<3d", *grid.lengths))
        fh.write(struct.pack("<I", ch.shape[0]))
        fh.write(np.ascontiguousarray(ch, dtype="<f4").tobytes())


def read_grid_dump(path, magic: bytes = FIELD_MAGIC):
    from .geometry import read_grid_header

    with open(path, "rb") as fh:
        grid = read_grid_header(fh, magic)
        (nc,) = struct.unpack("<I", fh.read(4))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != nc * int(np.prod(grid.resolution)):
        raise Rejection("grid dump size does not match its header")
    return grid, data.reshape((nc,) + grid.resolution)
