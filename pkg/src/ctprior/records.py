"""Dataset serialization.

Two interchangeable containers, both bit-exact reproducible per seed:

- NDJSON: line 1 is the header, every further line one sample record.
  Canonical form: sorted keys, no spaces, shortest round-trip float repr, so
  equal records produce equal bytes.
- Binary: magic ``CTPB`` + version byte, then length-prefixed CRC-checked
  frames (frame 0 = header JSON, frame k = record in a small tagged
  encoding with raw little-endian float64/int64 arrays).

Exported values are always finite (the simulator clamps at its overflow
guard), so the JSON writer rejects NaN/inf outright; hitting that rejection
means an engine bug, not a data condition.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import RecordFormatError

__all__ = [
    "canonical_json",
    "to_jsonable",
    "arrayify_record",
    "make_header",
    "encode_record_line",
    "write_ndjson",
    "read_ndjson",
    "write_binary",
    "read_binary",
    "read_dataset",
    "validate_record",
    "summarize_dataset",
]

MAGIC = b"CTPB"
BINARY_VERSION = 1


def to_jsonable(obj):
    """Recursively convert ndarrays and numpy scalars to plain python."""
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


# Record fields holding numeric arrays, with their target dtypes. Used to put
# records parsed from JSON back into the canonical array form so the binary
# container encodes them identically whichever path produced the dict.
_ARRAY_FIELDS = {
    ("timestamps",): np.float64,
    ("observational",): np.float64,
    ("interventional",): np.float64,
    ("variables", "observed"): np.int64,
    ("norm_stats", "mean"): np.float64,
    ("norm_stats", "std"): np.float64,
    ("oracle", "hidden"): np.int64,
    ("oracle", "hidden_observational"): np.float64,
    ("oracle", "hidden_interventional"): np.float64,
    ("oracle", "regimes"): np.int64,
    ("oracle", "norm_stats_full", "mean"): np.float64,
    ("oracle", "norm_stats_full", "std"): np.float64,
}


def arrayify_record(rec: dict) -> dict:
    """Return a copy with known numeric-array fields as ndarrays."""
    out = _deep_copy_jsonish(rec)
    for path, dtype in _ARRAY_FIELDS.items():
        node = out
        for key in path[:-1]:
            node = node.get(key) if isinstance(node, dict) else None
            if node is None:
                break
        if not isinstance(node, dict):
            continue
        value = node.get(path[-1])
        if value is not None:
            node[path[-1]] = np.asarray(value, dtype=dtype)
    return out


def _deep_copy_jsonish(obj):
    if isinstance(obj, dict):
        return {k: _deep_copy_jsonish(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_deep_copy_jsonish(v) for v in obj]
    return obj


def make_header(config_digest: str, seed: int, format_version: int = 1) -> dict:
    return {"format_version": format_version, "config_digest": config_digest, "seed": seed}


def encode_record_line(record: dict) -> str:
    return canonical_json(record)


def write_ndjson(path: str | Path, header: dict, records: Iterable[dict]) -> int:
    """Write the dataset; returns the number of records."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(header) + "\n")
        for rec in records:
            fh.write(encode_record_line(rec) + "\n")
            n += 1
    return n


def read_ndjson(path: str | Path) -> tuple[dict, list[dict]]:
    records = []
    header = None
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh):
            text = raw.decode("utf-8", errors="strict").strip()
            if text:
                try:
                    obj = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise RecordFormatError(f"line {lineno + 1} is not valid JSON: {exc}",
                                            offset=offset) from exc
                if header is None:
                    header = obj
                else:
                    records.append(obj)
            offset += len(raw)
    if header is None:
        raise RecordFormatError("empty dataset: missing header line", offset=0)
    _check_header(header, offset=0)
    return header, records


# Binary value tags.
_T_NONE, _T_TRUE, _T_FALSE = b"z", b"t", b"f"
_T_INT, _T_FLOAT, _T_STR = b"i", b"d", b"s"
_T_LIST, _T_MAP, _T_ARRAY = b"l", b"m", b"a"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_DTYPE_CODES = {"float64": 0, "int64": 1}


def _encode_value(obj, out: bytearray) -> None:
    if obj is None:
        out += _T_NONE
    elif isinstance(obj, (bool, np.bool_)):
        out += _T_TRUE if obj else _T_FALSE
    elif isinstance(obj, (int, np.integer)):
        out += _T_INT + struct.pack("<q", int(obj))
    elif isinstance(obj, (float, np.floating)):
        out += _T_FLOAT + struct.pack("<d", float(obj))
    elif isinstance(obj, str):
        data = obj.encode("utf-8")
        out += _T_STR + struct.pack("<I", len(data)) + data
    elif isinstance(obj, np.ndarray):
        kind = str(obj.dtype)
        if kind not in _DTYPE_CODES:
            obj = obj.astype(np.int64 if obj.dtype.kind in "iub" else np.float64)
            kind = str(obj.dtype)
        arr = np.ascontiguousarray(obj)
        out += _T_ARRAY + struct.pack("<BB", _DTYPE_CODES[kind], arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype(_DTYPES[_DTYPE_CODES[kind]], copy=False).tobytes()
    elif isinstance(obj, (list, tuple)):
        out += _T_LIST + struct.pack("<I", len(obj))
        for item in obj:
            _encode_value(item, out)
    elif isinstance(obj, dict):
        out += _T_MAP + struct.pack("<I", len(obj))
        for key in sorted(obj):
            _encode_value(str(key), out)
            _encode_value(obj[key], out)
    else:
        raise RecordFormatError(f"cannot encode value of type {type(obj).__name__}")


class _Cursor:
    def __init__(self, data: bytes, base_offset: int):
        self.data = data
        self.pos = 0
        self.base = base_offset

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise RecordFormatError("payload truncated", offset=self.base + self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def _decode_value(cur: _Cursor):
    tag = cur.take(1)
    if tag == _T_NONE:
        return None
    if tag == _T_TRUE:
        return True
    if tag == _T_FALSE:
        return False
    if tag == _T_INT:
        return struct.unpack("<q", cur.take(8))[0]
    if tag == _T_FLOAT:
        return struct.unpack("<d", cur.take(8))[0]
    if tag == _T_STR:
        (n,) = struct.unpack("<I", cur.take(4))
        return cur.take(n).decode("utf-8")
    if tag == _T_LIST:
        (n,) = struct.unpack("<I", cur.take(4))
        return [_decode_value(cur) for _ in range(n)]
    if tag == _T_MAP:
        (n,) = struct.unpack("<I", cur.take(4))
        out = {}
        for _ in range(n):
            key = _decode_value(cur)
            out[key] = _decode_value(cur)
        return out
    if tag == _T_ARRAY:
        code, ndim = struct.unpack("<BB", cur.take(2))
        if code not in _DTYPES:
            raise RecordFormatError(f"unknown array dtype code {code}",
                                    offset=cur.base + cur.pos - 2)
        shape = struct.unpack(f"<{ndim}I", cur.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        raw = cur.take(count * _DTYPES[code].itemsize)
        return np.frombuffer(raw, dtype=_DTYPES[code]).reshape(shape).copy()
    raise RecordFormatError(f"unknown value tag {tag!r}", offset=cur.base + cur.pos - 1)


def write_binary(path: str | Path, header: dict, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC + bytes([BINARY_VERSION]))
        payload = canonical_json(header).encode("utf-8")
        fh.write(struct.pack("<II", len(payload), zlib.crc32(payload)) + payload)
        for rec in records:
            buf = bytearray()
            _encode_value(rec, buf)
            fh.write(struct.pack("<II", len(buf), zlib.crc32(bytes(buf))) + buf)
            n += 1
    return n


def _iter_frames(data: bytes) -> Iterator[tuple[int, bytes]]:
    pos = len(MAGIC) + 1
    while pos < len(data):
        if pos + 8 > len(data):
            raise RecordFormatError("truncated frame prefix", offset=pos)
        length, crc = struct.unpack_from("<II", data, pos)
        start = pos + 8
        if start + length > len(data):
            raise RecordFormatError("truncated frame payload", offset=pos)
        payload = data[start:start + length]
        if zlib.crc32(payload) != crc:
            raise RecordFormatError("frame checksum mismatch", offset=pos)
        yield start, payload
        pos = start + length


def read_binary(path: str | Path) -> tuple[dict, list[dict]]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise RecordFormatError("bad magic; not a binary dataset", offset=0)
    if data[4:5] != bytes([BINARY_VERSION]):
        raise RecordFormatError(f"unsupported binary version {data[4]}", offset=4)
    header = None
    records = []
    for start, payload in _iter_frames(data):
        if header is None:
            try:
                header = json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise RecordFormatError(f"bad header frame: {exc}", offset=start) from exc
        else:
            records.append(_decode_value(_Cursor(payload, start)))
    if header is None:
        raise RecordFormatError("empty dataset: missing header frame", offset=5)
    _check_header(header, offset=5)
    return header, records


def read_dataset(path: str | Path) -> tuple[str, dict, list[dict]]:
    """Sniff the container by magic and read it; returns (format, header, records)."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        header, records = read_binary(path)
        return "binary", header, records
    header, records = read_ndjson(path)
    return "ndjson", header, records


def _check_header(header: dict, offset: int) -> None:
    missing = {"format_version", "config_digest", "seed"} - set(header)
    if missing:
        raise RecordFormatError(f"header missing keys {sorted(missing)}", offset=offset)
    if header["format_version"] != 1:
        raise RecordFormatError(f"unsupported format_version {header['format_version']}",
                                offset=offset)


_REQUIRED_KEYS = (
    "batch", "item", "n_vars", "n_obs_vars", "T", "timestamps", "variables",
    "observational", "interventional", "intervention", "onset_index", "norm_stats", "flags",
)


def validate_record(rec: dict, index: int = 0) -> None:
    """Structural checks on one decoded record (either container)."""
    missing = [k for k in _REQUIRED_KEYS if k not in rec]
    if missing:
        raise RecordFormatError(f"record {index} missing keys {missing}")
    t, n_obs = int(rec["T"]), int(rec["n_obs_vars"])
    ts = np.asarray(rec["timestamps"], dtype=np.float64)
    obs = np.asarray(rec["observational"], dtype=np.float64)
    intr = np.asarray(rec["interventional"], dtype=np.float64)
    if ts.shape != (t,):
        raise RecordFormatError(f"record {index}: timestamps shape {ts.shape} != ({t},)")
    if np.any(np.diff(ts) <= 0.0) or ts[0] <= 0.0:
        raise RecordFormatError(f"record {index}: timestamps not strictly increasing from t>0")
    if obs.shape != (t, n_obs) or intr.shape != (t, n_obs):
        raise RecordFormatError(
            f"record {index}: value shapes {obs.shape}/{intr.shape} != ({t},{n_obs})")
    if not (np.isfinite(obs).all() and np.isfinite(intr).all() and np.isfinite(ts).all()):
        raise RecordFormatError(f"record {index}: non-finite values")
    stats = rec["norm_stats"]
    if len(stats["mean"]) != n_obs or len(stats["std"]) != n_obs:
        raise RecordFormatError(f"record {index}: norm stats sized for wrong variable count")
    if int(rec["onset_index"]) < 2:
        raise RecordFormatError(f"record {index}: onset_index < 2")
    kind = rec["intervention"]["kind"]
    if kind not in ("hard", "soft", "time_varying"):
        raise RecordFormatError(f"record {index}: unknown intervention kind {kind!r}")


def summarize_dataset(path: str | Path) -> dict:
    """Validated summary used by the CLI inspect command."""
    fmt, header, records = read_dataset(path)
    flags = {"diverged": 0, "saturated": 0, "saturated_any": 0}
    kinds: dict[str, int] = {}
    for i, rec in enumerate(records):
        validate_record(rec, index=i)
        for key in flags:
            flags[key] += bool(rec["flags"].get(key))
        kind = rec["intervention"]["kind"]
        kinds[kind] = kinds.get(kind, 0) + 1
    return {
        "format": fmt,
        "format_version": header["format_version"],
        "config_digest": header["config_digest"],
        "seed": header["seed"],
        "n_records": len(records),
        "flag_counts": flags,
        "intervention_kinds": kinds,
    }
