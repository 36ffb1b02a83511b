"""File formats: input manifest, raw f32 tensors, the EZQT tensor container.

EZQT layout, little-endian::

    magic "EZQT" | version u32 | bits u8 | pad 3 | sigma_n f32 | mean f64 | std f64
    rows u64 | cols u64 | scales cols*f32 | outlier_count u64
    outliers count*(row u32, col u32, value f32), sorted by (row, col)
    packed levels (bits == 4: ceil(rows*cols/2) bytes, else rows*cols bytes)
"""

from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .outliers import is_outlier
from .rtn import packed_size
from .types import ChannelScales, DenseMatrix, OutlierSet, QuantizedWeight

MAGIC = b"EZQT"
FORMAT_VERSION = 1
MANIFEST_VERSION = 1
HEADER = struct.Struct("<4sIB3xfddQQ")
OUTLIER_DTYPE = np.dtype([("row", "<u4"), ("col", "<u4"), ("value", "<f4")])
QUANT_MANIFEST = "quantized_manifest.json"
INPUT_MANIFEST = "manifest.json"


class QuantFileError(Exception):
    """Base class for unreadable or invalid files."""


class QuantIOError(QuantFileError):
    pass


class FormatViolation(QuantFileError):
    def __init__(self, section: str, offset: int, message: str):
        super().__init__(f"{section} @ byte {offset}: {message}")
        self.section = section
        self.offset = offset


class VersionMismatch(QuantFileError):
    pass


class ManifestError(QuantFileError):
    pass


# -- EZQT tensor files ---------------------------------------------------------


def encode_quantized(q: QuantizedWeight) -> bytes:
    o = q.outliers
    recs = np.empty(len(o), dtype=OUTLIER_DTYPE)
    recs["row"], recs["col"], recs["value"] = o.row, o.col, o.value
    parts = [
        HEADER.pack(MAGIC, FORMAT_VERSION, q.bits, o.sigma_n, o.mean, o.std, q.rows, q.cols),
        q.scales.scales.astype("<f4").tobytes(),
        struct.pack("<Q", len(o)),
        recs.tobytes(),
        q.packed_levels,
    ]
    return b"".join(parts)


def decode_quantized(buf: bytes) -> QuantizedWeight:
    if len(buf) < HEADER.size:
        if len(buf) >= 4 and buf[:4] != MAGIC:
            raise FormatViolation("magic", 0, f"bad magic {buf[:4]!r}")
        raise FormatViolation("header", len(buf), f"file is {len(buf)} bytes, header needs {HEADER.size}")
    magic, version, bits, sigma_n, mean, std, rows, cols = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatViolation("magic", 0, f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, this reader handles {FORMAT_VERSION}")
    if not 2 <= bits <= 8:
        raise FormatViolation("header", 8, f"bits {bits} outside [2, 8]")
    if rows < 1 or cols < 1:
        raise FormatViolation("header", 32, f"bad shape {rows}x{cols}")
    off = HEADER.size

    end = off + 4 * cols
    if len(buf) < end:
        raise FormatViolation("scales", len(buf), f"truncated, need {end} bytes")
    scales = np.frombuffer(buf, dtype="<f4", count=cols, offset=off).astype(np.float32)
    if not (np.isfinite(scales).all() and (scales > 0).all()):
        bad = int(np.flatnonzero(~(np.isfinite(scales) & (scales > 0)))[0])
        raise FormatViolation("scales", off + 4 * bad, "non-positive or non-finite scale")
    off = end

    if len(buf) < off + 8:
        raise FormatViolation("outlier_count", len(buf), "truncated")
    (count,) = struct.unpack_from("<Q", buf, off)
    off += 8
    end = off + count * OUTLIER_DTYPE.itemsize
    if len(buf) < end:
        raise FormatViolation("outliers", len(buf), f"truncated, {count} records need {end} bytes")
    recs = np.frombuffer(buf, dtype=OUTLIER_DTYPE, count=count, offset=off)
    r = recs["row"].astype(np.int64)
    c = recs["col"].astype(np.int64)
    v = recs["value"].astype(np.float32)
    if count:
        if r.max() >= rows or c.max() >= cols:
            i = int(np.flatnonzero((r >= rows) | (c >= cols))[0])
            raise FormatViolation("outliers", off + i * 12, "coordinate out of bounds")
        flat = r * cols + c
        desc = np.flatnonzero(np.diff(flat) <= 0)
        if desc.size:
            raise FormatViolation("outliers", off + (int(desc[0]) + 1) * 12, "records not strictly sorted")
        ok = is_outlier(v, mean, std, sigma_n)
        if not ok.all():
            i = int(np.flatnonzero(~ok)[0])
            raise FormatViolation("outliers", off + i * 12, "value does not meet the sigma criterion")
    off = end

    need = packed_size(rows * cols, bits)
    if len(buf) - off != need:
        raise FormatViolation("levels", off, f"{len(buf) - off} level bytes, expected {need}")
    packed = bytes(buf[off:])
    if bits < 8 and bits != 4:
        top = max(packed) if packed else 0
        if top > 2**bits - 1:
            raise FormatViolation("levels", off + packed.index(top), "level out of range")

    return QuantizedWeight(
        rows=rows,
        cols=cols,
        bits=bits,
        packed_levels=packed,
        scales=ChannelScales(scales),
        outliers=OutlierSet((rows, cols), r, c, v, mean=mean, std=std, sigma_n=sigma_n),
    )


def write_quantized(q: QuantizedWeight, path) -> None:
    try:
        Path(path).write_bytes(encode_quantized(q))
    except OSError as e:
        raise QuantIOError(f"cannot write {path}: {e}") from e


def read_quantized(path) -> QuantizedWeight:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise QuantIOError(f"cannot read {path}: {e}") from e
    return decode_quantized(buf)


# -- input manifest and raw tensors -------------------------------------------


@dataclass
class TensorEntry:
    name: str
    rows: int
    cols: int | None
    file: str
    dtype: str = "f32"
    role: str | None = None
    layer: int | None = None

    @property
    def is_matrix(self) -> bool:
        return self.cols is not None

    @property
    def count(self) -> int:
        return self.rows * (self.cols or 1)


@dataclass
class ModelManifest:
    tensors: list[TensorEntry]
    base: Path = field(default_factory=Path)
    version: int = MANIFEST_VERSION

    def path_of(self, entry: TensorEntry) -> Path:
        return self.base / entry.file

    def to_json(self) -> dict:
        out = []
        for t in self.tensors:
            d = asdict(t)
            out.append({k: v for k, v in d.items() if v is not None or k == "cols"})
        return {"version": self.version, "tensors": out}


def load_manifest(path, check_files: bool = True) -> ModelManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise QuantIOError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON: {e}") from e
    if doc.get("version") != MANIFEST_VERSION:
        raise VersionMismatch(f"manifest version {doc.get('version')!r}, expected {MANIFEST_VERSION}")
    entries, seen = [], set()
    for i, t in enumerate(doc.get("tensors", [])):
        try:
            e = TensorEntry(
                name=str(t["name"]),
                rows=int(t["rows"]),
                cols=None if t.get("cols") is None else int(t["cols"]),
                file=str(t["file"]),
                dtype=t.get("dtype", "f32"),
                role=t.get("role"),
                layer=None if t.get("layer") is None else int(t["layer"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ManifestError(f"{path}: tensor #{i} malformed: {err}") from err
        if e.name in seen:
            raise ManifestError(f"{path}: duplicate tensor name {e.name!r}")
        if e.dtype != "f32":
            raise ManifestError(f"{path}: tensor {e.name!r} has dtype {e.dtype!r}, only f32 is supported")
        if e.rows < 1 or (e.cols is not None and e.cols < 1):
            raise ManifestError(f"{path}: tensor {e.name!r} has an empty shape")
        seen.add(e.name)
        entries.append(e)
    m = ModelManifest(entries, base=path.parent)
    if check_files:
        missing = [e.file for e in entries if not m.path_of(e).is_file()]
        if missing:
            raise QuantIOError(f"{path}: missing tensor files {missing}")
    return m


def save_manifest(m: ModelManifest, path) -> None:
    Path(path).write_text(json.dumps(m.to_json(), indent=2) + "\n")


def read_raw(path, count: int) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise QuantIOError(f"cannot read {path}: {e}") from e
    if len(buf) != 4 * count:
        raise FormatViolation("data", min(len(buf), 4 * count), f"{path}: {len(buf)} bytes, expected {4 * count}")
    a = np.frombuffer(buf, dtype="<f4").astype(np.float32)
    if not np.isfinite(a).all():
        raise FormatViolation("data", 4 * int(np.flatnonzero(~np.isfinite(a))[0]), f"{path}: non-finite value")
    return a


def read_tensor(m: ModelManifest, entry: TensorEntry) -> DenseMatrix:
    a = read_raw(m.path_of(entry), entry.count)
    return DenseMatrix(a.reshape(entry.rows, entry.cols))


def write_raw(a: np.ndarray, path) -> None:
    Path(path).write_bytes(np.ascontiguousarray(a, dtype="<f4").tobytes())


def tensor_filename(index: int, name: str, suffix: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", name)
    return f"{index:05d}_{safe}{suffix}"


def write_json(path, doc) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    os.replace(tmp, path)
