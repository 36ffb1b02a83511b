"""Model-level driver: parallel per-tensor quantization, dequantization, reports."""

from __future__ import annotations

import fnmatch
import json
import logging
import math
import multiprocessing as mp
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .io import (
    INPUT_MANIFEST,
    QUANT_MANIFEST,
    QuantIOError,
    ManifestError,
    ModelManifest,
    QuantFileError,
    TensorEntry,
    VersionMismatch,
    read_quantized,
    read_raw,
    read_tensor,
    save_manifest,
    tensor_filename,
    write_json,
    write_quantized,
    write_raw,
)
from .pipeline import MODES, dequantize_tensor, quantize_tensor
from .types import QuantConfig

log = logging.getLogger(__name__)

TENSOR_DIR = "tensors"


class InvariantError(RuntimeError):
    """A result violated a guarantee the pipeline is supposed to hold."""


@dataclass
class TensorResult:
    name: str
    rows: int
    cols: int | None
    file: str
    kind: str = "quantized"  # or "passthrough"
    role: str | None = None
    layer: int | None = None
    outliers: int = 0
    rtn_error: float = 0.0
    final_error: float = 0.0
    status: str = "ok"
    message: str = ""
    seconds: float = float("nan")

    @property
    def count(self) -> int:
        return self.rows * (self.cols or 1)

    @property
    def fraction(self) -> float:
        return self.outliers / self.count

    @property
    def reduction(self) -> float:
        return 1.0 - self.final_error / self.rtn_error if self.rtn_error > 0 else 0.0

    def manifest_entry(self) -> dict:
        d = asdict(self)
        for k in ("status", "message", "seconds"):
            d.pop(k)
        return d


@dataclass
class QuantizedModel:
    entries: list[TensorResult]
    bits: int
    mode: str
    config: dict = field(default_factory=dict)
    root: Path | None = None

    @property
    def ok(self) -> bool:
        return all(e.status == "ok" for e in self.entries)

    @property
    def failures(self) -> list[TensorResult]:
        return [e for e in self.entries if e.status != "ok"]

    def manifest_json(self) -> dict:
        return {
            "version": 1,
            "format": "EZQT",
            "bits": self.bits,
            "mode": self.mode,
            "config": self.config,
            "tensors": [e.manifest_entry() for e in self.entries],
        }


def _quantize_one(job) -> TensorResult:
    index, entry, manifest, out_dir, cfg, mode, passthrough = job
    t0 = time.perf_counter()
    res = TensorResult(entry.name, entry.rows, entry.cols, "", role=entry.role, layer=entry.layer)
    try:
        if passthrough:
            res.kind = "passthrough"
            res.file = f"{TENSOR_DIR}/{tensor_filename(index, entry.name, '.f32')}"
            a = read_raw(manifest.path_of(entry), entry.count)
            write_raw(a, out_dir / res.file)
        else:
            res.file = f"{TENSOR_DIR}/{tensor_filename(index, entry.name, '.ezqt')}"
            q = quantize_tensor(read_tensor(manifest, entry), cfg, mode)
            if not q.final_error <= q.rtn_error:
                raise InvariantError(
                    f"{entry.name}: final error {q.final_error} exceeds RTN error {q.rtn_error}"
                )
            write_quantized(q, out_dir / res.file)
            res.outliers = len(q.outliers)
            res.rtn_error, res.final_error = q.rtn_error, q.final_error
    except (QuantFileError, ValueError) as e:
        res.status, res.message = "failed", str(e)
    res.seconds = time.perf_counter() - t0
    return res


def quantize_model(
    manifest: ModelManifest,
    cfg: QuantConfig,
    out_dir,
    workers: int = 1,
    mode: str = "easyquant",
    exclude: tuple[str, ...] = (),
) -> QuantizedModel:
    """Quantize every matrix in ``manifest`` into ``out_dir``.

    Vectors and names matching an ``exclude`` glob are copied through as raw
    f32. The quantized manifest is written only when every tensor succeeds,
    and contains no timings, so the directory is identical for any worker
    count.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    out_dir = Path(out_dir)
    (out_dir / TENSOR_DIR).mkdir(parents=True, exist_ok=True)
    jobs = []
    for i, e in enumerate(manifest.tensors):
        skip = not e.is_matrix or any(fnmatch.fnmatchcase(e.name, p) for p in exclude)
        jobs.append((i, e, manifest, out_dir, cfg, mode, skip))

    if workers <= 1 or len(jobs) <= 1:
        results = [_quantize_one(j) for j in jobs]
    else:
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_quantize_one, jobs))

    for r in results:
        log.info("%s %s %.3fs %s", r.name, r.status, r.seconds, r.message)
    qm = QuantizedModel(results, cfg.bits, mode, asdict(cfg), root=out_dir)
    if qm.ok:
        write_json(out_dir / QUANT_MANIFEST, qm.manifest_json())
    return qm


def load_quantized_model(root) -> QuantizedModel:
    root = Path(root)
    path = root / QUANT_MANIFEST
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise QuantIOError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON: {e}") from e
    if doc.get("version") != 1:
        raise VersionMismatch(f"quantized manifest version {doc.get('version')!r}")
    try:
        entries = [TensorResult(**t) for t in doc["tensors"]]
    except (KeyError, TypeError) as e:
        raise ManifestError(f"{path}: malformed tensor entry: {e}") from e
    return QuantizedModel(entries, doc["bits"], doc["mode"], doc.get("config", {}), root=root)


def dequantize_model(qm: QuantizedModel, out_dir) -> ModelManifest:
    out_dir = Path(out_dir)
    (out_dir / TENSOR_DIR).mkdir(parents=True, exist_ok=True)
    entries = []
    for i, e in enumerate(qm.entries):
        fname = f"{TENSOR_DIR}/{tensor_filename(i, e.name, '.f32')}"
        src = qm.root / e.file
        if e.kind == "passthrough":
            read_raw(src, e.count)
            shutil.copyfile(src, out_dir / fname)
        else:
            q = read_quantized(src)
            if q.shape != (e.rows, e.cols):
                raise ManifestError(f"{e.name}: file shape {q.shape} != manifest {e.rows}x{e.cols}")
            write_raw(dequantize_tensor(q).data, out_dir / fname)
        entries.append(TensorEntry(e.name, e.rows, e.cols, fname, role=e.role, layer=e.layer))
    m = ModelManifest(entries, base=out_dir)
    save_manifest(m, out_dir / INPUT_MANIFEST)
    return m


# -- reports -------------------------------------------------------------------


@dataclass
class GroupRow:
    group: str
    tensors: int
    elements: int
    outliers: int
    rtn_error: float
    final_error: float

    @property
    def fraction(self) -> float:
        return self.outliers / self.elements if self.elements else 0.0

    @property
    def reduction(self) -> float:
        return 1.0 - self.final_error / self.rtn_error if self.rtn_error > 0 else 0.0


@dataclass
class Report:
    rows: list[TensorResult]
    groups: dict[str, list[GroupRow]]
    bits: int
    mode: str

    def to_json(self) -> dict:
        def tensor(r: TensorResult):
            return {
                "name": r.name,
                "shape": [r.rows] if r.cols is None else [r.rows, r.cols],
                "kind": r.kind,
                "role": r.role,
                "layer": r.layer,
                "outliers": r.outliers,
                "outlier_fraction": r.fraction,
                "rtn_error": r.rtn_error,
                "final_error": r.final_error,
                "error_reduction_pct": 100.0 * r.reduction,
            }

        def group(g: GroupRow):
            return {
                "group": g.group,
                "tensors": g.tensors,
                "elements": g.elements,
                "outliers": g.outliers,
                "outlier_fraction": g.fraction,
                "rtn_error": g.rtn_error,
                "final_error": g.final_error,
                "error_reduction_pct": 100.0 * g.reduction,
            }

        return {
            "version": 1,
            "bits": self.bits,
            "mode": self.mode,
            "tensors": [tensor(r) for r in self.rows],
            "groups": {k: [group(g) for g in v] for k, v in self.groups.items()},
        }

    def format_table(self) -> str:
        lines = [
            f"{'tensor':<32} {'shape':>13} {'outliers':>9} {'frac %':>8} "
            f"{'rtn err':>12} {'final err':>12} {'red %':>7}"
        ]
        for r in self.rows:
            shape = f"{r.rows}" if r.cols is None else f"{r.rows}x{r.cols}"
            if r.kind == "passthrough":
                lines.append(f"{r.name:<32} {shape:>13} {'(passthrough)':>9}")
                continue
            lines.append(
                f"{r.name:<32} {shape:>13} {r.outliers:>9d} {100 * r.fraction:>8.4f} "
                f"{r.rtn_error:>12.5g} {r.final_error:>12.5g} {100 * r.reduction:>7.2f}"
            )
        for key, groups in self.groups.items():
            lines.append("")
            lines.append(f"{'by ' + key:<24} {'tensors':>8} {'frac %':>8} {'rtn err':>12} {'final err':>12} {'red %':>7}")
            for g in groups:
                lines.append(
                    f"{g.group:<24} {g.tensors:>8d} {100 * g.fraction:>8.4f} "
                    f"{g.rtn_error:>12.5g} {g.final_error:>12.5g} {100 * g.reduction:>7.2f}"
                )
        return "\n".join(lines)


def _aggregate(rows: list[TensorResult], key) -> list[GroupRow]:
    acc: dict[str, GroupRow] = {}
    for r in rows:
        k = key(r)
        if k is None:
            continue
        g = acc.setdefault(k, GroupRow(k, 0, 0, 0, 0.0, 0.0))
        g.tensors += 1
        g.elements += r.count
        g.outliers += r.outliers
        g.rtn_error += r.rtn_error
        g.final_error += r.final_error
    return list(acc.values())


def model_report(
    qm: QuantizedModel,
    group_by: tuple[str, ...] = ("role", "layer"),
    patterns: dict[str, str] | None = None,
) -> Report:
    """Per-tensor outlier/error table plus aggregates.

    Groups are formed by manifest ``role``, by ``layer`` index, and by
    user globs in ``patterns`` (label -> pattern on the tensor name).
    """
    rows = list(qm.entries)
    quantized = [r for r in rows if r.kind == "quantized" and r.status == "ok"]
    groups: dict[str, list[GroupRow]] = {}
    if "role" in group_by:
        g = _aggregate(quantized, lambda r: r.role)
        if g:
            groups["role"] = g
    if "layer" in group_by:
        g = _aggregate(quantized, lambda r: None if r.layer is None else str(r.layer))
        if g:
            groups["layer"] = sorted(g, key=lambda x: int(x.group))
    if patterns:
        out = []
        for label, pat in patterns.items():
            g = _aggregate([r for r in quantized if fnmatch.fnmatchcase(r.name, pat)], lambda r: label)
            out.extend(g or [GroupRow(label, 0, 0, 0, 0.0, 0.0)])
        groups["pattern"] = out
    g = _aggregate(quantized, lambda r: "all")
    groups["total"] = g
    return Report(rows, groups, qm.bits, qm.mode)


# -- threshold sweep -----------------------------------------------------------


@dataclass
class SweepRow:
    sigma_n: float
    elements: int
    outliers: int
    rtn_error: float
    final_error: float

    @property
    def fraction(self) -> float:
        return self.outliers / self.elements if self.elements else 0.0


def sweep(manifest: ModelManifest, sigmas, cfg: QuantConfig, optimize: bool = True) -> list[SweepRow]:
    """Outlier fraction and masked reconstruction error at each sigma threshold."""
    from dataclasses import replace

    from .pipeline import easyquant_tensor, outliers_only_tensor

    rows = [SweepRow(float(n), 0, 0, 0.0, 0.0) for n in sigmas]
    for entry in manifest.tensors:
        if not entry.is_matrix:
            continue
        W = read_tensor(manifest, entry)
        for row in rows:
            c = replace(cfg, sigma_n=row.sigma_n)
            if optimize:
                q = easyquant_tensor(W, c)
            else:
                q = outliers_only_tensor(W, c)
            row.elements += W.rows * W.cols
            row.outliers += len(q.outliers)
            row.rtn_error = math.fsum([row.rtn_error, q.rtn_error])
            row.final_error = math.fsum([row.final_error, q.final_error])
    return rows
