"""Synthetic model directories for tests, benchmarks and experiments."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import INPUT_MANIFEST, ModelManifest, TensorEntry, save_manifest, tensor_filename, write_raw

ROLES = ("attn.qkv", "attn.out", "mlp.up", "mlp.down")


def planted_gaussian(rng, rows: int, cols: int, ratio: float = 0.005, lo: float = 10.0, hi: float = 50.0):
    """Unit Gaussian with ``ratio`` of the entries replaced by +-[lo, hi] sigma spikes.

    Returns the float32 matrix and the sorted flat indices of the spikes.
    """
    W = rng.standard_normal((rows, cols))
    n = int(round(ratio * W.size))
    idx = np.sort(rng.choice(W.size, size=n, replace=False))
    W.flat[idx] = rng.uniform(lo, hi, n) * rng.choice([-1.0, 1.0], n)
    return W.astype(np.float32), idx


def write_model(out_dir, tensors: dict, roles: dict | None = None, layers: dict | None = None) -> Path:
    """Write ``name -> array`` as raw f32 files plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)
    roles, layers = roles or {}, layers or {}
    entries = []
    for i, (name, a) in enumerate(tensors.items()):
        a = np.asarray(a, dtype=np.float32)
        if a.ndim not in (1, 2):
            raise ValueError(f"{name}: only 1-D and 2-D tensors are supported")
        fname = f"tensors/{tensor_filename(i, name, '.f32')}"
        write_raw(a, out_dir / fname)
        cols = a.shape[1] if a.ndim == 2 else None
        entries.append(TensorEntry(name, a.shape[0], cols, fname, role=roles.get(name), layer=layers.get(name)))
    path = out_dir / INPUT_MANIFEST
    save_manifest(ModelManifest(entries, base=out_dir), path)
    return path


def synthetic_model(
    out_dir,
    layers: int = 5,
    shape=(256, 256),
    ratio: float = 0.005,
    seed: int = 0,
    with_vectors: bool = False,
) -> Path:
    """A transformer-shaped toy model: ``len(ROLES)`` planted matrices per layer."""
    rng = np.random.default_rng(seed)
    tensors, roles, lay = {}, {}, {}
    for layer in range(layers):
        for role in ROLES:
            name = f"layers.{layer}.{role}.weight"
            tensors[name], _ = planted_gaussian(rng, *shape, ratio=ratio)
            roles[name], lay[name] = role, layer
        if with_vectors:
            name = f"layers.{layer}.norm.weight"
            tensors[name] = 1.0 + 0.1 * rng.standard_normal(shape[1])
            lay[name] = layer
    return write_model(out_dir, tensors, roles, lay)
