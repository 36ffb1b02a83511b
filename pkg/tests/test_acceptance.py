"""Acceptance criteria, each at its stated tolerance.

Every test prints a single ``[acceptance] N ... PASS|FAIL`` line (visible
even without ``-s``) before asserting.
"""

import time

import numpy as np
import pytest

from ezquant import DenseMatrix, QuantConfig, detect_outliers
from ezquant.bench import dequant_bench
from ezquant.gradcheck import run_gradcheck
from ezquant.io import (
    FormatViolation,
    VersionMismatch,
    decode_quantized,
    encode_quantized,
    load_manifest,
    read_quantized,
    write_quantized,
)
from ezquant.model import quantize_model
from ezquant.optimize import grid_errors, optimize_channel_range, optimize_ranges
from ezquant.pipeline import dequantize_tensor, easyquant_tensor, outliers_only_tensor, rtn_tensor
from ezquant.rtn import channel_errors
from ezquant.synthetic import planted_gaussian, synthetic_model

from test_io import GOLDEN, FIXTURES

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] {n:>2} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def planted_suite():
    """50 fixed-seed 512x512 Gaussian matrices with 0.5% planted 10-50 sigma spikes."""
    cfg = QuantConfig()
    out = []
    for seed in range(50):
        W = DenseMatrix(planted_gaussian(np.random.default_rng(seed), 512, 512, ratio=0.005)[0])
        out.append((easyquant_tensor(W, cfg), outliers_only_tensor(W, cfg), rtn_tensor(W, cfg)))
    return out


def test_1_gradient_correctness(report):
    res = run_gradcheck(trials=1000, seed=0)
    ok = res.trials >= 1000 and res.pass_rate >= 0.999 and res.seconds < 10
    report(1, ok, f"{res.passed}/{res.trials} within 1e-3 (worst {res.worst:.2e}), {res.seconds:.2f}s")
    assert ok


def test_2_oracle_near_optimality(report):
    cfg = QuantConfig()
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    ratios = []
    for _ in range(100):
        x = rng.standard_normal(1024)
        s, _ = optimize_channel_range(x, [], cfg)
        e = channel_errors(x[None, :], np.array([s]), None, cfg.l_min, cfg.l_max)[0]
        _, grid = grid_errors(x, [], cfg, grid_points=2000)
        ratios.append(e / grid.min())
    secs = time.perf_counter() - t0
    ratios = np.array(ratios)
    over = int(np.sum(ratios > 1.05))
    ok = over == 0 and secs < 60
    report(2, ok, f"{100 - over}/100 channels <= 1.05x oracle (worst {ratios.max():.4f}, "
                  f"mean {ratios.mean():.4f}), {secs:.1f}s")
    assert ok


def test_3_dominance_over_rtn(report, planted_suite):
    dominated = all(eq.final_error <= eq.rtn_error for eq, _, _ in planted_suite)
    red = np.array([1 - eq.final_error / eq.rtn_error for eq, _, _ in planted_suite])
    ok = dominated and red.mean() >= 0.20
    report(3, ok, f"final<=rtn on {'all' if dominated else 'NOT all'} 50 tensors, "
                  f"mean reduction {100 * red.mean():.2f}% (need >= 20%), range "
                  f"[{100 * red.min():.2f}, {100 * red.max():.2f}]%")
    assert ok


def test_4_outlier_statistics(report):
    W = DenseMatrix(np.random.default_rng(0).standard_normal((1000, 1000)))
    frac = {n: len(detect_outliers(W, QuantConfig(sigma_n=n))) / 1e6 for n in (1, 2, 3, 4)}
    want = {1: 0.3173, 2: 0.0455, 4: 0.0000633}
    ok = 0.0017 <= frac[3] <= 0.0037
    ok &= all(abs(frac[n] / want[n] - 1) <= 0.15 for n in want)
    report(4, ok, "  ".join(f"n={n}: {100 * f:.4f}%" for n, f in frac.items()))
    assert ok


def test_5_exact_outliers(report):
    rng = np.random.default_rng(5)
    cfg = QuantConfig(steps=5, sigma_n=2.5)
    bad = checked = 0
    for _ in range(1000):
        r, c = rng.integers(2, 40, size=2)
        W = rng.standard_normal((r, c)) * np.exp(rng.uniform(-5, 3))
        if rng.random() < 0.5:
            W, _ = planted_gaussian(rng, r, c, ratio=0.02)
        W = DenseMatrix(W)
        q = decode_quantized(encode_quantized(easyquant_tensor(W, cfg)))
        m = q.outliers.mask()
        checked += int(m.sum())
        bad += W.data[m].tobytes() != dequantize_tensor(q).data[m].tobytes()
    ok = bad == 0 and checked > 0
    report(5, ok, f"1000 matrices, {checked} outliers, {bad} mismatching round trips")
    assert ok


def test_6_format(report, tmp_path):
    W = DenseMatrix(planted_gaussian(np.random.default_rng(6), 64, 48, ratio=0.01)[0])
    q = easyquant_tensor(W, QuantConfig(steps=20))
    write_quantized(q, tmp_path / "t.ezqt")
    roundtrip = read_quantized(tmp_path / "t.ezqt") == q
    roundtrip &= encode_quantized(read_quantized(tmp_path / "t.ezqt")) == (tmp_path / "t.ezqt").read_bytes()
    golden = (FIXTURES / "golden_1x2.ezqt").read_bytes() == GOLDEN
    golden &= encode_quantized(easyquant_tensor(DenseMatrix([[1.0, 100.0]]), QuantConfig(sigma_n=1))) == GOLDEN

    def category(buf):
        try:
            decode_quantized(buf)
        except FormatViolation as e:
            return e.section
        except VersionMismatch:
            return "version"
        return None

    cases = {
        "magic": b"XXXX" + GOLDEN[4:],
        "version": GOLDEN[:4] + b"\x07" + GOLDEN[5:],
        "header": GOLDEN[:30],
        "outliers": GOLDEN[:70],
        "levels": GOLDEN + b"\x00",
    }
    got = {want: category(buf) for want, buf in cases.items()}
    cats = all(k == v for k, v in got.items())
    ok = roundtrip and golden and cats
    report(6, ok, f"round trip {roundtrip}, golden {golden}, corruption categories {got}")
    assert ok


def test_7_parallel_determinism(report, tmp_path):
    m = load_manifest(synthetic_model(tmp_path / "in", layers=5, shape=(128, 96), seed=7))
    assert len(m.tensors) == 20
    trees = {}
    for w in (1, 4, 8):
        out = tmp_path / f"w{w}"
        quantize_model(m, QuantConfig(), out, workers=w)
        trees[w] = {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
    ok = trees[1] == trees[4] == trees[8] and len(trees[1]) == 21
    report(7, ok, f"{len(trees[1])} files, workers 1/4/8 byte-identical: {ok}")
    assert ok


def test_8_scale_trajectory(report):
    # sigma 0.19 puts s0 near 0.08, the magnitude of real LLM weight columns;
    # lr 1e-3 then gives Adam's ~lr-sized steps room to settle within 200 steps
    xt = np.random.default_rng(8).standard_normal((200, 1024)) * 0.19
    res = optimize_ranges(xt, None, QuantConfig(), record=True)
    tail = res.trace_scales[-21:]
    drift = tail.max(axis=0) - tail.min(axis=0)
    settled = float(np.mean(drift < 1e-4 * res.initial))
    below = bool(np.all(res.scales < res.initial))
    ok = below and settled >= 0.95
    report(8, ok, f"optimized < initial on all channels: {below}; settled {100 * settled:.1f}% "
                  f"(mean s/s0 {np.mean(res.scales / res.initial):.4f})")
    assert ok


def test_9_dequant_overhead(report):
    rows = dequant_bench(2048, 4096, (0.0001, 0.001, 0.005, 0.01, 0.05, 0.1), repetitions=15, seed=0)
    sc = [r.scatter_ms for r in rows]
    mono = all(a <= b for a, b in zip(sc, sc[1:]))
    at1 = next(r for r in rows if r.ratio == 0.01)
    ok = mono and at1.overhead_pct < 10
    report(9, ok, "scatter ms " + ", ".join(f"{s:.3f}" for s in sc)
           + f"; overhead at 1%: {at1.overhead_pct:.2f}% (dequant {at1.dequant_ms:.1f} ms)")
    assert ok


def test_10_ablation_ordering(report, planted_suite):
    strict = [eq.final_error < oo.final_error < rt.final_error for eq, oo, rt in planted_suite]
    frac = float(np.mean(strict))
    ok = frac >= 0.9
    report(10, ok, f"EasyQuant < outliers-only < RTN strictly on {sum(strict)}/{len(strict)} tensors")
    assert ok
