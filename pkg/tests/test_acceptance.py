"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line."""

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from oracles import count_parameters, expand, full_coefficient_tensor
from test_network import admissible_ranks, random_case
from ttnsel.features import detensorize_point, polynomial_map, tensorize_point
from ttnsel.harness import cli
from ttnsel.harness.experiment import load_config, run_experiment
from ttnsel.learn import ALSOptions, Dataset, fit_als
from ttnsel.network import ModelSpec, complexity, evaluate_batch, random_network
from ttnsel.select import (logNc_bound, log_plus, selection_path, slope_select,
                           theoretical_penalty_fast, theoretical_penalty_slow)
from ttnsel.tree import random_binary_tree

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"


@pytest.fixture
def verdict(capsys):
    def report(num, name, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, detail
    return report


def test_c01_evaluation_matches_expansion(verdict):
    t0, worst = time.perf_counter(), 0.0
    for seed in range(200):
        net, fm, rng = random_case(10_000 + seed, dmax=4, Nmax=4, rmax=3)
        a = full_coefficient_tensor(net)
        X = rng.uniform(size=(3, fm.d))
        got = evaluate_batch(net, fm, X)
        for x, g in zip(X, got):
            feats = [f[0] for f in fm.features(x[None])]
            ref = expand(a, feats)
            # relative to the size of the summed terms, so that cancellation near 0 is fair
            scale = expand(np.abs(a), [np.abs(f) for f in feats])
            worst = max(worst, abs(g - ref) / max(scale, 1e-300))
    dt = time.perf_counter() - t0
    verdict(1, "evaluation vs brute-force expansion", worst <= 1e-10 and dt < 30,
            f"max rel err {worst:.1e} over 600 points, {dt:.1f}s")


def _digits_exact(m, b, L):
    """floor(b^k m 2^-53) mod b with exact int64 arithmetic (m < 2^53, b^k < 2^20)."""
    hi, lo = m >> 26, m & ((1 << 26) - 1)
    out = []
    for k in range(1, L + 1):
        p = b**k
        q = (p * hi + ((p * lo) >> 26)) >> 27
        out.append(q % b)
    return np.stack(out, axis=-1)


def test_c02_tensorization_roundtrip(verdict):
    rng = np.random.default_rng(2)
    configs = [(b, L) for b in (2, 3) for L in range(1, 13)]
    per = -(-10**6 // len(configs))
    err, digit_ok, impl_time = 0.0, True, 0.0
    for b, L in configs:
        m = rng.integers(0, 2**53, size=per, dtype=np.int64)
        x = m * 2.0**-53
        t0 = time.perf_counter()
        digits, xbar = tensorize_point(x, b, L)
        back = detensorize_point(digits, xbar, b, L)
        impl_time += time.perf_counter() - t0
        err = max(err, float(np.max(np.abs(back - x))))
        digit_ok &= bool(np.array_equal(digits, _digits_exact(m, b, L)))
    ok = err <= 1e-12 and digit_ok and impl_time < 10
    verdict(2, "tensorization round-trip", ok,
            f"{per * len(configs)} points, max err {err:.1e}, digits exact={digit_ok}, "
            f"{impl_time:.1f}s")


def test_c03_complexity_counts(verdict):
    t0, bad = time.perf_counter(), 0
    for seed in range(500):
        net, fm, rng = random_case(20_000 + seed, dmax=6, Nmax=5, rmax=4)
        masks = {n: rng.random(v.shape) < rng.uniform(0.1, 0.9) for n, v in net.params.items()}
        sparse = random_network(net.tree, net.ranks, net.leaf_dims, rng, masks)
        full_ok = complexity(net) == count_parameters(net) == complexity(
            ModelSpec(net.tree, net.ranks, fm))
        sparse_ok = complexity(sparse) == count_parameters(sparse) <= complexity(net)
        bad += not (full_ok and sparse_ok)
    dt = time.perf_counter() - t0
    verdict(3, "complexity = parameter count", bad == 0 and dt < 5,
            f"{500 - bad}/500 specs agree, {dt:.1f}s")


def _planted_problem(seed):
    rng = np.random.default_rng(40_000 + seed)
    d = int(rng.integers(2, 5))
    tree = random_binary_tree(d, seed)
    N = int(rng.integers(2, 5))
    fm = polynomial_map(d, N)
    ranks = admissible_ranks(tree, [N] * d, rng, 3)
    spec = ModelSpec(tree, ranks, fm)
    true = random_network(tree, ranks, spec.leaf_dims, rng)
    n = 10 * complexity(spec)
    X = rng.uniform(size=(n, d))
    y = evaluate_batch(true, fm, X)
    return spec, Dataset(X, y / y.std())


def test_c04_als_contract(verdict):
    t0, mono, recovered = time.perf_counter(), 0, 0
    for seed in range(50):
        spec, data = _planted_problem(seed)
        rec = fit_als(spec, data, ALSOptions(max_sweeps=200, rel_tol=1e-10, restarts=5,
                                             seed=seed))
        hist = rec.meta["history"]
        mono += all(b <= a + 1e-12 * a for a, b in zip(hist, hist[1:]))
        recovered += rec.empirical_risk <= 1e-8
    dt = time.perf_counter() - t0
    ok = mono == 50 and recovered >= 45 and dt < 300
    verdict(4, "ALS monotone + planted recovery", ok,
            f"monotone {mono}/50, recovered {recovered}/50, {dt:.1f}s")


@dataclass(frozen=True)
class Rec:
    id: int
    complexity: int
    empirical_risk: float


def _brute_ids(recs, lams, n):
    C = np.array([r.complexity for r in recs], dtype=float)
    R = np.array([r.empirical_risk for r in recs])
    ids = np.array([r.id for r in recs])
    crit = R[None, :] + lams[:, None] * C[None, :] / n
    best = crit.min(axis=1, keepdims=True)
    # tie rule: among minimizers the smallest complexity, then smallest risk, then smallest id
    order = np.lexsort((ids, R, C))
    tied = crit[:, order] == best
    return ids[order][np.argmax(tied, axis=1)]


def test_c05_path_matches_grid(verdict):
    t0, rng, agree = time.perf_counter(), np.random.default_rng(5), 0
    lams = np.geomspace(1e-8, 1e8, 10**4)
    for s in range(100):
        k = int(rng.integers(1, 40))
        C = rng.integers(1, 300, size=k)
        R = rng.uniform(0, 1, size=k) * 10.0 ** rng.uniform(-6, 0)
        if s % 3 == 0:  # inject exact ties in complexity and risk
            C[k // 2:] = C[: k - k // 2]
            R[k // 3:2 * (k // 3)] = R[0]
        recs = [Rec(i, int(c), float(r)) for i, (c, r) in enumerate(zip(C, R))]
        n = int(rng.integers(1, 2000))
        path = selection_path(recs, n)
        got = np.array([path.model_at(l) for l in lams])
        agree += bool(np.array_equal(got, _brute_ids(recs, lams, n)))
    dt = time.perf_counter() - t0
    verdict(5, "hull path = brute-force grid", agree == 100 and dt < 30,
            f"{agree}/100 record sets identical on 10^4 lambdas, {dt:.1f}s")


def test_c06_staircase_jump(verdict):
    t0, hits, picks = time.perf_counter(), 0, []
    for seed in range(10):
        rng = np.random.default_rng(600 + seed)
        n = 1000
        c_star = int(rng.integers(20, 120))
        kappa = rng.uniform(0.2, 1.0)
        Cs = np.unique(rng.integers(2, 8 * c_star, size=120))
        # bias C*/C - 1 falls steeply (slope >= 1/C* > 2 kappa/n) and vanishes from C* on;
        # beyond C* only the overfitting term -kappa C/n remains, plus small noise
        R = (np.maximum(c_star / Cs - 1.0, 0.0) - kappa * Cs / n
             + 1e-3 / c_star * rng.standard_normal(len(Cs)))
        if c_star not in Cs:
            Cs, R = np.append(Cs, c_star), np.append(R, -kappa * c_star / n)
        recs = [Rec(i, int(c), float(r)) for i, (c, r) in enumerate(zip(Cs, R))]
        c = Cs[slope_select(recs, n)]
        picks.append((c_star, int(c)))
        hits += c_star <= c <= 1.5 * c_star
    dt = time.perf_counter() - t0
    verdict(6, "complexity jump on staircases", hits >= 8 and dt < 10,
            f"{hits}/10 within [C*, 1.5C*] (C*, picked) = {picks}, {dt:.2f}s")


def _benchmark(num, name, cfg_file, tmp_path, verdict, limit):
    cfg = load_config(CONFIGS / cfg_file)
    t0 = time.perf_counter()
    agg = run_experiment(cfg, tmp_path).aggregates
    dt = time.perf_counter() - t0
    ok = (agg["trials_ok"] == cfg.trials and agg["mean_excess_selected"] <= 1e-5
          and agg["excess_ratio"] <= 10 and agg["mean_trial_ratio"] <= 10)
    verdict(num, name, ok,
            f"{agg['trials_ok']}/{cfg.trials} trials, mean excess selected "
            f"{agg['mean_excess_selected']:.2e} (oracle {agg['mean_excess_oracle']:.2e}), "
            f"ratio of means {agg['excess_ratio']:.2f}, mean ratio {agg['mean_trial_ratio']:.2f}, "
            f"E(C) {agg['mean_C_selected']:.1f}, {dt:.0f}s (target < {limit}s)")


@pytest.mark.slow
def test_c07_sqrt_tensorized(tmp_path, verdict):
    _benchmark(7, "sqrt(x) tensorized, n=1000", "sqrt_tensorized.yaml", tmp_path, verdict, 900)


@pytest.mark.slow
def test_c08_corner_peak_fixed_tree(tmp_path, verdict):
    _benchmark(8, "corner peak, balanced tree, n=1000", "corner_peak_fixed_tree.yaml", tmp_path,
           verdict, 1800)


def test_c09_penalty_formulas(verdict):
    import math
    checks = []
    # slow rate: lambda_m sqrt(C/n) + 2B sqrt((wbar C + logNc)/(2n))
    C, n, B, Lp, R, w, T = 37, 5000, 1.3, 2.0, 0.7, 3.1, 5
    lnc = logNc_bound(C, 2, 4)
    lam = 4 * B * math.sqrt(2 * math.log(6 * Lp * R * T * math.sqrt(n) / B))
    want = lam * math.sqrt(C / n) + 2 * B * math.sqrt((w * C + lnc) / (2 * n))
    checks.append(math.isclose(theoretical_penalty_slow(C, n, B, Lp, R, w, lnc, T), want,
                               rel_tol=1e-12))
    checks.append(theoretical_penalty_slow(C, n, 0.0, Lp, R, w, lnc, T) == 0.0)
    # sqrt(C/n) scaling: C -> 4C doubles the leading term; logs drift by < 5%
    r = theoretical_penalty_slow(4 * C, n, B, Lp, R, w, logNc_bound(4 * C, 2, 4), T) / \
        theoretical_penalty_slow(C, n, B, Lp, R, w, lnc, T)
    checks.append(abs(r - 2) < 0.1)
    # fast rate
    C, n, eps, T, K1 = 100, 10**6, 1.0, 19, 1.0
    lnc = logNc_bound(C, 2, 10)
    b = 1 + math.log(3 * T / (4 * math.e))
    want = R**2 * (b * C / n * math.log(n / (b * C)) + (w * C + lnc) / n)
    got = theoretical_penalty_fast(C, n, R, w, eps, lnc, T, K1)
    checks.append(math.isclose(got, want, rel_tol=1e-12) and got > 0)
    ratio = theoretical_penalty_fast(C, 4 * n, R, w, eps, lnc, T) / got
    checks.append(0.25 < ratio < 0.3)  # ~ C/n log n
    # clamps: n eps^2 <= b C kills the first term; |T| <= 4e/3 gives b = 1
    checks.append(math.isclose(theoretical_penalty_fast(50, 40, 1.0, 0.0, 1.0, 2.0, 3),
                               2.0 / 40, rel_tol=1e-12))
    checks.append(math.isclose(theoretical_penalty_fast(10, 1000, 1.0, 0.0, 1.0, 0.0, 3),
                               10 / 1000 * math.log(100), rel_tol=1e-12))
    checks.append(log_plus(1.0) == 0.0 and log_plus(1 - 1e-15) == 0.0 and log_plus(0.3) == 0.0
                  and math.isclose(log_plus(1 + 1e-9), 1e-9, rel_tol=1e-6))
    # model counts
    checks.append(math.isclose(logNc_bound(10, 2, 3), 2 * 2 * (10 + 3 * math.log(10)),
                               rel_tol=1e-12))
    for c in (5, 50, 500):
        checks.append(logNc_bound(c, 3, 2, "sparse", float(c)) <= (5 * 3 + 2) * c * math.log(c)
                      * (1 + 1e-12))
    verdict(9, "penalty formulas", all(checks), f"{sum(checks)}/{len(checks)} checks hold")


def test_c10_determinism(tmp_path, verdict):
    import yaml
    cfg = {"problem": "sqrt_x", "n": 300, "gamma": 1e-3, "trials": 2, "seed": 11,
           "test_size": 5000, "candidates": {"L_range": [2, 4, 6], "steps": 8},
           "als": {"max_sweeps": 10, "restarts": 2}}
    f = tmp_path / "cfg.yaml"
    f.write_text(yaml.safe_dump(cfg))
    codes = [cli.main(["experiment", str(f), "--out", str(tmp_path / o)]) for o in "ab"]
    a, b = ((tmp_path / o / "records.csv").read_bytes() for o in "ab")
    ok = codes == [0, 0] and a == b and len(a) > 0
    verdict(10, "byte-identical records.csv", ok,
            f"exit codes {codes}, {len(a)} bytes, identical={a == b}")
