"""The fourteen acceptance criteria, each at its stated tolerance.

Every test records one pass/fail line through the ``report`` fixture; the
lines are repeated in a summary section at the end of the pytest run.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from dynperc.cli import main
from dynperc.correlations import (
    SingularInstance,
    alpha_zero,
    correlation_curve,
    d_of_alpha,
    scan_exceptional,
    singular_bound,
    stationarity_check,
)
from dynperc.dynamics import Iid, PowerLaw, build_kernel, duality_check, sprinkle_conditional, sprinkle_density
from dynperc.lattice import BOND, TRIANGULAR, torus
from dynperc.percolation import (
    ArmSpec,
    CrossingEvent,
    ParityFunction,
    estimate_arm_patterns,
    estimate_one_arm,
    fit_exponent,
)
from dynperc.spectral_exact import (
    BooleanTable,
    annulus_bound_check,
    inverse_walsh,
    jp_identity_check,
    one_arm_table,
    random_jp_instance,
    random_structure,
    walsh_transform,
)
from dynperc.spectral_mc import clustering_profile, conditioned_fourarm_ladder
from dynperc.stats import RngStream

SEED = 20241018

# r0 = R/2 over r0 = R + 2 clustering fraction at R = 64, from a 10^6-sample calibration
# run of clustering_profile (0.337714 / 0.357445)
CLUSTER_FRACTION_R64 = 0.9448


def test_01_walsh_identities(report):
    gen = RngStream(SEED, 1).generator()
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(gen.integers(0, 13))
        values = gen.normal(size=1 << n) if gen.random() < 0.5 else (gen.random(1 << n) < 0.5).astype(float)
        m = walsh_transform(BooleanTable(tuple(range(n)), values))
        parseval = abs(m.masses.sum() - np.mean(values ** 2))
        double = np.max(np.abs(inverse_walsh(m) - values))
        worst = max(worst, parseval, double)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 5
    assert report(1, ok, f"max deviation {worst:.2e} over 1000 tables, {elapsed:.2f} s")


def test_02_jp_identity(report):
    gen = RngStream(SEED, 2).generator()
    start = time.perf_counter()
    worst = max(jp_identity_check(*random_jp_instance(gen, 10, 4))[2] for _ in range(1000))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 30
    assert report(2, ok, f"max_abs_diff {worst:.2e} over 1000 instances, {elapsed:.2f} s")


@pytest.mark.slow
def test_03_duality(report):
    K = build_kernel(PowerLaw(0.5), torus(TRIANGULAR, 8))
    gen = RngStream(SEED, 3).generator()
    start = time.perf_counter()
    worst, fails = 0.0, 0
    for i in range(20):
        size = int(gen.integers(1, 4))
        S = sorted(gen.choice(K.n, size, replace=False).tolist())
        for j, t in enumerate((0.25, 1.0)):
            lhs, rhs = duality_check(S, S, K, t, 100_000, RngStream(SEED, 3).spawn(i, j))
            sigma = math.hypot(lhs.std_error, rhs.std_error)
            z = abs(lhs.mean - rhs.mean) / sigma if sigma > 0 else (0.0 if lhs.mean == rhs.mean else math.inf)
            worst = max(worst, z)
            fails += z > 3
    elapsed = time.perf_counter() - start
    assert report(3, fails == 0, f"40 comparisons, worst |lhs - rhs| = {worst:.2f} sigma, {elapsed:.0f} s")


def test_04_iid_diagonal(report):
    cells = [(0, 0), (1, 0), (0, 1)]
    worst, fails = 0.0, 0
    for size in (1, 2, 3):
        f = ParityFunction(TRIANGULAR, cells[:size])
        curve = correlation_curve(f, Iid(), [0.5, 1.0], 100_000, RngStream(SEED, 4).spawn(size))
        for t, est in zip(curve.t_grid, curve.values):
            z = abs(est.mean - math.exp(-t * size)) / est.std_error
            worst = max(worst, z)
            fails += z > 3
    assert report(4, fails == 0, f"|S| in 1..3, t in {{0.5, 1}}: worst deviation {worst:.2f} sigma")


@pytest.mark.slow
def test_05_stationarity(report):
    K = build_kernel(PowerLaw(0.5), torus(TRIANGULAR, 32))
    f = CrossingEvent(TRIANGULAR, 8)
    (v0, v1), conserved = stationarity_check(f, K, [0.0, 1.0], 100_000, RngStream(SEED, 5))
    sigma = math.hypot(v0.std_error, v1.std_error)
    z = abs(v1.mean - v0.mean) / sigma
    ok = conserved and z <= 3
    assert report(5, ok, f"crossing t=0 {v0.mean:.4f}, t=1 {v1.mean:.4f} ({z:.2f} sigma), "
                         f"particle count conserved: {conserved}")


@pytest.mark.slow
def test_06_half_plane_three_arms(report):
    radii = [4, 8, 16, 32]
    start = time.perf_counter()
    pats = estimate_arm_patterns(ArmSpec(3, "half"), radii, 128, n_samples=100_000, rng=RngStream(SEED, 6))
    elapsed = time.perf_counter() - start
    slopes = {c: fit_exponent(radii, pats[c]).slope for c in (1, -1)}
    ok = all(1.6 <= s <= 2.4 for s in slopes.values()) and elapsed <= 600
    assert report(6, ok, f"slope open-first {slopes[1]:.3f}, closed-first {slopes[-1]:.3f}, {elapsed:.0f} s")


@pytest.mark.slow
def test_07_one_arm_exponent(report):
    radii = [32, 64, 128, 256, 512]
    start = time.perf_counter()
    ests = estimate_one_arm(radii, 40_000, RngStream(SEED, 7))
    elapsed = time.perf_counter() - start
    exponent = -fit_exponent(radii, ests).slope
    ok = 0.05 <= exponent <= 0.16 and elapsed <= 1800
    assert report(7, ok, f"one-arm exponent {exponent:.4f} (5/48 = {5 / 48:.4f}), {elapsed:.0f} s")


@pytest.mark.slow
def test_08_fourarm_sandwich(report):
    radii = [4, 8, 16, 32]
    lad = conditioned_fourarm_ladder(radii, 128, 10_000, RngStream(SEED, 8))
    inside = all(a.mean ** 2 - 3 * b.std_error <= b.mean <= a.mean + 3 * b.std_error
                 for a, b in zip(lad.alpha, lad.beta))
    slope = fit_exponent(radii, lad.beta).slope
    ok = inside and 0.95 < slope < 2.8
    detail = ", ".join(f"r={r:g}: {a.mean:.4f}/{b.mean:.4f}" for r, a, b in zip(radii, lad.alpha, lad.beta))
    assert report(8, ok, f"alpha4/beta4 {detail}; beta4 exponent {slope:.3f}")


def test_09_singular_bound(report):
    gen = RngStream(SEED, 9).generator()
    start = time.perf_counter()
    violations = sum(not singular_bound(SingularInstance.random(gen), check=False).holds for _ in range(10_000))
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 10
    assert report(9, ok, f"{violations} violations in 10^4 instances, {elapsed:.2f} s")


def test_10_constants(report, capsys):
    exact = d_of_alpha(0) == Fraction(31, 36) and d_of_alpha(Fraction(217, 816)) == 0
    code = main(["constants"])
    out = capsys.readouterr().out
    printed = code == 0 and "alpha_0: 217/816" in out and str(alpha_zero()) == "217/816"
    assert report(10, exact and printed, "d(0) = 31/36, d(217/816) = 0, alpha_0 printed as 217/816")


@pytest.mark.slow
def test_11_clustering_profile(report):
    R = 64
    r0s = [2, 4, 8, 16, 32, 66]
    prof = clustering_profile(R, r0s, 20_000, RngStream(SEED, 11))
    ests = [e for _, e in prof]
    monotone = all(b.mean >= a.mean - 3 * math.hypot(a.std_error, b.std_error) for a, b in zip(ests, ests[1:]))
    ref = estimate_one_arm([R], 100_000, RngStream(SEED, 11).spawn(1))[0]
    end = ests[-1]
    endpoint = abs(end.mean - ref.mean) <= 3 * math.hypot(end.std_error, ref.std_error)
    half = ests[r0s.index(32)]
    frac = half.mean / end.mean
    frac_se = frac * math.hypot(half.std_error / half.mean, end.std_error / end.mean)
    regression = abs(frac - CLUSTER_FRACTION_R64) <= 3 * frac_se
    ok = monotone and endpoint and regression
    assert report(11, ok, f"monotone {monotone}; endpoint {end.mean:.4f} vs alpha_1(64) {ref.mean:.4f}; "
                          f"R/2 fraction {frac:.4f} vs frozen {CLUSTER_FRACTION_R64}")


@pytest.mark.slow
def test_12_scan_stationarity(report):
    est, _ = scan_exceptional(16, PowerLaw(0.5), 10.0, RngStream(SEED, 12), n_trajectories=100)
    ref = estimate_one_arm([16], 100_000, RngStream(SEED, 12).spawn(1))[0]
    z = abs(est.mean - ref.mean) / math.hypot(est.std_error, ref.std_error)
    assert report(12, z <= 3, f"hold fraction {est.mean:.4f} +- {est.std_error:.4f} vs alpha_1(16) "
                              f"{ref.mean:.4f} ({z:.2f} sigma)")


def test_13_sprinkling(report):
    K = build_kernel(PowerLaw(0.5), torus(TRIANGULAR, 16))
    gen = RngStream(SEED, 13).generator()
    bound = sprinkle_density(0.5, 0.05)
    near = [K.region.index(c) for c in [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1), (2, 0), (0, 2)]]
    worst, fails = -math.inf, 0
    for i in range(20):
        k = int(gen.integers(1, 5))
        cells = gen.choice(near, k, replace=False).tolist()
        pattern = gen.choice([-1, 1], k).tolist()
        est = sprinkle_conditional(K, cells, pattern, 0, 0.05, 200_000, RngStream(SEED, 13).spawn(i))
        margin = (est.mean - bound) / est.std_error
        worst = max(worst, margin)
        fails += est.mean > bound + 3 * est.std_error
    assert report(13, fails == 0, f"20 patterns, largest (freq - {bound:.2f}) = {worst:.2f} sigma")


@pytest.mark.slow
def test_14_structure_bound(report):
    cases = [(TRIANGULAR, Fraction(1)), (TRIANGULAR, Fraction(5, 4)), (BOND, Fraction(1, 2))]
    tables = {i: one_arm_table(m, R) for i, (m, R) in enumerate(cases)}
    gen = RngStream(SEED, 14).generator()
    fails, nonempty = 0, 0
    for i in range(100):
        c = i % len(cases)
        model, R = cases[c]
        st = random_structure(model, R, gen)
        nonempty += bool(st.annuli or st.decorating)
        b = annulus_bound_check(tables[c], st, 4000, RngStream(SEED, 14).spawn(i))
        fails += not b.holds
    assert report(14, fails == 0, f"{fails} violations over 100 structures ({nonempty} with annuli)")
