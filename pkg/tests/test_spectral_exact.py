import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynperc.dynamics import PowerLaw, build_kernel
from dynperc.lattice import BOND, TRIANGULAR, Annulus, AnnulusKind, torus
from dynperc.spectral_exact import (
    BooleanTable,
    OverlapError,
    SizeCap,
    Structure,
    StructureError,
    ZeroFunction,
    annulus_bound_check,
    conditional_second_moment,
    crossing_table,
    enumerate_states,
    exclusion_correlation_spectral,
    fwht,
    grid_crossing_table,
    hit_avoid_mass,
    iid_correlation_exact,
    inverse_walsh,
    jp_identity_check,
    one_arm_table,
    random_jp_instance,
    random_structure,
    spectral_sample,
    validate_structure,
    walsh_transform,
)
from dynperc.stats import RngStream


def brute_coefficients(values):
    """hat h(S) = 2^-n sum_x h(x) prod_{i in S} (2 x_i - 1), looping over all (S, x)."""
    n = len(values).bit_length() - 1
    states = enumerate_states(n).astype(int)
    out = np.zeros(len(values))
    for S in range(len(values)):
        chi = np.ones(len(values))
        for i in range(n):
            if (S >> i) & 1:
                chi *= 2 * states[:, i] - 1
        out[S] = np.mean(values * chi)
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 7), st.integers(0, 2 ** 32 - 1))
def test_transform_matches_brute_force(n, seed):
    values = np.random.default_rng(seed).normal(size=1 << n)
    m = walsh_transform(BooleanTable(tuple(range(n)), values))
    assert np.allclose(m.coefficients, brute_coefficients(values))
    assert m.masses.sum() == pytest.approx(np.mean(values ** 2))
    assert np.allclose(inverse_walsh(m), values)


def test_fwht_involution():
    x = np.random.default_rng(0).normal(size=64)
    assert np.allclose(fwht(fwht(x)) / 64, x)
    with pytest.raises(ValueError):
        fwht(np.ones(6))


def test_and_and_majority_coefficients():
    assert np.allclose(walsh_transform(BooleanTable.conjunction(2)).coefficients, 0.25)
    maj = walsh_transform(BooleanTable.majority(3)).coefficients
    expect = np.zeros(8)
    expect[0] = 0.5
    expect[[1, 2, 4]] = 0.25
    expect[7] = -0.25
    assert np.allclose(maj, expect)


def test_parity_is_a_single_atom():
    m = walsh_transform(BooleanTable.parity(5, [0, 3]))
    assert m.weights[0b1001] == 1.0 and m.weights.sum() == 1.0


def test_zero_function_has_no_sample():
    m = walsh_transform(BooleanTable((0, 1), np.zeros(4)))
    with pytest.raises(ZeroFunction):
        spectral_sample(m, 0)


def test_spectral_sample_frequencies():
    m = walsh_transform(BooleanTable.majority(3))
    draws = spectral_sample(m, RngStream(1), size=100_000)
    freq = np.bincount(draws, minlength=8) / len(draws)
    assert np.max(np.abs(freq - m.weights)) < 0.01
    assert freq[[3, 5, 6]].sum() == 0


def test_size_cap():
    with pytest.raises(SizeCap):
        BooleanTable(tuple(range(25)), np.zeros(1))


def test_small_tables():
    assert one_arm_table(TRIANGULAR, 0).values.mean() == 1.0
    # self-dual rhombus: crossing probability exactly 1/2
    assert grid_crossing_table(3, 3).values.mean() == 0.5
    # crossing events are increasing: opening any cell never destroys a crossing
    h = crossing_table(TRIANGULAR, 1)
    idx = np.arange(1 << h.n)
    for i in range(h.n):
        off = idx[(idx >> i) & 1 == 0]
        assert np.all(h.values[off | (1 << i)] >= h.values[off])


def test_conditional_second_moment_brute_force():
    gen = np.random.default_rng(2)
    values = gen.normal(size=16)
    states = enumerate_states(4)
    keep = 0b0101
    key = [tuple(s[[0, 2]]) for s in states]
    means = {k: np.mean([v for v, kk in zip(values, key) if kk == k]) for k in set(key)}
    expect = np.mean([means[k] ** 2 for k in key])
    assert conditional_second_moment(values, 4, keep) == pytest.approx(expect)


def test_hit_avoid_brute_force():
    values = np.random.default_rng(3).normal(size=32)
    m = walsh_transform(BooleanTable(tuple(range(5)), values))
    coef = brute_coefficients(values)
    J, W = [0b00011, 0b01000], 0b10000
    expect = sum(coef[S] ** 2 for S in range(32) if S & J[0] and S & J[1] and not S & W)
    assert hit_avoid_mass(m, J, W) == pytest.approx(expect)


def test_jp_identity_random_instances():
    gen = RngStream(4).generator()
    for _ in range(200):
        h, J, W = random_jp_instance(gen, max_bits=8)
        _, _, diff = jp_identity_check(h, J, W)
        assert diff < 1e-12


def test_jp_rejects_overlap():
    with pytest.raises(OverlapError):
        jp_identity_check(BooleanTable.majority(3), [[0, 1], [1]])


def test_iid_correlation_by_enumeration():
    values = np.random.default_rng(5).normal(size=8)
    t = 0.6
    q = -math.expm1(-t)
    one = np.array([[1 - q / 2, q / 2], [q / 2, 1 - q / 2]])
    P = np.kron(np.kron(one, one), one)  # bit order is irrelevant: the factors are identical
    direct = values @ P @ values / 8
    m = walsh_transform(BooleanTable(tuple(range(3)), values))
    assert iid_correlation_exact(m, t) == pytest.approx(direct)
    assert iid_correlation_exact(m, math.inf) == pytest.approx(np.mean(values) ** 2)


def test_exclusion_correlation_single_cell():
    K = build_kernel(PowerLaw(0.5), torus(TRIANGULAR, 4))
    vals, vecs = np.linalg.eigh(K.matrix())
    stay = float((vecs[0] ** 2) @ np.exp(0.5 * (vals - 1)))
    m = walsh_transform(BooleanTable(((0, 0),), np.array([-1.0, 1.0]), TRIANGULAR))
    est = exclusion_correlation_spectral(m, K, 0.5, 40_000, RngStream(6))
    assert abs(est.mean - stay) < 4 * est.std_error
    assert exclusion_correlation_spectral(m, K, 0.0, 10, 0).mean == 1.0


def test_structure_validation():
    validate_structure(TRIANGULAR, Structure(2, 0, [Annulus((0, 0), 1, 2)]))
    with pytest.raises(StructureError):
        # the origin hexagon reaches past 1/2, so it meets both the annulus and [-0, 0]^2
        validate_structure(TRIANGULAR, Structure(2, 0, [Annulus((0, 0), Fraction(1, 2), 2)]))
    with pytest.raises(StructureError):
        validate_structure(TRIANGULAR, Structure(2, 0, [Annulus((1, 0), 0, 2)]))
    with pytest.raises(StructureError):
        validate_structure(TRIANGULAR, Structure(2, 0, [Annulus((2, 0), 0, Fraction(1, 2), AnnulusKind.CORNER)]))
    with pytest.raises(StructureError):
        validate_structure(TRIANGULAR, Structure(1, 2))


def test_random_structures_are_valid():
    gen = RngStream(7).generator()
    for model, R in [(TRIANGULAR, 1), (TRIANGULAR, Fraction(5, 4)), (BOND, Fraction(1, 2))]:
        for _ in range(20):
            validate_structure(model, random_structure(model, R, gen))


def test_bound_for_empty_structure_is_one_arm():
    h = one_arm_table(TRIANGULAR, 1)
    rep = annulus_bound_check(h, Structure(1, 0), 100, 0)
    assert rep.lhs == pytest.approx(np.mean(h.values ** 2))
    assert rep.rhs == 1.0 and rep.holds


def test_bound_holds_small():
    h = one_arm_table(TRIANGULAR, Fraction(5, 4))
    st_ = Structure(Fraction(5, 4), 0, [Annulus((0, 0), 1, Fraction(5, 4))])
    rep = annulus_bound_check(h, st_, 20_000, RngStream(8))
    assert rep.holds and rep.lhs <= rep.rhs


def test_grid_crossing_matches_enumeration():
    # oracle: depth-first search over each of the 512 configurations of the 3 x 3 rhombus
    coords = [(q, s) for q in range(3) for s in range(3)]
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]
    expect = []
    for x in range(512):
        open_ = {c for i, c in enumerate(coords) if (x >> i) & 1}
        seen = [c for c in open_ if c[0] == 0]
        stack = list(seen)
        while stack:
            q, s = stack.pop()
            for dq, ds in steps:
                w = (q + dq, s + ds)
                if w in open_ and w not in seen:
                    seen.append(w)
                    stack.append(w)
        expect.append(float(any(c[0] == 2 for c in seen)))
    assert np.array_equal(grid_crossing_table(3, 3).values, expect)
