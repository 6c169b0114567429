import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynperc.lattice import BOND, TRIANGULAR, Annulus, Region, Window, cells_in_window, origin_cells
from dynperc.percolation import (
    ArmSpec,
    Configuration,
    OneArmEvent,
    arm_event,
    arm_geometry,
    bond_rectangle_crossing,
    estimate_alpha,
    estimate_alpha_ladder,
    estimate_arm_patterns,
    estimate_one_arm,
    one_arm,
    quasi_mult_diag,
    sample_config,
    _clip_rect,
)
from dynperc.spectral_exact import one_arm_table
from dynperc.stats import RngStream


# pure-python oracle: crossing clusters by union-find over explicit adjacency

def oracle_counts(geom, states):
    n = geom.n
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for v in range(n):
        table = geom.nbr_open if states[v] else geom.nbr_closed
        for w in table[v]:
            if w >= 0 and states[w] == states[v]:
                parent[find(v)] = find(w)
    inner = set(int(i) for i in geom.inner)
    roots = {0: set(), 1: set()}
    for v in inner:
        r = find(v)
        if any(geom.outer[u] and find(u) == r for u in range(n)):
            roots[int(states[v])].add(r)
    return len(roots[1]), len(roots[0])


def oracle_arms(spec, counts):
    a, b = counts
    return any(a >= x and b >= y for x, y in spec.needs())


SMALL = [
    (TRIANGULAR, Annulus((0, 0), 0, 1), ArmSpec(1)),
    (TRIANGULAR, Annulus((0, 0), Fraction(1, 2), Fraction(3, 2)), ArmSpec(2)),
    (TRIANGULAR, Annulus((0, 0), Fraction(1, 2), 2), ArmSpec(4)),
    (TRIANGULAR, Annulus((0, 0), Fraction(1, 2), 2), ArmSpec(3, "half", start=1)),
    (TRIANGULAR, Annulus((0, 0), Fraction(1, 2), 2), ArmSpec(3, "half", start=0)),
    (TRIANGULAR, Annulus((0, 0), 0, 2), ArmSpec(2, "quarter", start=-1)),
    (BOND, Annulus((0, 0), Fraction(1, 2), Fraction(3, 2)), ArmSpec(4)),
    (BOND, Annulus((0, 0), 0, 1), ArmSpec(1)),
]


@pytest.mark.parametrize("model,ann,spec", SMALL)
def test_arm_event_matches_oracle(model, ann, spec):
    geom = arm_geometry(model, ann, _clip_rect(spec, ann.center))
    region = Region(model, Window(ann.R), geom.coords)
    gen = np.random.default_rng(0)
    configs = (itertools.product([0, 1], repeat=geom.n) if geom.n <= 12
               else (gen.integers(0, 2, geom.n) for _ in range(600)))
    for st_ in configs:
        st_ = np.array(st_, dtype=np.uint8)
        omega = Configuration.from_states(region, st_)
        got = arm_event(omega, ann, spec)
        assert got == oracle_arms(spec, oracle_counts(geom, st_))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_colour_flip_swaps_patterns(seed):
    ann = Annulus((0, 0), 1, 4)
    region = cells_in_window(TRIANGULAR, 4)
    omega = sample_config(region, 0.5, seed)
    flipped = Configuration(region, -omega.values)
    assert arm_event(omega, ann, ArmSpec(3, "half", start=1)) == arm_event(flipped, ann, ArmSpec(3, "half", start=-1))
    assert arm_event(omega, ann, ArmSpec(4)) == arm_event(flipped, ann, ArmSpec(4))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_one_arm_monotone_in_configuration(seed):
    region = cells_in_window(TRIANGULAR, 5)
    omega = sample_config(region, 0.5, seed)
    opened = Configuration(region, np.where(np.random.default_rng(seed).random(len(region)) < 0.3, 1, omega.values)
                           .astype(np.int8))
    assert one_arm(opened, 5) >= one_arm(omega, 5)


def test_odd_plane_arms_rejected():
    with pytest.raises(ValueError):
        ArmSpec(3)


def test_one_arm_exact_small_window():
    # oracle: pure-python search over all 2^11 configurations of I_1
    region = cells_in_window(TRIANGULAR, 1)
    coords = [tuple(c) for c in region.coords.tolist()]
    from dynperc.lattice import tile_inside_open_rect, Rect
    boundary = set(np.nonzero(~tile_inside_open_rect(TRIANGULAR, region.coords, Rect.square(0, 0, 1)))[0].tolist())
    nbr = region.neighbours(1)
    hits = 0
    for mask in range(1 << len(coords)):
        open_ = [(mask >> i) & 1 for i in range(len(coords))]
        o = origin_cells(region)[0]
        if not open_[o]:
            continue
        seen, stack = {o}, [o]
        while stack:
            v = stack.pop()
            for w in nbr[v]:
                if w >= 0 and open_[w] and w not in seen:
                    seen.add(w)
                    stack.append(w)
        hits += bool(seen & boundary)
    exact = hits / 2 ** len(coords)
    assert exact == 0.4921875  # frozen from the oracle
    assert one_arm_table(TRIANGULAR, 1).values.mean() == exact
    est = estimate_one_arm([1], 40_000, RngStream(1))[0]
    assert abs(est.mean - exact) < 4 * est.std_error


def test_one_arm_event_class_agrees():
    f = OneArmEvent(TRIANGULAR, 3)
    region = cells_in_window(TRIANGULAR, 3)
    for seed in range(30):
        omega = sample_config(region, 0.5, seed)
        assert bool(f(omega)) == one_arm(omega, 3)


def test_multi_radius_one_arm_consistent():
    radii = [2, 4, 8]
    multi = estimate_one_arm(radii, 20_000, RngStream(4))
    for r, e in zip(radii, multi):
        single = estimate_one_arm([r], 20_000, RngStream(5))[0]
        assert abs(e.mean - single.mean) < 4 * np.hypot(e.std_error, single.std_error)
    assert multi[0].mean >= multi[1].mean >= multi[2].mean


def test_alpha_is_one_when_annulus_empty():
    e = estimate_alpha(ArmSpec(4), 8, 8, n_samples=10, rng=0)
    assert e.mean == 1.0 and e.exact


def test_patterns_agree_with_single_pattern_ladder():
    spec = ArmSpec(3, "half")
    pats = estimate_arm_patterns(spec, [2, 4], 8, n_samples=3000, rng=RngStream(2))
    one = estimate_alpha_ladder(ArmSpec(3, "half", start=1), [2, 4], 8, n_samples=3000, rng=RngStream(2))
    assert [e.mean for e in pats[1]] == [e.mean for e in one]
    for a, b, u in zip(pats[1], pats[-1], pats[0]):
        assert max(a.mean, b.mean) <= u.mean <= a.mean + b.mean


def test_bond_rectangle_self_dual():
    # an (n+1) x n rectangle of the square lattice is crossed with probability exactly 1/2
    region = cells_in_window(BOND, 6)
    gen = RngStream(8).generator()
    hits = [bond_rectangle_crossing(sample_config(region, 0.5, gen), 5, 4) for _ in range(4000)]
    m = np.mean(hits)
    assert abs(m - 0.5) < 4 * np.sqrt(0.25 / len(hits))


def test_quasi_multiplicativity_trivial_ratio():
    rep = quasi_mult_diag(ArmSpec(4), 2, 2, 8, 2000, RngStream(3))
    assert rep.ratio == 1.0
