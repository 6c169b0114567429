import numpy as np
import pytest

from dynperc.lattice import TRIANGULAR, Rect, cells_in_window, centre_in_rect
from dynperc.percolation import OneArmEvent
from dynperc.spectral_exact import OverlapError, hit_avoid_mass, one_arm_table, walsh_transform
from dynperc.spectral_mc import (
    clustering_profile,
    conditioned_fourarm,
    conditioned_fourarm_ladder,
    sample_coupled_pair,
    spectral_mass_hit_avoid,
    spectral_mass_inside,
)
from dynperc.stats import RngStream

F = OneArmEvent(TRIANGULAR, 1)
EXACT = walsh_transform(one_arm_table(TRIANGULAR, 1))


def close(est, value, k=4.0):
    return abs(est.mean - value) <= k * est.std_error + 1e-12


def test_function_cells_match_table():
    assert [tuple(c) for c in F.coords.tolist()] == list(one_arm_table(TRIANGULAR, 1).cell_ids)


def test_mass_inside_extremes():
    full = spectral_mass_inside(F, None, np.ones(F.n, dtype=bool), 20_000, RngStream(1))
    empty = spectral_mass_inside(F, None, [], 20_000, RngStream(2))
    assert close(full, EXACT.masses.sum())
    assert close(empty, EXACT.coefficients[0] ** 2)


def test_mass_inside_matches_exact():
    B = [0, 3, 4, 5, 9]
    mask = sum(1 << i for i in B)
    S = np.arange(1 << F.n)
    exact = EXACT.masses[(S & ~mask) == 0].sum()
    assert close(spectral_mass_inside(F, None, B, 40_000, RngStream(3)), exact)


def test_hit_avoid_matches_exact():
    J, W = [[0, 1], [9, 10]], [5]
    exact = hit_avoid_mass(EXACT, [0b11, (1 << 9) | (1 << 10)], 1 << 5)
    assert close(spectral_mass_hit_avoid(F, None, J, W, 40_000, RngStream(4)), exact)
    with pytest.raises(OverlapError):
        spectral_mass_hit_avoid(F, None, [[0, 1], [1]], [], 10, 0)


def test_coupled_pair_agrees_on_shared_cells():
    shared = np.arange(F.n) < 5
    pair = sample_coupled_pair(cells_in_window(TRIANGULAR, 1), shared, RngStream(5))
    assert np.array_equal(pair.omega.values[shared], pair.omega_prime.values[shared])


def test_clustering_profile_small_radius_exact():
    r0s = [0.5, 1, 2]
    prof = clustering_profile(1, r0s, 40_000, RngStream(6))
    for r0, est in prof:
        inside = centre_in_rect(TRIANGULAR, F.coords, Rect.square(0, 0, r0), open_=True)
        mask = int(sum(1 << i for i in np.nonzero(inside)[0]))
        S = np.arange(1 << F.n)
        assert close(est, EXACT.masses[(S & ~mask) == 0].sum())
    assert prof[0][1].mean <= prof[1][1].mean <= prof[2][1].mean


def test_fourarm_sandwich():
    lad = conditioned_fourarm_ladder([1, 2], 8, 4000, RngStream(7))
    for a, b in zip(lad.alpha, lad.beta):
        assert a.mean ** 2 - 4 * b.std_error <= b.mean <= a.mean
    assert lad.alpha[0].mean < lad.alpha[1].mean


def test_fourarm_sharing_limits():
    all_ = conditioned_fourarm_ladder([1], 6, 3000, RngStream(8), shared="all")
    assert all_.beta[0].mean == all_.alpha[0].mean
    none = conditioned_fourarm_ladder([1], 6, 6000, RngStream(9), shared="none")
    assert close(none.beta[0], none.alpha[0].mean ** 2, k=5)
    with pytest.raises(ValueError):
        conditioned_fourarm(3, 2)
