import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynperc.lattice import (
    BOND,
    TRIANGULAR,
    Annulus,
    Rect,
    cells_in_window,
    cells_meeting,
    centres,
    displacement_lengths,
    distance,
    half_plane_mask,
    percolation_disjoint,
    Side,
    tile_meets_rect,
    torus,
    torus_index,
)

SQ3 = math.sqrt(3.0)


# independent float geometry: tiles as explicit polygons, separating-axis test

def tile_polygon(model, cell):
    if model is TRIANGULAR:
        q, s = cell
        cx, cy = q + s / 2.0, s * SQ3 / 2.0
        rad = 1.0 / SQ3
        return [(cx + rad * math.cos(math.radians(30 + 60 * k)), cy + rad * math.sin(math.radians(30 + 60 * k)))
                for k in range(6)]
    X, Y = cell
    cx, cy = X / 2.0, Y / 2.0
    return [(cx + 0.5, cy), (cx, cy + 0.5), (cx - 0.5, cy), (cx, cy - 0.5)]


def poly_meets_square(poly, half, eps=1e-9):
    sq = [(-half, -half), (half, -half), (half, half), (-half, half)]
    axes = [(1.0, 0.0), (0.0, 1.0)]
    for i in range(len(poly)):
        (x0, y0), (x1, y1) = poly[i], poly[(i + 1) % len(poly)]
        axes.append((y1 - y0, x0 - x1))
    for ax in axes:
        p = [ax[0] * x + ax[1] * y for x, y in poly]
        s = [ax[0] * x + ax[1] * y for x, y in sq]
        if max(p) < min(s) - eps or max(s) < min(p) - eps:
            return False
    return True


def brute_window(model, R):
    out = set()
    span = int(2 * R) + 4
    for a in range(-span, span + 1):
        for b in range(-span, span + 1):
            if model is BOND and (a + b) % 2 == 0:
                continue
            if poly_meets_square(tile_polygon(model, (a, b)), float(R)):
                out.add((a, b))
    return out


@pytest.mark.parametrize("model,R", [(TRIANGULAR, 0), (TRIANGULAR, 1), (TRIANGULAR, Fraction(3, 2)),
                                     (TRIANGULAR, 2), (TRIANGULAR, 3), (BOND, 0), (BOND, 1),
                                     (BOND, Fraction(3, 2)), (BOND, 2)])
def test_window_matches_polygon_oracle(model, R):
    got = {tuple(c) for c in cells_in_window(model, R).coords.tolist()}
    assert got == brute_window(model, R)


def test_window_sizes_frozen():
    # values computed with the polygon oracle above
    assert [len(cells_in_window(TRIANGULAR, r)) for r in (1, Fraction(3, 2), 2)] == [11, 23, 27]
    assert [len(cells_in_window(BOND, r)) for r in (0, 1, Fraction(3, 2), 2)] == [4, 24, 40, 60]


def test_triangular_zero_window_is_origin():
    assert cells_in_window(TRIANGULAR, 0).coords.tolist() == [[0, 0]]


@pytest.mark.parametrize("model", [TRIANGULAR, BOND])
def test_torus_index_is_storage_order(model):
    reg = torus(model, 6)
    assert np.array_equal(torus_index(reg, reg.coords), np.arange(len(reg)))
    assert len(reg) == (36 if model is TRIANGULAR else 72)


@pytest.mark.parametrize("model", [TRIANGULAR, BOND])
def test_neighbour_tables(model):
    reg = torus(model, 8)
    for colour in (1, -1):
        nbr = reg.neighbours(colour)
        assert np.all((nbr >= 0).sum(axis=1) == 6)
        for v in range(len(reg)):
            for w in nbr[v]:
                assert v in nbr[w]


def test_bond_colours_swap_neighbour_lists():
    reg = torus(BOND, 8)
    v = reg.index((1, 0))  # horizontal edge centred at (1/2, 0)
    open_n = {tuple(reg.coords[w]) for w in reg.neighbours(1)[v]}
    closed_n = {tuple(reg.coords[w]) for w in reg.neighbours(-1)[v]}
    assert (3, 0) in open_n and (0, 1) in open_n  # share an endpoint
    assert (1, 2) in closed_n and (0, 1) in closed_n  # share a face
    assert (3, 0) not in closed_n and (1, 2) not in open_n


def _image_distance(model, L, a, b):
    ca, cb = centres(model, np.array([a])), centres(model, np.array([b]))
    if model is TRIANGULAR:
        u, v = np.array([L, 0.0]), np.array([L / 2.0, L * SQ3 / 2.0])
    else:
        u, v = np.array([float(L), 0.0]), np.array([0.0, float(L)])
    return min(float(np.hypot(*(cb[0] - ca[0] + i * u + j * v))) for i in range(-3, 4) for j in range(-3, 4))


@pytest.mark.parametrize("model", [TRIANGULAR, BOND])
def test_minimum_image_distance(model):
    reg = torus(model, 6)
    gen = np.random.default_rng(0)
    for _ in range(40):
        a, b = reg.coords[gen.integers(len(reg))], reg.coords[gen.integers(len(reg))]
        assert distance(reg, a, b) == pytest.approx(_image_distance(model, 6, a, b), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-3, 3), st.integers(-3, 3))
def test_torus_index_periodic(q, s, i, j):
    reg = torus(TRIANGULAR, 8)
    base = torus_index(reg, np.array([[q, s]]))
    moved = torus_index(reg, np.array([[q + 8 * i, s + 8 * j]]))
    assert base[0] == moved[0]


def test_displacement_lengths_planar():
    d = displacement_lengths(TRIANGULAR, None, np.array([[1, 0], [0, 1], [1, 1], [2, -1]]))
    assert np.allclose(d, [1, 1, SQ3, SQ3])


def test_percolation_disjoint():
    a = Annulus((0, 0), 1, 2)
    b = Annulus((0, 0), 4, 6)
    assert percolation_disjoint(TRIANGULAR, a, b)
    assert not percolation_disjoint(TRIANGULAR, a, Annulus((0, 0), 2, 3))
    assert percolation_disjoint(TRIANGULAR, Annulus((0, 0), 2, 2), a)  # empty annulus


def test_half_plane_mask_straddlers():
    reg = cells_in_window(TRIANGULAR, 3)
    strict = half_plane_mask(reg, Side.UPPER)
    loose = half_plane_mask(reg, Side.UPPER, straddlers=True)
    assert np.all(loose >= strict) and loose.sum() > strict.sum()


def test_tile_meets_rect_touching_counts():
    # the origin hexagon has its flat side on x = 1/2
    c = np.array([[0, 0]])
    assert tile_meets_rect(TRIANGULAR, c, Rect(Fraction(1, 2), 1, -1, 1))[0]
    assert not tile_meets_rect(TRIANGULAR, c, Rect(Fraction(51, 100), 1, -1, 1))[0]
