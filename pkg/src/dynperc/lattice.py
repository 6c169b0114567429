"""Geometry of the two lattice models.

Triangular-lattice sites use axial coordinates (q, s) embedded at
(q + s/2, s*sqrt(3)/2); the tile of a site is its dual hexagon.
Square-lattice bonds are stored by doubled midpoint coordinates (X, Y), so
that exactly one component is odd; the tile of an edge is the diamond spanned
by its two endpoints and the two adjacent face centres.

All geometric predicates are exact.  Internally every cell lives in integer
"scaled" coordinates: triangular (X, Y) = (2q + s, 3s) so that the real point
is (X/2, Y/(2*sqrt 3)); bonds keep (X, Y) with real point (X/2, Y/2).  Real
bounds are rationals (``fractions.Fraction``); a bound on the scaled Y axis of
the triangular model is then of the form a + b*sqrt(3) with a, b rational and
is compared by squaring.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

SQRT3 = math.sqrt(3.0)


class Model(enum.Enum):
    TRIANGULAR_SITE = "triangular"
    SQUARE_BOND = "bond"

    @classmethod
    def parse(cls, value: Union[str, "Model"]) -> "Model":
        if isinstance(value, Model):
            return value
        v = str(value).strip().lower()
        for m in cls:
            if v in (m.value, m.name.lower()):
                return m
        if v in ("tri", "site", "t"):
            return cls.TRIANGULAR_SITE
        if v in ("z2", "square", "edge"):
            return cls.SQUARE_BOND
        raise ValueError(f"unknown model {value!r}")


TRIANGULAR = Model.TRIANGULAR_SITE
BOND = Model.SQUARE_BOND

# tile half-widths in scaled coordinates along X, Y and the diagonals X +/- Y
_HALF = {TRIANGULAR: (1, 2, 2), BOND: (1, 1, 1)}

# neighbour offsets in storage coordinates
TRI_OFFSETS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)], dtype=np.int64)
# bond adjacency: "open" = share a primal endpoint, "closed" = share a dual vertex
_BOND_H_OPEN = np.array([(2, 0), (-2, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=np.int64)
_BOND_H_CLOSED = np.array([(0, 2), (0, -2), (1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=np.int64)


def bond_offsets(horizontal: bool, colour: int) -> np.ndarray:
    """Neighbour offsets of a bond: colour +1 uses primal adjacency, -1 dual."""
    if colour > 0:
        return _BOND_H_OPEN if horizontal else _BOND_H_CLOSED
    return _BOND_H_CLOSED if horizontal else _BOND_H_OPEN


Number = Union[int, float, Fraction]


def as_fraction(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("lengths must be finite")
        return Fraction(x).limit_denominator(1 << 20) if x != int(x) else Fraction(int(x))
    return Fraction(x)


# ---------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class Rect:
    """Closed axis-parallel rectangle; ``None`` bounds are infinite."""

    x0: Fraction | None
    x1: Fraction | None
    y0: Fraction | None
    y1: Fraction | None

    @staticmethod
    def square(cx: Number, cy: Number, half: Number) -> "Rect":
        cx, cy, half = as_fraction(cx), as_fraction(cy), as_fraction(half)
        return Rect(cx - half, cx + half, cy - half, cy + half)

    def intersect(self, other: "Rect") -> "Rect":
        def lo(a, b):
            return b if a is None else a if b is None else max(a, b)

        def hi(a, b):
            return b if a is None else a if b is None else min(a, b)

        return Rect(lo(self.x0, other.x0), hi(self.x1, other.x1), lo(self.y0, other.y0), hi(self.y1, other.y1))

    @property
    def empty(self) -> bool:
        return (self.x0 is not None and self.x1 is not None and self.x0 > self.x1) or (
            self.y0 is not None and self.y1 is not None and self.y0 > self.y1
        )


class AnnulusKind(enum.Enum):
    CENTERED = "centered"
    INTERIOR = "interior"
    SIDE = "side"
    CORNER = "corner"
    R0_DECORATING = "decorating"


@dataclass(frozen=True)
class Annulus:
    """Square annulus (c + [-R, R]^2) minus (c + (-r, r)^2)."""

    center: tuple
    r: Fraction
    R: Fraction
    kind: AnnulusKind = AnnulusKind.CENTERED

    def __init__(self, center=(0, 0), r: Number = 0, R: Number = 0, kind=AnnulusKind.CENTERED):
        r, R = as_fraction(r), as_fraction(R)
        if r < 0 or R < 0:
            raise ValueError("annulus radii must be nonnegative")
        object.__setattr__(self, "center", (as_fraction(center[0]), as_fraction(center[1])))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "kind", AnnulusKind(kind))

    @property
    def empty(self) -> bool:
        return self.r >= self.R

    @property
    def outer(self) -> Rect:
        return Rect.square(self.center[0], self.center[1], self.R)

    @property
    def inner(self) -> Rect:
        """Closure of the open inner square."""
        return Rect.square(self.center[0], self.center[1], self.r)


Shape = Union[Annulus, Rect]


# ---------------------------------------------------------------------------
# exact comparisons


def _scale_bounds(model: Model, rect: Rect):
    """Return the rectangle's bounds in scaled coordinates.

    Each bound is a pair (a, b) meaning a + b*sqrt(3), or None."""
    tri = model is TRIANGULAR

    def sx(v):
        return None if v is None else (2 * v, Fraction(0))

    def sy(v):
        if v is None:
            return None
        return (Fraction(0), 2 * v) if tri else (2 * v, Fraction(0))

    return sx(rect.x0), sx(rect.x1), sy(rect.y0), sy(rect.y1)


def _add(u, v):
    if u is None or v is None:
        return None
    return (u[0] + v[0], u[1] + v[1])


def _neg(u):
    return None if u is None else (-u[0], -u[1])


def _sign(values: np.ndarray, bound) -> np.ndarray:
    """Exact sign of (values - bound) for integer ``values``."""
    a, b = bound
    den = a.denominator * b.denominator // math.gcd(a.denominator, b.denominator)
    A = a.numerator * (den // a.denominator)
    B = b.numerator * (den // b.denominator)
    u = values.astype(np.int64) * den - A
    if B == 0:
        return np.sign(u)
    sv = -1 if B > 0 else 1  # sign of (-B * sqrt 3)
    su = np.sign(u)
    if np.max(np.abs(u), initial=0) > 2**30 or abs(B) > 2**30:
        uo = u.astype(object)
        big = np.array([x * x > 3 * B * B for x in uo], dtype=bool)
    else:
        big = u * u > 3 * B * B
    out = np.where(su == 0, sv, np.where(su == sv, su, np.where(big, su, sv)))
    return out.astype(np.int64)


def scaled(model: Model, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    if model is TRIANGULAR:
        return 2 * coords[:, 0] + coords[:, 1], 3 * coords[:, 1]
    return coords[:, 0].copy(), coords[:, 1].copy()


def centres(model: Model, coords: np.ndarray) -> np.ndarray:
    """Floating point centres of cells, shape (n, 2)."""
    X, Y = scaled(model, coords)
    if model is TRIANGULAR:
        return np.stack([X / 2.0, Y / (2.0 * SQRT3)], axis=1)
    return np.stack([X / 2.0, Y / 2.0], axis=1)


def tile_meets_rect(model: Model, coords: np.ndarray, rect: Rect) -> np.ndarray:
    """Whether each closed tile intersects the closed rectangle (separating axes)."""
    X, Y = scaled(model, coords)
    n = X.shape[0]
    if rect.empty:
        return np.zeros(n, dtype=bool)
    wx, wy, wd = _HALF[model]
    x0, x1, y0, y1 = _scale_bounds(model, rect)
    ok = np.ones(n, dtype=bool)
    if x0 is not None:
        ok &= _sign(X + wx, x0) >= 0
    if x1 is not None:
        ok &= _sign(X - wx, x1) <= 0
    if y0 is not None:
        ok &= _sign(Y + wy, y0) >= 0
    if y1 is not None:
        ok &= _sign(Y - wy, y1) <= 0
    lo = _add(x0, y0)
    if lo is not None:
        ok &= _sign(X + Y + wd, lo) >= 0
    hi = _add(x1, y1)
    if hi is not None:
        ok &= _sign(X + Y - wd, hi) <= 0
    lo = _add(x0, _neg(y1))
    if lo is not None:
        ok &= _sign(X - Y + wd, lo) >= 0
    hi = _add(x1, _neg(y0))
    if hi is not None:
        ok &= _sign(X - Y - wd, hi) <= 0
    return ok


def tile_inside_open_rect(model: Model, coords: np.ndarray, rect: Rect) -> np.ndarray:
    """Whether each closed tile lies inside the open rectangle."""
    X, Y = scaled(model, coords)
    wx, wy, _ = _HALF[model]
    x0, x1, y0, y1 = _scale_bounds(model, rect)
    ok = np.ones(X.shape[0], dtype=bool)
    if x0 is not None:
        ok &= _sign(X - wx, x0) > 0
    if x1 is not None:
        ok &= _sign(X + wx, x1) < 0
    if y0 is not None:
        ok &= _sign(Y - wy, y0) > 0
    if y1 is not None:
        ok &= _sign(Y + wy, y1) < 0
    return ok


def centre_in_rect(model: Model, coords: np.ndarray, rect: Rect, open_: bool = True) -> np.ndarray:
    """Whether each cell centre lies in the rectangle (open or closed)."""
    X, Y = scaled(model, coords)
    x0, x1, y0, y1 = _scale_bounds(model, rect)
    ok = np.ones(X.shape[0], dtype=bool)
    for vals, bound, side in ((X, x0, 1), (X, x1, -1), (Y, y0, 1), (Y, y1, -1)):
        if bound is None:
            continue
        s = _sign(vals, bound) * side
        ok &= (s > 0) if open_ else (s >= 0)
    return ok


def tile_meets_shape(model: Model, coords: np.ndarray, shape: Shape) -> np.ndarray:
    if isinstance(shape, Rect):
        return tile_meets_rect(model, coords, shape)
    if shape.empty:
        return np.zeros(len(coords), dtype=bool)
    meets = tile_meets_rect(model, coords, shape.outer)
    if shape.r > 0:
        meets &= ~tile_inside_open_rect(model, coords, shape.inner)
    return meets


# ---------------------------------------------------------------------------
# candidate enumeration


def candidate_cells(model: Model, x0: float, x1: float, y0: float, y1: float, margin: float = 2.0) -> np.ndarray:
    """All cells whose centre lies within ``margin`` of the given box (a superset)."""
    x0, x1, y0, y1 = x0 - margin, x1 + margin, y0 - margin, y1 + margin
    if model is TRIANGULAR:
        s = np.arange(math.floor(2 * y0 / SQRT3), math.ceil(2 * y1 / SQRT3) + 1)
        qlo = math.floor(x0 - s.max() / 2.0 - 1) if len(s) else 0
        qhi = math.ceil(x1 - s.min() / 2.0 + 1) if len(s) else 0
        q = np.arange(qlo, qhi + 1)
        Q, S = np.meshgrid(q, s, indexing="ij")
        cx = Q + S / 2.0
        keep = (cx >= x0) & (cx <= x1)
        return np.stack([Q[keep], S[keep]], axis=1).astype(np.int64)
    xs = np.arange(math.floor(2 * x0), math.ceil(2 * x1) + 1)
    ys = np.arange(math.floor(2 * y0), math.ceil(2 * y1) + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    keep = ((X + Y) % 2) == 1
    return np.stack([X[keep], Y[keep]], axis=1).astype(np.int64)


def _shape_box(shape: Shape, default: float = 0.0):
    if isinstance(shape, Annulus):
        c, R = shape.center, shape.R
        return float(c[0] - R), float(c[0] + R), float(c[1] - R), float(c[1] + R)
    vals = []
    for v, d in ((shape.x0, -1), (shape.x1, 1), (shape.y0, -1), (shape.y1, 1)):
        vals.append(float(v) if v is not None else None)
    return tuple(vals)


def cells_meeting(model: Model, shape: Shape) -> np.ndarray:
    """Sorted coordinates of all cells whose tile meets a bounded shape."""
    box = _shape_box(shape)
    if any(v is None for v in box):
        raise ValueError("shape must be bounded")
    cand = candidate_cells(model, *box)
    coords = cand[tile_meets_shape(model, cand, shape)]
    return sort_coords(coords)


def sort_coords(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    order = np.lexsort((coords[:, 1], coords[:, 0]))
    return coords[order]


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Window:
    R: Fraction


@dataclass(frozen=True)
class Torus:
    L: int


@dataclass(frozen=True, eq=False)
class Region:
    """An ordered finite set of cells; compared by identity."""

    model: Model
    geometry: Union[Window, Torus]
    coords: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def is_torus(self) -> bool:
        return isinstance(self.geometry, Torus)

    def cell(self, i: int) -> tuple[int, int]:
        return int(self.coords[i, 0]), int(self.coords[i, 1])

    @cached_property
    def _grid(self):
        c = self.coords
        lo = c.min(axis=0) if len(c) else np.zeros(2, dtype=np.int64)
        hi = c.max(axis=0) if len(c) else np.zeros(2, dtype=np.int64)
        grid = np.full((hi[0] - lo[0] + 1, hi[1] - lo[1] + 1), -1, dtype=np.int64)
        grid[c[:, 0] - lo[0], c[:, 1] - lo[1]] = np.arange(len(c))
        return lo, grid

    def wrap(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        if not self.is_torus:
            return coords
        m = self.geometry.L if self.model is TRIANGULAR else 2 * self.geometry.L
        return np.mod(coords, m)

    def lookup(self, coords) -> np.ndarray:
        """Indices of the given cells (wrapped on a torus); -1 where absent."""
        coords = self.wrap(np.asarray(coords, dtype=np.int64).reshape(-1, 2))
        lo, grid = self._grid
        rel = coords - lo
        ok = (rel[:, 0] >= 0) & (rel[:, 1] >= 0) & (rel[:, 0] < grid.shape[0]) & (rel[:, 1] < grid.shape[1])
        out = np.full(len(coords), -1, dtype=np.int64)
        out[ok] = grid[rel[ok, 0], rel[ok, 1]]
        return out

    def index(self, cell) -> int:
        i = int(self.lookup(np.asarray(cell).reshape(1, 2))[0])
        if i < 0:
            raise KeyError(f"cell {tuple(cell)} not in region")
        return i

    def indices(self, cells: Iterable) -> np.ndarray:
        cells = np.asarray(list(cells), dtype=np.int64).reshape(-1, 2)
        idx = self.lookup(cells)
        if np.any(idx < 0):
            raise KeyError("cell not in region")
        return idx

    @cached_property
    def centres(self) -> np.ndarray:
        return centres(self.model, self.coords)

    def neighbours(self, colour: int = 1) -> np.ndarray:
        """(n, 6) array of neighbour indices for paths of the given colour; -1 if absent."""
        key = "_nbr_open" if colour > 0 else "_nbr_closed"
        cached = self.__dict__.get(key)
        if cached is None:
            cached = self._build_neighbours(colour)
            object.__setattr__(self, key, cached)
        return cached

    def _build_neighbours(self, colour: int) -> np.ndarray:
        c = self.coords
        out = np.empty((len(c), 6), dtype=np.int64)
        if self.model is TRIANGULAR:
            for j, off in enumerate(TRI_OFFSETS):
                out[:, j] = self.lookup(c + off)
            return out
        horiz = (c[:, 0] % 2) == 1
        for flag in (True, False):
            sel = horiz == flag
            offs = bond_offsets(flag, colour)
            for j, off in enumerate(offs):
                out[sel, j] = self.lookup(c[sel] + off)
        return out


def cells_in_window(model: Model, R: Number) -> Region:
    """The set I_R of cells whose tile meets [-R, R]^2, lexicographically ordered."""
    model = Model.parse(model)
    R = as_fraction(R)
    if R < 0:
        raise ValueError("R must be nonnegative")
    coords = cells_meeting(model, Rect.square(0, 0, R))
    return Region(model, Window(R), coords)


def torus(model: Model, L: int) -> Region:
    """Torus(L): triangular sites (q, s) in [0, L)^2, or the 2 L^2 edges of the square torus.

    Cells are ordered lexicographically, so the index of (a, b) is a*L + b for
    sites and X*L + Y//2 for edges."""
    model = Model.parse(model)
    L = int(L)
    if L < 2 or L % 2:
        raise ValueError("torus side L must be even and at least 2")
    if model is TRIANGULAR:
        Q, S = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
        coords = np.stack([Q.ravel(), S.ravel()], axis=1)
    else:
        X = np.repeat(np.arange(2 * L), L)
        k = np.tile(np.arange(L), 2 * L)
        Y = 2 * k + (1 - X % 2)
        coords = np.stack([X, Y], axis=1)
    return Region(model, Torus(L), coords.astype(np.int64))


def torus_index(region: Region, coords: np.ndarray) -> np.ndarray:
    """Fast index formula for torus regions (coordinates are wrapped first)."""
    L = region.geometry.L
    c = region.wrap(coords)
    if region.model is TRIANGULAR:
        return c[:, 0] * L + c[:, 1]
    return c[:, 0] * L + c[:, 1] // 2


def _torus_vectors(model: Model, L: int):
    """Real-plane vectors of the two torus periods."""
    if model is TRIANGULAR:
        return np.array([L, 0.0]), np.array([L / 2.0, L * SQRT3 / 2.0])
    return np.array([float(L), 0.0]), np.array([0.0, float(L)])


def displacement_lengths(model: Model, L: int | None, delta: np.ndarray) -> np.ndarray:
    """Euclidean length of storage-coordinate displacements, minimum image on Torus(L)."""
    delta = np.asarray(delta, dtype=np.int64).reshape(-1, 2)
    if model is TRIANGULAR:
        base = np.stack([delta[:, 0] + delta[:, 1] / 2.0, delta[:, 1] * SQRT3 / 2.0], axis=1)
    else:
        base = delta / 2.0
    if L is None:
        return np.hypot(base[:, 0], base[:, 1])
    if model is TRIANGULAR:
        # reduce to the fundamental cell first so that 9 images suffice
        dq = np.mod(delta[:, 0], L)
        ds = np.mod(delta[:, 1], L)
        base = np.stack([dq + ds / 2.0, ds * SQRT3 / 2.0], axis=1)
    else:
        dx = np.mod(delta[:, 0], 2 * L)
        dy = np.mod(delta[:, 1], 2 * L)
        base = np.stack([dx / 2.0, dy / 2.0], axis=1)
    u, v = _torus_vectors(model, L)
    best = np.full(len(base), np.inf)
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            p = base + i * u + j * v
            best = np.minimum(best, np.hypot(p[:, 0], p[:, 1]))
    return best


def distance(region: Region, a, b) -> float:
    """Euclidean distance between cell centres (minimum image on a torus)."""
    d = np.asarray(b, dtype=np.int64) - np.asarray(a, dtype=np.int64)
    L = region.geometry.L if region.is_torus else None
    return float(displacement_lengths(region.model, L, d.reshape(1, 2))[0])


def percolation_disjoint(model: Model, A: Shape, B: Shape) -> bool:
    """True iff no tile meets both shapes."""
    model = Model.parse(model)
    boxes = []
    for s in (A, B):
        if isinstance(s, Annulus) and s.empty:
            return True
        if isinstance(s, Rect) and s.empty:
            return True
        boxes.append(_shape_box(s))
    # only tiles near the overlap of the two bounding boxes can meet both
    lo_x = max(v for v in (boxes[0][0], boxes[1][0]) if v is not None) if any(
        v is not None for v in (boxes[0][0], boxes[1][0])) else None
    hi_x = min(v for v in (boxes[0][1], boxes[1][1]) if v is not None) if any(
        v is not None for v in (boxes[0][1], boxes[1][1])) else None
    lo_y = max(v for v in (boxes[0][2], boxes[1][2]) if v is not None) if any(
        v is not None for v in (boxes[0][2], boxes[1][2])) else None
    hi_y = min(v for v in (boxes[0][3], boxes[1][3]) if v is not None) if any(
        v is not None for v in (boxes[0][3], boxes[1][3])) else None
    if None in (lo_x, hi_x, lo_y, hi_y):
        raise ValueError("at least one shape must be bounded in each direction")
    if lo_x > hi_x + 4 or lo_y > hi_y + 4:
        return True
    cand = candidate_cells(model, lo_x, max(hi_x, lo_x), lo_y, max(hi_y, lo_y), margin=3.0)
    both = tile_meets_shape(model, cand, A) & tile_meets_shape(model, cand, B)
    return not bool(both.any())


class Side(enum.Enum):
    LOWER = "lower"
    UPPER = "upper"
    LEFT = "left"
    RIGHT = "right"


def half_plane_rect(side: Side) -> Rect:
    z = Fraction(0)
    return {
        Side.LOWER: Rect(None, None, None, z),
        Side.UPPER: Rect(None, None, z, None),
        Side.LEFT: Rect(None, z, None, None),
        Side.RIGHT: Rect(z, None, None, None),
    }[Side(side)]


def half_plane_mask(region: Region, side: Side, straddlers: bool = False) -> np.ndarray:
    """Boolean mask of cells whose tile lies in the closed half-plane.

    With ``straddlers=True`` the cells whose tile crosses the boundary line are
    included as well (tile meets the closed half-plane)."""
    side = Side(side)
    rect = half_plane_rect(side)
    if straddlers:
        return tile_meets_rect(region.model, region.coords, rect)
    X, Y = scaled(region.model, region.coords)
    wx, wy, _ = _HALF[region.model]
    if side is Side.LOWER:
        return Y + wy <= 0
    if side is Side.UPPER:
        return Y - wy >= 0
    if side is Side.LEFT:
        return X + wx <= 0
    return X - wx >= 0


def origin_cells(region: Region) -> np.ndarray:
    """Indices of the cells whose closed tile contains the origin point."""
    pt = Rect(Fraction(0), Fraction(0), Fraction(0), Fraction(0))
    return np.nonzero(tile_meets_rect(region.model, region.coords, pt))[0]


def subregion(region: Region, mask: np.ndarray, geometry=None) -> Region:
    return Region(region.model, geometry if geometry is not None else region.geometry, region.coords[mask])


def region_from_coords(model: Model, coords: Sequence, geometry=None) -> Region:
    model = Model.parse(model)
    return Region(model, geometry if geometry is not None else Window(Fraction(-1)), sort_coords(np.asarray(coords)))
