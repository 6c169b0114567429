"""Critical percolation: sampling, connectivity, arm events and arm-probability estimates."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import _kernels as kern
from .lattice import (
    BOND,
    TRIANGULAR,
    Annulus,
    Model,
    Number,
    Rect,
    Region,
    Side,
    Window,
    as_fraction,
    cells_meeting,
    half_plane_rect,
    origin_cells,
    tile_inside_open_rect,
    tile_meets_rect,
)
from .stats import Estimate, Moments, PowerFit, RngStream, as_generator, descriptor, fit_power_law, run_chunks

# re-exported plumbing
__all__ = [
    "ArmEvent",
    "ArmGeometry",
    "ArmGeometryKind",
    "ArmSpec",
    "CellFunction",
    "Configuration",
    "CrossingEvent",
    "Estimate",
    "NotReached",
    "OneArmEvent",
    "ParityFunction",
    "RngStream",
    "TableFunction",
    "arm_event",
    "bond_rectangle_crossing",
    "crossing",
    "estimate_alpha",
    "estimate_alpha_ladder",
    "estimate_arm_patterns",
    "estimate_one_arm",
    "fit_exponent",
    "one_arm",
    "quasi_mult_diag",
    "rho",
    "sample_config",
]


class NotReached(ValueError):
    """No tabulated radius satisfies the requested bound."""


@dataclass(frozen=True, eq=False)
class Configuration:
    """A +1/-1 assignment over a region's cells (+1 = open)."""

    region: Region
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int8)
        if v.shape != (len(self.region),):
            raise ValueError("configuration length must equal the region size")
        if not np.all(np.abs(v) == 1):
            raise ValueError("configuration values must be +1 or -1")
        object.__setattr__(self, "values", v)

    @staticmethod
    def from_states(region: Region, states) -> "Configuration":
        s = np.asarray(states, dtype=np.int8)
        return Configuration(region, 2 * s - 1)

    @property
    def states(self) -> np.ndarray:
        """Open flags as uint8."""
        return (self.values > 0).astype(np.uint8)

    @property
    def n_open(self) -> int:
        return int(np.count_nonzero(self.values > 0))

    def __getitem__(self, cell) -> int:
        return int(self.values[self.region.index(cell)])


def draw_states(gen: np.random.Generator, m: int, n: int, p: float = 0.5) -> np.ndarray:
    """(m, n) uint8 array of i.i.d. open flags with density p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p == 0.5:
        nw = (n + 63) // 64
        raw = gen.bit_generator.random_raw(m * nw).astype("<u8")
        bits = np.unpackbits(raw.view(np.uint8), bitorder="little").reshape(m, nw * 64)
        return np.ascontiguousarray(bits[:, :n])
    return (gen.random((m, n)) < p).astype(np.uint8)


def draw_words(gen: np.random.Generator, m: int, n: int) -> np.ndarray:
    """(m, ceil(n/64)) packed fair bits; bit i of a row is the state of cell i."""
    nw = (n + 63) // 64
    return gen.bit_generator.random_raw(m * nw).astype(np.uint64).reshape(m, nw)


def sample_config(region: Region, p: float, rng) -> Configuration:
    gen = as_generator(rng)
    return Configuration.from_states(region, draw_states(gen, 1, len(region), p)[0])


# ---------------------------------------------------------------------------
# one arm and crossings


@lru_cache(maxsize=64)
def _one_arm_geometry(region: Region, R: Fraction):
    model = region.model
    local = cells_meeting(model, Rect.square(0, 0, R))
    idx = region.lookup(local)
    if np.any(idx < 0):
        raise ValueError("configuration region does not contain I_R")
    sub = Region(model, Window(R), local)
    boundary = ~tile_inside_open_rect(model, local, Rect.square(0, 0, R))
    return idx, sub.neighbours(1), origin_cells(sub), boundary


def one_arm(omega: Configuration, R: Number) -> bool:
    """Open path from the origin to the boundary of [-R, R]^2 (true for R = 0)."""
    R = as_fraction(R)
    if R <= 0:
        return True
    idx, nbr, src, boundary = _one_arm_geometry(omega.region, R)
    states = omega.states[idx][None, :]
    return bool(kern.reach_batch(states, nbr, src, boundary)[0])


@lru_cache(maxsize=64)
def _crossing_geometry(region: Region, n: Fraction):
    model = region.model
    local = cells_meeting(model, Rect.square(0, 0, n))
    idx = region.lookup(local)
    if np.any(idx < 0):
        raise ValueError("configuration region does not contain I_n")
    sub = Region(model, Window(n), local)
    left = tile_meets_rect(model, local, Rect(-n, -n, -n, n))
    right = tile_meets_rect(model, local, Rect(n, n, -n, n))
    return idx, sub.neighbours(1), np.nonzero(left)[0], right


def crossing(omega: Configuration, n: Number) -> bool:
    """Open left-right crossing of [-n, n]^2 through tiles meeting the square."""
    n = as_fraction(n)
    idx, nbr, left, right = _crossing_geometry(omega.region, n)
    return bool(kern.reach_batch(omega.states[idx][None, :], nbr, left, right)[0])


@lru_cache(maxsize=16)
def _bond_rect_geometry(region: Region, w: int, h: int):
    X = np.arange(0, 2 * w + 1)
    Y = np.arange(0, 2 * h + 1)
    XX, YY = np.meshgrid(X, Y, indexing="ij")
    keep = ((XX + YY) % 2) == 1
    local = np.stack([XX[keep], YY[keep]], axis=1)
    idx = region.lookup(local)
    if np.any(idx < 0):
        raise ValueError("configuration region does not contain the rectangle")
    sub = Region(BOND, Window(Fraction(0)), local)
    left = np.nonzero(local[:, 0] <= 1)[0]
    right = local[:, 0] >= 2 * w - 1
    return idx, sub.neighbours(1), left, right


def bond_rectangle_crossing(omega: Configuration, width: int, height: int) -> bool:
    """Open left-right crossing of the primal rectangle {0..width} x {0..height} of Z^2.

    Uses only edges joining two vertices of the rectangle.  For width = height + 1
    the crossing probability at p = 1/2 is exactly 1/2 by self-duality."""
    if omega.region.model is not BOND:
        raise ValueError("bond model required")
    idx, nbr, left, right = _bond_rect_geometry(omega.region, int(width), int(height))
    return bool(kern.reach_batch(omega.states[idx][None, :], nbr, left, right)[0])


# ---------------------------------------------------------------------------
# arm events


class ArmGeometryKind(enum.Enum):
    PLANE = "plane"
    HALF_PLANE = "half"
    QUARTER_PLANE = "quarter"


@dataclass(frozen=True)
class ArmSpec:
    """k alternating arms in the plane, a half-plane or a quarter-plane.

    ``start`` is the colour of the first arm (+1 open, -1 closed, 0 = either
    pattern).  ``side`` selects the half-plane; the quarter-plane is the
    intersection of ``side`` with ``side2``."""

    k: int
    geometry: ArmGeometryKind = ArmGeometryKind.PLANE
    start: int = 1
    side: Side = Side.UPPER
    side2: Side = Side.RIGHT

    def __post_init__(self):
        object.__setattr__(self, "geometry", ArmGeometryKind(self.geometry))
        object.__setattr__(self, "side", Side(self.side))
        object.__setattr__(self, "side2", Side(self.side2))
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.start not in (-1, 0, 1):
            raise ValueError("start colour must be +1, -1 or 0")
        if self.geometry is ArmGeometryKind.PLANE and self.k >= 3 and self.k % 2 == 1:
            raise ValueError("an odd number k >= 3 of alternating arms does not close up in the plane")

    def needs(self) -> list[tuple[int, int]]:
        """Admissible (open, closed) crossing-cluster counts, one pair per colour pattern."""
        k = self.k
        if self.geometry is ArmGeometryKind.PLANE and k % 2 == 0:
            return [(k // 2, k // 2)]
        hi, lo = (k + 1) // 2, k // 2
        pats = {1: (hi, lo), -1: (lo, hi)}
        if self.start == 0:
            return [pats[1], pats[-1]] if pats[1] != pats[-1] else [pats[1]]
        return [pats[self.start]]


def _clip_rect(spec: ArmSpec, center) -> Rect | None:
    if spec.geometry is ArmGeometryKind.PLANE:
        return None
    def shifted(side):
        r = half_plane_rect(side)
        cx, cy = center
        sh = lambda v, c: None if v is None else v + c
        return Rect(sh(r.x0, cx), sh(r.x1, cx), sh(r.y0, cy), sh(r.y1, cy))
    clip = shifted(spec.side)
    if spec.geometry is ArmGeometryKind.QUARTER_PLANE:
        clip = clip.intersect(shifted(spec.side2))
    return clip


def _frame_strips(outer: Rect, inner: Rect, r: Fraction) -> list[Rect]:
    if r <= 0:
        return [outer]
    return [
        Rect(outer.x0, inner.x0, outer.y0, outer.y1),
        Rect(inner.x1, outer.x1, outer.y0, outer.y1),
        Rect(outer.x0, outer.x1, outer.y0, inner.y0),
        Rect(outer.x0, outer.x1, inner.y1, outer.y1),
    ]


def _boundary_segments(sq: Rect) -> list[Rect]:
    return [
        Rect(sq.x0, sq.x1, sq.y0, sq.y0),
        Rect(sq.x0, sq.x1, sq.y1, sq.y1),
        Rect(sq.x0, sq.x0, sq.y0, sq.y1),
        Rect(sq.x1, sq.x1, sq.y0, sq.y1),
    ]


@dataclass(frozen=True, eq=False)
class ArmGeometry:
    """Cells of an annulus (optionally clipped) with their inner/outer boundary flags."""

    model: Model
    coords: np.ndarray
    nbr_open: np.ndarray
    nbr_closed: np.ndarray
    inner: np.ndarray  # indices of inner-touching cells
    outer: np.ndarray  # bool mask of outer-touching cells

    @property
    def n(self) -> int:
        return len(self.coords)


def _meets_any(model, coords, rects):
    out = np.zeros(len(coords), dtype=bool)
    for rc in rects:
        out |= tile_meets_rect(model, coords, rc)
    return out


@lru_cache(maxsize=256)
def arm_geometry(model: Model, annulus: Annulus, clip: Rect | None = None) -> ArmGeometry:
    model = Model.parse(model)
    outer, inner = annulus.outer, annulus.inner
    strips = _frame_strips(outer, inner, annulus.r)
    if clip is not None:
        strips = [s.intersect(clip) for s in strips]
    strips = [s for s in strips if not s.empty]
    cand = cells_meeting(model, outer)
    member = _meets_any(model, cand, strips)
    coords = cand[member]
    if annulus.r > 0:
        in_segs = _boundary_segments(inner)
    else:
        c = annulus.center
        in_segs = [Rect(c[0], c[0], c[1], c[1])]
    out_segs = _boundary_segments(outer)
    if clip is not None:
        in_segs = [s.intersect(clip) for s in in_segs]
        out_segs = [s.intersect(clip) for s in out_segs]
    in_segs = [s for s in in_segs if not s.empty]
    out_segs = [s for s in out_segs if not s.empty]
    inner_flag = _meets_any(model, coords, in_segs)
    outer_flag = _meets_any(model, coords, out_segs)
    sub = Region(model, Window(annulus.R), coords)
    # 32-bit tables keep the searches cache friendly on large annuli
    return ArmGeometry(model, coords, sub.neighbours(1).astype(np.int32), sub.neighbours(-1).astype(np.int32),
                       np.nonzero(inner_flag)[0].astype(np.int32), outer_flag)


def _arm_eval(geom: ArmGeometry, states2d: np.ndarray, spec: ArmSpec) -> np.ndarray:
    needs = spec.needs()
    a1, b1 = needs[0]
    a2, b2 = needs[1] if len(needs) > 1 else (-1, -1)
    return kern.arm_batch(np.ascontiguousarray(states2d, dtype=np.uint8), geom.nbr_open, geom.nbr_closed,
                          geom.inner, geom.outer, a1, b1, a2, b2)


def arm_event(omega: Configuration, annulus: Annulus, spec: ArmSpec, clip: Rect | None = None) -> bool:
    """k alternating arms across the annulus (restricted to the spec's half/quarter plane).

    Arms are counted through crossing clusters: an open (closed) cluster of
    annulus cells meeting both boundary squares.  In the plane, k = 2j arms
    exist iff there are at least j open and j closed crossing clusters; in a
    half- or quarter-plane a pattern starting with colour c needs ceil(k/2)
    clusters of colour c and floor(k/2) of the other one."""
    if annulus.empty:
        return True
    if clip is None:
        clip = _clip_rect(spec, annulus.center)
    geom = arm_geometry(omega.region.model, annulus, clip)
    idx = omega.region.lookup(geom.coords)
    if np.any(idx < 0):
        raise ValueError("annulus is not inside the configuration's region")
    return bool(_arm_eval(geom, omega.states[idx][None, :], spec)[0])


# ---------------------------------------------------------------------------
# estimators


def _binomial(hits: int, n: int, seed: str) -> Estimate:
    return Moments(n, float(hits), float(hits)).estimate(seed)


def estimate_alpha_ladder(spec: ArmSpec, radii: Sequence[Number], R: Number, p: float = 0.5,
                          n_samples: int = 10_000, rng=0, model: Model = TRIANGULAR,
                          chunk: int = 512, threads: int | None = None) -> list[Estimate]:
    """alpha_k(r, R) for several inner radii r, all from the same configurations."""
    model = Model.parse(model)
    R = as_fraction(R)
    radii = [as_fraction(r) for r in radii]
    seed = descriptor(rng)
    live = [r for r in radii if r < R]
    if not live:
        return [Estimate.exact_value(1.0, n_samples, seed) for _ in radii]
    rmin = min(live)
    base = Annulus((0, 0), rmin, R)
    clip = _clip_rect(spec, base.center)
    big = arm_geometry(model, base, clip)
    parts = []
    for r in live:
        g = arm_geometry(model, Annulus((0, 0), r, R), clip)
        sel = Region(model, Window(R), big.coords).lookup(g.coords)
        parts.append((g, sel))

    def work(size, gen):
        states = draw_states(gen, size, big.n, p)
        return np.array([np.count_nonzero(_arm_eval(g, states[:, sel], spec)) for g, sel in parts])

    counts = np.sum(run_chunks(work, n_samples, rng, chunk, threads), axis=0)
    by_r = {r: _binomial(int(c), int(n_samples), seed) for r, c in zip(live, counts)}
    return [by_r.get(r, Estimate.exact_value(1.0, n_samples, seed)) for r in radii]


def estimate_arm_patterns(spec: ArmSpec, radii: Sequence[Number], R: Number, p: float = 0.5,
                          n_samples: int = 10_000, rng=0, model: Model = TRIANGULAR,
                          chunk: int = 512, threads: int | None = None) -> dict:
    """Arm frequencies for each start colour from one counting pass per radius.

    Returns {+1: [...], -1: [...], 0: [...]} with one Estimate per radius; key 0
    is the union of the two colour patterns (``spec.start`` is ignored)."""
    model = Model.parse(model)
    R = as_fraction(R)
    radii = [as_fraction(r) for r in radii]
    seed = descriptor(rng)
    specs = {c: ArmSpec(spec.k, spec.geometry, c, spec.side, spec.side2) for c in (1, -1)}
    need = {c: sp.needs()[0] for c, sp in specs.items()}
    cap = max(max(v) for v in need.values())
    live = [r for r in radii if r < R]
    one = {c: [Estimate.exact_value(1.0, n_samples, seed) for _ in radii] for c in (1, -1, 0)}
    if not live:
        return one
    clip = _clip_rect(spec, (0, 0))
    big = arm_geometry(model, Annulus((0, 0), min(live), R), clip)
    parts = []
    for r in live:
        g = arm_geometry(model, Annulus((0, 0), r, R), clip)
        parts.append((g, Region(model, Window(R), big.coords).lookup(g.coords).astype(np.int32)))

    def work(size, gen):
        states = draw_states(gen, size, big.n, p)
        out = np.zeros((len(parts), 3), dtype=np.int64)
        for i, (g, sel) in enumerate(parts):
            c = kern.counts_batch(states, sel, g.nbr_open, g.nbr_closed, g.inner, g.outer, cap, cap)
            hit = {k: (c[:, 0] >= v[0]) & (c[:, 1] >= v[1]) for k, v in need.items()}
            out[i] = [np.count_nonzero(hit[1]), np.count_nonzero(hit[-1]), np.count_nonzero(hit[1] | hit[-1])]
        return out

    counts = np.sum(run_chunks(work, n_samples, rng, chunk, threads), axis=0)
    result = {}
    for j, colour in enumerate((1, -1, 0)):
        by_r = {r: _binomial(int(c), int(n_samples), seed) for r, c in zip(live, counts[:, j])}
        result[colour] = [by_r.get(r, Estimate.exact_value(1.0, n_samples, seed)) for r in radii]
    return result


def estimate_alpha(spec: ArmSpec, r: Number, R: Number, p: float = 0.5, n_samples: int = 10_000,
                   rng=0, model: Model = TRIANGULAR, **kw) -> Estimate:
    """MC frequency of the arm event in [-R,R]^2 minus (-r,r)^2 (1 exactly when r >= R)."""
    return estimate_alpha_ladder(spec, [r], R, p, n_samples, rng, model, **kw)[0]


def one_arm_levels_geometry(model: Model, radii: Sequence[Number]):
    """Cells of I_{max R} with their level: the number of radii R_j whose open square misses the tile."""
    model = Model.parse(model)
    radii = sorted(as_fraction(x) for x in radii)
    top = radii[-1]
    coords = cells_meeting(model, Rect.square(0, 0, top))
    level = np.zeros(len(coords), dtype=np.int64)
    for R in radii:
        level += ~tile_inside_open_rect(model, coords, Rect.square(0, 0, R))
    sub = Region(model, Window(top), coords)
    return sub, level, origin_cells(sub)


def estimate_one_arm(radii: Sequence[Number], n_samples: int, rng, model: Model = TRIANGULAR,
                     chunk: int = 256, threads: int | None = None) -> list[Estimate]:
    """alpha_1(R) = P[0 <-> boundary of [-R,R]^2] at p = 1/2 for several R at once.

    One search per sample in the largest window; the event at R_j holds iff the
    origin's cluster reaches a tile that is not inside (-R_j, R_j)^2."""
    radii = [as_fraction(x) for x in radii]
    seed = descriptor(rng)
    pos = sorted({x for x in radii if x > 0})
    if not pos:
        return [Estimate.exact_value(1.0, n_samples, seed) for _ in radii]
    sub, level, src = one_arm_levels_geometry(model, pos)
    nbr = sub.neighbours(1)
    nlev = len(pos)

    def work(size, gen):
        words = draw_words(gen, size, sub.n)
        best = kern.one_arm_levels(words, nbr, src, level, nlev)
        # event at pos[j] iff the cluster reaches a cell of level at least j + 1
        return np.array([np.count_nonzero(best >= j + 1) for j in range(nlev)])

    counts = np.sum(run_chunks(work, n_samples, rng, chunk, threads), axis=0)
    table = {x: _binomial(int(c), int(n_samples), seed) for x, c in zip(pos, counts)}
    return [table[x] if x > 0 else Estimate.exact_value(1.0, n_samples, seed) for x in radii]


@dataclass(frozen=True)
class QuasiMultReport:
    ratio: float
    std_error: float
    alpha13: Estimate
    alpha12: Estimate
    alpha23: Estimate
    zero: bool

    @property
    def available(self) -> bool:
        return not self.zero


def quasi_mult_diag(spec: ArmSpec, r1: Number, r2: Number, r3: Number, n_samples: int, rng,
                    model: Model = TRIANGULAR, p: float = 0.5) -> QuasiMultReport:
    """alpha(r1,r3) / (alpha(r1,r2) alpha(r2,r3)) with delta-method error."""
    r1, r2, r3 = (as_fraction(x) for x in (r1, r2, r3))
    if not (r1 <= r2 <= r3):
        raise ValueError("radii must be non-decreasing")
    stream = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    cache: dict = {}

    def est(a, b):
        if (a, b) not in cache:
            cache[(a, b)] = estimate_alpha(spec, a, b, p, n_samples, stream.spawn(len(cache)), model)
        return cache[(a, b)]

    e13, e12, e23 = est(r1, r3), est(r1, r2), est(r2, r3)
    if e13.mean == 0 or e12.mean == 0 or e23.mean == 0:
        return QuasiMultReport(float("nan"), float("nan"), e13, e12, e23, True)
    ratio = e13.mean / (e12.mean * e23.mean)
    if r1 == r2 or r2 == r3:
        # the two non-trivial factors are the same estimate, so the ratio is exactly 1
        return QuasiMultReport(ratio, 0.0, e13, e12, e23, False)
    rel2 = sum((e.std_error / e.mean) ** 2 for e in (e13, e12, e23) if not e.exact)
    return QuasiMultReport(ratio, ratio * math.sqrt(rel2), e13, e12, e23, False)


def rho(l: float, alpha4_table: Mapping[Number, Estimate | float]) -> Number:
    """Smallest tabulated radius r with r^2 * alpha_4(r) >= l."""
    for r in sorted(alpha4_table, key=lambda x: as_fraction(x)):
        a = alpha4_table[r]
        a = a.mean if isinstance(a, Estimate) else float(a)
        if float(r) ** 2 * a >= l:
            return r
    raise NotReached(f"no tabulated radius reaches {l}")


def fit_exponent(x: Sequence[float], estimates: Sequence[Estimate]) -> PowerFit:
    return fit_power_law(x, estimates)


# ---------------------------------------------------------------------------
# event predicates evaluated on batches of configurations


class CellFunction:
    """A function of the states of ``coords`` cells, evaluated on (m, n) uint8 batches."""

    model: Model
    coords: np.ndarray

    @property
    def n(self) -> int:
        return len(self.coords)

    def evaluate(self, states2d: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, omega: Configuration):
        idx = omega.region.lookup(self.coords)
        if np.any(idx < 0):
            raise ValueError("configuration does not cover the function's cells")
        return self.evaluate(omega.states[idx][None, :])[0]


class OneArmEvent(CellFunction):
    """f_R: open path from the origin to the boundary of [-R, R]^2."""

    def __init__(self, model: Model, R: Number):
        self.model = Model.parse(model)
        self.R = as_fraction(R)
        region = Region(self.model, Window(self.R), cells_meeting(self.model, Rect.square(0, 0, self.R)))
        self.coords = region.coords
        self._nbr = region.neighbours(1)
        self._src = origin_cells(region)
        self._target = ~tile_inside_open_rect(self.model, self.coords, Rect.square(0, 0, self.R))

    def evaluate(self, states2d):
        if self.R <= 0:
            return np.ones(len(states2d), dtype=bool)
        return kern.reach_batch(np.ascontiguousarray(states2d, dtype=np.uint8), self._nbr, self._src, self._target)

    def __str__(self):
        return f"one_arm(R={self.R})"


class CrossingEvent(CellFunction):
    """Left-right open crossing of [-n, n]^2."""

    def __init__(self, model: Model, n: Number):
        self.model = Model.parse(model)
        self.size = as_fraction(n)
        s = self.size
        region = Region(self.model, Window(s), cells_meeting(self.model, Rect.square(0, 0, s)))
        self.coords = region.coords
        self._nbr = region.neighbours(1)
        self._left = np.nonzero(tile_meets_rect(self.model, self.coords, Rect(-s, -s, -s, s)))[0]
        self._right = tile_meets_rect(self.model, self.coords, Rect(s, s, -s, s))

    def evaluate(self, states2d):
        return kern.reach_batch(np.ascontiguousarray(states2d, dtype=np.uint8), self._nbr, self._left, self._right)

    def __str__(self):
        return f"crossing(n={self.size})"


class ArmEvent(CellFunction):
    def __init__(self, model: Model, annulus: Annulus, spec: ArmSpec, clip: Rect | None = None):
        self.model = Model.parse(model)
        self.annulus, self.spec = annulus, spec
        self.geometry = arm_geometry(self.model, annulus, clip if clip is not None else _clip_rect(spec, annulus.center))
        self.coords = self.geometry.coords

    def evaluate(self, states2d):
        if self.annulus.empty:
            return np.ones(len(states2d), dtype=bool)
        return _arm_eval(self.geometry, states2d, self.spec)

    def __str__(self):
        return f"arms(k={self.spec.k},{self.spec.geometry.value},r={self.annulus.r},R={self.annulus.R})"


class ParityFunction(CellFunction):
    """chi_S = product of the +1/-1 values of the listed cells."""

    def __init__(self, model: Model, coords):
        self.model = Model.parse(model)
        self.coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)

    def evaluate(self, states2d):
        st = np.asarray(states2d)
        odd_closed = (st.shape[1] - st.sum(axis=1, dtype=np.int64)) % 2
        return 1 - 2 * odd_closed

    def __str__(self):
        return f"parity({len(self.coords)} cells)"


class TableFunction(CellFunction):
    """A truth table over explicit cells (bit i of the index = state of cell i)."""

    def __init__(self, model: Model, coords, values):
        self.model = Model.parse(model)
        self.coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        self.values = np.asarray(values, dtype=np.float64)
        if len(self.values) != 1 << len(self.coords):
            raise ValueError("table length must be 2^n")

    def evaluate(self, states2d):
        st = np.asarray(states2d, dtype=np.int64)
        idx = st @ (np.int64(1) << np.arange(st.shape[1], dtype=np.int64))
        return self.values[idx]

    def __str__(self):
        return f"table({len(self.coords)} cells)"
