"""Exact Walsh-Fourier analysis of Boolean functions on a few cells.

Configurations are bitmasks: bit i set means cell i is open (omega_i = +1).
Subsets S are bitmasks over the same cells, chi_S(omega) = prod_{i in S} omega_i
and h = sum_S hat h(S) chi_S with hat h(S) = E[h chi_S] under the uniform measure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit

from . import _kernels as kern
from .dynamics import KernelSpec, simulate_batch
from .lattice import (
    TRIANGULAR,
    Annulus,
    AnnulusKind,
    Model,
    Rect,
    Region,
    Window,
    as_fraction,
    cells_in_window,
    centre_in_rect,
    origin_cells,
    percolation_disjoint,
    tile_inside_open_rect,
    tile_meets_rect,
    tile_meets_shape,
)
from .stats import Estimate, Moments, RngStream, as_generator, as_stream, descriptor, run_chunks

MAX_BITS = 24


class SizeCap(ValueError):
    """Table or measure larger than the supported number of cells."""


class ZeroFunction(ValueError):
    """Spectral sample requested for a function with zero second moment."""


class OverlapError(ValueError):
    """Cell sets that must be disjoint intersect."""


class StructureError(ValueError):
    """An annulus structure violates its defining conditions."""


def _check_bits(n: int, cap: int = MAX_BITS) -> None:
    if n > cap:
        raise SizeCap(f"{n} cells exceed the cap of {cap}")


def popcounts(n: int) -> np.ndarray:
    pc = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        pc[1 << i: 2 << i] = pc[: 1 << i] + 1
    return pc


def enumerate_states(n: int) -> np.ndarray:
    """(2^n, n) uint8 open flags; row x has bit i of x in column i."""
    x = np.arange(1 << n, dtype=np.int64)
    return ((x[:, None] >> np.arange(n)) & 1).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class BooleanTable:
    """Truth table of h over 2^n configurations of the listed cells."""

    cell_ids: tuple
    values: np.ndarray = field(repr=False)
    model: Model | None = None

    def __post_init__(self):
        n = len(self.cell_ids)
        _check_bits(n)
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (1 << n,):
            raise ValueError("values must have length 2^n")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "cell_ids", tuple(self.cell_ids))

    @property
    def n(self) -> int:
        return len(self.cell_ids)

    def position(self, cell) -> int:
        if isinstance(cell, (int, np.integer)):
            if not 0 <= cell < self.n:
                raise KeyError(cell)
            return int(cell)
        return self.cell_ids.index(tuple(int(c) for c in cell))

    def mask(self, cells: Iterable) -> int:
        m = 0
        for c in cells:
            m |= 1 << self.position(c)
        return m

    @staticmethod
    def from_states_fn(cell_ids: Sequence, fn: Callable[[np.ndarray], np.ndarray], model=None) -> "BooleanTable":
        """Build from a vectorised function of the (2^n, n) open-flag matrix."""
        _check_bits(len(cell_ids))
        states = enumerate_states(len(cell_ids))
        return BooleanTable(tuple(cell_ids), np.asarray(fn(states), dtype=np.float64), model)

    @staticmethod
    def parity(n: int, S: Iterable[int]) -> "BooleanTable":
        S = list(S)
        return BooleanTable.from_states_fn(
            tuple(range(n)), lambda st: np.prod(2.0 * st[:, S] - 1.0, axis=1) if S else np.ones(len(st)))

    @staticmethod
    def majority(n: int = 3) -> "BooleanTable":
        return BooleanTable.from_states_fn(tuple(range(n)), lambda st: (st.sum(axis=1) * 2 > n).astype(float))

    @staticmethod
    def conjunction(n: int = 2) -> "BooleanTable":
        return BooleanTable.from_states_fn(tuple(range(n)), lambda st: st.all(axis=1).astype(float))


def one_arm_table(model: Model, R) -> BooleanTable:
    """f_R = 1{0 <-> boundary of [-R,R]^2} as a truth table over I_R."""
    model = Model.parse(model)
    region = cells_in_window(model, R)
    _check_bits(region.n)
    Rf = as_fraction(R)
    target = ~tile_inside_open_rect(model, region.coords, Rect.square(0, 0, Rf))
    src = origin_cells(region)
    states = enumerate_states(region.n)
    if Rf == 0:
        vals = np.ones(len(states))
    else:
        vals = kern.reach_batch(states, region.neighbours(1), src, target).astype(float)
    return BooleanTable(tuple(map(tuple, region.coords.tolist())), vals, model)


def crossing_table(model: Model, n) -> BooleanTable:
    """Left-right crossing of [-n, n]^2 as a truth table over I_n."""
    model = Model.parse(model)
    nf = as_fraction(n)
    region = cells_in_window(model, nf)
    _check_bits(region.n)
    left = np.nonzero(tile_meets_rect(model, region.coords, Rect(-nf, -nf, -nf, nf)))[0]
    right = tile_meets_rect(model, region.coords, Rect(nf, nf, -nf, nf))
    vals = kern.reach_batch(enumerate_states(region.n), region.neighbours(1), left, right).astype(float)
    return BooleanTable(tuple(map(tuple, region.coords.tolist())), vals, model)


def grid_crossing_table(width: int, height: int) -> BooleanTable:
    """Left-right crossing of a width x height block of triangular sites (a rhombus)."""
    coords = [(q, s) for q in range(width) for s in range(height)]
    region = Region(TRIANGULAR, Window(Fraction(0)), np.array(coords, dtype=np.int64))
    left = np.nonzero(region.coords[:, 0] == 0)[0]
    right = region.coords[:, 0] == width - 1
    vals = kern.reach_batch(enumerate_states(len(coords)), region.neighbours(1), left, right).astype(float)
    return BooleanTable(tuple(coords), vals, TRIANGULAR)


# ---------------------------------------------------------------------------
# transform


def fwht(values: np.ndarray) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform H[S] = sum_x v[x] (-1)^{|S & x|}."""
    x = np.array(values, dtype=np.float64, copy=True)
    n = x.shape[0].bit_length() - 1
    if x.shape[0] != 1 << n:
        raise ValueError("length must be a power of two")
    for i in range(n):
        v = x.reshape(-1, 2, 1 << i)
        a = v[:, 0, :].copy()
        v[:, 0, :] += v[:, 1, :]
        v[:, 1, :] = a - v[:, 1, :]
    return x


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    coefficients: np.ndarray = field(repr=False)
    total_mass: float
    cell_ids: tuple = ()
    model: Model | None = None

    @property
    def n(self) -> int:
        return self.coefficients.shape[0].bit_length() - 1

    @property
    def normalized(self) -> bool:
        return self.total_mass > 0

    @property
    def masses(self) -> np.ndarray:
        """Unnormalised spectral masses hat h(S)^2."""
        return self.coefficients ** 2

    @property
    def weights(self) -> np.ndarray:
        """Spectral sample law hat h(S)^2 / E[h^2]."""
        if self.total_mass <= 0:
            raise ZeroFunction("zero function has no spectral sample")
        return self.masses / self.total_mass

    @property
    def sizes(self) -> np.ndarray:
        return popcounts(self.n)

    def to_csv(self) -> str:
        """Rows: subset bitmask (hex), |S|, coefficient, squared weight."""
        sizes = self.sizes
        lines = ["mask,size,coefficient,weight"]
        for s, (c, k) in enumerate(zip(self.coefficients, sizes)):
            lines.append(f"{s:#x},{int(k)},{float(c)!r},{float(c * c)!r}")
        return "\n".join(lines) + "\n"


def walsh_transform(h: BooleanTable) -> SpectralMeasure:
    n = h.n
    _check_bits(n)
    H = fwht(h.values)
    sign = 1.0 - 2.0 * (popcounts(n) & 1)
    coef = sign * H / float(1 << n)
    total = float(np.dot(h.values, h.values)) / float(1 << n)
    return SpectralMeasure(coef, total, h.cell_ids, h.model)


def inverse_walsh(m: SpectralMeasure) -> np.ndarray:
    """Truth table from coefficients: h(x) = sum_S hat h(S) chi_S(x)."""
    sign = 1.0 - 2.0 * (popcounts(m.n) & 1)
    return fwht(sign * m.coefficients)


def spectral_sample(m: SpectralMeasure, rng, size: int | None = None):
    """Subset bitmask(s) drawn with probability hat h(S)^2 / E[h^2]."""
    w = m.weights
    gen = as_generator(rng)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    u = gen.random(1 if size is None else size)
    draws = np.searchsorted(cdf, u, side="right")
    draws = np.minimum(draws, len(w) - 1)
    # never land on a zero-weight atom through rounding at the top of the cdf
    draws = np.where(w[draws] > 0, draws, np.searchsorted(cdf, cdf[draws], side="left"))
    return int(draws[0]) if size is None else draws


# ---------------------------------------------------------------------------
# size / geometry statistics


def subset_diameters(points: np.ndarray) -> np.ndarray:
    """Largest pairwise distance within each subset (0 for |S| <= 1)."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    diam = np.zeros(1 << n)
    for i in range(n):
        d_i = np.hypot(*(points[:i] - points[i]).T) if i else np.zeros(0)
        # far[T] = max_{j in T} d(i, j) over subsets T of the first i cells
        far = np.zeros(1 << i)
        for j in range(i):
            far[1 << j: 2 << j] = np.maximum(far[: 1 << j], d_i[j])
        diam[1 << i: 2 << i] = np.maximum(diam[: 1 << i], far)
    return diam


@dataclass(frozen=True)
class SizeGeometryTable:
    boxes: tuple
    inside: np.ndarray  # (len(boxes), n + 1): P[|S| = k, S inside (-r0, r0)^2]
    outside: np.ndarray  # (len(boxes), n + 1): P[|S| = k, S not inside]
    by_size: np.ndarray  # (n + 1,)
    mean_diameter: np.ndarray  # (n + 1,): E[diam S ; |S| = k] / P[|S| = k]


def size_geometry_table(m: SpectralMeasure, geometry, boxes: Sequence) -> SizeGeometryTable:
    """Exact joint law of |S| and containment of S in (-r0, r0)^2 (cells located by centre)."""
    if isinstance(geometry, Region):
        model, coords = geometry.model, geometry.coords
    else:
        model = m.model
        coords = np.asarray(geometry if geometry is not None else m.cell_ids, dtype=np.int64)
    if len(coords) != m.n:
        raise ValueError("geometry must list one cell per measure bit")
    w = m.weights
    sizes = m.sizes
    n = m.n
    by_size = np.bincount(sizes, weights=w, minlength=n + 1)
    inside_rows, outside_rows = [], []
    for r0 in boxes:
        r0f = as_fraction(r0)
        inmask = centre_in_rect(model, coords, Rect.square(0, 0, r0f), open_=True)
        allowed = int(sum(1 << i for i in range(n) if inmask[i]))
        S = np.arange(1 << n, dtype=np.int64)
        contained = (S & ~allowed) == 0
        inside_rows.append(np.bincount(sizes[contained], weights=w[contained], minlength=n + 1))
        outside_rows.append(by_size - inside_rows[-1])
    from .lattice import centres

    diam = subset_diameters(centres(model, coords))
    dsum = np.bincount(sizes, weights=w * diam, minlength=n + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_d = np.where(by_size > 0, dsum / np.where(by_size > 0, by_size, 1), 0.0)
    return SizeGeometryTable(tuple(boxes), np.array(inside_rows), np.array(outside_rows), by_size, mean_d)


# ---------------------------------------------------------------------------
# inclusion-exclusion identity


def conditional_second_moment(values: np.ndarray, n: int, keep: int) -> float:
    """E[E[h | F_keep]^2], averaging exactly over the bits outside ``keep``."""
    t = np.asarray(values, dtype=np.float64).reshape((2,) * n) if n else np.asarray(values, dtype=np.float64)
    # bit i of the configuration index is axis n - 1 - i in C order
    drop = tuple(n - 1 - i for i in range(n) if not (keep >> i) & 1)
    cond = t.mean(axis=drop) if drop else t
    return float(np.mean(np.asarray(cond) ** 2))


def _masks(h: BooleanTable, sets: Sequence[Iterable]) -> list[int]:
    return [h.mask(s) for s in sets]


def _check_disjoint(masks: Sequence[int]) -> None:
    seen = 0
    for m in masks:
        if seen & m:
            raise OverlapError("sets must be mutually disjoint")
        seen |= m


def hit_avoid_mass(m: SpectralMeasure, J: Sequence[int], W: int) -> float:
    """Unnormalised mass of {S : S meets every J_j, S misses W} by direct summation."""
    S = np.arange(1 << m.n, dtype=np.int64)
    ok = (S & W) == 0
    for j in J:
        ok &= (S & j) != 0
    return float(np.sum(m.masses[ok]))


def jp_identity_check(h: BooleanTable, J: Sequence[Iterable], W: Iterable = ()) -> tuple[float, float, float]:
    """Direct spectral mass versus the alternating sum of conditional second moments."""
    Jm = _masks(h, J)
    Wm = h.mask(W)
    _check_disjoint(Jm + [Wm])
    if len(Jm) > 10:
        raise SizeCap("at most 10 sets")
    lhs = hit_avoid_mass(walsh_transform(h), Jm, Wm)
    full = (1 << h.n) - 1
    rhs = 0.0
    for k in range(len(Jm) + 1):
        for T in itertools.combinations(range(len(Jm)), k):
            removed = Wm
            for j in T:
                removed |= Jm[j]
            rhs += (-1) ** k * conditional_second_moment(h.values, h.n, full & ~removed)
    return lhs, rhs, abs(lhs - rhs)


# ---------------------------------------------------------------------------
# correlations


def iid_correlation_exact(m: SpectralMeasure, t: float) -> float:
    """sum_S hat h(S)^2 exp(-t |S|)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if math.isinf(t):
        return float(m.coefficients[0] ** 2)
    return float(np.dot(m.masses, np.exp(-t * m.sizes)))


@njit(cache=True)
def _track_positions(times, a, b, offsets, t, S, label, out_pos):
    k = len(S)
    for i in range(len(offsets) - 1):
        for j in range(k):
            out_pos[i, j] = S[j]
            label[S[j]] = j
        for e in range(offsets[i], offsets[i + 1]):
            if times[e] > t:
                break
            x = a[e]
            y = b[e]
            lx = label[x]
            ly = label[y]
            if lx < 0 and ly < 0:
                continue
            label[x] = ly
            label[y] = lx
            if lx >= 0:
                out_pos[i, lx] = y
            if ly >= 0:
                out_pos[i, ly] = x
        for j in range(k):
            label[out_pos[i, j]] = -1


@njit(cache=True)
def _image_sums(local_img, coef):
    """sum_S c[S] c[pi(S)] per log, with pi(S) = -1 when S leaves the window."""
    m, n = local_img.shape
    size = 1 << n
    img = np.empty(size, dtype=np.int64)
    out = np.zeros(m)
    for i in range(m):
        img[0] = 0
        acc = coef[0] * coef[0]
        for bit in range(n):
            tb = local_img[i, bit]
            lo = 1 << bit
            for s in range(lo, lo << 1):
                prev = img[s - lo]
                if prev < 0 or tb < 0:
                    img[s] = -1
                else:
                    img[s] = prev | (1 << tb)
                    acc += coef[s] * coef[img[s]]
        out[i] = acc
    return out


def embed_cells(cell_ids: Sequence, region: Region) -> np.ndarray:
    idx = region.lookup(np.asarray(cell_ids, dtype=np.int64).reshape(-1, 2))
    if np.any(idx < 0) or len(set(idx.tolist())) != len(idx):
        raise ValueError("cells do not embed injectively in the kernel's torus")
    return idx


def exclusion_correlation_spectral(m: SpectralMeasure, K: KernelSpec, t: float, n_logs: int, rng,
                                   chunk: int = 2048, threads: int | None = None) -> Estimate:
    """Unbiased estimate of sum_{S,S'} hat h(S) hat h(S') K_t(S, S') from event logs."""
    _check_bits(m.n, 20)
    seed = descriptor(rng)
    coef = np.ascontiguousarray(m.coefficients)
    if t == 0:
        return Estimate.exact_value(float(np.dot(coef, coef)), n_logs, seed)
    tor = embed_cells(m.cell_ids, K.region)
    local = np.full(K.n, -1, dtype=np.int64)
    local[tor] = np.arange(m.n)

    def work(size, gen):
        ev = simulate_batch(K, t, size, gen)
        pos = np.empty((size, m.n), dtype=np.int64)
        label = np.full(K.n, -1, dtype=np.int64)
        _track_positions(ev.times, ev.a, ev.b, ev.offsets, t, tor, label, pos)
        return Moments.of(_image_sums(local[pos], coef))

    total = Moments()
    for p in run_chunks(work, n_logs, rng, chunk, threads):
        total = total.merge(p)
    return total.estimate(seed)


# ---------------------------------------------------------------------------
# annulus structures


@dataclass(frozen=True)
class Structure:
    """An r0-decorated centred annulus structure inside the window [-R, R]^2."""

    R: Fraction
    r0: Fraction
    annuli: tuple = ()
    decorating: tuple = ()

    def __init__(self, R, r0, annuli=(), decorating=()):
        object.__setattr__(self, "R", as_fraction(R))
        object.__setattr__(self, "r0", as_fraction(r0))
        object.__setattr__(self, "annuli", tuple(annuli))
        object.__setattr__(self, "decorating", tuple(decorating))


def _inside_window(A: Annulus, R: Fraction) -> bool:
    cx, cy = A.center
    return abs(cx) + A.R <= R and abs(cy) + A.R <= R


def _on_boundary(c, half: Fraction) -> bool:
    x, y = c
    on_vertical = abs(x) == half and abs(y) <= half
    on_horizontal = abs(y) == half and abs(x) <= half
    return on_vertical or on_horizontal


def validate_structure(model: Model, st: Structure) -> None:
    R, r0 = st.R, st.r0
    if not 0 <= r0 <= R:
        raise StructureError("need 0 <= r0 <= R")
    everything = list(st.annuli) + list(st.decorating)
    for A in everything:
        if A.empty:
            raise StructureError("empty annulus in structure")
    for A in st.annuli:
        cx, cy = A.center
        kind = A.kind
        if kind is AnnulusKind.CENTERED:
            if (cx, cy) != (0, 0) or not _inside_window(A, R):
                raise StructureError("centered annuli are centred at 0 inside the window")
        elif kind is AnnulusKind.INTERIOR:
            if not _inside_window(A, R) or (abs(cx) <= A.R and abs(cy) <= A.R):
                raise StructureError("interior annuli lie in the window and their outer square avoids 0")
        elif kind is AnnulusKind.SIDE:
            ok = (abs(cx) == R and abs(cy) + A.R <= R) or (abs(cy) == R and abs(cx) + A.R <= R)
            if not ok:
                raise StructureError("side annulus must sit on a side, away from the other sides")
        elif kind is AnnulusKind.CORNER:
            if not (abs(cx) == R and abs(cy) == R and A.R <= R):
                raise StructureError("corner annulus must sit on a corner with outer radius <= R")
        else:
            raise StructureError("decorating annuli belong in the decorating list")
        if not percolation_disjoint(model, A, Rect.square(0, 0, r0)):
            raise StructureError("annulus meets the tiles of [-r0, r0]^2")
    for A in st.decorating:
        cx, cy = A.center
        if not _inside_window(A, R) or (abs(cx) <= A.R and abs(cy) <= A.R):
            raise StructureError("decorating annuli are interior annuli")
        if not _on_boundary(A.center, r0):
            raise StructureError("decorating annuli are centred on the boundary of [-r0, r0]^2")
        if not percolation_disjoint(model, A, Rect.square(0, 0, r0 / 2)):
            raise StructureError("decorating annulus meets the tiles of [-r0/2, r0/2]^2")
    for i in range(len(everything)):
        for j in range(i + 1, len(everything)):
            if not percolation_disjoint(model, everything[i], everything[j]):
                raise StructureError("annuli are not mutually percolation disjoint")


def compatible_mask(model: Model, coords: np.ndarray, st: Structure, require_hit: bool = False) -> np.ndarray:
    """Boolean array over subset bitmasks: S compatible with the structure."""
    n = len(coords)
    S = np.arange(1 << n, dtype=np.int64)
    bits = lambda flags: int(sum(1 << i for i in range(n) if flags[i]))
    ok = np.ones(1 << n, dtype=bool)
    avoid = np.zeros(n, dtype=bool)
    inside_r0 = centre_in_rect(model, coords, Rect.square(0, 0, st.r0), open_=True)
    for A in st.annuli:
        avoid |= tile_meets_shape(model, coords, A)
        if A.kind is not AnnulusKind.CENTERED or require_hit:
            ok &= (S & bits(tile_inside_open_rect(model, coords, A.inner))) != 0
    for A in st.decorating:
        avoid |= tile_meets_shape(model, coords, A) & ~inside_r0
        ok &= (S & bits(tile_inside_open_rect(model, coords, A.inner))) != 0
    ok &= (S & bits(avoid)) == 0
    return ok


def _arm_probability(model, A: Annulus, st: Structure, n_samples: int, stream: RngStream,
                     shared_coords: np.ndarray | None = None) -> Estimate:
    """h(A) for ordinary annuli, or h^{r0}(A)^2 directly when ``shared_coords`` is given."""
    from .percolation import ArmGeometryKind, ArmSpec, _arm_eval, arm_geometry, draw_states

    window = Rect.square(0, 0, st.R)
    kind = A.kind
    if kind is AnnulusKind.CENTERED:
        spec, clip = ArmSpec(1), None
    elif kind in (AnnulusKind.INTERIOR, AnnulusKind.R0_DECORATING):
        spec, clip = ArmSpec(4), None
    elif kind is AnnulusKind.SIDE:
        spec, clip = ArmSpec(3, ArmGeometryKind.HALF_PLANE, start=0), window
    else:
        spec, clip = ArmSpec(3, ArmGeometryKind.QUARTER_PLANE, start=0), window
    geom = arm_geometry(model, A, clip)
    if shared_coords is None:
        def work(size, gen):
            return Moments.of(_arm_eval(geom, draw_states(gen, size, geom.n), spec))
    else:
        share = Region(model, Window(A.R), shared_coords).lookup(geom.coords) >= 0

        def work(size, gen):
            w1 = draw_states(gen, size, geom.n)
            w2 = draw_states(gen, size, geom.n)
            w2[:, share] = w1[:, share]
            return Moments.of(_arm_eval(geom, w1, spec) & _arm_eval(geom, w2, spec))

    total = Moments()
    for p in run_chunks(work, n_samples, stream, 4096):
        total = total.merge(p)
    return total.estimate(stream.descriptor)


@dataclass(frozen=True)
class StructureBound:
    lhs: float
    rhs: float
    rhs_std_error: float
    factors: tuple

    @property
    def holds(self) -> bool:
        # 1e-12 absorbs rounding in the exact side when the bound is exactly 0
        return self.lhs <= self.rhs + 3 * self.rhs_std_error + 1e-12


def annulus_bound_check(h: BooleanTable, structure: Structure, n_samples: int, rng,
                        require_hit: bool = False, validate: bool = True) -> StructureBound:
    """Exact compatible spectral mass against alpha_1(r0/2) prod 4 h(A)^2 estimated by MC."""
    from .percolation import estimate_one_arm

    if h.model is None:
        raise ValueError("the table must carry its lattice model")
    _check_bits(h.n, 20)
    model = h.model
    coords = np.asarray(h.cell_ids, dtype=np.int64)
    if validate:
        validate_structure(model, structure)
    m = walsh_transform(h)
    lhs = float(np.sum(m.masses[compatible_mask(model, coords, structure, require_hit)]))
    stream = as_stream(rng)
    half = structure.r0 / 2
    if len(cells_in_window(model, half)) <= 20:
        # small windows: alpha_1(r0/2) exactly from its truth table
        a1 = Estimate.exact_value(float(one_arm_table(model, half).values.mean()), n_samples, stream.descriptor)
    else:
        a1 = estimate_one_arm([half], n_samples, stream.spawn(0), model)[0]
    value = a1.mean
    rel2 = (a1.std_error / a1.mean) ** 2 if a1.mean > 0 else 0.0
    factors = [("alpha_1", a1)]
    shared = coords[centre_in_rect(model, coords, Rect.square(0, 0, structure.r0), open_=True)]
    for i, A in enumerate(structure.annuli):
        e = _arm_probability(model, A, structure, n_samples, stream.spawn(1, i))
        factors.append((A.kind.value, e))
        value *= 4 * e.mean ** 2
        if e.mean > 0:
            rel2 += (2 * e.std_error / e.mean) ** 2
    for i, A in enumerate(structure.decorating):
        e = _arm_probability(model, A, structure, n_samples, stream.spawn(2, i), shared_coords=shared)
        factors.append(("decorating", e))
        value *= 4 * e.mean
        if e.mean > 0:
            rel2 += (e.std_error / e.mean) ** 2
    return StructureBound(lhs, value, value * math.sqrt(rel2), tuple(factors))


def _eighths(gen: np.random.Generator, lo: Fraction, hi: Fraction) -> Fraction:
    """A uniform multiple of 1/8 in [lo, hi] (lo if the range holds none)."""
    a, b = math.ceil(lo * 8), math.floor(hi * 8)
    return Fraction(int(gen.integers(a, b + 1)), 8) if b >= a else Fraction(lo)


def _random_annulus(gen: np.random.Generator, R: Fraction, r0: Fraction) -> tuple[Annulus, bool]:
    """A candidate annulus and whether it is a decorating one (validity is checked by the caller)."""
    kind = int(gen.integers(0, 5))
    if kind == 0:
        outer = _eighths(gen, Fraction(1, 8), R)
        return Annulus((0, 0), _eighths(gen, 0, outer - Fraction(1, 8)), outer, AnnulusKind.CENTERED), False
    if kind == 1:
        c = (_eighths(gen, -R, R), _eighths(gen, -R, R))
        outer = _eighths(gen, Fraction(1, 8), R - max(abs(c[0]), abs(c[1])))
        return Annulus(c, _eighths(gen, 0, outer - Fraction(1, 8)), outer, AnnulusKind.INTERIOR), False
    if kind == 2:
        along = _eighths(gen, -R, R)
        side = [(R, along), (-R, along), (along, R), (along, -R)][int(gen.integers(0, 4))]
        outer = _eighths(gen, Fraction(1, 8), R - abs(along))
        return Annulus(side, _eighths(gen, 0, outer - Fraction(1, 8)), outer, AnnulusKind.SIDE), False
    if kind == 3:
        c = (R * int(gen.choice([-1, 1])), R * int(gen.choice([-1, 1])))
        outer = _eighths(gen, Fraction(1, 8), R)
        return Annulus(c, _eighths(gen, 0, outer - Fraction(1, 8)), outer, AnnulusKind.CORNER), False
    along = _eighths(gen, -r0, r0)
    c = [(r0, along), (-r0, along), (along, r0), (along, -r0)][int(gen.integers(0, 4))]
    outer = _eighths(gen, Fraction(1, 8), R - max(abs(c[0]), abs(c[1])))
    return Annulus(c, _eighths(gen, 0, outer - Fraction(1, 8)), outer, AnnulusKind.R0_DECORATING), True


def random_structure(model: Model, R, rng, max_annuli: int = 3, tries: int = 200) -> Structure:
    """A valid structure with random r0 and up to ``max_annuli`` annuli, built by rejection.

    Radii and centres are multiples of 1/8; candidates that break validity are
    discarded, so small windows often end with fewer annuli."""
    gen = as_generator(rng)
    model = Model.parse(model)
    R = as_fraction(R)
    r0 = _eighths(gen, Fraction(0), R)
    st = Structure(R, r0)
    want = int(gen.integers(1, max_annuli + 1))
    for _ in range(tries):
        if len(st.annuli) + len(st.decorating) >= want:
            break
        A, decorating = _random_annulus(gen, R, r0)
        if A.empty:
            continue
        trial = Structure(R, r0, st.annuli + (() if decorating else (A,)), st.decorating + ((A,) if decorating else ()))
        try:
            validate_structure(model, trial)
        except StructureError:
            continue
        st = trial
    return st


def random_jp_instance(rng, max_bits: int = 10, max_sets: int = 4) -> tuple[BooleanTable, list, list]:
    """A random table h with disjoint random cell sets J_1..J_k and W (W may be empty).

    Tables are either real-valued or 0/1-valued; the identity holds for both."""
    gen = as_generator(rng)
    n = int(gen.integers(1, max_bits + 1))
    if gen.random() < 0.5:
        values = gen.normal(size=1 << n)
    else:
        values = (gen.random(1 << n) < gen.uniform(0.1, 0.9)).astype(float)
    h = BooleanTable(tuple(range(n)), values)
    k = int(gen.integers(1, min(max_sets, n) + 1))
    label = gen.integers(-1, k + 1, n)  # -1 unused, 0 -> W, j -> J_j
    for j in range(1, k + 1):
        if not np.any(label == j):
            free = np.nonzero(label <= 0)[0]
            if len(free) == 0:
                k = j - 1
                break
            label[gen.choice(free)] = j
    J = [np.nonzero(label == j)[0].tolist() for j in range(1, k + 1)]
    W = np.nonzero(label == 0)[0].tolist()
    return h, J, W
