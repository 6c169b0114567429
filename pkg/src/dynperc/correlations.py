"""Time correlations, second-moment integrals, the singular-measure bound and exceptional-time scans.

A correlation curve is the map t -> E[f(omega(0)) f(omega(t))] on a geometric
time grid.  Each replicate uses a single event log that is read at every grid
time, so the whole curve of one replicate comes from the same randomness.
Quadrature is kept apart from simulation: one curve can be integrated against
many weights t^(-gamma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from numba import njit

from . import _kernels as kern
from .dynamics import Iid, InvalidParameter, KernelSpec, build_kernel, particle_escape, simulate_batch
from .lattice import (
    TRIANGULAR,
    Model,
    Rect,
    Window,
    Region,
    as_fraction,
    candidate_cells,
    centre_in_rect,
    centres,
    cells_meeting,
    origin_cells,
    tile_inside_open_rect,
    torus,
    torus_index,
)
from .percolation import CellFunction, draw_states
from .stats import Estimate, Moments, as_stream, descriptor, run_chunks

Dynamics = Union[KernelSpec, Iid, None]


class DivergentHead(ValueError):
    """The weight t^(-gamma) is not integrable at 0."""


class OutOfDomain(ValueError):
    pass


class GeometryError(ValueError):
    pass


class BoundViolation(AssertionError):
    pass


def dynamics_descriptor(dynamics: Dynamics) -> str:
    if dynamics is None:
        return "frozen"
    if isinstance(dynamics, KernelSpec):
        return f"{dynamics.family}@L={dynamics.region.geometry.L}"
    return str(dynamics)


def geometric_grid(t_min: float = 2.0 ** -10, t_max: float = 1.0) -> np.ndarray:
    """t_j = t_min * 2^j up to t_max (t_max is always the last point)."""
    if not 0 < t_min <= t_max:
        raise InvalidParameter("need 0 < t_min <= t_max")
    pts = []
    t = float(t_min)
    while t < t_max * (1 - 1e-12):
        pts.append(t)
        t *= 2.0
    pts.append(float(t_max))
    return np.array(pts)


# ---------------------------------------------------------------------------
# correlation curves


@dataclass(frozen=True)
class CorrelationCurve:
    t_grid: np.ndarray
    values: tuple
    dynamics: str = ""
    f: str = ""

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=np.float64)
        if len(t) != len(self.values):
            raise ValueError("t_grid and values differ in length")
        if len(t) and (np.any(np.diff(t) <= 0) or t[0] < 0):
            raise ValueError("t_grid must be nonnegative and strictly increasing")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "values", tuple(self.values))

    @property
    def means(self) -> np.ndarray:
        return np.array([v.mean for v in self.values])

    @property
    def errors(self) -> np.ndarray:
        return np.array([v.std_error for v in self.values])

    @staticmethod
    def constant(t_grid, c: float) -> "CorrelationCurve":
        return CorrelationCurve(t_grid, [Estimate.exact_value(c)] * len(t_grid), "exact", "constant")


@njit(cache=True)
def _snapshots(times, a, b, offsets, grid, cells, inv, out):
    """out[i, j, c] = pi_t^{-1}(cells[c]) for log i at time grid[j]."""
    n = len(inv)
    for i in range(len(offsets) - 1):
        for x in range(n):
            inv[x] = x
        e = offsets[i]
        hi = offsets[i + 1]
        for j in range(len(grid)):
            tj = grid[j]
            while e < hi and times[e] <= tj:
                x = a[e]
                y = b[e]
                ox = inv[x]
                inv[x] = inv[y]
                inv[y] = ox
                e += 1
            for c in range(len(cells)):
                out[i, j, c] = inv[cells[c]]


def _as_float(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)


def correlation_curve(f: CellFunction, dynamics: Dynamics, t_grid: Sequence[float], n_samples: int, rng,
                      chunk: int = 256, threads: int | None = None) -> CorrelationCurve:
    """E[f(omega(0)) f(omega(t))] for every t in the grid, with omega(0) ~ P_(1/2).

    ``dynamics`` is an exclusion kernel on a torus (f's cells are embedded in
    it), an ``Iid`` resampling rule, or None for frozen dynamics."""
    grid = np.asarray(t_grid, dtype=np.float64)
    if len(grid) == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise InvalidParameter("t_grid must be nonnegative and strictly increasing")
    nt = len(grid)
    nf = f.n

    if isinstance(dynamics, KernelSpec):
        region = dynamics.region
        cells = region.lookup(f.coords)
        if np.any(cells < 0) or len(np.unique(cells)) != nf:
            raise GeometryError("the function's cells do not embed in the torus")
        N = dynamics.n

        def sample(size, gen):
            ev = simulate_batch(dynamics, float(grid[-1]), size, gen)
            bits = draw_states(gen, size, N, 0.5)
            pos = np.empty((size, nt, nf), dtype=np.int64)
            _snapshots(ev.times, ev.a, ev.b, ev.offsets, grid, cells, np.empty(N, dtype=np.int64), pos)
            f0 = _as_float(f.evaluate(bits[:, cells]))
            st = np.take_along_axis(bits, pos.reshape(size, nt * nf), axis=1)
            ft = _as_float(f.evaluate(st.reshape(size * nt, nf))).reshape(size, nt)
            return f0[:, None] * ft
    elif isinstance(dynamics, Iid) or dynamics is None:
        p = dynamics.p if dynamics is not None else 0.5
        rate = dynamics.rate if dynamics is not None else 0.0
        steps = np.diff(np.concatenate([[0.0], grid]))

        def sample(size, gen):
            st = draw_states(gen, size, nf, p)
            f0 = _as_float(f.evaluate(st))
            out = np.empty((size, nt))
            cur = st.copy()
            for j in range(nt):
                if rate > 0 and steps[j] > 0:
                    hit = gen.random((size, nf)) < -math.expm1(-rate * steps[j])
                    fresh = draw_states(gen, size, nf, p)
                    cur = np.where(hit, fresh, cur)
                out[:, j] = f0 * _as_float(f.evaluate(cur))
            return out
    else:
        raise InvalidParameter(f"unsupported dynamics {dynamics!r}")

    def work(size, gen):
        v = sample(size, gen)
        return [Moments.of(v[:, j]) for j in range(nt)]

    totals = [Moments() for _ in range(nt)]
    for part in run_chunks(work, n_samples, rng, chunk, threads):
        totals = [a.merge(b) for a, b in zip(totals, part)]
    seed = descriptor(rng)
    return CorrelationCurve(grid, [m.estimate(seed) for m in totals], dynamics_descriptor(dynamics), str(f))


def stationarity_check(f: CellFunction, K: KernelSpec, t_grid: Sequence[float], n_samples: int, rng,
                       chunk: int = 256, threads: int | None = None) -> tuple[list, bool]:
    """E[f(omega(t))] for each grid time, and whether every evolved sample kept its number of open cells."""
    grid = np.asarray(t_grid, dtype=np.float64)
    if len(grid) == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise InvalidParameter("t_grid must be nonnegative and strictly increasing")
    region = K.region
    cells = region.lookup(f.coords)
    if np.any(cells < 0) or len(np.unique(cells)) != f.n:
        raise GeometryError("the function's cells do not embed in the torus")
    N, nt = K.n, len(grid)
    every = np.arange(N, dtype=np.int64)

    def work(size, gen):
        ev = simulate_batch(K, float(grid[-1]), size, gen)
        bits = draw_states(gen, size, N, 0.5)
        pos = np.empty((size, nt, N), dtype=np.int64)
        _snapshots(ev.times, ev.a, ev.b, ev.offsets, grid, every, np.empty(N, dtype=np.int64), pos)
        st = np.take_along_axis(bits, pos.reshape(size, nt * N), axis=1).reshape(size, nt, N)
        kept = bool(np.all(st.sum(axis=2, dtype=np.int64) == bits.sum(axis=1, dtype=np.int64)[:, None]))
        vals = _as_float(f.evaluate(np.ascontiguousarray(st[:, :, cells].reshape(size * nt, f.n)))).reshape(size, nt)
        return [Moments.of(vals[:, j]) for j in range(nt)], kept

    totals = [Moments() for _ in range(nt)]
    conserved = True
    for part, kept in run_chunks(work, n_samples, rng, chunk, threads):
        totals = [a.merge(b) for a, b in zip(totals, part)]
        conserved &= kept
    seed = descriptor(rng)
    return [m.estimate(seed) for m in totals], conserved


# ---------------------------------------------------------------------------
# second-moment integrals


@dataclass(frozen=True)
class IntegralResult:
    gamma: float
    value: float
    error: float
    head: float
    quadrature_error: float
    mc_error: float


def _weights(t: np.ndarray, gamma: float) -> np.ndarray:
    """Product-integration weights: int t^(-gamma) c(t) dt for c linear between nodes."""
    w = np.zeros(len(t))
    g1, g2 = 1.0 - gamma, 2.0 - gamma
    for i in range(len(t) - 1):
        lo, hi = t[i], t[i + 1]
        m0 = (hi ** g1 - lo ** g1) / g1
        m1 = (hi ** g2 - lo ** g2) / g2
        h = hi - lo
        w[i] += (hi * m0 - m1) / h
        w[i + 1] += (m1 - lo * m0) / h
    return w


def second_moment_integral(curve: CorrelationCurve, gamma: float) -> IntegralResult:
    """int_0^1 t^(-gamma) c(t) dt for a sampled curve c.

    Between grid points c is interpolated linearly and integrated exactly
    against t^(-gamma).  The piece [0, t_min] is bounded by
    t_min^(1-gamma)/(1-gamma) * c(t_min).  The quadrature error is the change
    when every other node is dropped; the Monte Carlo error sums |weight| * stderr
    (the per-time errors are positively correlated, so this does not undercount)."""
    gamma = float(gamma)
    if gamma >= 1:
        raise DivergentHead("gamma must be below 1")
    if gamma < 0:
        raise InvalidParameter("gamma must be nonnegative")
    t = curve.t_grid
    if len(t) < 2 or abs(t[-1] - 1.0) > 1e-12:
        raise InvalidParameter("the grid must end at t = 1")
    c = curve.means
    w = _weights(t, gamma)
    body = float(np.dot(w, c))
    head = 0.0 if t[0] == 0 else t[0] ** (1 - gamma) / (1 - gamma) * float(c[0])
    idx = np.unique(np.concatenate([np.arange(0, len(t), 2), [len(t) - 1]]))
    quad = abs(body - float(np.dot(_weights(t[idx], gamma), c[idx]))) if len(idx) < len(t) else 0.0
    mc = float(np.dot(np.abs(w), curve.errors))
    if t[0] > 0:
        mc += t[0] ** (1 - gamma) / (1 - gamma) * float(curve.errors[0])
    value = body + head
    return IntegralResult(gamma, value, quad + mc, head, quad, mc)


# ---------------------------------------------------------------------------
# the singular-measure bound


@dataclass(frozen=True)
class SingularInstance:
    """Weights nu on E = {0..n-1}, a symmetric sub-transition matrix P, a subset F."""

    nu: np.ndarray
    P: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=np.float64)
        P = np.asarray(self.P, dtype=np.float64)
        F = np.asarray(self.F, dtype=bool)
        n = len(nu)
        if P.shape != (n, n) or F.shape != (n,):
            raise ValueError("shapes of nu, P and F disagree")
        if np.any(nu < 0) or nu.sum() > 1 + 1e-12:
            raise ValueError("nu must be a sub-probability")
        if np.any(P < 0) or not np.allclose(P, P.T, rtol=0, atol=1e-14) or np.any(P.sum(axis=1) > 1 + 1e-12):
            raise ValueError("P must be symmetric, nonnegative, with row sums at most 1")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "F", F)

    @staticmethod
    def random(gen: np.random.Generator, max_size: int = 20) -> "SingularInstance":
        n = int(gen.integers(1, max_size + 1))
        nu = gen.random(n) ** gen.uniform(0.5, 4.0)
        nu *= gen.uniform(0.0, 1.0) / max(nu.sum(), 1e-300)
        kind = gen.integers(0, 4)
        if kind == 0:
            P = np.eye(n) * gen.uniform(0, 1)
        else:
            A = gen.random((n, n)) * (gen.random((n, n)) < gen.uniform(0.1, 1.0))
            A = A + A.T
            rows = A.sum(axis=1).max()
            P = A / rows * gen.uniform(0.2, 1.0) if rows > 0 else A
        F = gen.random(n) < gen.uniform(0.0, 1.0)
        return SingularInstance(nu, P, F)


@dataclass(frozen=True)
class SingularBound:
    lhs: float
    eta: float
    delta: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-15

    def __iter__(self):
        return iter((self.lhs, self.eta, self.delta, self.rhs))


def singular_bound(inst: SingularInstance, check: bool = True) -> SingularBound:
    """sum_{x,y} sqrt(nu(x) nu(y)) P(x, y) against nu(E) (eta + 2 sqrt(delta)).

    delta is defined by nu(F) = (1 - delta) nu(E) and eta = max_{x in F} P(x, F)."""
    s = np.sqrt(inst.nu)
    lhs = float(s @ inst.P @ s)
    total = float(inst.nu.sum())
    delta = 1.0 - float(inst.nu[inst.F].sum()) / total if total > 0 else 0.0
    delta = min(max(delta, 0.0), 1.0)
    eta = float(inst.P[np.ix_(inst.F, inst.F)].sum(axis=1).max()) if inst.F.any() else 0.0
    out = SingularBound(lhs, eta, delta, total * (eta + 2.0 * math.sqrt(delta)))
    if check and not out.holds:
        raise BoundViolation(f"lhs {out.lhs!r} exceeds rhs {out.rhs!r}")
    return out


# ---------------------------------------------------------------------------
# dimension constants


ALPHA_POLE = Fraction(21, 68)


def alpha_zero() -> Fraction:
    """The threshold 217/816 below which d(alpha) is positive."""
    return Fraction(217, 816)


def d_of_alpha(alpha):
    """d(alpha) = 1 - (5/36) / (1 - 68 alpha / 21), exact for int/Fraction input."""
    exact = isinstance(alpha, (int, Fraction)) and not isinstance(alpha, bool)
    a = Fraction(alpha) if exact else float(alpha)
    if a < 0 or a >= ALPHA_POLE:
        raise OutOfDomain("alpha must lie in [0, 21/68)")
    if exact:
        return 1 - Fraction(5, 36) / (1 - Fraction(68, 21) * a)
    return 1.0 - (5.0 / 36.0) / (1.0 - 68.0 * a / 21.0)


# ---------------------------------------------------------------------------
# escape of packed sets


def _box_cells(model: Model, b: float) -> np.ndarray:
    cand = candidate_cells(model, -b, b, -b, b)
    return cand[centre_in_rect(model, cand, Rect.square(0, 0, as_fraction(b)), open_=True)]


def eta_test_sets(model: Model, k: int, beta: float) -> dict:
    """Adversarial sets of 2^k cells packed in the open box (-2^(k beta), 2^(k beta))^2."""
    size = 1 << int(k)
    b = 2.0 ** (k * beta)
    box = _box_cells(model, b)
    if len(box) < size:
        raise GeometryError("the box holds fewer than 2^k cells")
    c = centres(model, box)
    r = np.hypot(c[:, 0], c[:, 1])
    sup = np.max(np.abs(c), axis=1)
    ang = np.arctan2(c[:, 1], c[:, 0])
    clustered = box[np.lexsort((ang, r))[:size]]
    order = np.lexsort((c[:, 0], c[:, 1]))
    spread = box[order[np.linspace(0, len(box) - 1, size).round().astype(np.int64)]]
    rim = np.argsort(-sup, kind="stable")[: max(size, min(len(box), 8 * size))]
    rim = rim[np.argsort(ang[rim], kind="stable")]
    boundary = box[rim[np.linspace(0, len(rim) - 1, size, endpoint=False).round().astype(np.int64)]]
    return {"clustered": clustered, "spread": spread, "boundary": boundary, "_box": box}


def eta_bound_families(K: KernelSpec, k: int, beta: float, t: float, n_samples: int, rng,
                       chunk: int = 4096) -> dict:
    """P[pi_t(S) stays in the box] for each adversarial family of S."""
    region = K.region
    sets = eta_test_sets(region.model, k, beta)
    box = sets.pop("_box")
    idx = torus_index(region, box)
    if len(np.unique(idx)) != len(box):
        raise GeometryError("the box does not fit inside the torus")
    inside = np.zeros(K.n, dtype=np.bool_)
    inside[idx] = True
    stream = as_stream(rng)
    out = {}
    for j, (name, S) in enumerate(sets.items()):
        s_idx = torus_index(region, S)
        if t == 0:
            out[name] = Estimate.exact_value(1.0, n_samples, stream.descriptor)
            continue
        parts = run_chunks(lambda size, gen: Moments.of(particle_escape(K, s_idx, t, size, gen, inside)),
                           n_samples, stream.spawn(j), chunk)
        total = Moments()
        for p in parts:
            total = total.merge(p)
        out[name] = total.estimate(stream.spawn(j).descriptor)
    return out


def eta_bound_diag(K: KernelSpec, k: int, beta: float, t: float, n_samples: int, rng, chunk: int = 4096) -> Estimate:
    """The largest staying frequency over the adversarial families."""
    fam = eta_bound_families(K, k, beta, t, n_samples, rng, chunk)
    return max(fam.values(), key=lambda e: e.mean)


# ---------------------------------------------------------------------------
# exceptional-time scans


@njit(cache=True)
def _scan(tstate, ws, to_win, times, a, b, T, iid, nbr, src, target, stamp, stack, starts, ends):
    """Evolve one trajectory on [0, T] and record the maximal intervals where the one-arm event holds.

    Exclusion events swap torus states; i.i.d. events set window cell a[e] to b[e].
    The event is recomputed exactly after every event that changes a window cell."""
    mark = 1
    cur = kern.reach(ws, nbr, src, target, stamp, stack, mark)
    count = 0
    t0 = 0.0
    for e in range(len(times)):
        t = times[e]
        if t > T:
            break
        changed = False
        if iid:
            w = a[e]
            if ws[w] != b[e]:
                ws[w] = b[e]
                changed = True
        else:
            x = a[e]
            y = b[e]
            if tstate[x] != tstate[y]:
                s = tstate[x]
                tstate[x] = tstate[y]
                tstate[y] = s
                wx = to_win[x]
                wy = to_win[y]
                if wx >= 0:
                    ws[wx] = tstate[x]
                    changed = True
                if wy >= 0:
                    ws[wy] = tstate[y]
                    changed = True
        if changed:
            mark += 1
            new = kern.reach(ws, nbr, src, target, stamp, stack, mark)
            if new != cur:
                if new:
                    t0 = t
                else:
                    starts[count] = t0
                    ends[count] = t
                    count += 1
                cur = new
    if cur:
        starts[count] = t0
        ends[count] = T
        count += 1
    return count


@dataclass(frozen=True, eq=False)
class ScanSetup:
    model: Model
    R: Fraction
    coords: np.ndarray
    nbr: np.ndarray = field(repr=False)
    src: np.ndarray = field(repr=False)
    target: np.ndarray = field(repr=False)
    kernel: KernelSpec | None = None
    to_win: np.ndarray | None = field(default=None, repr=False)
    torus_cells: np.ndarray | None = field(default=None, repr=False)


def _minimal_torus_side(model: Model, coords: np.ndarray) -> int:
    span = int(np.max(np.abs(coords))) + 2
    L = 2 * span if model is TRIANGULAR else span + 2
    L += L % 2
    while True:
        reg = torus(model, L)
        if len(np.unique(torus_index(reg, coords))) == len(coords):
            return L
        L += 2


def scan_setup(R, dynamics: Dynamics, model: Model = TRIANGULAR, center=(0, 0), L: int | None = None) -> ScanSetup:
    """Window geometry for scans; for kernel families the window is embedded in a torus.

    ``dynamics`` may be a kernel family (PowerLaw, ...) or a ready KernelSpec;
    in the second case its torus is used and ``L`` is ignored."""
    model = Model.parse(model)
    R = as_fraction(R)
    coords = cells_meeting(model, Rect.square(0, 0, R))
    region = Region(model, Window(R), coords)
    nbr = region.neighbours(1)
    src = origin_cells(region)
    target = ~tile_inside_open_rect(model, coords, Rect.square(0, 0, R))
    if dynamics is None or isinstance(dynamics, Iid):
        return ScanSetup(model, R, coords, nbr, src, target)
    shifted = coords + np.asarray(center, dtype=np.int64)
    if isinstance(dynamics, KernelSpec):
        K = dynamics
        if K.region.model is not model:
            raise InvalidParameter("kernel and window use different models")
    else:
        K = build_kernel(dynamics, torus(model, L if L is not None else _minimal_torus_side(model, coords)))
    tc = torus_index(K.region, shifted)
    if len(np.unique(tc)) != len(tc):
        raise GeometryError("the window does not fit inside the torus")
    to_win = np.full(K.n, -1, dtype=np.int64)
    to_win[tc] = np.arange(len(tc))
    return ScanSetup(model, R, coords, nbr, src, target, K, to_win, tc)


def scan_trajectory(setup: ScanSetup, dynamics: Dynamics, T: float, gen: np.random.Generator,
                    initial: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """One trajectory: (fraction of [0, T] with the one-arm event, (k, 2) interval array)."""
    if not T > 0:
        raise InvalidParameter("T must be positive")
    n = len(setup.coords)
    if setup.R == 0:
        return 1.0, np.array([[0.0, float(T)]])
    if setup.kernel is not None:
        K = setup.kernel
        tstate = draw_states(gen, 1, K.n, 0.5)[0]
        if initial is not None:
            tstate[setup.torus_cells] = np.asarray(initial, dtype=np.uint8)
        ev = simulate_batch(K, float(T), 1, gen)
        times, a, b, iid = ev.times, ev.a, ev.b, False
        ws = tstate[setup.torus_cells].copy()
        to_win = setup.to_win
    else:
        ws = draw_states(gen, 1, n, 0.5 if dynamics is None else dynamics.p)[0] if initial is None \
            else np.asarray(initial, dtype=np.uint8).copy()
        tstate = np.zeros(1, dtype=np.uint8)
        to_win = np.zeros(1, dtype=np.int64)
        if dynamics is None:
            m = 0
        else:
            m = int(gen.poisson(n * dynamics.rate * T))
        times = np.sort(gen.random(m)) * T
        a = gen.integers(0, n, m)
        b = draw_states(gen, 1, m, dynamics.p)[0].astype(np.int64) if m else np.zeros(0, dtype=np.int64)
        iid = True
    cap = len(times) + 2
    starts = np.empty(cap)
    ends = np.empty(cap)
    stamp = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    k = _scan(tstate, ws, to_win, times, a, b, float(T), iid, setup.nbr, setup.src, setup.target,
              stamp, stack, starts, ends)
    iv = np.stack([starts[:k], ends[:k]], axis=1)
    return float(np.sum(iv[:, 1] - iv[:, 0]) / T), iv


def scan_exceptional(R, dynamics: Dynamics, T: float, rng, n_trajectories: int = 1, model: Model = TRIANGULAR,
                     L: int | None = None, initial: np.ndarray | None = None):
    """Fraction of [0, T] during which the origin connects to the boundary of [-R, R]^2.

    Returns (Estimate of the holding fraction over trajectories, list of
    (trajectory, start, end) maximal holding intervals sorted by trajectory
    and time).  Trajectory i uses the stream ``rng.spawn(i)``."""
    stream = as_stream(rng)
    setup = scan_setup(R, dynamics, model, L=L)
    fractions = []
    intervals = []
    for i in range(int(n_trajectories)):
        frac, iv = scan_trajectory(setup, dynamics, T, stream.spawn(i).generator(), initial)
        fractions.append(frac)
        intervals.extend((i, float(s), float(e)) for s, e in iv)
    return Estimate.from_samples(fractions, stream.descriptor), sorted(intervals)


def count_hit_intervals(intervals: np.ndarray, m: int, T: float) -> int:
    """Number of k < floor(mT) with [k/m, (k+1)/m] meeting a holding interval [s, e)."""
    n_int = int(math.floor(m * T + 1e-12))
    hit = np.zeros(n_int, dtype=bool)
    for s, e in np.asarray(intervals).reshape(-1, 2):
        lo = max(math.ceil(s * m) - 1, 0)
        hi = min(math.ceil(e * m), n_int)  # k < e m
        hit[lo:hi] = True
    return int(hit.sum())


def nm_counts(v, R, dynamics: Dynamics, m: int, T: float, rng, model: Model = TRIANGULAR,
              L: int | None = None, initial: np.ndarray | None = None) -> int:
    """N_m(v): grid intervals of length 1/m meeting a time with v connected to the boundary of v + [-R, R]^2."""
    if m < 1:
        raise InvalidParameter("m must be at least 1")
    setup = scan_setup(R, dynamics, model, center=v, L=L)
    _, iv = scan_trajectory(setup, dynamics, T, as_stream(rng).generator(), initial)
    return count_hit_intervals(iv, m, T)
