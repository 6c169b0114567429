"""Exclusion dynamics on a torus: kernels, event logs, the permutation pi_t, and sprinkling.

The exclusion process exchanges the states of cells e, f at rate K(e, f).  It
is realised through a global Poisson clock of rate N/2: at each ring a cell a
is chosen uniformly and a partner b is drawn from K(a, .).  Each unordered
pair {e, f} then rings at rate 2 * (1/2) * (1/N) * N * K(e, f) = K(e, f), as
with independent pair clocks.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from numba import njit

from .lattice import TRIANGULAR, Model, Region, Torus, bond_offsets, TRI_OFFSETS, displacement_lengths, torus_index
from .percolation import Configuration, draw_states
from .stats import Estimate, Moments, as_generator, descriptor, run_chunks


class InvalidParameter(ValueError):
    pass


class OutOfRange(ValueError):
    pass


# ---------------------------------------------------------------------------
# kernel families


@dataclass(frozen=True)
class PowerLaw:
    """K(v, w) proportional to 1 / |v - w|^(2 + alpha)."""

    alpha: float

    def weight(self, d: np.ndarray) -> np.ndarray:
        return d ** -(2.0 + self.alpha)

    def __str__(self):
        return f"alpha:{self.alpha:g}"


@dataclass(frozen=True)
class LogCorrected:
    """K(v, w) proportional to 1 / (|v - w|^2 log(|v - w| + 1)^(1 + a))."""

    a: float

    def weight(self, d: np.ndarray) -> np.ndarray:
        return 1.0 / (d * d * np.log(d + 1.0) ** (1.0 + self.a))

    def __str__(self):
        return f"log:{self.a:g}"


@dataclass(frozen=True)
class NearestNeighbour:
    """Uniform jump to one of the 6 adjacent cells (edge adjacency for bonds)."""

    def __str__(self):
        return "nn"


@dataclass(frozen=True)
class Iid:
    """Independent resampling of every cell at the given rate (not an exclusion kernel)."""

    rate: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidParameter("rate must be positive")
        if not 0 <= self.p <= 1:
            raise InvalidParameter("p must lie in [0, 1]")

    def __str__(self):
        return f"iid:{self.p:g}"


Family = Union[PowerLaw, LogCorrected, NearestNeighbour]


def parse_kernel(text: str):
    """Parse ``alpha:0.5``, ``log:1``, ``nn`` or ``iid[:p]``."""
    name, _, arg = str(text).strip().partition(":")
    name = name.lower()
    try:
        if name in ("alpha", "power", "powerlaw"):
            return PowerLaw(float(arg))
        if name in ("log", "logcorrected"):
            return LogCorrected(float(arg))
        if name in ("nn", "nearest", "nearestneighbour"):
            return NearestNeighbour()
        if name == "iid":
            return Iid(p=float(arg) if arg else 0.5)
    except ValueError as exc:
        raise InvalidParameter(f"bad kernel parameter in {text!r}") from exc
    raise InvalidParameter(f"unknown kernel {text!r}")


def build_alias(prob: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Walker/Vose alias table for a probability vector."""
    prob = np.asarray(prob, dtype=np.float64)
    n = len(prob)
    scaled = prob * n / prob.sum()
    accept = np.ones(n, dtype=np.float64)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        accept[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] + scaled[s] - 1.0
        (small if scaled[l] < 1.0 else large).append(l)
    for i in small + large:
        accept[i] = 1.0
    return accept, alias


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A symmetric translation-invariant jump kernel on a torus region.

    Cells fall into orientation classes (one for sites, horizontal/vertical for
    bonds).  For each class the row K(v, .) is stored as a list of storage
    displacements with probabilities and an alias table."""

    family: Family
    region: Region
    normalizer: float
    cell_class: np.ndarray = field(repr=False)
    displacements: tuple = field(repr=False)  # per class: (m, 2) int64
    probs: tuple = field(repr=False)  # per class: (m,) float64
    accept: tuple = field(repr=False)
    alias: tuple = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.region)

    def targets(self, cells: np.ndarray, cls: int) -> np.ndarray:
        """Index table (len(cells), m) of the partners of the given cells."""
        d = self.displacements[cls]
        c = self.region.coords[cells]
        out = np.empty((len(cells), len(d)), dtype=np.int64)
        for j in range(len(d)):
            out[:, j] = torus_index(self.region, c + d[j])
        return out

    def row(self, v: int) -> np.ndarray:
        """Dense row K(v, .) over the region's cells."""
        cls = int(self.cell_class[v])
        out = np.zeros(self.n)
        tgt = self.targets(np.array([v]), cls)[0]
        np.add.at(out, tgt, self.probs[cls])
        return out

    def prob(self, v: int, w: int) -> float:
        return float(self.row(v)[w])

    def matrix(self) -> np.ndarray:
        return np.stack([self.row(v) for v in range(self.n)])

    def sample_partners(self, a: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        """b ~ K(a, .) for every entry of ``a`` (alias method)."""
        a = np.asarray(a, dtype=np.int64)
        b = np.empty_like(a)
        u = gen.random(len(a))
        v = gen.random(len(a))
        for cls in range(len(self.probs)):
            sel = np.nonzero(self.cell_class[a] == cls)[0]
            if len(sel) == 0:
                continue
            m = len(self.probs[cls])
            j = np.minimum((u[sel] * m).astype(np.int64), m - 1)
            j = np.where(v[sel] < self.accept[cls][j], j, self.alias[cls][j])
            d = self.displacements[cls][j]
            b[sel] = torus_index(self.region, self.region.coords[a[sel]] + d)
        return b


def kernel_row_sample(K: KernelSpec, v, rng) -> int:
    gen = as_generator(rng)
    vi = int(v) if np.ndim(v) == 0 else K.region.index(v)
    return int(K.sample_partners(np.array([vi]), gen)[0])


def build_kernel(family: Family, region: Region) -> KernelSpec:
    """Kernel table on a torus region; weights normalised by their exact float sum."""
    if not isinstance(region.geometry, Torus):
        raise InvalidParameter("kernels live on Torus regions")
    if isinstance(family, PowerLaw) and not family.alpha > 0:
        raise InvalidParameter("alpha must be positive")
    if isinstance(family, LogCorrected) and not family.a > 0:
        raise InvalidParameter("a must be positive")
    if isinstance(family, Iid):
        raise InvalidParameter("i.i.d. dynamics is not an exclusion kernel")
    L = region.geometry.L
    model = region.model
    coords = region.coords
    if model is TRIANGULAR:
        classes = [np.array([0, 0])]
        cell_class = np.zeros(len(region), dtype=np.int64)
    else:
        classes = [np.array([1, 0]), np.array([0, 1])]
        cell_class = (coords[:, 0] % 2 == 0).astype(np.int64)  # 0 horizontal, 1 vertical
    disps, probs, accs, als = [], [], [], []
    norm = None
    for ci, rep in enumerate(classes):
        if isinstance(family, NearestNeighbour):
            off = TRI_OFFSETS if model is TRIANGULAR else bond_offsets(ci == 0, 1)
            d = off.copy()
            pr = np.full(len(d), 1.0 / 6.0)
            c = 1.0 / 6.0
        else:
            d = coords - rep
            # reduce to a canonical representative of each displacement class
            d = d[np.any(region.wrap(d) != 0, axis=1)]
            lengths = displacement_lengths(model, L, d)
            w = family.weight(lengths)
            total = math.fsum(w.tolist())
            c = 1.0 / total
            pr = w * c
        if norm is None:
            norm = c
        disps.append(np.ascontiguousarray(d, dtype=np.int64))
        probs.append(pr)
        acc, al = build_alias(pr)
        accs.append(acc)
        als.append(al)
    return KernelSpec(family, region, float(norm), cell_class, tuple(disps), tuple(probs), tuple(accs), tuple(als))


# ---------------------------------------------------------------------------
# event logs


@dataclass(frozen=True, eq=False)
class EventLog:
    """Time-sorted exchange events (t, a, b) on a region, 0 < t_1 < ... <= t_max."""

    region: Region
    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    t_max: float
    rng: str = ""

    def __len__(self) -> int:
        return len(self.times)

    @property
    def events(self) -> list[tuple[float, tuple, tuple]]:
        return [(float(t), self.region.cell(i), self.region.cell(j)) for t, i, j in zip(self.times, self.a, self.b)]

    def count_until(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right"))

    # binary format: magic, count, t_max, then little-endian (f64 time, u32 a, u32 b) records
    RECORD = np.dtype([("t", "<f8"), ("a", "<u4"), ("b", "<u4")])
    MAGIC = b"EVLOG001"

    def to_bytes(self) -> bytes:
        rec = np.empty(len(self), dtype=self.RECORD)
        rec["t"], rec["a"], rec["b"] = self.times, self.a, self.b
        return self.MAGIC + struct.pack("<Qd", len(self), self.t_max) + rec.tobytes()

    @classmethod
    def from_bytes(cls, region: Region, data: bytes) -> "EventLog":
        if data[:8] != cls.MAGIC:
            raise ValueError("not an event log")
        n, t_max = struct.unpack("<Qd", data[8:24])
        rec = np.frombuffer(data[24:], dtype=cls.RECORD, count=n)
        return cls(region, rec["t"].astype(np.float64), rec["a"].astype(np.int64), rec["b"].astype(np.int64), t_max)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, region: Region, path) -> "EventLog":
        with open(path, "rb") as fh:
            return cls.from_bytes(region, fh.read())


def _draw_times(gen: np.random.Generator, n: int, t_max: float) -> np.ndarray:
    while True:
        t = np.sort(gen.random(n)) * t_max
        if n == 0 or (t[0] > 0 and np.all(np.diff(t) > 0)):
            return t


def simulate_events(K: KernelSpec, t_max: float, rng) -> EventLog:
    if t_max < 0:
        raise InvalidParameter("t_max must be nonnegative")
    gen = as_generator(rng)
    N = K.n
    n = int(gen.poisson(N * t_max / 2.0)) if t_max > 0 else 0
    times = _draw_times(gen, n, t_max)
    a = gen.integers(0, N, n)
    b = K.sample_partners(a, gen)
    return EventLog(K.region, times, a, b, float(t_max), descriptor(rng))


@dataclass(frozen=True)
class EventBatch:
    """Many independent logs stored back to back; log i is events offsets[i]:offsets[i+1]."""

    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    offsets: np.ndarray
    t_max: float


def simulate_batch(K: KernelSpec, t_max: float, n_logs: int, gen: np.random.Generator) -> EventBatch:
    N = K.n
    counts = gen.poisson(N * t_max / 2.0, n_logs) if t_max > 0 else np.zeros(n_logs, dtype=np.int64)
    offsets = np.zeros(n_logs + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    owner = np.repeat(np.arange(n_logs), counts)
    u = gen.random(total)
    order = np.lexsort((u, owner))
    times = u[order] * t_max
    a = gen.integers(0, N, total)
    b = K.sample_partners(a, gen)
    return EventBatch(times, a, b, offsets, float(t_max))


@dataclass(frozen=True)
class Permutation:
    forward: np.ndarray
    inverse: np.ndarray


@njit(cache=True)
def _apply_swaps(forward, inverse, times, a, b, t):
    """Compose transpositions with time <= t into (forward, inverse) in place.

    ``inverse[x]`` is the original cell whose state sits at x (pi_t^{-1})."""
    for i in range(len(times)):
        if times[i] > t:
            break
        x = a[i]
        y = b[i]
        ox = inverse[x]
        oy = inverse[y]
        inverse[x] = oy
        inverse[y] = ox
        forward[oy] = x
        forward[ox] = y


def permutation_at(log: EventLog, t: float, start: Permutation | None = None, t_start: float = 0.0) -> Permutation:
    """pi_t from the log; optionally continue from pi_{t_start}."""
    if t > log.t_max or t < 0:
        raise OutOfRange(f"t = {t} outside [0, {log.t_max}]")
    n = len(log.region)
    if start is None:
        fwd = np.arange(n, dtype=np.int64)
        inv = np.arange(n, dtype=np.int64)
        lo = 0
    else:
        fwd, inv = start.forward.copy(), start.inverse.copy()
        lo = log.count_until(t_start)
    _apply_swaps(fwd, inv, log.times[lo:], log.a[lo:], log.b[lo:], t)
    return Permutation(fwd, inv)


def evolve(omega0: Configuration, log: EventLog, t: float) -> Configuration:
    """omega_t(e) = omega_0(pi_t^{-1}(e))."""
    if omega0.region is not log.region:
        raise ValueError("configuration and event log live on different regions")
    perm = permutation_at(log, t)
    return Configuration(omega0.region, omega0.values[perm.inverse])


def iid_evolve(omega0: Configuration, t: float, p: float, rng) -> Configuration:
    if t < 0:
        raise InvalidParameter("t must be nonnegative")
    gen = as_generator(rng)
    n = len(omega0.region)
    resample = gen.random(n) < -math.expm1(-t)
    fresh = draw_states(gen, 1, n, p)[0].astype(np.int8) * 2 - 1
    return Configuration(omega0.region, np.where(resample, fresh, omega0.values))


def epsilon_sprinkle(omega0: Configuration, log: EventLog, eps: float) -> Configuration:
    """omega0 with every cell touched by an event in (0, eps] forced open."""
    if eps < 0 or eps > log.t_max:
        raise OutOfRange("eps must lie in [0, t_max]")
    k = log.count_until(eps)
    v = omega0.values.copy()
    v[log.a[:k]] = 1
    v[log.b[:k]] = 1
    return Configuration(omega0.region, v)


def sprinkle_density(p: float, eps: float) -> float:
    """The bound p + (1 - p) eps / p on conditional opening probabilities."""
    return p + (1 - p) * eps / p


def sprinkle_conditional(K: KernelSpec, cells, pattern, target, eps: float, n_samples: int, rng,
                         p: float = 0.5, chunk: int = 4096, threads: int | None = None) -> Estimate:
    """P[omega^(eps)(target) open | omega^(eps) = pattern on cells], by rejection.

    omega(0) ~ P_p and omega^(eps) opens every cell touched by an event in
    (0, eps].  The estimate is over accepted samples only (``n_samples`` counts
    all draws)."""
    cells = _as_indices(K.region, cells)
    tgt = int(_as_indices(K.region, [target])[0])
    pattern = np.asarray(pattern, dtype=np.int64)
    if len(pattern) != len(cells) or np.any(np.abs(pattern) != 1):
        raise InvalidParameter("pattern must give +1/-1 for every conditioning cell")
    if tgt in set(cells.tolist()):
        raise InvalidParameter("the target must differ from the conditioning cells")
    if eps < 0:
        raise InvalidParameter("eps must be nonnegative")
    n = len(cells)
    slots = np.full(K.n, -1, dtype=np.int64)
    slots[cells] = np.arange(n)
    slots[tgt] = n

    def work(size, gen):
        ev = simulate_batch(K, eps, size, gen)
        st = draw_states(gen, size, n + 1, p)
        owner = np.repeat(np.arange(size), np.diff(ev.offsets))
        for ends in (ev.a, ev.b):
            s = slots[ends]
            hit = s >= 0
            st[owner[hit], s[hit]] = 1
        ok = np.all((2 * st[:, :n].astype(np.int64) - 1) == pattern, axis=1)
        return Moments.of(st[ok, n])

    total = Moments()
    for part in run_chunks(work, n_samples, rng, chunk, threads):
        total = total.merge(part)
    if total.n == 0:
        raise OutOfRange("no sample matched the conditioning pattern")
    return total.estimate(descriptor(rng))


# ---------------------------------------------------------------------------
# K_t and duality


@njit(cache=True)
def _track_sets(times, a, b, offsets, t, S, label, out_match, target):
    """Per log: whether pi_t(S) equals the target set (given as a boolean mask)."""
    k = len(S)
    pos = np.empty(k, dtype=np.int64)
    for i in range(len(offsets) - 1):
        for j in range(k):
            pos[j] = S[j]
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
                pos[lx] = y
            if ly >= 0:
                pos[ly] = x
        ok = True
        for j in range(k):
            if not target[pos[j]]:
                ok = False
            label[pos[j]] = -1
        out_match[i] = ok


@njit(cache=True)
def _backward_parities(times, a, b, offsets, t, Sp, bits, out):
    """Per log: chi_{S'}(omega_t) with omega_t(e) = omega_0(pi_t^{-1}(e)).

    pi_t^{-1}(e) is found by walking back through the events with time <= t."""
    for i in range(len(offsets) - 1):
        lo = offsets[i]
        hi = lo
        while hi < offsets[i + 1] and times[hi] <= t:
            hi += 1
        prod = 1
        for e0 in Sp:
            x = e0
            for e in range(hi - 1, lo - 1, -1):
                if a[e] == x:
                    x = b[e]
                elif b[e] == x:
                    x = a[e]
            if bits[i, x] == 0:
                prod = -prod
        out[i] = prod


def _as_indices(region: Region, S) -> np.ndarray:
    S = list(S)
    if not S:
        return np.zeros(0, dtype=np.int64)
    if np.ndim(S[0]) == 0:
        idx = np.asarray(S, dtype=np.int64)
    else:
        idx = region.indices(S)
    if len(set(idx.tolist())) != len(idx):
        raise ValueError("repeated cells in set")
    return idx


def estimate_Kt(S, Sp, K: KernelSpec, t: float, n_samples: int, rng, chunk: int = 4096,
                threads: int | None = None) -> Estimate:
    """MC frequency of {pi_t(S) = S'} over independent event logs."""
    S = _as_indices(K.region, S)
    Sp = _as_indices(K.region, Sp)
    seed = descriptor(rng)
    if len(S) != len(Sp):
        return Estimate.exact_value(0.0, n_samples, seed)
    if t == 0 or len(S) == 0:
        return Estimate.exact_value(1.0 if set(S.tolist()) == set(Sp.tolist()) else 0.0, n_samples, seed)
    target = np.zeros(K.n, dtype=np.bool_)
    target[Sp] = True

    def work(size, gen):
        ev = simulate_batch(K, t, size, gen)
        label = np.full(K.n, -1, dtype=np.int64)
        out = np.zeros(size, dtype=np.bool_)
        _track_sets(ev.times, ev.a, ev.b, ev.offsets, t, S, label, out, target)
        return Moments.of(out)

    parts = run_chunks(work, n_samples, rng, chunk, threads)
    total = Moments()
    for p in parts:
        total = total.merge(p)
    return total.estimate(seed)


def duality_check(S, Sp, K: KernelSpec, t: float, n_samples: int, rng, chunk: int = 4096,
                  threads: int | None = None) -> tuple[Estimate, Estimate]:
    """(E[chi_S(omega_0) chi_S'(omega_t)] by simulation, K_t(S, S') by estimate_Kt)."""
    from .stats import as_stream

    stream = as_stream(rng)
    Si = _as_indices(K.region, S)
    Spi = _as_indices(K.region, Sp)
    seed = stream.descriptor

    def work(size, gen):
        ev = simulate_batch(K, t, size, gen)
        bits = draw_states(gen, size, K.n, 0.5)
        out = np.empty(size, dtype=np.int64)
        _backward_parities(ev.times, ev.a, ev.b, ev.offsets, t, Spi, bits, out)
        if len(Si):
            out = out * np.prod(2 * bits[:, Si].astype(np.int64) - 1, axis=1)
        return Moments.of(out)

    total = Moments()
    for p in run_chunks(work, n_samples, stream.spawn(0), chunk, threads):
        total = total.merge(p)
    lhs = total.estimate(seed)
    rhs = estimate_Kt(Si, Spi, K, t, n_samples, stream.spawn(1), chunk, threads)
    return lhs, rhs


# ---------------------------------------------------------------------------
# set-valued particle process


def particle_escape(K: KernelSpec, S: np.ndarray, t: float, n_samples: int, gen: np.random.Generator,
                    inside: np.ndarray) -> np.ndarray:
    """Whether pi_t(S) stays inside the cell mask ``inside``, per sample.

    pi_t(S) is simulated as an exclusion particle system: each particle rings
    at rate 1 and jumps to w ~ K(x, .) if w is empty.  This has the same law as
    the image of S under the graphical construction."""
    S = np.asarray(S, dtype=np.int64)
    k = len(S)
    counts = gen.poisson(k * t, n_samples)
    offsets = np.zeros(n_samples + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    # rings are exchangeable, so the i-th ring of a sample picks a uniform particle
    # and a displacement drawn from each class table (the particle's class selects one)
    which = gen.integers(0, k, total)
    cls_draw = []
    for cls in range(len(K.probs)):
        m = len(K.probs[cls])
        j = np.minimum((gen.random(total) * m).astype(np.int64), m - 1)
        v = gen.random(total)
        j = np.where(v < K.accept[cls][j], j, K.alias[cls][j])
        cls_draw.append(j)
    jump = np.stack(cls_draw, axis=1)
    out = np.zeros(n_samples, dtype=np.bool_)
    disp = np.stack([np.pad(d, ((0, max(len(x) for x in K.displacements) - len(d)), (0, 0)))
                     for d in K.displacements])
    L = K.region.geometry.L
    tri = K.region.model is TRIANGULAR
    _particles(S, offsets, which, jump, disp, K.region.coords, K.cell_class, L, tri, inside, out)
    return out


@njit(cache=True)
def _particles(S, offsets, which, jump, disp, coords, cell_class, L, tri, inside, out):
    n = len(coords)
    occ = np.zeros(n, dtype=np.bool_)
    k = len(S)
    pos = np.empty(k, dtype=np.int64)
    for i in range(len(offsets) - 1):
        for j in range(k):
            pos[j] = S[j]
            occ[S[j]] = True
        for e in range(offsets[i], offsets[i + 1]):
            p = which[e]
            x = pos[p]
            c = cell_class[x]
            d = jump[e, c]
            X = coords[x, 0] + disp[c, d, 0]
            Y = coords[x, 1] + disp[c, d, 1]
            if tri:
                X %= L
                Y %= L
                y = X * L + Y
            else:
                X %= 2 * L
                Y %= 2 * L
                y = X * L + Y // 2
            if not occ[y]:
                occ[x] = False
                occ[y] = True
                pos[p] = y
        ok = True
        for j in range(k):
            if not inside[pos[j]]:
                ok = False
            occ[pos[j]] = False
        out[i] = ok
