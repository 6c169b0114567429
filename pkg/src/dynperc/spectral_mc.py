"""Monte Carlo spectral masses through coupled configurations.

For a set B of cells, let omega' agree with omega on B and be independent
elsewhere.  Then E[f(omega) f(omega')] = E[E[f | F_B]^2], which is the
spectral mass of the subsets contained in B.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .lattice import (
    TRIANGULAR,
    Annulus,
    Model,
    Rect,
    Region,
    Side,
    Window,
    as_fraction,
    centre_in_rect,
    half_plane_mask,
)
from . import _kernels as kern
from .percolation import (
    CellFunction,
    Configuration,
    OneArmEvent,
    arm_geometry,
    draw_states,
)
from .stats import Estimate, Moments, as_stream, descriptor, run_chunks
from .spectral_exact import OverlapError


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """Two configurations equal on ``shared`` and independent elsewhere."""

    shared: np.ndarray
    omega: Configuration
    omega_prime: Configuration


def coupled_states(gen: np.random.Generator, m: int, n: int, shared: np.ndarray, p: float = 0.5):
    w1 = draw_states(gen, m, n, p)
    w2 = draw_states(gen, m, n, p)
    w2[:, shared] = w1[:, shared]
    return w1, w2


def sample_coupled_pair(region: Region, shared, rng, p: float = 0.5) -> CoupledPair:
    from .stats import as_generator

    mask = _as_mask(region, shared)
    w1, w2 = coupled_states(as_generator(rng), 1, len(region), mask, p)
    return CoupledPair(mask, Configuration.from_states(region, w1[0]), Configuration.from_states(region, w2[0]))


def _as_mask(target, cells) -> np.ndarray:
    """Boolean mask over the function's cells from a mask, indices or coordinates."""
    coords = target.coords
    n = len(coords)
    if isinstance(cells, np.ndarray) and cells.dtype == bool:
        if cells.shape != (n,):
            raise ValueError("mask length mismatch")
        return cells.copy()
    cells = list(cells)
    mask = np.zeros(n, dtype=bool)
    if not cells:
        return mask
    if np.ndim(cells[0]) == 0:
        mask[np.asarray(cells, dtype=np.int64)] = True
        return mask
    lookup = Region(target.model, Window(as_fraction(0)), coords).lookup(np.asarray(cells).reshape(-1, 2))
    if np.any(lookup < 0):
        raise KeyError("cell outside the function's region")
    mask[lookup] = True
    return mask


def _check_region(f: CellFunction, region) -> None:
    if region is None:
        return
    coords = region.coords if isinstance(region, Region) else np.asarray(region)
    if coords.shape != f.coords.shape or not np.array_equal(coords, f.coords):
        raise ValueError("region must list the function's cells in order")


def spectral_mass_inside(f: CellFunction, region, B, n_samples: int, rng, p: float = 0.5,
                         chunk: int = 1024, threads: int | None = None) -> Estimate:
    """Unbiased estimate of E[E[f | F_B]^2] = mass of {S subset of B}."""
    _check_region(f, region)
    mask = _as_mask(f, B)

    def work(size, gen):
        w1, w2 = coupled_states(gen, size, f.n, mask, p)
        return Moments.of(np.asarray(f.evaluate(w1), dtype=float) * np.asarray(f.evaluate(w2), dtype=float))

    total = Moments()
    for part in run_chunks(work, n_samples, rng, chunk, threads):
        total = total.merge(part)
    return total.estimate(descriptor(rng))


def spectral_mass_hit_avoid(f: CellFunction, region, J: Sequence[Iterable], W: Iterable, n_samples: int, rng,
                            p: float = 0.5, chunk: int = 1024, threads: int | None = None) -> Estimate:
    """Mass of {S : S meets every J_j and misses W} by inclusion-exclusion over coupled pairs.

    Every term uses the same omega and the same fresh bits, and the alternating
    sum is formed per sample, so the reported error accounts for the
    correlations between terms."""
    _check_region(f, region)
    if len(J) > 8:
        raise ValueError("at most 8 hit sets")
    Jm = [_as_mask(f, j) for j in J]
    Wm = _as_mask(f, W)
    seen = np.zeros(f.n, dtype=bool)
    for m in Jm + [Wm]:
        if np.any(seen & m):
            raise OverlapError("sets must be mutually disjoint")
        seen |= m
    terms = []
    for k in range(len(Jm) + 1):
        for T in itertools.combinations(range(len(Jm)), k):
            removed = Wm.copy()
            for j in T:
                removed |= Jm[j]
            terms.append(((-1) ** k, ~removed))

    def work(size, gen):
        w1 = draw_states(gen, size, f.n, p)
        fresh = draw_states(gen, size, f.n, p)
        f1 = np.asarray(f.evaluate(w1), dtype=float)
        acc = np.zeros(size)
        for sign, keep in terms:
            w2 = np.where(keep[None, :], w1, fresh)
            acc += sign * f1 * np.asarray(f.evaluate(w2), dtype=float)
        return Moments.of(acc)

    total = Moments()
    for part in run_chunks(work, n_samples, rng, chunk, threads):
        total = total.merge(part)
    return total.estimate(descriptor(rng))


def clustering_profile(R, r0_list: Sequence, n_samples: int, rng, model: Model = TRIANGULAR,
                       chunk: int = 512, threads: int | None = None) -> list[tuple[float, Estimate]]:
    """r0 -> mass of {S inside (-r0, r0)^2} for f_R, with omega and fresh bits shared across r0."""
    f = OneArmEvent(model, R)
    r0s = [as_fraction(r) for r in r0_list]
    if any(b <= a for a, b in zip(r0s, r0s[1:])):
        raise ValueError("r0_list must be increasing")
    masks = [centre_in_rect(f.model, f.coords, Rect.square(0, 0, r), open_=True) for r in r0s]

    def work(size, gen):
        w1 = draw_states(gen, size, f.n)
        fresh = draw_states(gen, size, f.n)
        f1 = f.evaluate(w1)
        out = []
        for mask in masks:
            w2 = np.where(mask[None, :], w1, fresh)
            out.append(Moments.of(f1 & f.evaluate(w2)))
        return out

    parts = run_chunks(work, n_samples, rng, chunk, threads)
    seed = descriptor(rng)
    result = []
    for i, r in enumerate(r0s):
        total = Moments()
        for part in parts:
            total = total.merge(part[i])
        result.append((float(r), total.estimate(seed)))
    return result


def shared_mask(coords: np.ndarray, model: Model, side, shared: str) -> np.ndarray:
    if shared == "all":
        return np.ones(len(coords), dtype=bool)
    if shared == "none":
        return np.zeros(len(coords), dtype=bool)
    if shared != "half":
        raise ValueError("shared must be 'half', 'all' or 'none'")
    region = Region(model, Window(as_fraction(0)), coords)
    # straddling tiles along the boundary line are included on the shared side
    return half_plane_mask(region, Side(side), straddlers=True)


@dataclass(frozen=True)
class FourArmLadder:
    radii: tuple
    R: float
    beta: tuple  # P[omega and omega' both have 4 arms]
    alpha: tuple  # P[omega has 4 arms]


def conditioned_fourarm_ladder(r_list: Sequence, R, n_samples: int, rng, side=Side.LOWER,
                               model: Model = TRIANGULAR, shared: str = "half", chunk: int = 256,
                               threads: int | None = None) -> FourArmLadder:
    """beta_4 and alpha_4 in [-R,R]^2 minus (-r,r)^2 for several r from the same coupled pairs."""
    model = Model.parse(model)
    r_list = [as_fraction(r) for r in r_list]
    R = as_fraction(R)
    big = arm_geometry(model, Annulus((0, 0), min(r_list), R))
    coords = big.coords
    base = Region(model, Window(R), coords)
    geoms = []
    for r in r_list:
        g = arm_geometry(model, Annulus((0, 0), r, R))
        geoms.append((g, base.lookup(g.coords).astype(np.int32)))
    mask = shared_mask(coords, model, side, shared)

    def four_arms(g, sel, states):
        c = kern.counts_batch(states, sel, g.nbr_open, g.nbr_closed, g.inner, g.outer, 2, 2)
        return (c[:, 0] >= 2) & (c[:, 1] >= 2)

    def work(size, gen):
        w1, w2 = coupled_states(gen, size, len(coords), mask)
        out = []
        for g, sel in geoms:
            a = four_arms(g, sel, w1)
            both = np.zeros(size, dtype=bool)
            rows = np.nonzero(a)[0]
            if len(rows):
                # omega' only matters where omega already has the arms
                both[rows] = four_arms(g, sel, np.ascontiguousarray(w2[rows]))
            out.append((Moments.of(both), Moments.of(a)))
        return out

    parts = run_chunks(work, n_samples, rng, chunk, threads)
    seed = descriptor(rng)
    betas, alphas = [], []
    for i in range(len(r_list)):
        tb, ta = Moments(), Moments()
        for part in parts:
            tb = tb.merge(part[i][0])
            ta = ta.merge(part[i][1])
        betas.append(tb.estimate(seed))
        alphas.append(ta.estimate(seed))
    return FourArmLadder(tuple(float(r) for r in r_list), float(R), tuple(betas), tuple(alphas))


def conditioned_fourarm(r1, r2, side=Side.LOWER, n_samples: int = 10_000, rng=0, model: Model = TRIANGULAR,
                        shared: str = "half", **kw) -> Estimate:
    """beta_4(r1, r2) = P[omega, omega' both in A_4(r1, r2)], omega = omega' on the half-plane."""
    r1, r2 = as_fraction(r1), as_fraction(r2)
    if not (1 <= r1 < r2):
        raise ValueError("need 1 <= r1 < r2")
    return conditioned_fourarm_ladder([r1], r2, n_samples, rng, side, model, shared, **kw).beta[0]
