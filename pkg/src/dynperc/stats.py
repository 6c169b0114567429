"""Random streams, Monte Carlo estimates and least-squares fits."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

THREADS_ENV = "DYNPERC_THREADS"
DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by (seed, stream_id) and a spawn path.

    Streams are Philox generators keyed through ``numpy.random.SeedSequence``;
    distinct keys give independent streams and the same key reproduces the
    same draws bit for bit."""

    seed: int
    stream_id: int = 0
    path: tuple = ()

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64) or not (0 <= int(self.stream_id) < 2**64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    def spawn(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + self.path)
        return np.random.Generator(np.random.Philox(ss))

    @property
    def descriptor(self) -> str:
        tail = "".join(f"/{k}" for k in self.path)
        return f"{self.seed}:{self.stream_id}{tail}"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot make a generator from {type(rng).__name__}")


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("an RngStream (or integer seed) is required here")


def descriptor(rng) -> str:
    return rng.descriptor if isinstance(rng, RngStream) else "generator"


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_samples: int
    seed: str = ""
    exact: bool = False

    @property
    def zero(self) -> bool:
        """Zero-frequency flag: nothing was observed."""
        return self.mean == 0.0 and not self.exact

    def __float__(self) -> float:
        return float(self.mean)

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.std_error

    @staticmethod
    def exact_value(value: float, n_samples: int = 1, seed: str = "") -> "Estimate":
        return Estimate(float(value), 0.0, max(int(n_samples), 1), seed, exact=True)

    @staticmethod
    def from_samples(x, seed: str = "") -> "Estimate":
        x = np.asarray(x, dtype=np.float64).ravel()
        return Moments.of(x).estimate(seed)


@dataclass
class Moments:
    """Mergeable (count, sum, sum of squares) accumulator."""

    n: int = 0
    s1: float = 0.0
    s2: float = 0.0

    @staticmethod
    def of(x) -> "Moments":
        x = np.asarray(x, dtype=np.float64).ravel()
        return Moments(len(x), float(x.sum()), float(np.dot(x, x)))

    def merge(self, other: "Moments") -> "Moments":
        return Moments(self.n + other.n, self.s1 + other.s1, self.s2 + other.s2)

    def estimate(self, seed: str = "") -> Estimate:
        if self.n < 1:
            raise ValueError("no samples")
        mean = self.s1 / self.n
        if self.n == 1:
            return Estimate(mean, 0.0, 1, seed)
        var = max(self.s2 - self.n * mean * mean, 0.0) / (self.n - 1)
        return Estimate(mean, math.sqrt(var / self.n), self.n, seed)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def chunk_sizes(n_samples: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    full, rest = divmod(n_samples, chunk)
    return [chunk] * full + ([rest] if rest else [])


def run_chunks(work: Callable[[int, np.random.Generator], object], n_samples: int, rng,
               chunk: int = DEFAULT_CHUNK, threads: int | None = None) -> list:
    """Run ``work(size, generator)`` on fixed chunks and return results in chunk order.

    Chunk i always draws from ``rng.spawn(i)``, so results do not depend on the
    number of worker threads."""
    stream = as_stream(rng)
    sizes = chunk_sizes(n_samples, chunk)
    jobs = [(size, stream.spawn(i)) for i, size in enumerate(sizes)]
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(jobs) == 1:
        return [work(size, s.generator()) for size, s in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: work(job[0], job[1].generator()), jobs))


def mc_mean(sample_fn: Callable[[int, np.random.Generator], np.ndarray], n_samples: int, rng,
            chunk: int = DEFAULT_CHUNK, threads: int | None = None) -> Estimate:
    """Estimate from per-sample values produced chunkwise by ``sample_fn``."""
    parts = run_chunks(lambda k, g: Moments.of(sample_fn(k, g)), n_samples, rng, chunk, threads)
    total = Moments()
    for p in parts:
        total = total.merge(p)
    return total.estimate(descriptor(rng))


@dataclass(frozen=True)
class PowerFit:
    slope: float
    intercept: float
    residuals: np.ndarray = field(repr=False)
    slope_se: float = float("nan")
    dropped: int = 0


def fit_power_law(x: Sequence[float], estimates: Sequence, weighted: bool = False) -> PowerFit:
    """Least-squares fit of log(mean) against log(x); zero estimates are dropped."""
    xs, ys, ws = [], [], []
    dropped = 0
    for xi, e in zip(x, estimates):
        m = float(e.mean) if isinstance(e, Estimate) else float(e)
        if m <= 0:
            dropped += 1
            continue
        xs.append(math.log(xi))
        ys.append(math.log(m))
        if weighted and isinstance(e, Estimate) and e.std_error > 0:
            ws.append(m / e.std_error)
        else:
            ws.append(1.0)
    if len(xs) < 2:
        raise ValueError("need at least two nonzero points to fit")
    X = np.column_stack([np.array(xs), np.ones(len(xs))])
    w = np.array(ws)
    y = np.array(ys)
    coef, *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
    res = y - X @ coef
    se = float("nan")
    if len(xs) > 2:
        s2 = float(np.sum((w * res) ** 2)) / (len(xs) - 2)
        cov = s2 * np.linalg.inv((X * w[:, None]).T @ (X * w[:, None]))
        se = math.sqrt(cov[0, 0])
    return PowerFit(float(coef[0]), float(coef[1]), res, se, dropped)
