"""Uniform time grids and reproducible Brownian path ensembles.

Every path is drawn from its own Philox stream keyed by ``(seed, index)``, so
a path's values depend only on the seed and its index. Batching, threading
and generation order cannot change the output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import InvalidArgumentError

_SEED_LIMIT = 1 << 64
# counter word used to tag inner (nested) streams apart from outer paths
_INNER_TAG = 1
_ROOT_TAG = 2

DEFAULT_BATCH = 2048


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] plus its extension up to ``tail_horizon``.

    ``times`` covers the reporting horizon. Paths are simulated on
    ``full_times``, which continues at the same spacing to ``tail_horizon``
    and stands in for [0, inf) in tail integrals.
    """

    times: np.ndarray
    tail_horizon: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidArgumentError("a grid needs at least two times")
        if not np.all(np.isfinite(times)):
            raise InvalidArgumentError("grid times must be finite")
        if times[0] != 0.0:
            raise InvalidArgumentError("grid must start at t=0")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise InvalidArgumentError("grid times must be strictly increasing")
        dt = (times[-1] - times[0]) / steps.size
        if not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
            raise InvalidArgumentError("only uniform grids are supported")
        tail = float(self.tail_horizon)
        if not np.isfinite(tail) or tail < times[-1] * (1 - 1e-12):
            raise InvalidArgumentError("tail_horizon must be >= horizon")
        n_total = tail / dt
        if abs(n_total - round(n_total)) > 1e-6 * max(1.0, n_total):
            raise InvalidArgumentError("tail_horizon must be a whole number of steps")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "tail_horizon", tail)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_total(self) -> int:
        """Number of steps on the extended grid [0, tail_horizon]."""
        return max(self.n_steps, int(round(self.tail_horizon / self.dt)))

    @property
    def full_times(self) -> np.ndarray:
        n = self.n_total
        return self.horizon * (np.arange(n + 1) / self.n_steps)

    def index(self, t: float) -> int:
        """Index of ``t`` on the extended grid; raises if ``t`` is off-grid."""
        t = float(t)
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_total or abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidArgumentError(f"t={t} is not a grid time")
        return k

    def refined(self, factor: int) -> "TimeGrid":
        """Same horizon and tail with ``factor`` times as many steps."""
        n = self.n_steps * factor
        return TimeGrid(self.horizon * np.arange(n + 1) / n, self.tail_horizon)

    def with_tail(self, tail_horizon: float) -> "TimeGrid":
        return TimeGrid(self.times, tail_horizon)


def make_grid(t_max: float, n_steps: int, tail_factor: float = 1.0) -> TimeGrid:
    """Uniform grid with spacing ``t_max / n_steps`` and tail ``tail_factor * t_max``."""
    if not (np.isfinite(t_max) and t_max > 0):
        raise InvalidArgumentError("t_max must be positive")
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgumentError("n_steps must be a positive integer")
    if not (np.isfinite(tail_factor) and tail_factor >= 1):
        raise InvalidArgumentError("tail_factor must be >= 1")
    n_steps = int(n_steps)
    n_total = max(n_steps, int(round(tail_factor * n_steps)))
    times = t_max * (np.arange(n_steps + 1) / n_steps)
    return TimeGrid(times, t_max * n_total / n_steps)


@dataclass(frozen=True)
class PathBatch:
    """A block of Brownian paths sharing one grid (rows are paths)."""

    grid: TimeGrid
    increments: np.ndarray
    values: np.ndarray
    indices: np.ndarray
    seed: int = 0

    def __len__(self):
        return self.values.shape[0]

    def row(self, i: int) -> "BrownianPath":
        return BrownianPath(self.grid, self.increments[i], self.values[i],
                            seed=self.seed, index=int(self.indices[i]))


@dataclass(frozen=True)
class BrownianPath:
    grid: TimeGrid
    increments: np.ndarray
    values: np.ndarray
    seed: int = 0
    index: int = 0

    def as_batch(self) -> PathBatch:
        return PathBatch(self.grid, self.increments[None, :], self.values[None, :],
                         np.array([self.index]), self.seed)


def path_from_values(grid: TimeGrid, values, seed: int = 0, index: int = 0) -> BrownianPath:
    """Wrap explicit W values (e.g. the zero path) as a BrownianPath."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_total + 1,):
        raise InvalidArgumentError(f"expected {grid.n_total + 1} values")
    if values[0] != 0.0:
        raise InvalidArgumentError("W(0) must be 0")
    return BrownianPath(grid, np.diff(values), values, seed=seed, index=index)


def zero_path(grid: TimeGrid) -> BrownianPath:
    return path_from_values(grid, np.zeros(grid.n_total + 1))


def coarsen(batch: PathBatch, factor: int) -> PathBatch:
    """Subsample every ``factor``-th grid point, keeping the same Brownian paths."""
    grid = batch.grid
    if int(factor) != factor or factor < 1:
        raise InvalidArgumentError("factor must be a positive integer")
    if grid.n_steps % factor or grid.n_total % factor:
        raise InvalidArgumentError("grid steps are not divisible by factor")
    n = grid.n_steps // factor
    coarse = TimeGrid(grid.horizon * np.arange(n + 1) / n, grid.tail_horizon)
    values = batch.values[:, ::factor]
    return PathBatch(coarse, np.diff(values, axis=1), values, batch.indices, batch.seed)


def as_batch(path) -> tuple[PathBatch, bool]:
    """Normalize a path or batch; the flag says whether to squeeze results."""
    if isinstance(path, BrownianPath):
        return path.as_batch(), True
    if isinstance(path, PathBatch):
        return path, False
    if isinstance(path, PathEnsemble):
        # materializes every path; stream with .batches() for large ensembles
        return path.batch(0, path.n_paths), False
    raise InvalidArgumentError(f"expected a BrownianPath or PathBatch, got {type(path).__name__}")


def _check_seed(seed: int) -> int:
    if int(seed) != seed or not 0 <= seed < _SEED_LIMIT:
        raise InvalidArgumentError("seed must be an integer in [0, 2**64)")
    return int(seed)


def _stream(seed: int, index: int, counter=None) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed << 64) | int(index), counter=counter))


INNER_CHUNK = 1024


def _inner_stream(seed: int, outer_index: int, k: int) -> np.random.Generator:
    # at k == 0 every outer path shares the same prefix, so one root stream is
    # used and time-0 estimates are identical across paths
    if k == 0:
        return _stream(seed, 0, counter=[0, 0, 0, _ROOT_TAG])
    return _stream(seed, outer_index, counter=[0, 0, k, _INNER_TAG])


def inner_normals(seed: int, outer_index: int, k: int, shape) -> np.ndarray:
    """Standard normals for nested resimulation from grid index ``k`` of an outer path."""
    return _inner_stream(seed, outer_index, k).standard_normal(shape)


def resimulate_chunks(batch: PathBatch, row: int, k: int, n_inner: int,
                      chunk: int = INNER_CHUNK) -> Iterator[np.ndarray]:
    """Inner paths that copy row ``row`` up to index ``k`` and branch afterwards.

    Paths come in blocks of at most ``chunk`` rows drawn sequentially from one
    stream, so the concatenation does not depend on ``chunk``.
    """
    grid = batch.grid
    n = grid.n_total
    rng = _inner_stream(batch.seed, int(batch.indices[row]), k)
    scale = np.sqrt(grid.dt)
    for start in range(0, n_inner, chunk):
        m = min(chunk, n_inner - start)
        out = np.empty((m, n + 1))
        out[:, : k + 1] = batch.values[row, : k + 1]
        if k < n:
            z = rng.standard_normal((m, n - k))
            out[:, k + 1:] = batch.values[row, k] + np.cumsum(z * scale, axis=1)
        yield out


def resimulate(batch: PathBatch, row: int, k: int, n_inner: int) -> np.ndarray:
    """All ``n_inner`` continuations of row ``row`` from index ``k`` as one array."""
    return np.vstack(list(resimulate_chunks(batch, row, k, n_inner)))


@dataclass(frozen=True)
class PathEnsemble:
    """N Brownian paths on a grid, regenerated on demand from (seed, index).

    Paths are not stored; ``batch``/``batches`` materialize blocks so large
    ensembles can be streamed.
    """

    grid: TimeGrid
    n_paths: int
    seed: int
    antithetic: bool = False
    batch_size: int = field(default=DEFAULT_BATCH, compare=False)

    def batch(self, start: int, stop: int) -> PathBatch:
        stop = min(stop, self.n_paths)
        if not 0 <= start < stop:
            raise InvalidArgumentError("empty path range")
        n = self.grid.n_total
        scale = np.sqrt(self.grid.dt)
        inc = np.empty((stop - start, n))
        for row, i in enumerate(range(start, stop)):
            if self.antithetic:
                z = _stream(self.seed, i // 2).standard_normal(n)
                inc[row] = -z * scale if i % 2 else z * scale
            else:
                inc[row] = _stream(self.seed, i).standard_normal(n) * scale
        values = np.zeros((stop - start, n + 1))
        np.cumsum(inc, axis=1, out=values[:, 1:])
        # store increments as differences of the stored values so the two agree exactly
        return PathBatch(self.grid, np.diff(values, axis=1), values, np.arange(start, stop), self.seed)

    def batches(self, batch_size: int | None = None) -> Iterator[PathBatch]:
        size = batch_size or self.batch_size
        if self.antithetic and size % 2:
            size += 1
        for start in range(0, self.n_paths, size):
            yield self.batch(start, start + size)

    def path(self, i: int) -> BrownianPath:
        return self.batch(i, i + 1).row(0)

    @property
    def paths(self) -> list[BrownianPath]:
        full = self.batch(0, self.n_paths)
        return [full.row(i) for i in range(self.n_paths)]

    @property
    def values(self) -> np.ndarray:
        """All path values as one (n_paths, n_total + 1) array."""
        return self.batch(0, self.n_paths).values

    def map_batches(self, fn: Callable[[PathBatch], object], threads: int = 1,
                    batch_size: int | None = None) -> list:
        """Apply ``fn`` to each batch; results come back in batch order."""
        size = batch_size or self.batch_size
        if self.antithetic and size % 2:
            size += 1
        starts = list(range(0, self.n_paths, size))

        def job(start):
            return fn(self.batch(start, start + size))

        if threads <= 1:
            return [job(s) for s in starts]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, starts))

    def resized(self, n_paths: int) -> "PathEnsemble":
        return PathEnsemble(self.grid, n_paths, self.seed, self.antithetic, self.batch_size)

    def on_grid(self, grid: TimeGrid) -> "PathEnsemble":
        return PathEnsemble(grid, self.n_paths, self.seed, self.antithetic, self.batch_size)


def sample_paths(grid: TimeGrid, n_paths: int, seed: int, antithetic: bool = False,
                 batch_size: int = DEFAULT_BATCH) -> PathEnsemble:
    """Deterministic ensemble of ``n_paths`` Brownian paths on ``grid``."""
    if int(n_paths) != n_paths or n_paths < 1:
        raise InvalidArgumentError("n_paths must be a positive integer")
    if antithetic and n_paths % 2:
        raise InvalidArgumentError("antithetic sampling needs an even n_paths")
    return PathEnsemble(grid, int(n_paths), _check_seed(seed), bool(antithetic), batch_size)
