import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaosrates.errors import InvalidArgumentError
from chaosrates.paths import (
    TimeGrid,
    coarsen,
    make_grid,
    path_from_values,
    resimulate,
    resimulate_chunks,
    sample_paths,
    zero_path,
)


def test_make_grid_quarter_steps():
    g = make_grid(1.0, 4, 1.0)
    np.testing.assert_allclose(g.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.tail_horizon == 1.0
    assert g.n_total == 4


def test_make_grid_with_tail():
    g = make_grid(10.0, 1000, 3.0)
    assert g.times.size == 1001
    assert g.dt == pytest.approx(0.01)
    assert g.tail_horizon == pytest.approx(30.0)
    assert g.n_total == 3000
    assert g.full_times[-1] == pytest.approx(30.0)


@pytest.mark.parametrize("args", [(0.0, 4, 1.0), (-1.0, 4, 1.0), (1.0, 0, 1.0), (1.0, 4, 0.5),
                                  (np.inf, 4, 1.0), (1.0, 2.5, 1.0)])
def test_make_grid_rejects(args):
    with pytest.raises(InvalidArgumentError):
        make_grid(*args)


def test_grid_rejects_nonuniform_and_bad_start():
    with pytest.raises(InvalidArgumentError):
        TimeGrid(np.array([0.0, 0.1, 0.3]), 0.3)
    with pytest.raises(InvalidArgumentError):
        TimeGrid(np.array([0.1, 0.2]), 0.2)
    with pytest.raises(InvalidArgumentError):
        TimeGrid(np.array([0.0, 0.5, 1.0]), 0.75)  # tail shorter than horizon
    with pytest.raises(InvalidArgumentError):
        TimeGrid(np.array([0.0, 0.5, 1.0]), 1.25)  # not a whole number of steps


def test_index_on_and_off_grid():
    g = make_grid(2.0, 20, 2.0)
    assert g.index(0.0) == 0
    assert g.index(1.3) == 13
    assert g.index(4.0) == 40
    with pytest.raises(InvalidArgumentError):
        g.index(0.05)
    with pytest.raises(InvalidArgumentError):
        g.index(4.1)


def test_path_invariants():
    g = make_grid(1.0, 50, 2.0)
    ens = sample_paths(g, 3, seed=1)
    for p in ens.paths:
        assert p.values[0] == 0.0
        assert p.values.shape == (101,)
        np.testing.assert_array_equal(np.diff(p.values), p.increments)


def test_reproducible_and_order_free():
    g = make_grid(1.0, 20, 3.0)
    a = sample_paths(g, 37, seed=9).values
    b = sample_paths(g, 37, seed=9).values
    np.testing.assert_array_equal(a, b)
    # generation order and batching do not matter: path i depends on (seed, i) only
    ens = sample_paths(g, 37, seed=9, batch_size=5)
    blocks = ens.map_batches(lambda bt: bt.values, threads=3)
    np.testing.assert_array_equal(np.vstack(blocks), a)
    np.testing.assert_array_equal(ens.batch(30, 37).values, a[30:])
    np.testing.assert_array_equal(ens.path(12).values, a[12])
    assert not np.array_equal(sample_paths(g, 37, seed=10).values, a)


def test_prefix_stable_when_resized():
    g = make_grid(1.0, 10)
    small = sample_paths(g, 8, seed=4).values
    big = sample_paths(g, 16, seed=4).values
    np.testing.assert_array_equal(big[:8], small)


def test_antithetic_pairs_exact():
    g = make_grid(1.0, 30, 2.0)
    v = sample_paths(g, 10, seed=3, antithetic=True).values
    np.testing.assert_array_equal(v[1::2], -v[0::2])
    # batch boundaries never split a pair
    blocks = sample_paths(g, 10, seed=3, antithetic=True, batch_size=3).map_batches(lambda b: b.values)
    np.testing.assert_array_equal(np.vstack(blocks), v)


def test_antithetic_needs_even_count():
    with pytest.raises(InvalidArgumentError):
        sample_paths(make_grid(1.0, 4), 3, seed=0, antithetic=True)


@pytest.mark.parametrize("seed", [-1, 2**64, 1.5])
def test_seed_range(seed):
    with pytest.raises(InvalidArgumentError):
        sample_paths(make_grid(1.0, 4), 2, seed=seed)


def test_ensemble_moments():
    # mean within 3 sqrt(t/N); variance within 5 SE of t (chi-square SE = t sqrt(2/(N-1)))
    n = 20_000
    g = make_grid(2.0, 8)
    v = sample_paths(g, n, seed=123).values
    t = g.full_times[1:]
    w = v[:, 1:]
    assert np.all(np.abs(w.mean(axis=0)) <= 3 * np.sqrt(t / n))
    assert np.all(np.abs(w.var(axis=0, ddof=1) - t) <= 5 * t * np.sqrt(2 / (n - 1)))


def test_zero_path_and_explicit_values():
    g = make_grid(1.0, 4)
    z = zero_path(g)
    assert not z.values.any() and not z.increments.any()
    p = path_from_values(g, [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(p.increments, 1.0)
    with pytest.raises(InvalidArgumentError):
        path_from_values(g, [1, 1, 2, 3, 4])
    with pytest.raises(InvalidArgumentError):
        path_from_values(g, [0, 1])


def test_resimulate_keeps_prefix_and_is_deterministic():
    g = make_grid(1.0, 10, 2.0)
    b = sample_paths(g, 4, seed=2).batch(0, 4)
    inner = resimulate(b, 2, 5, 50)
    np.testing.assert_array_equal(inner[:, :6], np.broadcast_to(b.values[2, :6], (50, 6)))
    np.testing.assert_array_equal(inner, resimulate(b, 2, 5, 50))
    # chunking does not change the draws
    np.testing.assert_array_equal(np.vstack(list(resimulate_chunks(b, 2, 5, 50, chunk=7))), inner)
    # branching at t=0 uses one shared stream for every outer path
    np.testing.assert_array_equal(resimulate(b, 0, 0, 20), resimulate(b, 3, 0, 20))
    assert not np.array_equal(resimulate(b, 0, 5, 20), resimulate(b, 1, 5, 20)[:, :])


def test_resimulated_increment_variance():
    g = make_grid(1.0, 4, 2.0)
    b = sample_paths(g, 1, seed=0).batch(0, 1)
    inner = resimulate(b, 0, 2, 40_000)
    inc = np.diff(inner[:, 2:], axis=1)
    assert np.all(np.abs(inc.var(axis=0) - g.dt) <= 5 * g.dt * np.sqrt(2 / 40_000))


def test_coarsen_subsamples_same_paths():
    g = make_grid(1.0, 8, 2.0)
    b = sample_paths(g, 3, seed=5).batch(0, 3)
    c = coarsen(b, 4)
    assert c.grid.n_steps == 2 and c.grid.tail_horizon == 2.0
    np.testing.assert_array_equal(c.values, b.values[:, ::4])
    np.testing.assert_allclose(c.increments.sum(axis=1), b.values[:, -1])
    with pytest.raises(InvalidArgumentError):
        coarsen(b, 3)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**64 - 1), steps=st.integers(1, 16))
def test_property_reproducible_any_seed(n, seed, steps):
    g = make_grid(1.0, steps, 1.5)
    a = sample_paths(g, n, seed=seed)
    np.testing.assert_array_equal(a.values, sample_paths(g, n, seed=seed).values)
    assert a.values.shape == (n, g.n_total + 1)
    assert np.all(a.values[:, 0] == 0)
