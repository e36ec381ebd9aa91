import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaosrates.chaos import GbmExponential, as_custom, conditional_mass_columns, scale_spec
from chaosrates.errors import (
    DegenerateSpecError,
    InvalidArgumentError,
    InvalidCurveError,
    ShortRateMismatchError,
)
from chaosrates.paths import coarsen, make_grid, sample_paths, zero_path
from chaosrates.term_structure import (
    DiscountCurve,
    bond_price,
    bond_price_columns,
    calibrate_first_chaos,
    forward_rate,
    forward_rate_columns,
    initial_curve,
    read_curve_csv,
    short_rate_limit_check,
    write_curve_csv,
)
from conftest import flat_spec, gbm_spec, second_spec

GRID = make_grid(10.0, 100, 5.0)


@pytest.fixture(scope="module")
def batch():
    return sample_paths(GRID, 50, seed=11).batch(0, 50)


def test_flat_bond():
    assert bond_price(flat_spec(), sample_paths(GRID, 1, seed=1).path(0), 1.0, 2.0) == pytest.approx(
        0.36787944117144233, rel=1e-13)


def test_gbm_bond_every_path(batch):
    np.testing.assert_allclose(bond_price(gbm_spec(), batch, 0.0, 10.0), np.exp(-0.5), rtol=1e-14)
    np.testing.assert_allclose(bond_price(gbm_spec(), batch, 3.0, 8.5), np.exp(-0.05 * 5.5), rtol=1e-14)


@pytest.mark.parametrize("t,T", [(2.0, 2.0), (3.0, 1.0)])
def test_bond_after_maturity_is_zero(closed_spec, batch, t, T):
    assert not bond_price(closed_spec, batch, t, T).any()


def test_forward_examples(batch):
    np.testing.assert_allclose(forward_rate(flat_spec(), batch, 1.0, 4.0), 1.0, rtol=1e-13)
    assert np.all(forward_rate(gbm_spec(), batch, 2.0, 7.3) == 0.05)
    with pytest.raises(InvalidArgumentError):
        forward_rate(flat_spec(), batch, 2.0, 2.0)


def test_forward_is_log_derivative_of_bond(closed_spec, batch):
    t, T, d = 1.0, 3.0, 1e-4
    p0 = bond_price(closed_spec, batch, t, T)
    p1 = bond_price(closed_spec, batch, t, T + d)
    fd = -(np.log(p1) - np.log(p0)) / d
    f = forward_rate(closed_spec, batch, t, T)
    assert np.all(np.abs(fd - f) <= 50 * d * np.maximum(f, 1e-3))


def test_short_rate_limit_exact_families(batch):
    res = short_rate_limit_check(flat_spec(), batch, 2.0)
    assert np.all(res.abs_error <= 1e-12)
    res = short_rate_limit_check(gbm_spec(), batch, 2.0)
    assert np.all(res.abs_error <= 1e-14)
    assert np.all(res.forward == 0.05)


def test_short_rate_limit_second_chaos_is_first_order():
    # Taylor-error oracle: the same Brownian paths on refining grids
    spec = second_spec()
    path = sample_paths(make_grid(2.0, 400, 2.0), 3, seed=12).batch(0, 3)
    errs = []
    for factor in (4, 2, 1):
        b = coarsen(path, factor)
        res = short_rate_limit_check(spec, b, 1.0)
        errs.append(res.abs_error)
        # C is reported and bounds the error at this step size
        assert np.all(res.abs_error <= 2 * res.slope * b.grid.dt + 1e-12)
    ratios = errs[0] / errs[1], errs[1] / errs[2]
    for r in ratios:
        assert np.all((r > 1.8) & (r < 2.2))


def test_short_rate_mismatch_is_raised():
    class Wrong(GbmExponential):
        def forward(self, times, W, T):
            return super().forward(times, W, T) * 1.5

    with pytest.raises(ShortRateMismatchError):
        short_rate_limit_check(Wrong(0.05, 0.2), zero_path(GRID), 1.0)


def test_pull_to_par(closed_spec, batch):
    T = 4.0
    k = GRID.index(T)
    p = bond_price_columns(closed_spec, batch, k - 1, T)
    r_max = forward_rate_columns(closed_spec, batch, k - 1, T)
    assert np.all(1 - p <= 1.01 * r_max * GRID.dt)
    assert np.all(p < 1)


def test_bond_bounds_property(closed_spec, batch):
    for t, T in [(0.0, 0.1), (0.5, 9.9), (3.0, 50.0), (9.9, 10.0)]:
        p = bond_price(closed_spec, batch, t, T)
        assert np.all((p > 0) & (p < 1))


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.01, 100.0), k=st.integers(0, 60), dT=st.floats(0.01, 30.0))
def test_property_scale_invariance(c, k, dT):
    b = sample_paths(GRID, 3, seed=4).batch(0, 3)
    T = GRID.full_times[k] + dT
    for spec in (flat_spec(), gbm_spec(), second_spec()):
        np.testing.assert_array_equal(bond_price_columns(scale_spec(spec, 2.0), b, k, T),
                                      bond_price_columns(spec, b, k, T))
        np.testing.assert_allclose(bond_price_columns(scale_spec(spec, c), b, k, T),
                                   bond_price_columns(spec, b, k, T), rtol=1e-12)


@pytest.mark.parametrize("spec_fn", [gbm_spec, second_spec])
def test_deflated_bond_martingale(spec_fn):
    spec = spec_fn()
    g = make_grid(5.0, 50, 4.0)
    b = sample_paths(g, 20_000, seed=13).batch(0, 20_000)
    T = 5.0
    cols = [0, 10, 25, 40]
    pi = conditional_mass_columns(spec, b, cols + [g.index(T)])
    target = pi[:, -1]
    for j, k in enumerate(cols):
        d = pi[:, j] * bond_price_columns(spec, b, k, T) - target
        assert abs(d.mean()) <= 3 * d.std(ddof=1) / np.sqrt(d.size) + 1e-14


# -- initial curve --------------------------------------------------------------

def test_initial_curve_closed_forms():
    mats = [0.0, 0.5, 1.0, 7.0, 30.0]
    np.testing.assert_allclose(initial_curve(flat_spec(), mats).discounts, np.exp(-np.array(mats)), rtol=1e-13)
    np.testing.assert_allclose(initial_curve(gbm_spec(), mats).discounts, np.exp(-0.05 * np.array(mats)),
                               rtol=1e-14)
    c = initial_curve(flat_spec(), [1.0, 2.0])
    assert c.maturities[0] == 0.0 and c.discounts[0] == 1.0
    with pytest.raises(InvalidArgumentError):
        initial_curve(flat_spec(), [2.0, 1.0])


def test_initial_curve_second_chaos_vs_nested():
    spec = second_spec()
    g = make_grid(4.0, 20, 50.0)
    custom = as_custom(spec, n_inner=4000)
    base = zero_path(g).as_batch()
    closed = initial_curve(spec, [1.0, 2.0, 4.0]).discounts[1:]
    for T, c in zip([1.0, 2.0, 4.0], closed):
        est, se = bond_price_columns(custom, base, 0, T, with_se=True)
        assert abs(est[0] - c) <= 3 * se[0] + 2e-4  # trapezoid bias at dt = 0.2


# -- calibration ---------------------------------------------------------------

def flat_curve(rate=0.03, n=31):
    T = np.arange(float(n))
    return DiscountCurve(T, np.exp(-rate * T))


def test_calibration_round_trip():
    curve = flat_curve()
    spec = calibrate_first_chaos(curve)
    back = initial_curve(spec, curve.maturities[1:])
    assert np.max(np.abs(back.discounts - curve.discounts)) < 1e-8
    assert spec.total_mass() == pytest.approx(1.0, abs=1e-12)
    mid = np.arange(30) + 0.5
    np.testing.assert_allclose(spec.mean_sigma_sq(mid), 0.03 * np.exp(-0.03 * mid), rtol=1e-3)
    # tail continues the last forward rate
    assert spec.mean_sigma_sq(40.0) / spec.unconditional_tail(40.0) == pytest.approx(
        np.expm1(0.03), rel=1e-9)


def test_calibration_interior_flat_warns():
    curve = DiscountCurve([0, 1, 2, 3], [1.0, 0.9, 0.9, 0.8])
    with pytest.warns(UserWarning, match="flat"):
        spec = calibrate_first_chaos(curve)
    np.testing.assert_allclose(initial_curve(spec, [1, 2, 3]).discounts, curve.discounts, atol=1e-12)


def test_calibration_terminal_flat_is_degenerate():
    with pytest.raises(DegenerateSpecError):
        calibrate_first_chaos(DiscountCurve([0, 1, 2], [1.0, 0.9, 0.9]))


@pytest.mark.parametrize("mats,disc", [
    ([1, 2], [1.0, 0.9]),           # no P(0,0) = 1 row
    ([0, 1, 2], [1.0, 0.9, 0.95]),  # P(0,2) > P(0,1)
    ([0], [1.0]),                   # single row
    ([0, 1], [1.0, 0.0]),
    ([0, 1, 1], [1.0, 0.9, 0.8]),
    ([0, 1], [0.9, 0.8]),
])
def test_invalid_curves(mats, disc):
    with pytest.raises(InvalidCurveError):
        DiscountCurve(mats, disc)


def test_curve_csv_round_trip(tmp_path):
    curve = flat_curve(n=5)
    path = tmp_path / "c.csv"
    write_curve_csv(curve, path)
    text = path.read_text().splitlines()
    assert text[0] == "maturity,discount" and text[1] == "0,1"
    back = read_curve_csv(path)
    np.testing.assert_allclose(back.discounts, curve.discounts, rtol=1e-11)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,p\n0,1\n1,0.9\n")
    with pytest.raises(InvalidCurveError):
        read_curve_csv(bad)
    bad.write_text("maturity,discount\n0,1\n1,oops\n")
    with pytest.raises(InvalidCurveError):
        read_curve_csv(bad)
