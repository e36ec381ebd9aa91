import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from chaosrates.stats import RunningStats, mean_and_se, ratio_and_se


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 60), elements=st.floats(-1e3, 1e3)),
       st.integers(1, 9))
def test_running_matches_batch(values, pieces):
    rs = RunningStats()
    for part in np.array_split(values, pieces):
        rs.update(part)
    m, se = mean_and_se(values)
    assert rs.n == values.size
    np.testing.assert_allclose(rs.mean, m, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(rs.std_error, se, rtol=1e-6, atol=1e-9)


def test_constant_columns_are_exact():
    x = 0.1 + 0.2  # not exactly representable sums
    rs = RunningStats().update(np.full(33, x)).update(np.full(5, x))
    assert rs.mean == x and rs.std_error == 0.0


def test_ratio_se_against_delta_method(rng):
    den = rng.uniform(1, 2, 4000)
    num = 0.5 * den + rng.normal(0, 0.1, 4000)
    r, se = ratio_and_se(num, den)
    # independent oracle: bootstrap spread of the ratio of means
    boots = []
    for _ in range(400):
        i = rng.integers(0, 4000, 4000)
        boots.append(num[i].mean() / den[i].mean())
    assert abs(r - 0.5) < 4 * se
    assert abs(se / np.std(boots) - 1) < 0.15
