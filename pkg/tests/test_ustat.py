from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bjel.errors import InvalidInput, SampleTooSmall
from bjel.ustat import Kernel, builtin_kernels, get_kernel, jackknife_pseudovalues, u_statistic

VAR = get_kernel("variance")
PWM = get_kernel("pwm")
MEAN = get_kernel("mean")


def brute_u(y, k):
    vals = [float(k(*[y[i] for i in c])) for c in combinations(range(len(y)), k.order)]
    return sum(vals) / len(vals)


def test_u_statistic_small_cases():
    assert u_statistic([0.0, 2.0], VAR) == 2.0
    assert u_statistic([1.0, 3.0], PWM) == 1.5
    # pairs (0,1),(0,2),(1,2): (0.5 + 2 + 0.5) / 3
    assert u_statistic([0.0, 1.0, 2.0], VAR) == pytest.approx(1.0, abs=1e-15)


def test_pseudovalues_small_cases():
    pv = jackknife_pseudovalues([0.0, 1.0, 2.0], VAR)
    np.testing.assert_allclose(pv.values, [2.0, -1.0, 2.0], atol=1e-14)
    assert pv.u_stat == pytest.approx(1.0)
    assert pv.n == 3

    pv = jackknife_pseudovalues(np.full(7, 3.3), VAR)
    np.testing.assert_allclose(pv.values, 0.0, atol=1e-12)

    pv = jackknife_pseudovalues([1.0, 3.0], MEAN)
    np.testing.assert_array_equal(pv.values, [1.0, 3.0])


def test_builtin_lookup():
    names = {k.name: k.order for k in builtin_kernels()}
    assert names == {"mean": 1, "variance": 2, "pwm": 2}
    assert get_kernel("pwm").order == 2
    with pytest.raises(InvalidInput):
        get_kernel("median")


def test_errors():
    with pytest.raises(SampleTooSmall):
        u_statistic([1.0], VAR)
    with pytest.raises(SampleTooSmall):
        jackknife_pseudovalues([1.0, 2.0], VAR)
    with pytest.raises(InvalidInput):
        u_statistic([1.0, np.nan, 2.0], VAR)
    with pytest.raises(InvalidInput):
        Kernel("bad", 0, lambda: 0)
    blowup = Kernel("blowup", 2, lambda a, b: np.log(np.abs(a - b)))
    with pytest.raises(InvalidInput):
        u_statistic([1.0, 1.0, 2.0], blowup)


def test_variance_kernel_matches_textbook(rng):
    for n in (2, 5, 40, 700):
        y = rng.normal(3.0, 2.0, n)
        assert u_statistic(y, VAR) == pytest.approx(np.var(y, ddof=1), rel=1e-12)


def test_order_three_against_enumeration(rng):
    k3 = Kernel("range3", 3, lambda a, b, c: np.maximum(np.maximum(a, b), c) - np.minimum(np.minimum(a, b), c))
    y = rng.normal(size=9)
    assert u_statistic(y, k3) == pytest.approx(brute_u(y, k3), rel=1e-13)
    pv = jackknife_pseudovalues(y, k3)
    loo = [brute_u(np.delete(y, i), k3) for i in range(y.size)]
    expected = y.size * brute_u(y, k3) - (y.size - 1) * np.array(loo)
    np.testing.assert_allclose(pv.values, expected, rtol=1e-12, atol=1e-12)


samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=30)


@settings(max_examples=120, deadline=None)
@given(y=samples, name=st.sampled_from(["mean", "variance", "pwm"]))
def test_pseudovalue_mean_identity(y, name):
    k = get_kernel(name)
    pv = jackknife_pseudovalues(y, k)
    assert abs(pv.values.mean() - pv.u_stat) <= 1e-10 * max(1.0, abs(pv.u_stat))
    assert pv.u_stat == pytest.approx(u_statistic(y, k), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(y=st.lists(st.floats(-50, 50, allow_nan=False), min_size=4, max_size=25),
       name=st.sampled_from(["variance", "pwm"]))
def test_fast_path_matches_naive(y, name):
    k = get_kernel(name)
    fast = jackknife_pseudovalues(y, k).values
    slow = jackknife_pseudovalues(y, k, method="naive").values
    np.testing.assert_allclose(fast, slow, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(slow).max()))


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-1e6, 1e6), b=st.floats(-1e6, 1e6))
def test_pair_kernels_symmetric(a, b):
    for k in (VAR, PWM):
        assert k(a, b) == k(b, a)
