from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from openrates.maps import Hole, doubling, golden, tent, times_d
from openrates.montecarlo import digit_orbit, first_hits, survival_from_hits, window_digits


def test_window_digits():
    assert window_digits(2) == 62
    assert 3 ** window_digits(3) < 2**63 <= 3 ** (window_digits(3) + 1)


def _tau_from_orbit(orbit, hole, d, K, n_max):
    # the engine counts a visit only when the whole K-digit cell lies inside the hole
    cell = F(1, d**K)
    for j, w in enumerate(orbit[:n_max]):
        if any(lo <= w and w + cell <= hi for lo, hi in hole.intervals):
            return j
    return n_max


@pytest.mark.parametrize("imap,d", [(doubling(), 2), (times_d(3), 3)])
@given(seed=st.integers(0, 2**64 - 1), index=st.integers(0, 10**6))
def test_kernel_matches_pure_python_stream(imap, d, seed, index):
    hole = Hole.around([F(1, 3)], F(1, 16))
    n_max = 90
    orbit = digit_orbit(imap, n_max, seed, index)
    expect = _tau_from_orbit(orbit, hole, d, window_digits(d), n_max)
    got = first_hits(imap, hole, n_max, 1, seed, start=index)
    assert int(got[0]) == expect


def test_digit_orbit_is_an_orbit_of_the_shift():
    orb = digit_orbit(doubling(), 100, 7, 3)
    K = window_digits(2)
    for x, y in zip(orb, orb[1:]):
        # windows slide by one digit: y agrees with 2x mod 1 up to the new last digit
        assert y - (2 * x) % 1 in (0, F(1, 2**K))


def test_chunking_and_seeds():
    hole = Hole.around([F(1, 3)], F(1, 64))
    a = first_hits(doubling(), hole, 500, 5000, 11, chunk=5000)
    b = first_hits(doubling(), hole, 500, 5000, 11, chunk=333)
    np.testing.assert_array_equal(a, b)
    tail = first_hits(doubling(), hole, 500, 1000, 11, start=4000)
    np.testing.assert_array_equal(a[4000:], tail)
    c = first_hits(doubling(), hole, 500, 5000, 12)
    assert not np.array_equal(a, c)


def test_adjacent_samples_are_uncorrelated():
    hole = Hole.around([F(1, 3)], F(1, 64))
    tau = first_hits(doubling(), hole, 2000, 40000, 5).astype(float)
    r = np.corrcoef(tau[:-1], tau[1:])[0, 1]
    assert abs(r) < 4 / np.sqrt(len(tau))


def test_engine_errors():
    with pytest.raises(ValueError):
        first_hits(tent(), Hole.empty(), 5, 10, 1, engine="digits")
    with pytest.raises(ValueError):
        first_hits(doubling(), Hole.empty(), 5, 10, 1, engine="magic")
    with pytest.raises(ValueError):
        first_hits(doubling(), Hole.empty(), 5, 0, 1)


def test_float_engine_respects_start_density():
    # starts drawn from a density supported on [1/3, 1) never begin in [0, 1/3)
    hole = Hole.from_intervals([(0, F(1, 3))])
    tau = first_hits(golden(), hole, 3, 20000, 2, density=([0, 1 / 3, 1], [0.0, 1.5]))
    assert (tau >= 1).all()


@given(st.lists(st.integers(0, 12), min_size=1, max_size=50), st.integers(1, 12))
def test_survival_from_hits_counts(tau, n_max):
    tau = np.array(tau)
    s = survival_from_hits(tau, n_max)
    for n in range(n_max + 1):
        assert s[n] == pytest.approx(np.mean(np.minimum(tau, n_max) >= n))
