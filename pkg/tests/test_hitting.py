import math
import warnings
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from openrates.hitting import (SurvivalCurve, delta_epsilon, exp_error_curve, fit_band_constant,
                               kappa_from_eigenvalue, nu_eps_of, precise_spectrum, survival_exact,
                               survival_montecarlo, survival_operator, survival_spectral, xi_epsilon)
from openrates.maps import Hole, doubling, golden, tent
from openrates.rare_events import sweep_point
from openrates.transfer import (UlamGrid, assemble_markov_exact, assemble_ulam, density_on_grid,
                                invariant_density_exact, leading_triple, markov_grid_operator)

HALF = Hole.from_intervals([(0, F(1, 2))])


def test_exact_survival_half_hole():
    c = survival_exact(doubling(), HALF, 20)
    assert list(c.exact_values) == [F(1, 2**n) for n in range(21)]
    assert c.truncated_at is None


@pytest.mark.parametrize("imap", [doubling(), tent(), golden()])
def test_empty_hole_survives(imap):
    for kind in ("nu0", "mu0"):
        c = survival_exact(imap, Hole.empty(), 6, kind)
        assert list(c.values) == [1.0] * 7


def test_exact_survival_cap_truncates():
    hole = Hole.around([F(1, 3)], F(1, 2**10))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = survival_exact(doubling(), hole, 40, cap=200)
    assert c.truncated_at is not None and c.n_max == c.truncated_at - 1


def test_operator_survival_examples():
    closed, opened = markov_grid_operator(doubling(), HALF)
    c = survival_operator(opened, np.ones(opened.m), 30)
    np.testing.assert_allclose(c.values, [2.0**-n for n in range(31)], rtol=1e-12)
    c_exact = survival_operator(opened, [1] * opened.m, 30, exact=True)
    assert list(c_exact.exact_values) == [F(1, 2**n) for n in range(31)]
    assert c.values[0] == 1
    np.testing.assert_allclose(survival_operator(closed, np.ones(closed.m), 10).values, 1, rtol=1e-14)
    with pytest.raises(ValueError):
        survival_operator(assemble_ulam(doubling(), UlamGrid.uniform(8)), np.ones(8), 3, exact=True)


@pytest.mark.parametrize("imap,hole", [
    (doubling(), Hole.around([F(1, 3)], F(1, 12))),
    (doubling(), Hole.around([F(1, 7)], F(1, 2**6))),
    (tent(), Hole.from_intervals([(F(1, 3), F(1, 2))])),
    (golden(), Hole.from_intervals([(F(1, 3), F(5, 9))])),
])
@pytest.mark.parametrize("kind", ["nu0", "mu0"])
def test_operator_matches_pullback(imap, hole, kind):
    closed, opened = markov_grid_operator(imap, hole)
    rho = invariant_density_exact(imap)
    f = [F(1)] * opened.m if kind == "nu0" else [rho((a + b) / 2) for a, b in zip(opened.grid.exact,
                                                                                  opened.grid.exact[1:])]
    op = survival_operator(opened, f, 15, kind, exact=True)
    ex = survival_exact(imap, hole, 15, kind, density=rho)
    assert op.exact_values == ex.exact_values


holes = st.tuples(st.integers(0, 31), st.integers(1, 8)).map(
    lambda p: Hole.from_intervals([(F(p[0], 32), F(min(p[0] + p[1], 32), 32))]))


@given(st.sampled_from([doubling(), tent(), golden()]), holes)
def test_survival_curve_invariants(imap, hole):
    c = survival_exact(imap, hole, 10)
    v = c.exact_values
    assert v[0] == 1
    assert all(0 <= b <= a <= 1 for a, b in zip(v, v[1:]))


def test_hazard_ratio_tends_to_lambda():
    hole = Hole.around([F(1, 3)], F(1, 12))
    _, opened = markov_grid_operator(doubling(), hole)
    c = survival_operator(opened, np.ones(opened.m), 120)
    lam = leading_triple(opened).lam
    ratios = c.values[1:] / c.values[:-1]
    assert abs(ratios[-1] - lam) < 1e-12
    assert abs(ratios[60] - lam) < abs(ratios[5] - lam)


def test_spectral_estimate_at_zero_is_close_to_one():
    row = sweep_point(doubling(), [F(1, 3)], F(1, 2**10), 40)
    _, opened = markov_grid_operator(doubling(), Hole.around([F(1, 3)], F(1, 2**10)))
    t = leading_triple(opened)
    nu_phi = nu_eps_of(t, np.ones(opened.m))
    assert abs(nu_phi - 1) < 5 * row["eta"]
    est, band = survival_spectral(t, nu_phi, 0)
    assert est == nu_phi and band == 1.0


def test_band_shrinks_relative_to_estimate():
    _, opened = markov_grid_operator(doubling(), Hole.around([F(1, 3)], F(1, 2**8)))
    t = leading_triple(opened)
    n = np.arange(0, 200, 20)
    est, band = survival_spectral(t, 1.0, n)
    ratio = band / est
    np.testing.assert_allclose(ratio[1:] / ratio[:-1], (1 - t.gap) ** 20, rtol=1e-9)


def test_spectral_band_holds_to_n_200_in_high_precision():
    hole = Hole.around([F(1, 3)], F(1, 2**10))
    _, opened = markov_grid_operator(doubling(), hole)
    curve = survival_operator(opened, [1] * opened.m, 200, exact=True)
    ps = precise_spectrum(opened)
    nu_phi = ps.nu_of([1] * opened.m)
    import mpmath as mp
    with mp.workdps(ps.dps):
        err = [abs(mp.mpf(v.numerator) / v.denominator - ps.lam**n * nu_phi) for n, v in enumerate(curve.exact_values)]
        C_fit = max(err[n] / ps.second**n for n in range(21))
        assert all(err[n] <= C_fit * ps.second**n for n in range(20, 201))
    # the float triple agrees with the precise one
    t = leading_triple(opened)
    assert t.lam == pytest.approx(float(ps.lam), abs=1e-14)
    assert t.gap == pytest.approx(float(ps.gap), abs=1e-6)


def test_fit_band_constant():
    vals = [0.5**n + 0.1 * 0.25**n for n in range(10)]
    assert fit_band_constant(vals, 0.5, 1.0, 0.5, range(10)) == pytest.approx(0.1)


def test_xi_examples():
    # no returns: theta_N = 1 and the correction is small
    xs = []
    for j in (8, 12, 16):
        row = sweep_point(doubling(), [F(1, 10)], F(1, 2**j), 40)
        kappa = kappa_from_eigenvalue(row["lambda"], row["delta"], row["theta_N_eps"])
        xs.append(xi_epsilon(row["theta_N_eps"], kappa))
    assert xs[0] > xs[1] > xs[2] and abs(xs[2] - 1) < 1e-3
    for center, theta in ((F(1, 3), 0.75), (F(0), 0.5)):
        xs = []
        for j in (8, 11, 14):
            r = sweep_point(doubling(), [center], F(1, 2**j), 40)
            xs.append(xi_epsilon(r["theta_N_eps"], kappa_from_eigenvalue(r["lambda"], r["delta"], r["theta_N_eps"])))
        assert abs(xs[-1] - theta) < abs(xs[0] - theta) and abs(xs[-1] - theta) < 1e-3


@given(st.floats(1e-9, 0.5), st.floats(0.01, 0.99))
def test_delta_epsilon_is_the_minimum(eta, gap):
    delta, N = delta_epsilon(eta, gap)
    r = 1 - gap
    brute = min(n * eta + r**n / gap for n in range(1, 20000))
    assert delta == pytest.approx(brute, rel=1e-12)
    assert delta == pytest.approx(N * eta + r**N / gap, rel=1e-12)


def test_delta_epsilon_edge_cases():
    assert delta_epsilon(0.0, 0.5)[0] == 0
    assert delta_epsilon(0.1, 1.0) == (0.1, 1)
    with pytest.raises(ValueError):
        delta_epsilon(0.1, 0)


def _fake_curve(lam, n_max):
    return SurvivalCurve("mu0", np.array([lam**n for n in range(n_max + 1)]))


def test_error_curve_small_t_and_horizon():
    delta_mass = 2**-10
    lam = math.exp(-delta_mass)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = exp_error_curve(_fake_curve(lam, 3000), 1.0, delta_mass, 0.01, [1e-4, 1e-3, 1.0, 2.0, 5.0])
    assert rep.omitted == (5.0,)
    assert any("omitted" in str(w.message) for w in caught)
    t0, n0, err0, _ = rep.error_curve[0]
    assert n0 == 0 and err0 == pytest.approx(1 - math.exp(-1e-4))
    assert all(err < 2e-3 for _, _, err, _ in rep.error_curve)
    with pytest.raises(ValueError):
        exp_error_curve(_fake_curve(lam, 10), -0.1, delta_mass, 0.01, [1.0])


def test_montecarlo_examples():
    c = survival_montecarlo(doubling(), Hole.empty(), 10, 1000, 3)
    assert (c.values == 1).all()
    c = survival_montecarlo(doubling(), HALF, 8, 10**6, 2024)
    assert abs(c.values[5] - 1 / 32) <= 3 * c.stderr[5]
    again = survival_montecarlo(doubling(), HALF, 8, 10**6, 2024)
    np.testing.assert_array_equal(c.values, again.values)
    with pytest.raises(ValueError):
        survival_montecarlo(doubling(), HALF, 8, 10, 1, measure_kind="lebesgue")


@pytest.mark.parametrize("imap,hole,kind", [
    (doubling(), Hole.around([F(1, 3)], F(1, 12)), "nu0"),
    (golden(), Hole.from_intervals([(F(1, 3), F(5, 9))]), "mu0"),
    (golden(), Hole.from_intervals([(F(1, 3), F(5, 9))]), "nu0"),
    (tent(), Hole.from_intervals([(F(1, 3), F(1, 2))]), "nu0"),
])
def test_montecarlo_within_band_of_exact(imap, hole, kind):
    exact = survival_exact(imap, hole, 12, kind)
    mc = survival_montecarlo(imap, hole, 12, 200_000, 99, kind)
    z = np.abs(mc.values - exact.values)[1:] / np.maximum(mc.stderr[1:], 1e-12)
    assert z.max() < 4.5


def test_mu0_sampling_matches_density():
    rho = invariant_density_exact(golden())
    grid = UlamGrid.from_points([F(1, 3)])
    assert density_on_grid(rho, grid) == pytest.approx([0.75, 1.125])
    hole = Hole.from_intervals([(0, F(1, 3))])
    mc = survival_montecarlo(golden(), hole, 1, 200_000, 4, "mu0")
    assert abs(mc.values[1] - 0.75) < 4 * mc.stderr[1]


def test_closed_markov_operator_is_stochastic_for_tent():
    tm = assemble_markov_exact(tent())
    c = survival_operator(tm, np.ones(tm.m), 5)
    np.testing.assert_allclose(c.values, 1)
