"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line that is printed in the terminal
summary (and by ``python tests/test_acceptance.py``).
"""

import filecmp
import math
import time
import warnings
from fractions import Fraction as F
from pathlib import Path

import mpmath as mp
import numpy as np
import pytest

from openrates import cli
from openrates.evl import Observable, levels_for, max_law_empirical
from openrates.hitting import (delta_epsilon, exp_error_curve, kappa_from_eigenvalue, precise_spectrum,
                               survival_exact, survival_operator, xi_epsilon)
from openrates.intervals import StepFunction
from openrates.maps import Hole, doubling, golden, tent
from openrates.rare_events import hole_point, operators_for, q_series_exact, theta_limit
from openrates.sft import SFTSpec, entropy_drop_study, topological_entropy
from openrates.transfer import invariant_density_exact, leading_triple, markov_grid_operator

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = {}

SWEEP = [F(1, 2**j) for j in range(8, 15)]


def report(k: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)
    assert ok, line


def test_criterion_1_extremal_index_at_periodic_points():
    t0 = time.perf_counter()
    parts, ok = [], True
    for center, p in ((F(0), 1), (F(1, 3), 2), (F(1, 7), 3)):
        est = theta_limit(doubling(), [center], SWEEP, N=40)
        target = 1 - 2.0**-p
        rel = abs(est.theta_extrapolated - target) / target
        ok &= rel < 0.01
        parts.append(f"x={center}: {est.theta_extrapolated:.6f} vs {target} (rel {rel:.1e})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    report(1, ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_2_kac_identity():
    q, _ = q_series_exact(doubling(), Hole.around([F(1, 3)], F(1, 2**10)), 40)
    qs = [float(x) for x in q]
    partial = sum(qs)
    r = qs[-1] / qs[-2]
    extrapolated = partial + qs[-1] * r / (1 - r)
    dev = abs(extrapolated - 1)
    report(2, partial >= 0.999 and dev < 1e-6,
           f"partial sum N=40: {partial:.6f} (need >= 0.999); tail-extrapolated deviation {dev:.2e} (need < 1e-6)")


def test_criterion_3_eigenvalue_formula_consistency():
    est = theta_limit(doubling(), [F(1, 3)], SWEEP, N=40)
    diffs = [abs(d - t) for d, t in zip(est.diagnostics, est.theta_N_eps)]
    monotone = all(b <= a * 1.05 for a, b in zip(diffs, diffs[1:]))
    final = diffs[-1]
    report(3, monotone and final < 1e-3,
           f"diffs {', '.join(f'{d:.2e}' for d in diffs)}; monotone={monotone}; final {final:.2e} (need < 1e-3)")


ORACLE_MATRIX = [
    ("doubling [1/4,5/12]", doubling(), Hole.around([F(1, 3)], F(1, 12)), "nu0"),
    ("doubling 1/10 r=1/40", doubling(), Hole.around([F(1, 10)], F(1, 40)), "nu0"),
    ("doubling 1/7 r=2^-6", doubling(), Hole.around([F(1, 7)], F(1, 2**6)), "nu0"),
    ("tent [1/3,1/2)", tent(), Hole.from_intervals([(F(1, 3), F(1, 2))]), "nu0"),
    ("golden [1/3,5/9) nu0", golden(), Hole.from_intervals([(F(1, 3), F(5, 9))]), "nu0"),
    ("golden [1/3,5/9) mu0", golden(), Hole.from_intervals([(F(1, 3), F(5, 9))]), "mu0"),
]


def _band_check(opened, f, n_max=200, n_fit=20):
    """Fit C on n <= n_fit, then test |s(n) - lam^n nu(phi)| <= C lam^n (1-gap)^n on [n_fit, n_max]."""
    curve = survival_operator(opened, f, n_max, exact=True)
    ps = precise_spectrum(opened)
    with mp.workdps(ps.dps):
        nu_phi = ps.nu_of(f)
        err = [abs(mp.mpf(v.numerator) / v.denominator - ps.lam**n * nu_phi) for n, v in enumerate(curve.exact_values)]
        floor = mp.mpf(10) ** (-(ps.dps - 20))  # working-precision floor of the eigen-solve
        if ps.second < floor:
            # nilpotent remainder: the band is zero once it has died out
            return all(e <= floor for e in err[n_fit:]), 0.0
        C = max(err[n] / ps.second**n for n in range(n_fit + 1))
        ok = all(err[n] <= C * ps.second**n + floor for n in range(n_fit, n_max + 1))
        return ok, float(C)


def test_criterion_4_oracle_equivalence():
    parts, ok = [], True
    for name, imap, hole, kind in ORACLE_MATRIX:
        _, opened = markov_grid_operator(imap, hole)
        rho = invariant_density_exact(imap)
        cells = list(zip(opened.grid.exact, opened.grid.exact[1:]))
        f = [F(1)] * opened.m if kind == "nu0" else [rho((a + b) / 2) for a, b in cells]
        op = survival_operator(opened, np.array([float(x) for x in f]), 20, kind)
        # small doubling holes leave ~2^19 disjoint surviving intervals by n = 20
        ex = survival_exact(imap, hole, 20, kind, density=rho, cap=2_000_000)
        diff = float(np.max(np.abs(op.values - ex.values)))
        band_ok, C = _band_check(opened, f)
        ok &= diff <= 1e-12 and band_ok
        parts.append(f"{name}: diff {diff:.1e}, band {'ok' if band_ok else 'VIOLATED'} (C={C:.3g})")
    report(4, ok, "; ".join(parts))


def test_criterion_5_error_bound_shape():
    t_grid = np.linspace(0.1, 5.0, 50)
    rows = []
    for j in range(8, 17):
        hole = Hole.around([F(1, 3)], F(1, 2**j))
        row = hole_point(doubling(), hole, 40)
        _, opened, phi0 = operators_for(doubling(), hole)
        trip = leading_triple(opened)
        D = row["delta"]
        xi = xi_epsilon(row["theta_N_eps"], kappa_from_eigenvalue(trip.lam, D, row["theta_N_eps"]))
        d_eps, _ = delta_epsilon(row["eta"], trip.gap)
        n_max = int(math.ceil(t_grid.max() / (xi * D))) + 1
        curve = survival_operator(opened, phi0, n_max, "mu0")
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            rep = exp_error_curve(curve, xi, D, d_eps, t_grid, row["eta"], trip.gap)
        rows.append((j, xi, d_eps, rep.C_hat))
    C = [r[3] for r in rows]
    c_factor = max(C) / min(C)
    d_drop = rows[0][2] / rows[-1][2]
    xi_err = abs(rows[-1][1] - 0.75) / 0.75
    ok = c_factor < 3 and d_drop >= 100 and xi_err < 0.02
    report(5, ok, f"eps 2^-8..2^-16: C_hat {min(C):.4f}..{max(C):.4f} (factor {c_factor:.2f} < 3); "
                  f"delta_eps drop x{d_drop:.0f} (>= 100); xi {rows[-1][1]:.6f}, rel err {xi_err:.1e} (< 2%)")


def test_criterion_6_extreme_value_law():
    t0 = time.perf_counter()
    parts, ok = [], True
    leb = StepFunction.constant(F(1))
    for center, theta in ((F(1, 3), 0.75), (F(1, 10), 1.0)):
        obs = Observable(center)
        levels = levels_for(1, [2**14], obs, leb)
        (row,) = max_law_empirical(doubling(), obs, levels, 10**6, 20240611, theta)
        z = (row.empirical - row.predicted) / row.stderr
        ok &= abs(z) <= 3
        parts.append(f"x={center}: {row.empirical:.6f} vs {row.predicted:.6f} ({z:+.2f} sigma)")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    report(6, ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_7_sft_entropy():
    t0 = time.perf_counter()
    h = topological_entropy(SFTSpec(2, ("11",)))
    g_err = abs(h - math.log((1 + math.sqrt(5)) / 2))
    reps = entropy_drop_study(SFTSpec.full(2), ["1" * L for L in range(2, 13)], theta=0.5)
    dist = [abs(r.ratio - 1) for r in reps]
    monotone = all(b < a for a, b in zip(dist, dist[1:]))
    elapsed = time.perf_counter() - t0
    ok = g_err < 1e-10 and monotone and dist[-1] < 0.05 and elapsed < 60
    report(7, ok, f"golden error {g_err:.1e}; ratios {', '.join(f'{r.ratio:.4f}' for r in reps)}; "
                  f"monotone={monotone}; L=12 off by {dist[-1]:.2%}; {elapsed:.1f}s")


def _tree_identical(a: Path, b: Path) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(_tree_identical(a / d, b / d) for d in cmp.common_dirs)


def test_criterion_8_selftest_determinism(tmp_path):
    codes = [cli.main(["selftest", "--out", str(tmp_path / name)]) for name in ("run1", "run2")]
    csvs = sorted(p.relative_to(tmp_path / "run1") for p in (tmp_path / "run1").rglob("*.csv"))
    same = _tree_identical(tmp_path / "run1", tmp_path / "run2")
    report(8, codes == [0, 0] and same and len(csvs) > 5,
           f"exit codes {codes}; {len(csvs)} CSV files; byte-identical={same}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
