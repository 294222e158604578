"""Command-line front end: JSON configs in, CSV/JSON artifacts out.

Exit codes: 0 success, 2 config error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import evl, hitting, rare_events, sft
from .intervals import as_fraction
from .maps import Hole, MapError, doubling, map_from_dict, pi_set, theta_analytic
from .output import read_csv, write_csv, write_json
from .transfer import ConvergenceError, UlamGrid, invariant_density_exact, leading_triple

log = logging.getLogger("openrates")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


# --- config parsing ---------------------------------------------------------------------

def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def number(x, what: str) -> Fraction:
    if isinstance(x, bool):
        raise ConfigError(f"{what}: expected a number, got {x!r}")
    try:
        if isinstance(x, str) and "^" in x:
            base, exp = x.split("^")
            return Fraction(int(base)) ** int(exp)
        return as_fraction(x)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ConfigError(f"{what}: cannot parse {x!r} as a number") from None


def positive_int(cfg: dict, key: str, default=None) -> int:
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"missing required field {key!r}")
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{key} must be a positive integer, got {v!r}")
    return v


def eps_list(cfg: dict) -> list:
    raw = cfg.get("eps")
    if raw is None:
        raise ConfigError("missing required field 'eps'")
    if isinstance(raw, dict) and "powers_of_two" in raw:
        a, b = raw["powers_of_two"]
        eps = [Fraction(1, 2 ** k) for k in range(int(a), int(b) + 1)]
    elif isinstance(raw, list):
        eps = [number(e, "eps") for e in raw]
    else:
        raise ConfigError("eps must be a list or {'powers_of_two': [a, b]}")
    if not eps:
        raise ConfigError("eps list is empty")
    if any(e <= 0 for e in eps):
        raise ConfigError("eps values must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps list must be strictly decreasing")
    return eps


def n_list(cfg: dict) -> list:
    raw = cfg.get("n_list")
    if isinstance(raw, dict) and "powers_of_two" in raw:
        a, b = raw["powers_of_two"]
        return [2 ** k for k in range(int(a), int(b) + 1)]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("n_list must be a non-empty list or {'powers_of_two': [a, b]}")
    if any(not isinstance(n, int) or n < 1 for n in raw):
        raise ConfigError("n_list entries must be positive integers")
    return raw


def build_map(cfg: dict):
    try:
        return map_from_dict(cfg.get("map", {"preset": "doubling"}))
    except (MapError, TypeError, ValueError) as exc:
        raise ConfigError(f"map: {exc}") from None


def centers_of(cfg: dict) -> list:
    raw = cfg.get("centers")
    if raw is None and "center" in cfg:
        raw = [cfg["center"]]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("centers must be a non-empty list")
    out = [number(c, "centers") for c in raw]
    if any(not 0 <= c <= 1 for c in out):
        raise ConfigError("centers must lie in [0, 1]")
    return out


def grid_of(cfg: dict):
    m = cfg.get("grid")
    if m is None:
        return None
    if not isinstance(m, int) or m < 2:
        raise ConfigError("grid must be an integer bin count >= 2")
    return UlamGrid.uniform(m)


def seed_of(cfg: dict, needed: bool) -> int | None:
    seed = cfg.get("seed")
    if seed is None:
        if needed:
            raise ConfigError("a seed is mandatory when Monte Carlo sampling is enabled")
        return None
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def analytic_theta(imap, centers):
    try:
        rho = invariant_density_exact(imap)
        return theta_analytic(pi_set(imap, centers), rho)
    except Exception as exc:  # analytic value is optional in reports
        log.info("no analytic theta: %s", exc)
        return float("nan")


# --- subcommands ----------------------------------------------------------------------

def run_escape_rate(cfg: dict, out: Path, jobs: int = 1, kind: str = "escape_rate") -> dict:
    imap = build_map(cfg)
    centers = centers_of(cfg)
    eps = eps_list(cfg)
    N = positive_int(cfg, "N", 40)
    grid = grid_of(cfg)
    if len(eps) < 3:
        raise ConfigError("need at least three eps values for extrapolation")
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(rare_events.sweep_point, *zip(*[(imap, tuple(centers), e, N, grid) for e in eps])))
    else:
        rows = [rare_events.sweep_point(imap, centers, e, N, grid) for e in eps]
    good = [r for r in rows if r["delta"] > 0]
    summary = {"theta_analytic": analytic_theta(imap, centers), "N": N}
    if len(good) >= 2:
        e = [r["epsilon"] for r in good]
        th, p, res = rare_events.richardson(e, [r["theta_N_eps"] for r in good])
        dh, _, _ = rare_events.richardson(e, [r["diag"] for r in good])
        summary.update(theta_extrapolated=th, diag_extrapolated=dh, order=p, fit_residual=res)
    if kind == "escape_rate":
        header = ["epsilon", "delta", "lambda", "escape_rate", "diag", "theta_N_eps",
                  "kac_partial_sum", "gap", "cells", "flag"]
        table = [[r["epsilon"], r["delta"], r["lambda"],
                  -math.log(r["lambda"]) if r["lambda"] > 0 else float("inf"), r["diag"],
                  r["theta_N_eps"], r["kac_partial_sum"], r["gap"], r["cells"], r["flag"]] for r in rows]
    else:
        header = ["epsilon", "theta_N_eps", "diag", "abs_diff", "N_rule", "eta", "gap", "flag"]
        table = [[r["epsilon"], r["theta_N_eps"], r["diag"], abs(r["diag"] - r["theta_N_eps"]),
                  rare_events.select_N(r["eta"], r["gap"]) if r["delta"] > 0 else 0,
                  r["eta"], r["gap"], r["flag"]] for r in rows]
    write_csv(out / f"{kind}.csv", header, table, cfg)
    write_json(out / f"{kind}_summary.json", summary, cfg)
    return summary


def run_extremal_index(cfg: dict, out: Path, jobs: int = 1) -> dict:
    return run_escape_rate(cfg, out, jobs, kind="extremal_index")


def _t_grid(cfg: dict) -> np.ndarray:
    tg = cfg.get("t_grid", {"min": 0.1, "max": 5.0, "count": 50})
    if isinstance(tg, list):
        ts = np.array(tg, dtype=float)
    else:
        ts = np.linspace(float(tg["min"]), float(tg["max"]), int(tg["count"]))
    if (ts <= 0).any():
        raise ConfigError("t values must be positive")
    return ts


def _holes(cfg: dict) -> list:
    if "hole" in cfg:
        try:
            return [Hole.from_intervals([(number(a, "hole"), number(b, "hole")) for a, b in cfg["hole"]])]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"hole: {exc}") from None
    centers = centers_of(cfg)
    return [Hole.around(centers, e) for e in eps_list(cfg)]


def run_hitting(cfg: dict, out: Path, jobs: int = 1) -> dict:
    imap = build_map(cfg)
    holes = _holes(cfg)
    N = positive_int(cfg, "N", 40)
    ts = _t_grid(cfg)
    mc = cfg.get("montecarlo") or {}
    samples = mc.get("samples", 0)
    if not isinstance(samples, int) or samples < 0:
        raise ConfigError("montecarlo.samples must be a non-negative integer")
    seed = seed_of(cfg, samples > 0)
    exact_n = cfg.get("exact_n", 12)
    n_fit = positive_int(cfg, "band_fit_n", 20)
    n_cap = positive_int(cfg, "n_max_cap", 2_000_000)
    reports = []
    for idx, hole in enumerate(holes):
        row = rare_events.hole_point(imap, hole, N, grid_of(cfg))
        if row["delta"] <= 0:
            reports.append({"epsilon": row["epsilon"], "flag": row["flag"]})
            continue
        closed, opened, phi0 = rare_events.operators_for(imap, hole, grid_of(cfg))
        triple = leading_triple(opened)
        D = row["delta"]
        kappa = hitting.kappa_from_eigenvalue(triple.lam, D, row["theta_N_eps"])
        xi = hitting.xi_epsilon(row["theta_N_eps"], kappa)
        d_eps, N_star = hitting.delta_epsilon(row["eta"], triple.gap) if 0 < triple.gap <= 1 else (float("nan"), 0)
        n_max = cfg.get("n_max") or min(n_cap, int(math.ceil(float(ts.max()) / (xi * D))) + 1)
        s_nu = hitting.survival_operator(opened, np.ones(opened.m), n_max, "nu0")
        s_mu = hitting.survival_operator(opened, phi0, n_max, "mu0")
        nu_phi = hitting.nu_eps_of(triple, phi0)
        C = hitting.fit_band_constant(s_mu.values, triple.lam, nu_phi, triple.gap, range(min(n_fit, n_max) + 1))
        n = np.arange(n_max + 1)
        est, band = hitting.survival_spectral(triple, nu_phi, n, C)
        cols = [n, s_nu.values, s_mu.values, est, band]
        header = ["n", "s_nu0", "s_mu0", "spectral_estimate", "band"]
        if exact_n and imap.is_affine and hole.is_exact():
            ex = hitting.survival_exact(imap, hole, min(exact_n, n_max), "nu0")
            col = np.full(n_max + 1, np.nan)
            col[:len(ex.values)] = ex.values
            cols.append(col)
            header.append("s_exact_nu0")
        if samples:
            sm = hitting.survival_montecarlo(imap, hole, n_max, samples, (seed + idx) % 2**64, "nu0")
            cols += [sm.values, sm.stderr]
            header += ["s_mc_nu0", "mc_stderr"]
        tag = f"{idx:02d}"
        write_csv(out / f"hitting_curve_{tag}.csv", header, zip(*cols), cfg)
        rep = None
        if math.isfinite(d_eps) and xi > 0:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rep = hitting.exp_error_curve(s_mu, xi, D, d_eps, ts, row["eta"], triple.gap)
        reports.append({
            "epsilon": row["epsilon"], "hole": [[a, b] for a, b in hole.intervals], "lambda": triple.lam,
            "gap": triple.gap, "hole_mass": D, "theta_N_eps": row["theta_N_eps"], "kappa": kappa,
            "xi_eps": xi, "delta_eps": d_eps, "N_star": N_star, "band_constant": C,
            "C_hat": rep.C_hat if rep else float("nan"),
            "error_curve": [{"t": t, "n": k, "error": e, "bound": b, "small_n": s}
                            for (t, k, e, b), s in zip(rep.error_curve, rep.small_n)] if rep else [],
            "omitted_t": list(rep.omitted) if rep else [],
            "curve_file": f"hitting_curve_{tag}.csv"})
    summary = {"reports": reports}
    write_csv(out / "hitting_scaling.csv", ["epsilon", "hole_mass", "lambda", "xi_eps", "delta_eps", "C_hat"],
              [[r["epsilon"], r.get("hole_mass", 0.0), r.get("lambda", float("nan")), r.get("xi_eps", float("nan")),
                r.get("delta_eps", float("nan")), r.get("C_hat", float("nan"))] for r in reports], cfg)
    write_json(out / "hitting_summary.json", summary, cfg)
    return summary


def run_evl(cfg: dict, out: Path, jobs: int = 1) -> dict:
    imap = build_map(cfg)
    center = centers_of(cfg)[0]
    t = float(number(cfg.get("t", 1), "t"))
    if t <= 0:
        raise ConfigError("t must be positive")
    ns = n_list(cfg)
    samples = positive_int(cfg, "samples")
    seed = seed_of(cfg, True)
    theta = cfg.get("theta")
    theta = float(number(theta, "theta")) if theta is not None else analytic_theta(imap, [center])
    rho = invariant_density_exact(imap)
    obs = evl.Observable(center)
    try:
        levels = evl.levels_for(t, ns, obs, rho)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    measure = cfg.get("measure", "nu0")
    if measure not in ("nu0", "mu0"):
        raise ConfigError("measure must be nu0 or mu0")
    rows = evl.max_law_empirical(imap, obs, levels, samples, seed,
                                 theta if math.isfinite(theta) else None, measure, rho)
    write_csv(out / "evl.csv", ["n", "z_n", "empirical", "predicted", "stderr"],
              [[r.n, r.z, r.empirical, r.predicted, r.stderr] for r in rows], cfg)
    last = rows[-1]
    th, se = evl.theta_from_law(last.empirical, last.stderr, t)
    summary = {"theta_hat": th, "theta_ci95": [th - 1.96 * se, th + 1.96 * se], "theta_predicted": theta,
               "final_empirical": last.empirical, "final_predicted": last.predicted}
    write_json(out / "evl_summary.json", summary, cfg)
    return summary


def run_sft(cfg: dict, out: Path, jobs: int = 1) -> dict:
    try:
        base = sft.SFTSpec.from_dict(cfg.get("sft", {"alphabet": 2}))
    except (sft.SFTError, TypeError, ValueError) as exc:
        raise ConfigError(f"sft: {exc}") from None
    if "blocks" in cfg:
        blocks = list(cfg["blocks"])
    elif "family" in cfg:
        fam = cfg["family"]
        blocks = [str(fam.get("symbol", "1")) * L for L in range(int(fam["L_min"]), int(fam["L_max"]) + 1)]
    else:
        raise ConfigError("sft-entropy needs 'blocks' or 'family'")
    if not blocks:
        raise ConfigError("block list is empty")
    theta = cfg.get("theta")
    theta = float(number(theta, "theta")) if theta is not None else None
    try:
        reps = sft.entropy_drop_study(base, blocks, theta, jobs)
    except sft.NotPrimitiveError as exc:
        raise ConfigError(str(exc)) from None
    except sft.SFTError as exc:
        raise ConfigError(str(exc)) from None
    write_csv(out / "sft_entropy.csv",
              ["L", "block", "h_closed", "h_open", "drop", "prediction", "ratio", "mu_block", "theta_block"],
              [[r.length, r.block, r.h_closed, r.h_open, r.drop, r.predicted_drop, r.ratio, r.mu_block,
                r.theta_block] for r in reps], cfg)
    summary = {"h_closed": reps[0].h_closed, "ratios": [r.ratio for r in reps]}
    write_json(out / "sft_summary.json", summary, cfg)
    return summary


# pinned reduced-scale configs for ``selftest``
SELFTEST = {
    "extremal-index": [
        {"map": {"preset": "doubling"}, "centers": [c], "eps": {"powers_of_two": [6, 10]}, "N": 40}
        for c in (0, "1/3", "1/7")],
    "hitting": {"map": {"preset": "doubling"}, "centers": ["1/3"], "eps": {"powers_of_two": [6, 10]},
                "t_grid": {"min": 0.1, "max": 5.0, "count": 25}, "exact_n": 10,
                "montecarlo": {"samples": 2000}, "seed": 20240611},
    "hitting-oracle": {"map": {"preset": "doubling"}, "hole": [["1/4", "5/12"]],
                       "t_grid": {"min": 0.1, "max": 2.0, "count": 5}, "exact_n": 14, "n_max": 40},
    "evl": [{"map": {"preset": "doubling"}, "center": c, "t": 1, "n_list": {"powers_of_two": [6, 9]},
             "samples": 4000, "seed": 7, "theta": th} for c, th in (("1/3", 0.75), (0.1, 1.0))],
    "sft-entropy": {"sft": {"alphabet": 2}, "family": {"symbol": "1", "L_min": 2, "L_max": 8}, "theta": 0.5},
    "golden": {"sft": {"alphabet": 2, "forbidden_blocks": ["11"]}},
    "kac": {"center": "1/3", "eps": "1/256", "N": 40},
}


def run_selftest(cfg: dict, out: Path, jobs: int = 1) -> dict:
    """Reduced-scale rerun of every acceptance check from pinned configs.

    Writes one directory per check plus ``selftest.csv`` (check, quantity,
    value). Repeated runs produce byte-identical files.
    """
    cfg = SELFTEST if not cfg else cfg
    lines = []
    for k, c in enumerate(cfg["extremal-index"]):
        s = run_extremal_index(c, out / f"extremal_index_{k}", jobs)
        lines.append(["1", f"theta_hat_center_{c['centers'][0]}", s["theta_extrapolated"]])
        lines.append(["1", f"theta_analytic_center_{c['centers'][0]}", s["theta_analytic"]])
    kc = cfg["kac"]
    hole = Hole.around([number(kc["center"], "center")], number(kc["eps"], "eps"))
    q, _ = rare_events.q_series_exact(doubling(), hole, kc["N"])
    qs = [float(x) for x in q]
    lines.append(["2", "kac_partial_sum", sum(qs)])
    r = qs[-1] / qs[-2] if qs[-2] else 0.0
    lines.append(["2", "kac_tail_extrapolated", sum(qs) + (qs[-1] * r / (1 - r) if r < 1 else float("inf"))])
    for k, c in enumerate(cfg["extremal-index"]):
        _, head, rows = read_csv(out / f"extremal_index_{k}" / "extremal_index.csv")
        j = head.index("abs_diff")
        lines.append(["3", f"final_abs_diff_center_{c['centers'][0]}", float(rows[-1][j])])
    s = run_hitting(cfg["hitting-oracle"], out / "hitting_oracle", jobs)
    _, head, rows = read_csv(out / "hitting_oracle" / "hitting_curve_00.csv")
    a, b = head.index("s_nu0"), head.index("s_exact_nu0")
    diffs = [abs(float(rw[a]) - float(rw[b])) for rw in rows if rw[b] != "nan"]
    lines.append(["4", "max_oracle_diff", max(diffs)])
    s = run_hitting(cfg["hitting"], out / "hitting", jobs)
    for rep in s["reports"]:
        lines.append(["5", f"C_hat_eps_{rep['epsilon']!r}", rep["C_hat"]])
        lines.append(["5", f"delta_eps_{rep['epsilon']!r}", rep["delta_eps"]])
        lines.append(["5", f"xi_eps_{rep['epsilon']!r}", rep["xi_eps"]])
    for k, c in enumerate(cfg["evl"]):
        s = run_evl(c, out / f"evl_{k}", jobs)
        lines.append(["6", f"final_empirical_center_{c['center']}", s["final_empirical"]])
        lines.append(["6", f"predicted_center_{c['center']}", s["final_predicted"]])
    s = run_sft(cfg["sft-entropy"], out / "sft", jobs)
    for L, ratio in zip(range(2, 2 + len(s["ratios"])), s["ratios"]):
        lines.append(["7", f"ratio_L{L}", ratio])
    g = sft.SFTSpec.from_dict(cfg["golden"]["sft"])
    lines.append(["7", "golden_entropy_error", sft.topological_entropy(g) - math.log((1 + math.sqrt(5)) / 2)])
    write_csv(out / "selftest.csv", ["criterion", "quantity", "value"], lines, {"selftest": "pinned"})
    return {"lines": len(lines)}


COMMANDS = {
    "escape-rate": run_escape_rate,
    "extremal-index": run_extremal_index,
    "hitting": run_hitting,
    "evl": run_evl,
    "sft-entropy": run_sft,
    "selftest": run_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="openrates", description="Escape rates, extremal indices and hitting statistics "
                                "for open interval maps and subshifts of finite type.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp_ = sub.add_parser(name)
        sp_.add_argument("--config", help="JSON experiment config", required=name != "selftest")
        sp_.add_argument("--out", default=".", help="output directory")
        sp_.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
        sp_.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed (overrides config)")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("OPENRATES_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config) if args.config else {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        jobs = args.jobs if args.jobs is not None else cfg.get("jobs", 1)
        if not isinstance(jobs, int) or jobs < 1:
            raise ConfigError("jobs must be a positive integer")
        cfg.pop("jobs", None)
        summary = COMMANDS[args.command](cfg, out, jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"command": args.command, "out": str(out), "summary_keys": sorted(summary)}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
