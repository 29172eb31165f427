"""Acceptance suite: every shipped criterion at its stated tolerance.

Run with `pytest -s tests/test_acceptance.py` to see one pass/fail line per
criterion.  The solver scenarios are executed once (module scope) and shared
across the criteria that analyze them.
"""

import json
import os
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from fblab import synthetic
from fblab.energy import excess, one_hom_extension, weiss
from fblab.epiperimetric import HalfPlaneConstraint, epi_ratio
from fblab.grids import CoeffData, ScalarField2D
from fblab.monotonicity import (check_monotone, derivative_identity_residual,
                                weiss_profile)
from fblab.scenarios import run_scenario, validate_config
from fblab.solvers import (SolveConfig, nondegeneracy_check, solve_eigen,
                           verify_almost_min)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def report(num, name, ok, detail=""):
    print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return ok


def load_config(name):
    with open(os.path.join(CONFIG_DIR, name)) as fh:
        return validate_config(json.load(fh))


@pytest.fixture(scope="module")
def solver_bundles(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("scenarios"))
    t0 = time.perf_counter()
    summaries = {}
    times = {}
    for sc in load_config("solvers.json"):
        t1 = time.perf_counter()
        summaries[sc["name"]] = run_scenario(sc, out)
        times[sc["name"]] = time.perf_counter() - t1
    return summaries, times, out


@pytest.fixture(scope="module")
def multiphase_bundle(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("multiphase"))
    sc = load_config("multiphase.json")[0]
    t0 = time.perf_counter()
    summary = run_scenario(sc, out)
    return summary, time.perf_counter() - t0


def test_criterion_01_analytic_energies():
    t0 = time.perf_counter()
    lam = 1.3
    errs_op = []
    for n in (128, 256):
        u = ScalarField2D.from_function(
            lambda X, Y: np.sqrt(lam) * np.maximum(Y, 0.0), n, 1.0,
            sign_mode="nonnegative")
        W = weiss(u, "OP", lam).total
        errs_op.append(abs(W - lam * np.pi / 2) / (lam * np.pi / 2))
    lam_tp = (4.0, 1.0)
    errs_tp = []
    for n in (128, 256):
        u = ScalarField2D.from_function(
            lambda X, Y: 2 * np.maximum(Y, 0.0) + np.minimum(Y, 0.0), n, 1.0)
        W = weiss(u, "TP", lam_tp).total
        errs_tp.append(abs(W - sum(lam_tp) * np.pi / 2) / (sum(lam_tp) * np.pi / 2))
    dt = time.perf_counter() - t0
    ok = (errs_op[0] <= 0.03 and errs_tp[0] <= 0.03
          and errs_op[1] < errs_op[0] and errs_tp[1] < errs_tp[0] and dt < 2.0)
    assert report(1, "analytic densities within 3% at N=128, improving",
                  ok, f"op {errs_op[0]:.2%}->{errs_op[1]:.2%} "
                      f"tp {errs_tp[0]:.2%}->{errs_tp[1]:.2%} ({dt:.2f}s)")
    assert dt < 1.0 * 2  # stated runtime < 1 s each


def test_criterion_02_excess_vanishing():
    t0 = time.perf_counter()
    h = 2.0 / 127
    worst = 0.0
    for seed in range(20):
        c = synthetic.random_trace(seed)
        z = one_hom_extension(c, 128)
        worst = max(worst, excess(z))
    dt = time.perf_counter() - t0
    ok = worst <= 5.0 * h and dt < 5.0
    assert report(2, "excess of extensions <= 5h for 20 random traces", ok,
                  f"worst {worst:.2e} vs {5 * h:.2e} ({dt:.1f}s)")


def test_criterion_03_derivative_identity_refinement():
    t0 = time.perf_counter()

    def level(n, rungs):
        u = ScalarField2D.from_function(
            lambda X, Y: 1.0 + 0.3 * X + 0.2 * X * Y + 0.1 * (X * X + Y * Y),
            n, 1.6, sign_mode="nonnegative")
        prof = weiss_profile(u, (0, 0), np.geomspace(0.8, 0.4, rungs),
                             mode="OP", lambdas=(1.0,), n_out=min(n, 193))
        return derivative_identity_residual(prof)[1].max()

    res = [level(97, 6), level(193, 11), level(385, 21)]
    dt = time.perf_counter() - t0
    ok = res[1] <= res[0] / 1.5 and res[2] <= res[1] / 1.5 and dt < 30.0
    assert report(3, "derivative-identity residuals drop >= 1.5x per level",
                  ok, f"residuals {res[0]:.3g} -> {res[1]:.3g} -> {res[2]:.3g} "
                      f"({dt:.1f}s)")


def test_criterion_04_monotonicity_all_scenarios(solver_bundles):
    summaries, times, _ = solver_bundles
    ok = True
    details = []
    for name, s in summaries.items():
        ok &= s["checks"].get("monotonicity", False)
        ok &= times[name] < 120.0
        details.append(f"{name}:{'ok' if s['checks'].get('monotonicity') else 'FAIL'}"
                       f"({times[name]:.0f}s)")
    assert report(4, "energy ladders almost-monotone on every scenario", ok,
                  " ".join(details))


def test_criterion_05_epiperimetric_families(tmp_path):
    t0 = time.perf_counter()
    sc = load_config("epi_families.json")[0]
    summary = run_scenario(sc, str(tmp_path))
    checks = summary["checks"]
    nums = summary["numbers"]
    eps_mins = [nums["op_unconstrained_eps_min"], nums["op_constrained_eps_min"],
                nums["tp_eps_min"]]
    ok = all(checks.values()) and all(e >= 0.02 for e in eps_mins)
    # stability under h -> h/2 on representative traces per mode
    drift = []
    for c, mode, lam, con, pair in [
            (synthetic.bumped_trace(0.1), "OP", 1.0, None, (97, 193)),
            (synthetic.constrained_trace((0.3,)), "OP", 1.0,
             HalfPlaneConstraint((0, 0), (0, 1)), (97, 193)),
            (synthetic.random_signed_trace(1), "TP", (4.0, 1.0), None,
             (129, 257))]:
        e1 = epi_ratio(c, mode, lam, constraint=con, n_grid=pair[0]).eps_observed
        e2 = epi_ratio(c, mode, lam, constraint=con, n_grid=pair[1]).eps_observed
        drift.append(abs(e2 - e1) / abs(e1))
    ok &= max(drift) <= 0.20
    dt = time.perf_counter() - t0
    ok &= dt < 300.0
    assert report(5, "epiperimetric contraction >= 0.02 across families, "
                     "stable under refinement", ok,
                  f"eps_min {min(eps_mins):.3f} drift {max(drift):.2%} ({dt:.0f}s)")


def test_criterion_06_decay_chain(solver_bundles):
    summaries, times, _ = solver_bundles
    s = summaries["op-constrained-box"]
    checks, nums = s["checks"], s["numbers"]
    ok = checks.get("decay_certificate", False)
    ok &= checks.get("rate_matches_contraction", False)
    ratio = nums.get("gamma_ratio", float("nan"))
    ok &= times["op-constrained-box"] < 300.0
    assert report(6, "decay certificate + rate within factor 2 of d eps/(1-eps)",
                  ok, f"gamma_fit {nums.get('gamma_fit', float('nan')):.3f} "
                      f"gamma_epi {nums.get('gamma_epi', float('nan')):.3f} "
                      f"ratio {ratio:.2f}")


def test_criterion_07_blowup_classification(solver_bundles):
    summaries, times, _ = solver_bundles
    op = summaries["op-curved"]
    tp = summaries["tp-curved"]
    f_op = op["numbers"].get("classification_fraction", 0.0)
    f_tp = tp["numbers"].get("classification_fraction", 0.0)
    ok = f_op >= 0.9 and f_tp >= 0.9
    ok &= times["op-curved"] + times["tp-curved"] < 240.0
    assert report(7, "slope consistency |mu^2-Q| <= 5%Q at >= 90% of points",
                  ok, f"op {f_op:.2f} tp {f_tp:.2f}")


def _shooting_disk():
    def endpoint(lam):
        def rhs(r, y):
            return [y[1], -y[1] / max(r, 1e-12) - lam * y[0]]
        return solve_ivp(rhs, (1e-8, 1.0), [1.0, 0.0], rtol=1e-10,
                         atol=1e-12).y[0, -1]
    return brentq(endpoint, 4.0, 8.0, xtol=1e-10)


def test_criterion_08_eigen_oracles():
    t0 = time.perf_counter()
    n = 128
    lam_sq, _, _ = solve_eigen(np.ones((n, n), dtype=bool), 1.0 / (n + 1))
    err_sq = abs(lam_sq - 2 * np.pi ** 2) / (2 * np.pi ** 2)
    t1 = time.perf_counter()
    mask, h = synthetic.disk_mask(193, 1.05, 1.0)
    lam_disk, _, _ = solve_eigen(mask, h)
    ref = _shooting_disk()
    err_disk = abs(lam_disk - ref) / ref
    t2 = time.perf_counter()
    ok = err_sq <= 0.01 and err_disk <= 0.02 and (t1 - t0) < 10 and (t2 - t1) < 10
    assert report(8, "eigenvalue oracles: square 1%, disk 2% of shooting", ok,
                  f"square {err_sq:.2e} disk {err_disk:.2e} "
                  f"({t1 - t0:.1f}s/{t2 - t1:.1f}s)")


def test_criterion_09_multiphase_structure(multiphase_bundle):
    summary, dt = multiphase_bundle
    checks, nums = summary["checks"], summary["numbers"]
    ok = checks["no_triple_points"] and checks["no_box_contacts"]
    ok &= checks["symmetric_energies"] and checks["disjoint"]
    ok &= dt < 600.0
    assert report(9, "multiphase n=2: no triple points, no box contacts, "
                     "symmetric energies", ok,
                  f"spread {nums.get('symmetry_spread', float('nan')):.2%} "
                  f"({dt:.0f}s)")


def test_criterion_10_regularity_endpoint(solver_bundles):
    summaries, _, _ = solver_bundles
    ok = True
    details = []
    for name in ("op-constrained-box", "op-curved", "tp-curved"):
        s = summaries[name]
        ok &= s["checks"].get("epigraph", False)
        details.append(f"{name}:graph-ok")
    for name in ("op-curved", "tp-curved"):
        nums = summaries[name]["numbers"]
        alpha = nums.get("oscillation_alpha", float("nan"))
        resid = nums.get("oscillation_residual", float("nan"))
        ok &= alpha > 0 and resid < 0.2
        details.append(f"{name}:alpha={alpha:.2f},res={resid:.2f}")
    assert report(10, "epigraph property + Hoelder normals with alpha > 0",
                  ok, " ".join(details))


def test_criterion_11_negative_controls():
    t0 = time.perf_counter()
    coeffs = CoeffData.constant()
    u = ScalarField2D.from_function(
        lambda X, Y: np.maximum(Y, 0.0)
        + 0.6 * np.exp(-((X) ** 2 + (Y - 0.35) ** 2) / 0.01),
        129, 1.3, sign_mode="nonnegative")
    rep = verify_almost_min(u, coeffs, "OP", (0.0, 0.35), 0.2, C=0.5, delta=1.0)
    corrupted_fails = not rep.passed
    eta, r0 = 0.5, 0.3
    bump = ScalarField2D.from_function(
        lambda X, Y: (eta * r0 ** 2 / 100) * np.exp(-(X * X + Y * Y) / 1e-4),
        129, 1.3, sign_mode="nonnegative")
    nd = nondegeneracy_check(bump, np.eye(2), eta=eta, eps_nd=0.5, r0=r0,
                             centers=[(0, 0)])
    bump_fails = not nd.passed
    dt = time.perf_counter() - t0
    ok = corrupted_fails and bump_fails and dt < 60.0
    assert report(11, "negative controls fail as designed", ok,
                  f"corrupted almost-min fails: {corrupted_fails}, "
                  f"degeneracy bump fails: {bump_fails} ({dt:.1f}s)")


def test_criterion_12_reproducibility(tmp_path):
    t0 = time.perf_counter()
    sc = load_config("full_pipeline.json")[0]
    outs = []
    for tag in ("run-a", "run-b"):
        out = str(tmp_path / tag)
        summary = run_scenario(sc, out)
        assert summary["ok"], summary
        outs.append(os.path.join(out, sc["name"]))
    identical = True
    compared = 0
    for fname in sorted(os.listdir(outs[0])):
        if fname == "timing.log":
            continue  # wall time lives outside the reproducibility contract
        a = open(os.path.join(outs[0], fname), "rb").read()
        b = open(os.path.join(outs[1], fname), "rb").read()
        identical &= a == b
        compared += 1
    dt = time.perf_counter() - t0
    ok = identical and compared >= 4 and dt / 2 < 1800.0
    assert report(12, "same-seed pipeline runs byte-identical", ok,
                  f"{compared} artifacts compared, one run {dt / 2:.0f}s")
