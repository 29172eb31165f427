"""Scenario orchestration: config validation (fail-closed), experiment
dispatch, report bundles.

A scenario bundle directory holds the solver field (binary), per-point
energy-ladder CSVs, free-boundary curve CSVs, rate-fit CSVs and a top-level
summary.json with one boolean per check plus the key numbers, the config
echo and the seed.  Every number in the summary traces to a module
operation.  Summaries are written atomically and contain no wall-clock
data; timing goes to timing.log so that same-seed runs are byte-identical.
"""

from __future__ import annotations

import json
import os
import time

import jsonschema
import numpy as np

from . import synthetic
from .blowup import (blowup_convergence, extract_free_boundary,
                     flatness_certificate, flatness_profile, oscillation_holder,
                     reconstruct_graph, snap_to_boundary)
from .energy import weiss
from .epiperimetric import EPS_MIN_DEFAULT, HalfPlaneConstraint, epi_ratio, epi_sweep
from .errors import NumericalFailure, RejectedInput
from .geometry import circle_trace
from .grids import CoeffData, ScalarField2D
from .monotonicity import (check_monotone, decay_certificate, geometric_ladder,
                           weiss_profile)
from .multiphase import solve_multiphase, triple_points, two_phase_box_contacts
from .solvers import (SolveConfig, nondegeneracy_check, solve_eigen,
                      solve_one_phase, solve_two_phase, verify_almost_min)

KINDS = ["solve_op", "solve_tp", "solve_eigen", "solve_multiphase",
         "analyze_blowup", "verify_epi", "verify_monotonicity",
         "verify_almost_min", "full_pipeline"]

_LADDER = {"type": "object", "additionalProperties": False,
           "properties": {"r0": {"type": "number"}, "q": {"type": "number"},
                          "rungs": {"type": "integer"}},
           "required": ["r0", "q", "rungs"]}

_DATUM = {"type": "object", "additionalProperties": False,
          "properties": {"type": {"enum": ["half_plane", "curved", "box",
                                           "two_plane", "tp_curved"]},
                         "mu": {"type": "number"}, "mu_minus": {"type": "number"},
                         "amp": {"type": "number"}, "base": {"type": "number"},
                         "tilt": {"type": "number"}},
          "required": ["type"]}

_PARAMS = {
    "solve_op": {"type": "object", "additionalProperties": False,
                 "properties": {"n": {"type": "integer"},
                                "lambda": {"type": "number"},
                                "datum": _DATUM,
                                "constraint": {"enum": [None, "upper_half"]},
                                "ladder": _LADDER,
                                "n_points": {"type": "integer"},
                                "fit_radius": {"type": "number"},
                                "interior_radius": {"type": "number"},
                                "C1": {"type": "number"},
                                "delta1": {"type": "number"},
                                "eps_decay": {"type": "number"},
                                "epi_grid": {"type": "integer"}},
                 "required": ["n", "lambda", "datum", "ladder"]},
    "solve_tp": {"type": "object", "additionalProperties": False,
                 "properties": {"n": {"type": "integer"},
                                "lambda_plus": {"type": "number"},
                                "lambda_minus": {"type": "number"},
                                "datum": _DATUM,
                                "ladder": _LADDER,
                                "n_points": {"type": "integer"},
                                "fit_radius": {"type": "number"},
                                "interior_radius": {"type": "number"},
                                "C1": {"type": "number"},
                                "delta1": {"type": "number"}},
                 "required": ["n", "lambda_plus", "lambda_minus", "datum",
                              "ladder"]},
    "solve_eigen": {"type": "object", "additionalProperties": False,
                    "properties": {"domain": {"enum": ["square", "disk", "rect"]},
                                   "n": {"type": "integer"},
                                   "size": {"type": "number"},
                                   "wx": {"type": "number"},
                                   "wy": {"type": "number"}},
                    "required": ["domain", "n"]},
    "solve_multiphase": {"type": "object", "additionalProperties": False,
                         "properties": {"n_grid": {"type": "integer"},
                                        "wx": {"type": "number"},
                                        "wy": {"type": "number"},
                                        "n_phases": {"type": "integer"},
                                        "weights": {"type": "array",
                                                    "items": {"type": "number"}},
                                        "symmetry_tol": {"type": "number"}},
                         "required": ["n_grid", "wx", "wy", "n_phases",
                                      "weights"]},
    "analyze_blowup": {"type": "object", "additionalProperties": False,
                       "properties": {"field_file": {"type": "string"},
                                      "synthetic": {"type": "object"},
                                      "x0": {"type": "array"},
                                      "ladder": _LADDER,
                                      "kind": {"type": "string"}},
                       "required": ["ladder"]},
    "verify_epi": {"type": "object", "additionalProperties": False,
                   "properties": {"n_grid": {"type": "integer"},
                                  "lambda": {"type": "number"},
                                  "lambda_plus": {"type": "number"},
                                  "lambda_minus": {"type": "number"},
                                  "family_size": {"type": "integer"},
                                  "refine": {"type": "boolean"},
                                  "eps_min": {"type": "number"}},
                   "required": ["n_grid"]},
    "verify_monotonicity": {"type": "object", "additionalProperties": False,
                            "properties": {"field_file": {"type": "string"},
                                           "synthetic": {"type": "object"},
                                           "ladder": _LADDER,
                                           "C": {"type": "number"},
                                           "delta": {"type": "number"},
                                           "lambda": {"type": "number"}},
                            "required": ["ladder", "C", "delta", "lambda"]},
    "verify_almost_min": {"type": "object", "additionalProperties": False,
                          "properties": {"field_file": {"type": "string"},
                                         "synthetic": {"type": "object"},
                                         "lambda": {"type": "number"},
                                         "r": {"type": "number"},
                                         "C": {"type": "number"},
                                         "delta": {"type": "number"},
                                         "n_points": {"type": "integer"}},
                          "required": ["lambda", "r", "C", "delta"]},
    "full_pipeline": {"type": "object", "additionalProperties": False,
                      "properties": {"n": {"type": "integer"},
                                     "lambda": {"type": "number"}},
                      "required": ["n", "lambda"]},
}

SCENARIO_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "kind": {"enum": KINDS},
        "seed": {"type": "integer"},
        "out": {"type": "string"},
        "params": {"type": "object"},
    },
    "required": ["name", "kind", "params"],
}

CONFIG_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "properties": {"scenarios": {"type": "array", "items": SCENARIO_SCHEMA,
                                 "minItems": 1}},
    "required": ["scenarios"],
}


def validate_config(cfg: dict) -> list:
    """Fail-closed validation; returns the scenario list or raises
    RejectedInput naming the offending key."""
    if isinstance(cfg, dict) and "scenarios" not in cfg:
        cfg = {"scenarios": [cfg]}
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
        for sc in cfg["scenarios"]:
            jsonschema.validate(sc.get("params", {}), _PARAMS[sc["kind"]])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise RejectedInput(f"config invalid at '{path}': {exc.message}")
    return cfg["scenarios"]


def _write_json_atomic(path: str, obj) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    return x


def _make_datum(spec: dict, lam=1.0, lam_minus=1.0):
    kind = spec["type"]
    if kind == "half_plane":
        return synthetic.half_plane_trace(spec.get("mu", np.sqrt(lam)))
    if kind == "curved":
        return synthetic.op_curved_datum(spec.get("amp", 0.25), lam=lam)
    if kind == "box":
        return synthetic.box_datum(spec.get("base", 1.4), spec.get("tilt", 0.3))
    if kind == "two_plane":
        return synthetic.two_plane_trace(spec.get("mu", 2.0),
                                         spec.get("mu_minus", 1.0))
    if kind == "tp_curved":
        return synthetic.tp_curved_datum(spec.get("mu", 2.0),
                                         spec.get("mu_minus", 1.0),
                                         spec.get("amp", 0.25))
    raise RejectedInput(f"unknown datum type {kind!r}")


def _make_synthetic_field(spec: dict) -> ScalarField2D:
    kind = spec.get("type", "half_plane")
    kw = {k: v for k, v in spec.items() if k != "type"}
    maker = {"half_plane": synthetic.half_plane_field,
             "perturbed": synthetic.perturbed_half_plane}.get(kind)
    if maker is None:
        raise RejectedInput(f"unknown synthetic field type {kind!r}")
    return maker(**kw)


def lemma_constants(coeffs: CoeffData, L: float, C1: float = 1.0,
                    delta1: float = 1.0):
    """Monotonicity constants from the freezing reduction: the envelope
    constant scales like (M_A L^2 + C_Q) max(C1, 1) and the exponent is
    min(delta_A, delta_Q, delta1)."""
    C_w = (coeffs.M_A * L * L + coeffs.C_Q) * max(C1, 1.0)
    return C_w, coeffs.delta_min(delta1)


def _fb_points_on_curve(curve, rng, n_points, margin, kinds=None):
    pts = curve.points
    ok = np.abs(pts).max(axis=1) < margin
    if kinds is not None:
        ok &= np.array([k in kinds for k in curve.kinds])
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return []
    take = idx[np.linspace(0, idx.size - 1, min(n_points, idx.size)).astype(int)]
    return [pts[k] for k in take]


def _solve_scenario(sc: dict, outdir: str) -> dict:
    """Shared body for solve_op / solve_tp: solve, ladder profiles with the
    monotonicity check, boundary extraction with fits, graph and oscillation
    reports, and (constrained runs) the decay-rate chain."""
    p = sc["params"]
    kind = sc["kind"]
    seed = sc.get("seed", 0)
    two_phase = kind == "solve_tp"
    if two_phase:
        lam = (p["lambda_plus"], p["lambda_minus"])
        coeffs = CoeffData.constant(q_tp_plus=lam[0], q_tp_minus=lam[1])
        datum = _make_datum(p["datum"], lam[0], lam[1])
    else:
        lam = (p["lambda"],)
        coeffs = CoeffData.constant(q_op=lam[0])
        datum = _make_datum(p["datum"], lam[0])
    cfg = SolveConfig(n=p["n"], seed=seed)
    constraint = p.get("constraint")
    if two_phase:
        fld, info = solve_two_phase(datum, coeffs, cfg)
        mode = "TP"
    else:
        fld, info = solve_one_phase(datum, coeffs, constraint, cfg)
        mode = "OP"
    fld.to_binary(os.path.join(outdir, "field.bin"))
    _write_json_atomic(os.path.join(outdir, "solve_info.json"),
                       _jsonable(info.to_dict()))

    checks = {"stagnated": info.stagnated,
              "replacement_ok": min(info.replacement_margins)
              >= -cfg.tol_replacement * max(abs(info.final_energy), 1.0)}
    numbers = {"final_energy": info.final_energy, "L_measured": info.L_measured}

    C_w, delta = lemma_constants(coeffs, info.L_measured,
                                 p.get("C1", 1.0), p.get("delta1", 1.0))
    numbers["C_monotone"] = C_w
    numbers["delta"] = delta

    lad = p["ladder"]
    rng = np.random.default_rng(seed)
    box_field = None
    if constraint == "upper_half":
        box_field = ScalarField2D.from_function(
            lambda X, Y: 1.0 * (Y > 0.0), fld.n, fld.half_width)
    usable = 1.0 - 3.5 * fld.spacing
    curves = extract_free_boundary(fld, box_field, fit_radius=p.get("fit_radius", 0.25),
                                   coeffs=coeffs, n_fit=49, n_dirs=240,
                                   usable_radius=usable)
    for k, c in enumerate(curves):
        c.to_csv(os.path.join(outdir, f"curve_{k}.csv"))
    checks["boundary_found"] = len(curves) > 0

    n_points = p.get("n_points", 5)
    margin = 1.0 - lad["r0"] * np.sqrt(2.0) - 3 * fld.spacing
    main_curve = max(curves, key=lambda c: len(c.points)) if curves else None
    centers = _fb_points_on_curve(main_curve, rng, n_points, margin) \
        if main_curve is not None else []
    if constraint == "upper_half":
        centers = [snap_to_boundary((x, 0.0), curves) for x in
                   np.linspace(-0.35, 0.35, n_points)]

    mono_ok = True
    profiles = []
    for k, x0 in enumerate(centers):
        radii = geometric_ladder(lad["r0"], lad["q"], lad["rungs"])
        prof = weiss_profile(fld, x0, radii, mode=mode, lambdas=lam,
                             n_out=min(fld.n, 129))
        prof.to_csv(os.path.join(outdir, f"profile_{k}.csv"))
        rep = check_monotone(prof, C_w, delta)
        mono_ok &= rep.passed
        profiles.append(prof)
    checks["monotonicity"] = mono_ok and bool(profiles)

    # blow-up classification consistency over accepted fitted points in the
    # interior (points near the collar see the extension, not the solution)
    if main_curve is not None:
        q_scale = sum(lam)
        interior = p.get("interior_radius", 0.65)
        good, tot = 0, 0
        for pt, fit, ckind in zip(main_curve.points, main_curve.fits,
                                  main_curve.kinds):
            if fit is None or not fit.accepted or np.hypot(*pt) > interior:
                continue
            if two_phase and ckind == "two_phase":
                tot += 1
                good += fit.deltas.get("tp_balance", np.inf) <= 0.05 * q_scale
            elif not two_phase and ckind == "plus_only" and constraint is None:
                tot += 1
                good += fit.deltas.get("op_consistency", np.inf) <= 0.05 * lam[0]
        if tot:
            numbers["classification_fraction"] = good / tot
            checks["classification"] = good / tot >= 0.9

    # graph reconstruction at sampled boundary points
    epi_ok = True
    n_graph = 0
    for x0 in centers[:5]:
        try:
            fit = main_curve and None
            nu = np.array([0.0, 1.0])
            if main_curve is not None and constraint != "upper_half":
                dists = np.hypot(*(main_curve.points - x0).T)
                kk = int(np.argmin(dists))
                if main_curve.fits[kk] is not None:
                    nu = main_curve.fits[kk].model.nu
            rep = reconstruct_graph(fld, x0, min(0.3, margin), nu)
            epi_ok &= rep.epigraph_ok
            n_graph += 1
        except RejectedInput:
            epi_ok = False
    checks["epigraph"] = epi_ok and n_graph > 0

    if main_curve is not None and constraint != "upper_half":
        try:
            osc = oscillation_holder(main_curve,
                                     window=(6 * fld.spacing, 0.45), n_bins=8)
            numbers["oscillation_alpha"] = osc.nu_fit.exponent
            numbers["oscillation_residual"] = osc.nu_fit.residual
            numbers["vector_recovery_constant"] = osc.vector_recovery_constant
            if osc.nu_fit.status == "ok":
                checks["oscillation_alpha_positive"] = osc.nu_fit.exponent > 0
        except RejectedInput:
            pass

    # decay chain at a box point for the constrained scenario
    if constraint == "upper_half":
        x0 = snap_to_boundary((0.0, 0.0), curves)
        radii = geometric_ladder(lad["r0"], lad["q"], lad["rungs"])
        eps_obs = []
        hc = HalfPlaneConstraint((0.0, 0.0), (0.0, 1.0))
        for r in radii:
            tr = circle_trace(fld, x0, r, 256)
            rep = epi_ratio(tr, "OP", lam[0], constraint=hc,
                            n_grid=p.get("epi_grid", 129), refine=True)
            if not rep.at_density and np.isfinite(rep.eps_observed):
                eps_obs.append((rep.eps_observed, rep.W_z - rep.theta))
        if eps_obs:
            eps_vals = np.array([e for e, _ in eps_obs])
            gaps = np.array([g for _, g in eps_obs])
            eps_med = float(np.median(eps_vals))
            numbers["eps_observed_median"] = eps_med
            # the measured contraction carries an O(h) energy bias that
            # scales like 1/gap; the intercept of eps against 1/gap is the
            # bias-free estimate
            if eps_vals.size >= 4:
                A = np.column_stack([1.0 / gaps, np.ones_like(gaps)])
                coef, *_ = np.linalg.lstsq(A, eps_vals, rcond=None)
                eps_hat = float(np.clip(coef[1], 0.02, 0.95))
            else:
                eps_hat = float(np.clip(eps_med, 0.02, 0.95))
            numbers["eps_observed_extrapolated"] = eps_hat
            gamma_epi = 2.0 * eps_hat / (1.0 - eps_hat)
            numbers["gamma_epi"] = gamma_epi
            prof = weiss_profile(fld, x0, radii, mode="OP", lambdas=lam,
                                 n_out=min(fld.n, 129))
            eps_adm = min(0.8 * delta / (4.0 + delta), p.get("eps_decay", 0.1))
            cert = decay_certificate(prof, eps_adm, delta, C_w)
            checks["decay_certificate"] = cert.holds
            numbers["decay_gamma"] = cert.gamma
            numbers["decay_I"] = cert.I
            conv = blowup_convergence(fld, x0, radii, coeffs, "box_contact",
                                      n_out=97)
            if not conv.at_limit:
                numbers["gamma_fit"] = conv.rate.exponent
                ratio = conv.rate.exponent / gamma_epi
                numbers["gamma_ratio"] = ratio
                checks["rate_matches_contraction"] = bool(0.5 <= ratio <= 2.0)

    # non-degeneracy spot check at the analyzed centers
    if centers and not two_phase:
        nd = nondegeneracy_check(fld, coeffs, eta=0.1 * np.sqrt(lam[0]),
                                 eps_nd=0.4, r0=lad["r0"],
                                 centers=[tuple(c) for c in centers])
        checks["nondegeneracy"] = nd.passed

    return {"checks": _jsonable(checks), "numbers": _jsonable(numbers)}


def _eigen_scenario(sc: dict, outdir: str) -> dict:
    p = sc["params"]
    n = p["n"]
    if p["domain"] == "square":
        size = p.get("size", 1.0)
        h = size / (n + 1)
        mask = np.ones((n, n), dtype=bool)
    elif p["domain"] == "disk":
        mask, h = synthetic.disk_mask(n, p.get("size", 1.1), 1.0)
    else:
        mask, h = synthetic.rect_mask(n, max(p["wx"], p["wy"]) * 0.55 + 0.05,
                                      p["wx"], p["wy"])
    lam, fld, info = solve_eigen(mask, h, SolveConfig(seed=sc.get("seed", 0)))
    fld.to_binary(os.path.join(outdir, "eigenfunction.bin"))
    numbers = {"lambda1": lam, "rayleigh": info["rayleigh"],
               "iterations": info["iterations"]}
    checks = {"rayleigh_consistent": abs(lam - info["rayleigh"])
              <= 1e-10 * abs(lam), "flags_empty": not info["flags"]}
    if p["domain"] == "square":
        ref = 2.0 * np.pi ** 2 / p.get("size", 1.0) ** 2
        numbers["reference"] = ref
        checks["matches_reference"] = abs(lam - ref) <= 0.01 * ref
    return {"checks": _jsonable(checks), "numbers": _jsonable(numbers)}


def _multiphase_scenario(sc: dict, outdir: str) -> dict:
    p = sc["params"]
    n = p["n_grid"]
    half = max(p["wx"], p["wy"]) * 0.5 + 0.1
    mask, h = synthetic.rect_mask(n, half, p["wx"], p["wy"])
    st = solve_multiphase(mask, h, p["n_phases"], p["weights"],
                          SolveConfig(seed=sc.get("seed", 0)))
    # phase map CSV
    ii, jj = np.nonzero(np.ones_like(st.supports, dtype=bool))
    with open(os.path.join(outdir, "phases.csv"), "w") as fh:
        fh.write("i,j,label\n")
        for a, b in zip(ii, jj):
            fh.write("%d,%d,%d\n" % (a, b, st.supports[a, b]))
    sups = [st.supports == i for i in range(p["n_phases"])]
    tps = triple_points(sups)
    bcs = two_phase_box_contacts(sups, mask)
    energies = st.phase_energies()
    checks = {"no_triple_points": len(tps) == 0,
              "no_box_contacts": len(bcs) == 0,
              "no_collapse": not any("collapsed" in f for f in st.flags),
              "disjoint": st.overlap <= 1e-8}
    numbers = {"energy": st.energy, "phase_energies": energies,
               "overlap": st.overlap, "triple_points": len(tps),
               "box_contacts": len(bcs)}
    if p["n_phases"] >= 2 and len(set(np.round(p["weights"], 12))) == 1:
        tol = p.get("symmetry_tol", 0.02)
        spread = (max(energies) - min(energies)) / max(energies)
        numbers["symmetry_spread"] = spread
        checks["symmetric_energies"] = spread <= tol
    return {"checks": _jsonable(checks), "numbers": _jsonable(numbers)}


def _load_field(p: dict) -> ScalarField2D:
    if "field_file" in p:
        return ScalarField2D.from_binary(p["field_file"])
    if "synthetic" in p:
        return _make_synthetic_field(p["synthetic"])
    raise RejectedInput("need field_file or synthetic input")


def _analyze_scenario(sc: dict, outdir: str) -> dict:
    p = sc["params"]
    fld = _load_field(p)
    lad = p["ladder"]
    x0 = np.asarray(p.get("x0", (0.0, 0.0)), dtype=float)
    radii = geometric_ladder(lad["r0"], lad["q"], lad["rungs"])
    conv = blowup_convergence(fld, x0, radii, None, p.get("kind", "plus_only"))
    with open(os.path.join(outdir, "deviation_rate.csv"), "w") as fh:
        fh.write("r,value,fit\n")
        for r, d in zip(radii, conv.deviations):
            fitv = conv.rate.constant * r ** conv.rate.exponent \
                if conv.rate.status == "ok" else float("nan")
            fh.write("%.17g,%.17g,%.17g\n" % (r, d, fitv))
    nu = conv.limit_fit.model.nu
    flat = flatness_profile(fld, x0, radii, nu)
    checks = {"fit_accepted": conv.limit_fit.accepted}
    numbers = {"rate_exponent": conv.rate.exponent,
               "rate_status": conv.rate.status,
               "excess_max": float(np.max(conv.excess_values)),
               "flatness_exponent": flat.rate.exponent,
               "flatness_status": flat.rate.status,
               "eps_cone": flat.eps_cone}
    return {"checks": _jsonable(checks), "numbers": _jsonable(numbers)}


def _epi_scenario(sc: dict, outdir: str) -> dict:
    p = sc["params"]
    n_grid = p["n_grid"]
    refine = p.get("refine", False)
    eps_min = p.get("eps_min", EPS_MIN_DEFAULT)
    fam = p.get("family_size", 10)
    lam = p.get("lambda", 1.0)
    lam_tp = (p.get("lambda_plus", 4.0), p.get("lambda_minus", 1.0))
    checks, numbers = {}, {}

    ts = np.linspace(0.05, 0.4, fam)
    traces = [synthetic.bumped_trace(t) for t in ts]
    reps = epi_sweep(traces, ts, "OP", lam, n_grid=n_grid, refine=refine,
                     eps_min=eps_min,
                     csv_path=os.path.join(outdir, "epi_op_unconstrained.csv"))
    eps_vals = [r.eps_observed for r in reps if not r.at_density]
    checks["op_unconstrained"] = all(r.success for r in reps) and bool(eps_vals)
    numbers["op_unconstrained_eps_min"] = float(np.min(eps_vals)) if eps_vals else None

    hc = HalfPlaneConstraint((0.0, 0.0), (0.0, 1.0))
    traces_c = [synthetic.constrained_trace((a,)) for a in np.linspace(0.1, 0.45, fam)]
    reps_c = epi_sweep(traces_c, np.linspace(0.1, 0.45, fam), "OP", lam,
                       constraint=hc, n_grid=n_grid, refine=refine,
                       eps_min=eps_min,
                       csv_path=os.path.join(outdir, "epi_op_constrained.csv"))
    eps_c = [r.eps_observed for r in reps_c if not r.at_density]
    checks["op_constrained"] = all(r.success for r in reps_c) and bool(eps_c)
    numbers["op_constrained_eps_min"] = float(np.min(eps_c)) if eps_c else None

    traces_tp = [synthetic.random_signed_trace(s) for s in range(fam)]
    reps_tp = epi_sweep(traces_tp, list(range(fam)), "TP", lam_tp,
                        n_grid=n_grid, refine=refine, eps_min=eps_min,
                        csv_path=os.path.join(outdir, "epi_tp.csv"))
    eps_tp = [r.eps_observed for r in reps_tp if not r.at_density]
    checks["tp"] = all(r.success for r in reps_tp) and bool(eps_tp)
    numbers["tp_eps_min"] = float(np.min(eps_tp)) if eps_tp else None
    checks["h1_bounds"] = all(r.h1_bound_ok for r in reps + reps_c + reps_tp)
    return {"checks": _jsonable(checks), "numbers": _jsonable(numbers)}


def _mono_scenario(sc: dict, outdir: str) -> dict:
    p = sc["params"]
    fld = _load_field(p)
    lad = p["ladder"]
    radii = geometric_ladder(lad["r0"], lad["q"], lad["rungs"])
    prof = weiss_profile(fld, (0.0, 0.0), radii, mode="OP",
                         lambdas=(p["lambda"],))
    prof.to_csv(os.path.join(outdir, "profile.csv"))
    rep = check_monotone(prof, p["C"], p["delta"])
    checks = {"monotone": rep.passed, "excess_nonnegative":
              bool(np.all(prof.E_values >= -1e-12))}
    numbers = {"max_violation": rep.max_violation, "tol": rep.tol,
               "theta": prof.theta, "theta_analytic": prof.theta_analytic}
    return {"checks": _jsonable(checks), "numbers": _jsonable(numbers)}


def _almost_scenario(sc: dict, outdir: str) -> dict:
    p = sc["params"]
    fld = _load_field(p)
    coeffs = CoeffData.constant(q_op=p["lambda"])
    rng = np.random.default_rng(sc.get("seed", 0))
    margin = fld.half_width - p["r"] - 3 * fld.spacing
    reports = []
    for _ in range(p.get("n_points", 5)):
        x0 = rng.uniform(-0.5, 0.5, 2) * margin
        reports.append(verify_almost_min(fld, coeffs, "OP", x0, p["r"],
                                         C=p["C"], delta=p["delta"],
                                         seed=sc.get("seed", 0)))
    checks = {"almost_minimal": all(r.passed for r in reports)}
    numbers = {"worst_margin": float(min(r.worst_margin for r in reports)),
               "smallest_C": float(max(r.smallest_C for r in reports))}
    return {"checks": _jsonable(checks), "numbers": _jsonable(numbers)}


def _pipeline_scenario(sc: dict, outdir: str) -> dict:
    p = sc["params"]
    lam = p["lambda"]
    seed = sc.get("seed", 0)
    coeffs = CoeffData.constant(q_op=lam)
    datum = synthetic.half_plane_trace(np.sqrt(lam))
    cfg = SolveConfig(n=p["n"], seed=seed)
    fld, info = solve_one_phase(datum, coeffs, None, cfg)
    fld.to_binary(os.path.join(outdir, "field.bin"))
    curves = extract_free_boundary(fld)
    x0 = snap_to_boundary((0.0, 0.0), curves)
    radii = geometric_ladder(0.45, 0.8, 8)
    prof = weiss_profile(fld, x0, radii, mode="OP", lambdas=(lam,),
                         n_out=min(p["n"], 97))
    prof.to_csv(os.path.join(outdir, "profile.csv"))
    C_w, delta = lemma_constants(coeffs, info.L_measured)
    mono = check_monotone(prof, C_w, delta)
    tr = circle_trace(fld, x0, radii[0], 256)
    epi = epi_ratio(tr, "OP", lam, n_grid=65)
    conv = blowup_convergence(fld, x0, radii, coeffs, "plus_only",
                              n_out=65)
    flat = flatness_profile(fld, x0, radii, conv.limit_fit.model.nu)
    graph = reconstruct_graph(fld, x0, 0.4, conv.limit_fit.model.nu)
    cert = flatness_certificate(fld, conv.limit_fit.model.nu,
                                0.2, coeffs)
    checks = {"stagnated": info.stagnated, "monotone": mono.passed,
              "epi_at_density": epi.at_density or epi.success,
              "rate_at_limit": conv.at_limit,
              "flatness_at_limit": flat.rate.status == "at-limit",
              "epigraph": graph.epigraph_ok,
              "flatness_certificate": cert.geometric_ok and cert.f_ok
              and cert.coeff_ok}
    numbers = {"final_energy": info.final_energy, "L": info.L_measured,
               "theta": prof.theta, "theta_analytic": prof.theta_analytic,
               "rate_status": conv.rate.status,
               "flatness_status": flat.rate.status}
    with open(os.path.join(outdir, "deviation_rate.csv"), "w") as fh:
        fh.write("r,value,fit\n")
        for r, d in zip(radii, conv.deviations):
            fh.write("%.17g,%.17g,nan\n" % (r, d))
    return {"checks": _jsonable(checks), "numbers": _jsonable(numbers)}


_DISPATCH = {
    "solve_op": _solve_scenario,
    "solve_tp": _solve_scenario,
    "solve_eigen": _eigen_scenario,
    "solve_multiphase": _multiphase_scenario,
    "analyze_blowup": _analyze_scenario,
    "verify_epi": _epi_scenario,
    "verify_monotonicity": _mono_scenario,
    "verify_almost_min": _almost_scenario,
    "full_pipeline": _pipeline_scenario,
}


def run_scenario(sc: dict, out_root: str) -> dict:
    """Execute one validated scenario and write its report bundle.

    The summary records pass/fail per check, key numbers, the config echo
    and the seed; failures are recorded rather than raised (the summary then
    carries "error").  Wall time goes to timing.log.
    """
    outdir = os.path.join(out_root, sc.get("out", sc["name"]))
    os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()
    summary = {"name": sc["name"], "kind": sc["kind"],
               "seed": sc.get("seed", 0), "config": sc}
    try:
        result = _DISPATCH[sc["kind"]](sc, outdir)
        summary.update(result)
        summary["ok"] = all(result["checks"].values())
    except RejectedInput as exc:
        summary["error"] = {"type": "rejected_input", "message": str(exc)}
        summary["ok"] = False
    except NumericalFailure as exc:
        summary["error"] = {"type": "numerical_failure", "message": str(exc)}
        summary["ok"] = False
    _write_json_atomic(os.path.join(outdir, "summary.json"), _jsonable(summary))
    with open(os.path.join(outdir, "timing.log"), "w") as fh:
        fh.write(f"wall_time_seconds {time.perf_counter() - t0:.3f}\n")
    return summary
