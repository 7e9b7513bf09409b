"""Command line front end: JSON job files in, JSON results and CSV tables out.

    circledyn <command> --job job.json [--out DIR] [--seed N] [--threads N]
    circledyn <command> --preset NAME  [--out DIR] [--seed N] [--threads N]
    circledyn presets

A job file is ``{"command", "op", "inputs", "params", "name"}``; unknown keys
(and unknown parameters of an op) are rejected.  The result JSON holds
``inputs``, ``parameters``, ``results``, ``residuals``, ``seed`` and
``timestamp``; on failure an ``error`` object replaces the results and the
process exits with 2 (precondition) or 3 (convergence).
"""
import argparse
import csv
import datetime
import json
import math
import os
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import CircleDynError, PreconditionError

COMMANDS = ("rotnum", "conjugacy", "thompson", "denjoy", "walk", "moebius", "markov", "local")
OUT_ENV = "CIRCLEDYN_OUT"
JOB_KEYS = {"command", "op", "inputs", "params", "name", "description"}
GOLDEN = (math.sqrt(5) - 1) / 2


class JobError(PreconditionError):
    """The job file does not follow the schema."""


# ---------------------------------------------------------------- helpers

def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return v
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    return x


def _frac(v):
    return Fraction(str(v))


def _circle_map(d):
    from .maps import from_descriptor
    return from_descriptor(d)


def _tree(d):
    from . import thompson as th
    if "generator" in d:
        flavor = d.get("flavor", "F")
        return {"f": th.gen_f, "g": th.gen_g}[d["generator"]](flavor)
    if "dyadic_rotation" in d:
        p, q = d["dyadic_rotation"]
        return th.dyadic_rotation(p, q)
    if "word" in d:
        return th.word_element([tuple(w) for w in d["word"]], d.get("flavor", "F"))
    return th.TreePair.from_descriptor(d)


def _real_map(d):
    """(f, f', f^{-1} or None) for the interval/germ descriptors used by 'local'."""
    t = d["type"]
    if t == "linear":
        lam = float(d["lambda"])
        return (lambda x: lam * np.asarray(x, float),
                lambda x: np.full_like(np.asarray(x, float), lam),
                lambda y: np.asarray(y, float) / lam)
    if t == "polynomial":
        c = [float(_frac(v)) for v in d["coeffs"]]          # c[0] + c[1] x + ...
        p = np.polynomial.Polynomial(c)
        dp = p.deriv()
        return (lambda x: p(np.asarray(x, float)), lambda x: dp(np.asarray(x, float)), None)
    if t == "moebius_line":
        (a, b), (c, e) = d["matrix"]
        det = a * e - b * c
        return (lambda x: (a * np.asarray(x, float) + b) / (c * np.asarray(x, float) + e),
                lambda x: det / (c * np.asarray(x, float) + e) ** 2,
                lambda y: (e * np.asarray(y, float) - b) / (a - c * np.asarray(y, float)))
    if t == "exp":
        return (np.exp, np.exp, np.log)
    if t == "sternberg_example":
        from .local import sternberg_example
        return (sternberg_example(float(d.get("a", 0.5))), None, None)
    raise JobError(f"unknown interval map type {t!r}")


def _line_map(d):
    from .maps import LineMap
    f, df, inv = _real_map(d)
    return LineMap(f, df, inverse=inv, descriptor=d)


def _system(d):
    from . import walks
    if isinstance(d, str):
        if d not in walks.PRESET_SYSTEMS:
            raise JobError(f"unknown generator system {d!r}")
        return walks.PRESET_SYSTEMS[d]()
    if "preset" in d:
        return walks.PRESET_SYSTEMS[d["preset"]](**d.get("args", {}))
    return walks.GeneratorSystem.from_descriptor(d)


def _max(v):
    return float(np.max(np.abs(np.asarray(v, dtype=float)))) if np.size(v) else 0.0


# ---------------------------------------------------------------- rotnum

def op_rotnum_estimate(inp, p, ctx):
    from .rotation import rotation_number_estimate
    from .maps import boshernitzan_rho
    f = _circle_map(inp["map"])
    r = rotation_number_estimate(f, p["x0"], p["n"])
    res, resid = r.as_dict(), {}
    d = inp["map"]
    if d["type"] == "pl" and "slopes" in d:
        ref = boshernitzan_rho(*d["slopes"])
        res["closed_form"] = ref
        resid["closed_form_difference"] = abs(r.value - ref)
    return res, resid, {}


def op_rotnum_rational(inp, p, ctx):
    from .rotation import rotation_number_rational
    f = _circle_map(inp["map"])
    r = rotation_number_rational(f, p["q_max"], p["tol"])
    return {"rational": None if r is None else str(r)}, {}, {}


def op_rotnum_convergents(inp, p, ctx):
    from .rotation import convergents
    cf = convergents(float(p["theta"]), p["count"])
    rows = [(i + 1, int(a), int(b)) for i, (a, b) in enumerate(cf.convergents)]
    return ({"q": cf.q, "convergents": [[a, b] for _, a, b in rows]}, {},
            {"convergents": (["k", "p_k", "q_k"], rows)})


def op_rotnum_variation(inp, p, ctx):
    from .rotation import variation_log_derivative
    f = _circle_map(inp["map"])
    v = variation_log_derivative(f, p["levels"])
    res, resid = {"variation_lower_bound": v}, {}
    d = inp["map"]
    if d["type"] == "pl" and "slopes" in d:
        l1, l2 = (float(_frac(s)) for s in d["slopes"])
        res["closed_form"] = 2 * abs(math.log(l1 / l2))
        resid["closed_form_difference"] = abs(v - res["closed_form"])
    return res, resid, {}


def _psi(name, f):
    if name == "cos":
        return (lambda x: np.cos(2 * np.pi * x)), 4.0
    if name == "const":
        return (lambda x: np.ones_like(np.asarray(x, float))), 0.0
    if name == "log_derivative":
        return (lambda x: np.log(f.deriv(x))), None
    raise JobError(f"unknown test function {name!r}")


def op_rotnum_koksma(inp, p, ctx):
    from .rotation import denjoy_koksma_check, variation_log_derivative
    f = _circle_map(inp["map"])
    psi, var = _psi(p["psi"], f)
    logd = p["psi"] == "log_derivative"
    if logd:
        var = variation_log_derivative(f, 14)
    rows, ok = [], True
    for k in range(1, p["k_max"] + 1):
        r = denjoy_koksma_check(f, psi, k, psi_var=var, samples=p["samples"], seed=ctx["seed"],
                                log_derivative=logd)
        ok &= r["pass"]
        rows.append((k, r["q_k"], r["lhs"], r["bound"], r["pass"]))
    return ({"pass": ok, "checks": [dict(zip(["k", "q_k", "lhs", "bound", "pass"], r)) for r in rows]},
            {"max_excess": max(r[2] - r[3] for r in rows)},
            {"koksma": (["k", "q_k", "lhs", "bound", "pass"], rows)})


def op_rotnum_subadditivity(inp, p, ctx):
    from .rotation import displacement, rotation_number_estimate
    f = _circle_map(inp["map"])
    rho = rotation_number_estimate(f, 0.0, p["n"]).value
    N = 100 * p["n"]                      # reference orbit much longer than the tested n
    rho_lift = displacement(f, 0.0, N) / N
    rng = np.random.default_rng(ctx["seed"])
    worst = 0.0
    for x in rng.random(p["points"]):
        for n in np.unique(np.geomspace(1, p["n"], 12).astype(int)):
            worst = max(worst, abs(displacement(f, float(x), int(n)) - n * rho_lift))
    return {"rho": rho, "max_deviation": worst, "bound": 2.0, "pass": worst <= 2.0}, {}, {}


def op_rotnum_minimal_set(inp, p, ctx):
    from .rotation import classify_minimal_set
    gens = [_circle_map(d) for d in inp["maps"]]
    r = classify_minimal_set(gens, p["x0"], p["depth"], p["resolution"])
    return r, {}, {}


# ---------------------------------------------------------------- conjugacy

def op_conjugacy_semiconjugacy(inp, p, ctx):
    from .rotation import semiconjugacy_to_rotation, rotation_number_estimate
    f = _circle_map(inp["map"])
    rho = p["rho"] if p["rho"] is not None else rotation_number_estimate(f, 0.0, 10**5).value
    S = semiconjugacy_to_rotation(f, rho, p["n_max"], p["grid"])
    res = {"rho": rho, "min_increment": float(np.min(np.diff(S.values)))}
    if inp["map"]["type"] == "denjoy":
        from .denjoy import build_denjoy
        d = inp["map"]
        D = build_denjoy(d["theta"], d.get("k", 100), d.get("epsilon", 1.0), d.get("delta", 1e-6))
        a, b = D.assignment.gap(0)
        res["central_gap"] = [a, b]
        res["central_gap_image_diameter"] = S.image_diameter(a, b)
    rows = list(zip(S.xs.tolist(), S.values.tolist()))
    return res, {"equivariance": S.residual}, {"phi": (["x", "phi"], rows)}


# ---------------------------------------------------------------- thompson

def op_thompson_relators(inp, p, ctx):
    from . import thompson as th
    r1, r2 = th.relators()
    return ({"identity": bool(r1.is_identity() and r2.is_identity()),
             "relators": [r1.descriptor(), r2.descriptor()]}, {}, {})


def op_thompson_compose(inp, p, ctx):
    from . import thompson as th
    a, b = _tree(inp["a"]), _tree(inp["b"])
    c = th.compose(a, b)
    pts = [Fraction(0), Fraction(1, 4), Fraction(1, 2)]
    pa, pb, pc = a.pieces(), b.pieces(), c.pieces()
    route = [th.pl_eval(pa, th.pl_eval(pb, x)) - th.pl_eval(pc, x) for x in pts]
    return ({"product": c.descriptor(), "pl": c.to_pl_map().as_dict(),
             "identity": c.is_identity()},
            {"pointwise_difference": [str(v) for v in route]}, {})


def op_thompson_abelianization(inp, p, ctx):
    from . import thompson as th
    a = _tree(inp["a"])
    return {"abelianization": list(th.abelianization(a))}, {}, {}


def op_thompson_rotation(inp, p, ctx):
    from . import thompson as th
    r = th.rotation_number_exact(_tree(inp["a"]), p["q_max"])
    return {"rotation_number": None if r is None else str(r["rho"]),
            "period": None if r is None else r["q"]}, {}, {}


def op_thompson_farey(inp, p, ctx):
    from . import thompson as th
    a = _tree(inp["a"])
    pieces = th.farey_realization(a)
    res = th.farey_c1_residuals(pieces)
    return ({"pieces": th.farey_dict(pieces), "c1_residuals": [str(r) for r in res]},
            {"max_c1_residual": str(max((abs(r) for r in res), default=Fraction(0)))}, {})


def op_thompson_gaps(inp, p, ctx):
    from . import thompson as th
    H = th.sine_lift(p["s"])
    r = th.phiH_minimal_gaps(H, p["depth"])
    rows = [(lev, u, v) for lev, arcs in enumerate(r.get("levels", [])) for u, v in arcs]
    return ({"regime": r["regime"], "counts": [len(l) for l in r.get("levels", [])],
             "lengths": r.get("lengths", [])}, {}, {"gaps": (["level", "left", "right"], rows)})


def op_thompson_suite(inp, p, ctx):
    from . import thompson as th
    rng = np.random.default_rng(ctx["seed"])
    xs = [Fraction(i, 1024) for i in range(1025)]
    agree = 0
    for _ in range(p["words"]):
        w = th.random_word(rng, p["max_len"])
        e = th.word_element(w, "F")
        vals = th.word_pl_values(w, xs, "F")
        agree += e.is_identity() == all(v == x for v, x in zip(vals, xs))
    hom = 0
    for _ in range(p["pairs"]):
        a, b = th.random_element(rng, 12, "F"), th.random_element(rng, 12, "F")
        ab = th.abelianization(a * b)
        sa, sb = th.abelianization(a), th.abelianization(b)
        hom += ab == (sa[0] + sb[0], sa[1] + sb[1])
    farey_max = Fraction(0)
    for _ in range(p["farey"]):
        pieces = th.farey_realization(th.random_element(rng, 12, "G"))
        farey_max = max([farey_max] + [abs(r) for r in th.farey_c1_residuals(pieces)])
    r1, r2 = th.relators()
    out = {"relators_identity": bool(r1.is_identity() and r2.is_identity()),
           "word_agreement": agree, "words": p["words"], "hom_agreement": hom,
           "pairs": p["pairs"], "farey_max_residual": str(farey_max)}
    out["pass"] = bool(out["relators_identity"] and agree == p["words"] and hom == p["pairs"]
                       and farey_max == 0)
    return out, {}, {}


# ---------------------------------------------------------------- denjoy

def op_denjoy_build(inp, p, ctx):
    from . import denjoy as dj
    from .rotation import rotation_number_estimate, semiconjugacy_to_rotation
    theta = GOLDEN if p["theta"] is None else float(p["theta"])
    D = dj.build_denjoy(theta, p["k"], p["epsilon"], p["delta_truncation"], p["family"])
    f = D.circle_map()
    xs = np.linspace(0, 1, p["grid"], endpoint=False)
    mono = int(np.sum(np.diff(f(np.append(xs, 1.0))) <= 0))
    ders = dj.gap_endpoint_derivatives(D)
    rho = rotation_number_estimate(f, 0.0, p["rotation_n"])
    res = {"window": D.window, "tracked_gaps": int(len(D.assignment.lengths)),
           "series_total": D.series_total, "truncation_mass": D.assignment.truncation_mass,
           "monotonicity_violations": mono, "rotation_estimate": rho.value,
           "rotation_error_bound": rho.error_bound}
    resid = {"endpoint_derivative": _max(ders - 1), "rotation": abs(rho.value - theta)}
    if p["holder"]:
        omega = dj.omega_eps(p["epsilon"])
        res["holder_estimate"] = dj.holder_norm_estimate(f, omega, seed=ctx["seed"])
        res["holder_threshold"] = 2 / math.sqrt(math.log(p["k"]))
    if p["semiconjugacy"]:
        S = semiconjugacy_to_rotation(f, theta, p["semiconjugacy_n"], 200)
        a, b = D.assignment.gap(0)
        res["central_gap_image_diameter"] = S.image_diameter(a, b)
    rows = [(int(w[0]), pos, ln) for w, pos, ln in D.assignment.table()]
    return res, resid, {"gaps": (["n", "position", "length"], rows)}


def op_denjoy_zd(inp, p, ctx):
    from . import denjoy as dj
    maps = dj.build_denjoy_zd(p["thetas"], p["m"], p["epsilon"], p["delta_truncation"])
    res = {"d": len(maps), "smoothness": dj.zd_smoothness_tag(len(maps), p["epsilon"])}
    resid = {}
    if len(maps) >= 2:
        r, count = dj.commutator_residual(maps[0], maps[1])
        res["checked_gaps"] = count
        resid["commutator"] = r
    return res, resid, {}


def op_denjoy_family(inp, p, ctx):
    from . import denjoy as dj
    rng = np.random.default_rng(ctx["seed"])
    a, b, c = rng.uniform(0.2, 2.0, (3, p["samples"]))
    x = rng.random(p["samples"]) * a
    y1, _ = dj.family_eval("yoccoz", a, b, x)
    y2, _ = dj.family_eval("yoccoz", b, c, y1)
    y3, _ = dj.family_eval("yoccoz", a, c, x)
    _, d12 = dj.family_eval("yoccoz", 1.0, 2.0, np.linspace(0, 1, 100001))
    chk = dj.family_second_derivative_bound_check(p["a"], p["b"])
    return ({"sup_derivative_deviation_1_2": _max(d12 - 1), "second_derivative": chk},
            {"equivariance": _max(y2 - y3)}, {})


# ---------------------------------------------------------------- walks

def op_walk_stationary(inp, p, ctx):
    from . import walks
    S = _system(inp["system"])
    mu, rep = walks.stationary_measure(S, p["tol"], p["max_iter"], N=p["N"])
    rows = [(i, (i + 0.5) / mu.N, float(w)) for i, w in enumerate(mu.weights)]
    return (rep, {"stationarity": rep["check_residual"]},
            {"stationary": (["bin", "x", "mass"], rows)})


def op_walk_contraction(inp, p, ctx):
    from . import walks
    S = _system(inp["system"])
    seeds = [ctx["seed"] * 100003 + i for i in range(p["seeds"])]
    traces = walks.contraction_traces(S, seeds, p["n"], p["resolution"], ctx["threads"])
    finals = [float(t[-1]) for t in traces]
    good = sum(v <= p["threshold"] for v in finals)
    rows = [(s, k + 1, float(v)) for s, t in zip(seeds, traces) for k, v in enumerate(t)
            if k + 1 in (1, 10, 50, 100, 200, p["n"])]
    return ({"final": finals, "below_threshold": good, "fraction": good / len(finals),
             "constant": finals[0] if len(set(finals)) == 1 else None},
            {}, {"contraction": (["seed", "k", "contr"], rows)})


def op_walk_dirac(inp, p, ctx):
    from . import walks
    S = _system(inp["system"])
    return walks.dirac_limit(S, ctx["seed"], p["n"], eps=p["eps"], N=p["N"]), {}, {}


def op_walk_lyapunov(inp, p, ctx):
    from . import walks
    S = _system(inp["system"])
    mu, rep = walks.stationary_measure(S, p["tol"], N=p["N"])
    est, ci, info = walks.lyapunov_exponent(S, mu, p["n_samples"], ctx["seed"],
                                            paths=p["paths"], path_len=p["path_len"])
    return ({"estimate": est, "ci": list(ci), "ci_below_zero": ci[1] < 0,
             "time_average": info["time_average"]},
            {"stationarity": info["stationarity_residual"]}, {})


def op_walk_ks(inp, p, ctx):
    from . import walks
    S = _system(inp["system"])
    return walks.ks_symmetry_check(S, p["n_steps"], p["samples"], ctx["seed"]), {}, {}


# ---------------------------------------------------------------- moebius

def op_moebius_classify(inp, p, ctx):
    from .moebius import Moebius, classify
    return classify(Moebius(inp["matrix"])), {}, {}


def op_moebius_liouville(inp, p, ctx):
    from . import moebius as mo
    rng = np.random.default_rng(ctx["seed"])
    gc, sym, inv = 0.0, 0.0, 0.0
    for _ in range(p["quadruples"]):
        a, b, c, d = np.sort(rng.random(4))
        L1 = mo.liouville_box_measure(a, b, c, d)
        L2 = mo.liouville_box_measure(b, c, d, a)
        gc = max(gc, abs(math.exp(-L1) + math.exp(-L2) - 1))
        sym = max(sym, abs(L1 - mo.liouville_box_measure(c, d, a, b)))
        f = mo.random_moebius(rng).circle_map()
        img = sorted((float(f(t)) % 1.0, t) for t in (a, b, c, d))
        k = [t for _, t in img].index(a)
        pts = [img[(k + j) % 4][0] for j in range(4)]
        inv = max(inv, abs(mo.liouville_box_measure(*pts) - L1))
    return {"quadruples": p["quadruples"]}, {"gcdos": gc, "symmetry": sym, "invariance": inv}, {}


def op_moebius_cocycle(inp, p, ctx):
    from . import moebius as mo
    rng = np.random.default_rng(ctx["seed"])
    worst = 0.0
    for _ in range(p["pairs"]):
        g1, g2 = (mo.random_moebius(rng, 0.5).circle_map() for _ in range(2))
        worst = max(worst, mo.cocycle_identity_residual(g1, g2, p["N"]))
    return {"pairs": p["pairs"]}, {"cocycle_identity": worst}, {}


def op_moebius_variation(inp, p, ctx):
    from . import moebius as mo
    rng = np.random.default_rng(ctx["seed"])
    worst, rows = 0.0, []
    for i in range(p["elements"]):
        r = mo.moebius_variation(mo.random_moebius(rng, 0.5))
        worst = max(worst, r["residual"])
        rows.append((i, r["V"], r["direct"]))
    return ({"elements": p["elements"]}, {"variation_vs_distance": worst},
            {"variation": (["element", "four_dist", "direct"], rows)})


def op_moebius_schottky(inp, p, ctx):
    from . import moebius as mo
    g0 = mo.hyperbolic_matrix(p["lam"])
    r = mo.rotation_matrix(0.25)
    g1 = r @ g0 @ r.inv()
    w = p["half_width"]
    arc = lambda c: ((c - w) % 1.0, (c + w) % 1.0)
    cl0 = mo.classify(g0)
    cl1 = mo.classify(g1)
    cert = mo.schottky_certificate(g0, g1, arc(cl0["attracting"]), arc(cl1["attracting"]),
                                   arc(cl0["repelling"]), arc(cl1["repelling"]), p["n_check"])
    return {"free_group": cert["free_group"], "free_semigroup": cert["free_semigroup"],
            "arcs": cert["arcs"], "tail": cert["tail"]}, {}, {}


# ---------------------------------------------------------------- markov

def op_markov_middle_thirds(inp, p, ctx):
    from . import markov as mk
    S = mk.middle_thirds_system()
    rows, exact = [], True
    for n in range(1, p["depth"] + 1):
        d = mk.depth_approx(S, n, exact=True)
        exact &= d.total_length == Fraction(2, 3) ** n
        rows.append((n, str(d.total_length)))
    d = mk.depth_approx(S, p["depth"], exact=True)
    return ({"exact": exact, "masses": [r[1] for r in rows]}, {},
            {"intervals": (["word", "left", "right"], d.csv_rows())})


def op_markov_bowen(inp, p, ctx):
    from . import markov as mk
    S = mk.bowen_system(depth_cap=p["depth_cap"])
    est = mk.lebesgue_estimate(S, p["depth"])
    ref = 1 - (math.pi ** 2 / 6 - 1)
    ders = mk.bowen_endpoint_derivatives(S)
    return ({"limit": S.info["measure_limit"], "reference": ref, "upper": est["upper"],
             "warnings": S.info["warnings"]},
            {"limit": abs(S.info["measure_limit"] - ref),
             "endpoint_derivative": _max(ders - 0.5)}, {})


def op_markov_first_return(inp, p, ctx):
    from . import markov as mk
    lam, eta = _frac(p["lam"]), _frac(p["eta"])
    S = mk.affine_first_return(lam, eta)
    rows, ok = [], True
    top = eta * (S.b - S.c)                 # g maps (c, b] onto (a, top]
    m = 0
    while len(rows) < p["branches"] and m < 10**4:
        m += 1
        # branch m: g(x) in (c / lam^m, c / lam^(m-1)], so f is applied m times
        lo, hi = S.c / lam ** m, min(S.c / lam ** (m - 1), top)
        if lo >= hi:
            continue
        x = ((lo + hi) / 2) / eta + S.c
        H, (n, mm), der = mk.first_return(S, x)
        target = eta ** n * lam ** mm
        ok &= der == target and mm == m
        rows.append((n, mm, str(x), str(der), str(target)))
    return ({"exact_match": ok, "branches": len(rows)}, {},
            {"branches": (["n", "m", "x", "derivative", "eta_lambda_power"], rows)})


def op_markov_certificate(inp, p, ctx):
    from . import markov as mk
    S = mk.affine_first_return(_frac(p["lam"]), _frac(p["eta"]))
    return mk.expansion_certificate(S, p["kappa"], p["n_check"], ctx["seed"]), {}, {}


def op_markov_golden(inp, p, ctx):
    from . import markov as mk
    v = mk.golden_threshold()
    ref = math.log((math.sqrt(5) + 1) / 2)
    return {"root": v, "reference": ref}, {"root": abs(v - ref)}, {}


def op_markov_validate(inp, p, ctx):
    from . import markov as mk
    systems = {"middle_thirds": mk.middle_thirds_system, "figure_pair": mk.figure_pair_system}
    if p["system"] not in systems:
        raise JobError(f"unknown Markov system {p['system']!r}")
    return mk.validate(systems[p["system"]]()), {}, {}


# ---------------------------------------------------------------- local

def op_local_formal(inp, p, ctx):
    from .local import GermExpansion, sternberg_formal, formal_residual
    G = GermExpansion(_frac(p["a"]), [_frac(c) for c in p["coeffs"]])
    b = sternberg_formal(G, p["order"])
    res = formal_residual(G, b, p["order"])
    return {"b": [str(v) for v in b]}, {"formal": str(max(abs(v) for v in res))}, {}


def op_local_linearize(inp, p, ctx):
    from . import local as lo
    from .errors import ConvergenceError
    g = _real_map(inp["germ"])[0]
    a = float(_frac(p["a"]))
    try:
        L = lo.sternberg_linearize(g, a, p["delta"], p["tol"])
    except ConvergenceError as e:
        if not p["diagnose"]:
            raise
        return ({"converged": False, "diagnostic": e.report.get("diagnostic"),
                 "report": {k: v for k, v in e.report.items() if k != "diagnostic"}}, {}, {})
    res = {"converged": True, "terms": L.terms, "delta": L.delta}
    resid = {"conjugacy": L.residual()}
    if inp.get("expansion"):
        G = lo.GermExpansion(_frac(p["a"]), [_frac(c) for c in inp["expansion"]])
        b = [float(v) for v in lo.sternberg_formal(G, p["order"])]
        xs = np.linspace(-0.05, 0.05, 41)
        poly = xs + sum(c * xs ** (i + 2) for i, c in enumerate(b))
        err = np.abs(L(xs) - poly)
        nz = xs != 0
        resid["formal_over_x^(order+1)"] = float(np.max(err[nz] / np.abs(xs[nz]) ** (p["order"] + 1)))
    rows = [(float(x), float(v)) for x, v in zip(np.linspace(-L.delta, L.delta, 201),
                                                 L(np.linspace(-L.delta, L.delta, 201)))]
    return res, resid, {"conjugacy": (["x", "h"], rows)}


def op_local_szekeres(inp, p, ctx):
    from . import local as lo
    f, df, finv = _real_map(inp["map"])
    F = lo.szekeres_field(f, df, p["b"], f_inv=finv, y_min=p["y_min"], grid=p["grid"])
    top = float(F.f_inv(np.array([p["b"]]))[0])
    ys = np.linspace(top / 50, top * 0.98, p["flow_points"])
    flow = max(abs(lo.flow_time(F, y, 1.0) - float(f(np.array([y]))[0])) for y in ys)
    cent = 0.0
    top2 = float(F.f_inv(np.array([top]))[0])         # f(f(y)) <= b keeps flows inside
    for t in (0.25, 0.5, 0.75):
        for y in np.linspace(top2 / 50, top2 * 0.98, 10):
            a = lo.flow_time(F, float(f(np.array([y]))[0]), t)
            b = float(f(np.array([lo.flow_time(F, y, t)]))[0])
            cent = max(cent, abs(a - b))
    xs = np.linspace(0, p["b"], 201)
    rows = [(float(x), float(r)) for x, r in zip(xs, F.rho(xs))]
    info = {k: v for k, v in F.info.items()
            if k not in ("equivariance_residual", "normalization_residual", "table_error")}
    return (info, {"equivariance": F.info["equivariance_residual"],
                   "normalization": F.info["normalization_residual"],
                   "flow_time_one": flow, "centralizer": cent},
            {"field": (["x", "rho"], rows)})


def op_local_schwarzian(inp, p, ctx):
    from . import local as lo
    f = _line_map(inp["map"])
    xs = np.linspace(p["lo"], p["hi"], p["points"])
    S = lo.schwarzian(f, xs)
    res = {"max": float(S.max()), "min": float(S.min())}
    resid = {}
    if inp.get("compose_with"):
        g = _line_map(inp["compose_with"])
        resid["cocycle"] = _max(lo.schwarzian_cocycle_residual(f, g, xs))
        resid["log_derivative_cocycle"] = _max(lo.log_derivative_cocycle_residual(f, g, xs))
    return res, resid, {}


# ---------------------------------------------------------------- registry

def _op(fn, inputs=(), optional=(), **defaults):
    return {"fn": fn, "inputs": set(inputs), "optional": set(optional), "defaults": defaults}


OPS = {
    "rotnum": {
        "estimate": _op(op_rotnum_estimate, ["map"], n=10**6, x0=0.0),
        "rational": _op(op_rotnum_rational, ["map"], q_max=50, tol=1e-12),
        "convergents": _op(op_rotnum_convergents, theta=GOLDEN, count=10),
        "variation": _op(op_rotnum_variation, ["map"], levels=12),
        "koksma": _op(op_rotnum_koksma, ["map"], psi="cos", k_max=8, samples=100),
        "subadditivity": _op(op_rotnum_subadditivity, ["map"], n=10**4, points=10),
        "minimal_set": _op(op_rotnum_minimal_set, ["maps"], x0=0.0, depth=10**4, resolution=1000),
    },
    "conjugacy": {
        "semiconjugacy": _op(op_conjugacy_semiconjugacy, ["map"], rho=None, n_max=2000, grid=1000),
    },
    "thompson": {
        "relators": _op(op_thompson_relators),
        "compose": _op(op_thompson_compose, ["a", "b"]),
        "abelianization": _op(op_thompson_abelianization, ["a"]),
        "rotation": _op(op_thompson_rotation, ["a"], q_max=256),
        "farey": _op(op_thompson_farey, ["a"]),
        "gaps": _op(op_thompson_gaps, s=1.5, depth=3),
        "suite": _op(op_thompson_suite, words=500, max_len=12, pairs=200, farey=100),
    },
    "denjoy": {
        "build": _op(op_denjoy_build, theta=None, k=100, epsilon=1.0, delta_truncation=1e-6,
                     family="yoccoz", grid=10**5, rotation_n=10**5, holder=True,
                     semiconjugacy=True, semiconjugacy_n=2000),
        "zd": _op(op_denjoy_zd, thetas=[GOLDEN, math.sqrt(2) - 1], m=3, epsilon=1.0,
                  delta_truncation=1e-4),
        "family": _op(op_denjoy_family, samples=1000, a=1.0, b=1.5),
    },
    "walk": {
        "stationary": _op(op_walk_stationary, ["system"], tol=1e-3, max_iter=20000, N=4096),
        "contraction": _op(op_walk_contraction, ["system"], seeds=100, n=200, resolution=4096,
                           threshold=0.02),
        "dirac": _op(op_walk_dirac, ["system"], n=300, eps=0.01, N=4096),
        "lyapunov": _op(op_walk_lyapunov, ["system"], tol=1e-3, N=4096, n_samples=10**5,
                        paths=20, path_len=2000),
        "ks": _op(op_walk_ks, ["system"], n_steps=10, samples=10**4),
    },
    "moebius": {
        "classify": _op(op_moebius_classify, ["matrix"]),
        "liouville": _op(op_moebius_liouville, quadruples=100),
        "cocycle": _op(op_moebius_cocycle, pairs=20, N=64),
        "variation": _op(op_moebius_variation, elements=20),
        "schottky": _op(op_moebius_schottky, lam=9.0, half_width=0.08, n_check=5),
    },
    "markov": {
        "middle_thirds": _op(op_markov_middle_thirds, depth=8),
        "bowen": _op(op_markov_bowen, depth=12, depth_cap=16),
        "first_return": _op(op_markov_first_return, lam="3/2", eta="6/5", branches=6),
        "certificate": _op(op_markov_certificate, lam="3/2", eta="6/5", kappa=10.0, n_check=1000),
        "golden": _op(op_markov_golden),
        "validate": _op(op_markov_validate, system="figure_pair"),
    },
    "local": {
        "formal": _op(op_local_formal, a="1/2", coeffs=["1"], order=6),
        "linearize": _op(op_local_linearize, ["germ"], ["expansion"], a="1/2", delta=0.1,
                         tol=1e-12, order=6, diagnose=True),
        "szekeres": _op(op_local_szekeres, ["map"], b=0.5, y_min=None, grid=400, flow_points=50),
        "schwarzian": _op(op_local_schwarzian, ["map"], ["compose_with"], lo=0.0, hi=1.0,
                          points=100),
    },
}


def validate_job(job, command=None):
    if not isinstance(job, dict):
        raise JobError("job must be a JSON object")
    extra = set(job) - JOB_KEYS
    if extra:
        raise JobError(f"unknown job fields: {sorted(extra)}")
    cmd = job.get("command", command)
    if cmd not in OPS:
        raise JobError(f"unknown command {cmd!r}")
    if command is not None and cmd != command:
        raise JobError(f"job is for {cmd!r}, not {command!r}")
    op = job.get("op")
    if op not in OPS[cmd]:
        raise JobError(f"unknown op {op!r} for {cmd}; choose from {sorted(OPS[cmd])}")
    spec = OPS[cmd][op]
    inputs = job.get("inputs", {}) or {}
    params = job.get("params", {}) or {}
    if not isinstance(inputs, dict) or not isinstance(params, dict):
        raise JobError("inputs and params must be objects")
    missing = spec["inputs"] - set(inputs)
    if missing:
        raise JobError(f"missing inputs: {sorted(missing)}")
    extra = set(inputs) - spec["inputs"] - spec["optional"]
    if extra:
        raise JobError(f"unknown inputs: {sorted(extra)}")
    extra = set(params) - set(spec["defaults"]) - {"seed"}
    if extra:
        raise JobError(f"unknown params: {sorted(extra)}")
    resolved = dict(spec["defaults"])
    resolved.update({k: v for k, v in params.items() if k != "seed"})
    return cmd, op, inputs, resolved, params.get("seed")


def run_job(job, command=None, seed=None, threads=1):
    """Execute a job dict; returns (exit_code, result_dict, tables)."""
    result = {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    tables = {}
    try:
        cmd, op, inputs, params, job_seed = validate_job(job, command)
        s = seed if seed is not None else (job_seed if job_seed is not None else 0)
        s = int(s)
        if s < 0 or s >= 2**64:
            raise JobError("seed must be an unsigned 64-bit integer")
        result.update({"command": cmd, "op": op, "inputs": inputs, "parameters": params,
                       "seed": s})
        res, resid, tables = OPS[cmd][op]["fn"](inputs, params, {"seed": s, "threads": threads})
        result.update({"results": res, "residuals": resid, "status": "ok"})
        code = 0
    except CircleDynError as e:
        code = e.exit_code if e.exit_code in (2, 3) else 2
        result.update({"status": "error",
                       "error": {"type": type(e).__name__, "message": str(e),
                                 "report": getattr(e, "report", {})}})
        result.setdefault("seed", seed)
    return code, jsonable(result), tables


def dumps(result):
    return json.dumps(result, sort_keys=True, indent=2) + "\n"


def write_outputs(result, tables, out_dir, name):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(dumps(result))
    written = [str(path)]
    for tname, (cols, rows) in sorted(tables.items()):
        p = out / f"{name}.{tname}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in r])
        written.append(str(p))
    return written


def preset_names():
    d = resources.files("circledyn") / "data" / "presets"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def load_preset(name):
    p = resources.files("circledyn") / "data" / "presets" / f"{name}.json"
    if not p.is_file():
        raise JobError(f"unknown preset {name!r}")
    return json.loads(p.read_text())


def build_parser():
    ap = argparse.ArgumentParser(prog="circledyn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sp = sub.add_parser(c, help=f"{c} jobs ({', '.join(sorted(OPS[c]))})")
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--job", help="path to a JSON job file")
        g.add_argument("--preset", help="name of a bundled preset job")
        sp.add_argument("--out", default=None,
                        help=f"output directory (default: ${OUT_ENV} or ./circledyn_out)")
        sp.add_argument("--seed", type=int, default=None, help="seed (unsigned 64-bit)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap")
    sub.add_parser("presets", help="list bundled presets")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for n in preset_names():
            job = load_preset(n)
            print(f"{n}\t{job['command']} {job['op']}")
        return 0
    out_dir = args.out or os.environ.get(OUT_ENV) or "circledyn_out"
    try:
        if args.job:
            job = json.loads(Path(args.job).read_text())
            name = job.get("name") or Path(args.job).stem
        else:
            job = load_preset(args.preset)
            name = job.get("name") or args.preset
    except (OSError, json.JSONDecodeError, JobError) as e:
        result = {"status": "error", "error": {"type": type(e).__name__, "message": str(e)}}
        print(dumps(result), end="")
        return 2
    if args.threads < 1:
        print(dumps({"status": "error", "error": {"type": "JobError",
                                                  "message": "--threads must be >= 1"}}), end="")
        return 2
    code, result, tables = run_job(job, args.command, args.seed, args.threads)
    files = write_outputs(result, tables, out_dir, name)
    summary = {"status": result.get("status"), "exit": code, "files": files}
    if code:
        summary["error"] = result.get("error")
    print(json.dumps(jsonable(summary), sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
