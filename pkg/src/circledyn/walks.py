"""Random compositions of circle maps: diffusion operator, stationary measures,
contraction coefficients, Dirac limits of the inverse process and Lyapunov
exponents."""
from concurrent.futures import ThreadPoolExecutor
import math

import numpy as np
from scipy import stats

from .errors import PreconditionError, ConvergenceError
from .maps import CircleMap, rotation, from_descriptor
from .measures import CircleMeasure, lebesgue, point_mass_bin
from .moebius import Moebius, hyperbolic_matrix, rotation_matrix


class GeneratorSystem:
    def __init__(self, maps, probs=None, symmetric=False, check=True):
        if not maps:
            raise PreconditionError("need at least one map")
        self.maps = list(maps)
        p = np.full(len(maps), 1.0 / len(maps)) if probs is None else np.asarray(probs, float)
        if len(p) != len(maps) or np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
            raise PreconditionError("probabilities must be positive and sum to 1")
        self.probs = p
        self.symmetric = bool(symmetric)
        if symmetric and check:
            self.inverse_index = self._match_inverses()

    def _match_inverses(self, tol=1e-9):
        xs = np.linspace(0, 1, 33)
        out = []
        for i, g in enumerate(self.maps):
            gx = g(xs)
            found = None
            for j, h in enumerate(self.maps):
                if np.max(np.abs(h(gx) - xs)) < tol and abs(self.probs[i] - self.probs[j]) < 1e-12:
                    found = j
                    break
            if found is None:
                raise PreconditionError(f"map {i} has no inverse with equal probability")
            out.append(found)
        return out

    @property
    def descriptor(self):
        return {"maps": [m.descriptor for m in self.maps], "probs": self.probs.tolist(),
                "symmetric": self.symmetric}

    @classmethod
    def from_descriptor(cls, d):
        return cls([from_descriptor(m) for m in d["maps"]], d.get("probs"), d.get("symmetric", False))

    def word(self, rng, n):
        return rng.choice(len(self.maps), size=n, p=self.probs)


def schottky_system(lam=9.0):
    """Two hyperbolic Moebius maps (axes {0,1/2} and {1/4,3/4}) and their inverses."""
    g0 = hyperbolic_matrix(lam)
    r = rotation_matrix(0.25)
    g1 = r @ g0 @ r.inv()
    gens = [g0, g0.inv(), g1, g1.inv()]
    return GeneratorSystem([g.circle_map() for g in gens], [0.25] * 4, True)


def rotation_system(theta=(math.sqrt(5) - 1) / 2):
    return GeneratorSystem([rotation(theta), rotation(-theta)], [0.5, 0.5], True)


def dense_system(theta=(math.sqrt(5) - 1) / 2, lam=2.0):
    """An irrational rotation together with a hyperbolic map (minimal, no invariant measure)."""
    g = hyperbolic_matrix(lam)
    r = rotation_matrix(theta)
    gens = [r, r.inv(), g, g.inv()]
    return GeneratorSystem([m.circle_map() for m in gens], [0.25] * 4, True)


PRESET_SYSTEMS = {"schottky": schottky_system, "rotation": rotation_system, "dense": dense_system}


# ---------------------------------------------------------------- diffusion

def diffusion_apply(mu, sys):
    w = np.zeros(mu.N)
    atoms = []
    for p, g in zip(sys.probs, sys.maps):
        nu = mu.pushforward(g)
        w += p * nu.weights
        atoms += [(x, p * m) for x, m in nu.atoms]
    return CircleMeasure(w, atoms, normalize=abs(w.sum() + sum(m for _, m in atoms) - 1) > 1e-12)


def diffusion_residual(mu, sys):
    return diffusion_apply(mu, sys).l1(mu)


def stationary_measure(sys, tol=1e-3, max_iter=20000, seeds=None, N=4096, method="cesaro",
                       raise_on_failure=True):
    """Fixed point of the diffusion operator from two initial measures.

    With ``method='cesaro'`` running averages over epochs of doubling length
    are tested (a restarted Cesaro scheme); ``'plain'`` tests the iterates.
    """
    if seeds is None:
        seeds = [lebesgue(N), point_mass_bin(0.1234, N)]
    results = []
    for mu0 in seeds:
        mu = start = mu0
        acc = np.zeros(mu0.N)
        epoch_start, epoch_len = 0, 64
        best = None
        for it in range(1, max_iter + 1):
            acc += mu.weights
            nxt = diffusion_apply(mu, sys)
            if method == "cesaro":
                # average over the current epoch; its residual is exactly
                # |mu_{n+1} - mu_start| / (number of averaged iterates)
                m = it - epoch_start
                cand = CircleMeasure(acc / m, normalize=True)
                res = float(np.sum(np.abs(nxt.weights - start.weights))) / m
            else:
                cand = mu
                res = nxt.l1(mu)
            mu = nxt
            if res <= tol:
                best = (cand, res, it)
                break
            if method == "cesaro" and it - epoch_start == epoch_len:
                epoch_start, epoch_len = it, 2 * epoch_len
                start, acc = mu, np.zeros(mu0.N)
        if best is None:
            report = {"residual": res, "iterations": max_iter}
            if raise_on_failure:
                raise ConvergenceError("stationary measure did not converge", report)
            best = (cand, res, max_iter)
        results.append(best)
    (m1, r1, i1), (m2, r2, i2) = results[0], results[1]
    w = m1.weights
    report = {
        "residuals": [r1, r2],
        "check_residual": diffusion_residual(m1, sys),
        "iterations": [i1, i2],
        "seed_distance": m1.l1(m2),
        "min_bin_mass": float(w.min()),
        "max_atom_candidate": float(w.max()),
        "tol": tol,
        "method": method,
    }
    return m1, report


# ---------------------------------------------------------------- contraction

def _grid_images(h, R):
    u = np.arange(2 * R + 1) / R
    return h(u)


def _contraction_from_images(H, R, tol=1e-12):
    """Smallest eps = j/R such that some K = [u_i, u_i + 1 - eps] has |h(K)| <= eps."""
    lo, hi = 0, R // 2
    while lo < hi:
        j = (lo + hi) // 2
        span = H[R - j:2 * R - j + 1][:R] - H[:R]
        if span.min() <= j / R + tol:
            hi = j
        else:
            lo = j + 1
    return lo / R


def contraction_coefficient(h, resolution=4096):
    """contr(h) on a 1/resolution lattice: smallest eps with an arc J, |J| <= eps,
    |h^{-1}(J)| >= 1 - eps (J is the image of the complementary arc K)."""
    R = int(resolution)
    return _contraction_from_images(_grid_images(h, R), R)


def walk_contraction_trace(sys, seed, n, resolution=4096):
    """contr(h_k) for the forward process h_k = g_k ... g_1, k = 1..n."""
    rng = np.random.default_rng(seed)
    word = sys.word(rng, n)
    R = int(resolution)
    H = np.arange(2 * R + 1) / R
    out = []
    for k in word:
        H = sys.maps[k](H)
        out.append(_contraction_from_images(H, R))
    return np.array(out), word


def contraction_traces(sys, seeds, n, resolution=4096, threads=1):
    run = lambda s: walk_contraction_trace(sys, s, n, resolution)[0]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(run, seeds))
    return [run(s) for s in seeds]


def dirac_limit(sys, seed, n, mu0=None, eps=0.01, N=4096):
    """Push mu0 through h_bar_n = g_1 ... g_n.

    Returns the limit-point estimate (image of the mu0-median), the shortest arc
    carrying 1 - eps of the pushed mass and the mass in the eps-arc around the
    point estimate.
    """
    mu0 = mu0 or lebesgue(N)
    rng = np.random.default_rng(seed)
    word = sys.word(rng, n)
    edges = np.arange(mu0.N + 1) / mu0.N
    pre = edges.copy()
    for k in word:                       # h_bar^{-1} = g_n^{-1} ... g_1^{-1}
        pre = sys.maps[k].inv(pre)
    pre = pre - np.floor(pre[0])
    pushed = CircleMeasure(np.diff(mu0.cdf(pre)), normalize=True)
    x = np.array(mu0.median_point())
    for k in word[::-1]:                 # h_bar(x) = g_1(...(g_n(x)))
        x = sys.maps[k](x)
    point = float(x) % 1.0
    center, length = pushed.smallest_arc(1 - eps)
    mass = pushed.arc_mass(point - eps / 2, point + eps / 2)
    return {"point": point, "arc_center": center, "arc_length": length,
            "mass_in_eps_arc": mass, "concentrated": length <= eps,
            "diagnostic": "no concentration (invariant measure?)" if length > 0.5 else None,
            "word_length": n, "seed": seed}


# ---------------------------------------------------------------- Lyapunov

def lyapunov_exponent(sys, mu, n_samples=10**5, seed=0, boot=1000, paths=20, path_len=2000,
                      stationarity_tol=1e-2):
    res = diffusion_residual(mu, sys)
    if res > stationarity_tol:
        raise PreconditionError(f"measure is not stationary (residual {res:.3g})")
    rng = np.random.default_rng(seed)
    gi = sys.word(rng, n_samples)
    xs = mu.sample(rng, n_samples)
    vals = np.empty(n_samples)
    for k, g in enumerate(sys.maps):
        sel = gi == k
        vals[sel] = np.log(g.deriv(xs[sel]))
    est = float(vals.mean())
    if np.all(vals == vals[0]):
        ci = (float(vals[0]), float(vals[0]))
    else:
        idx = rng.integers(0, n_samples, size=(boot, min(n_samples, 20000)))
        # bootstrap on a fixed-size subsample rescaled to the full sample size
        sub = vals[idx].mean(axis=1)
        spread = (sub - sub.mean()) * math.sqrt(idx.shape[1] / n_samples)
        lo, hi = np.quantile(spread, [0.025, 0.975])
        ci = (est + float(lo), est + float(hi))
    # time averages (1/n) log (h_n)'(x) along independent paths
    tavg = []
    for p in range(paths):
        r = np.random.default_rng([seed, p])
        x = np.array([r.random()])
        s = 0.0
        for k in sys.word(r, path_len):
            g = sys.maps[k]
            s += float(np.log(g.deriv(x))[0])
            x = g(x) % 1.0
        tavg.append(s / path_len)
    return est, ci, {"time_average": float(np.mean(tavg)), "time_average_paths": tavg,
                     "stationarity_residual": res, "n_samples": n_samples, "seed": seed}


def ks_symmetry_check(sys, n_steps=10, samples=10**4, seed=0, x=0.1):
    """Compare log-derivative statistics of forward and inverse products at x."""
    r_fwd, r_inv = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    words = [sys.word(r_fwd, n_steps) for _ in range(samples)]
    words += [sys.word(r_inv, n_steps) for _ in range(samples)]

    def logder(word):
        y = np.array([x])
        s = 0.0
        for k in word:
            g = sys.maps[k]
            s += float(np.log(g.deriv(y))[0])
            y = g(y)
        return s

    fwd = np.array([logder(w) for w in words[:samples]])            # g_n ... g_1
    inv = np.array([logder(w[::-1]) for w in words[samples:]])      # g_1 ... g_n
    ks = stats.ks_2samp(fwd, inv)
    crit = 1.628 * math.sqrt(2.0 / samples)
    return {"statistic": float(ks.statistic), "critical_1pct": crit,
            "pass": bool(ks.statistic < crit), "pvalue": float(ks.pvalue)}
