"""Rotation and translation numbers, convergents, semiconjugacies, variation,
crossed elements and a heuristic minimal-set classifier."""
from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np

from .errors import (InvalidMapError, DomainError, PreconditionError,
                     CapabilityError)


@dataclass(frozen=True)
class RotationNumber:
    value: float
    error_bound: float
    exact: Fraction = None

    def as_dict(self):
        return {"value": self.value, "error_bound": self.error_bound,
                "exact": None if self.exact is None else str(self.exact)}


def rotation_number_estimate(f, x0=0.0, n=10**6, validate=True):
    """frac((F^n(x0) - x0)/n) with the almost-subadditivity bound 2/n.

    The orbit is kept in [0,1) and integer parts are counted separately so
    precision does not degrade with n.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    if validate:
        f.validate()
    step = f.step
    x0 = float(x0)
    k0 = math.floor(x0)
    x = x0 - k0
    turns = 0
    for _ in range(n):
        y = step(x)
        k = math.floor(y)
        turns += k
        x = y - k
    if not math.isfinite(x):
        raise InvalidMapError("orbit left the reals")
    disp = turns + (x - (x0 - k0))
    v = (disp / n) % 1.0
    return RotationNumber(float(v), 2.0 / n)


def displacement(f, x, n):
    """F^n(x) - x computed with integer bookkeeping (scalar x)."""
    step = f.step
    k0 = math.floor(x)
    y = x - k0
    base = y
    turns = 0
    for _ in range(n):
        z = step(y)
        k = math.floor(z)
        turns += k
        y = z - k
    return turns + (y - base)


def _disp_table(f, xs, q):
    y = np.asarray(xs, dtype=float)
    for _ in range(q):
        y = f(y)
    return y - xs


def rotation_number_rational(f, q_max=50, tol=1e-12, grid=2048, return_point=False):
    """Smallest q <= q_max (and p) with F^q(x) - x - p vanishing somewhere.

    Returns a Fraction in [0,1) or None.  With ``return_point`` the periodic
    point located by bisection is returned as well.
    """
    if q_max < 1:
        raise PreconditionError("q_max must be >= 1")
    f.validate()
    xs = np.linspace(0.0, 1.0, grid + 1)
    if f.breakpoints is not None:
        xs = np.union1d(xs, np.asarray(f.breakpoints, dtype=float) % 1.0)
    for q in range(1, q_max + 1):
        d = _disp_table(f, xs, q)
        lo, hi = d.min(), d.max()
        cands = [p for p in range(math.ceil(lo - tol), math.floor(hi + tol) + 1)]
        if not cands:
            continue
        p = cands[0]
        g = d - p
        i = int(np.argmin(np.abs(g)))
        if abs(g[i]) <= tol:
            pt = xs[i]
        else:
            j = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)[0]
            if len(j) == 0:
                continue
            a, b = xs[j[0]], xs[j[0] + 1]
            ga = g[j[0]]
            while b - a > tol:
                m = 0.5 * (a + b)
                gm = _disp_table(f, np.array([m]), q)[0] - p
                if np.sign(gm) == np.sign(ga) and gm != 0:
                    a, ga = m, gm
                else:
                    b = m
            pt = 0.5 * (a + b)
        r = Fraction(p, q) % 1
        return (r, float(pt)) if return_point else r
    return (None, None) if return_point else None


@dataclass(frozen=True)
class ContinuedFraction:
    theta: float
    convergents: list = field(default_factory=list)

    @property
    def q(self):
        return [c[1] for c in self.convergents]


def _dist(x):
    return np.abs(x - np.rint(x))


def convergents(theta, count=10, scan_limit=10**4):
    """Best-approximation denominators q_1 = 1 < q_2 < ... of theta.

    Computed with the continued-fraction recursion on the exact binary value of
    ``theta`` and cross-checked against a brute-force record scan for
    q <= scan_limit.
    """
    theta = float(theta)
    if not 0 < theta < 1:
        raise DomainError("theta must lie in (0,1)")
    x = Fraction(theta)
    # continued fraction expansion
    h2, h1, k2, k1 = 0, 1, 1, 0
    out = []
    while True:
        a = math.floor(x)
        h2, h1 = h1, a * h1 + h2
        k2, k1 = k1, a * k1 + k2
        if k1 <= 10**6 and abs(theta - h1 / k1) <= 1e-15:
            raise DomainError(f"theta is numerically rational (~{h1}/{k1})")
        if out and out[-1][1] == k1:
            out[-1] = (h1, k1)
        else:
            out.append((h1, k1))
        if len(out) > count and out[-1][1] > scan_limit:
            break
        frac = x - a
        if frac == 0:
            raise DomainError("theta is rational")
        x = 1 / frac
    # the first convergent with denominator 1 is the nearest integer
    out = [(round(theta), 1)] + [c for c in out if c[1] > 1]
    qs = np.arange(1, scan_limit + 1)
    d = _dist(qs * theta)
    rec, best = [], np.inf
    for q, v in zip(qs, d):
        if v < best:
            rec.append(int(q))
            best = v
    mine = [c[1] for c in out if c[1] <= scan_limit]
    if mine != rec:
        raise DomainError(f"convergent recursion disagrees with scan: {mine} vs {rec}")
    res = out[:count]
    if res[-1][1] > 10**7:
        raise DomainError("requested convergents exceed double precision")
    return ContinuedFraction(theta, res)


class Semiconjugacy:
    def __init__(self, xs, values, rho, residual, phi):
        self.xs = xs
        self.values = values
        self.rho = rho
        self.residual = residual
        self._phi = phi

    def __call__(self, x):
        return self._phi(x)

    def image_diameter(self, a, b):
        """Length of phi([a, b]) (phi is monotone)."""
        v = self._phi(np.array([a, b], dtype=float))
        return float(v[1] - v[0])


def semiconjugacy_to_rotation(f, rho, n_max=2000, grid=1000, residual_points=200):
    """phi(x) = max_{|n| <= n_max} (F^n(x) - n rho), shifted so phi(0) = 0."""
    if isinstance(rho, RotationNumber):
        if rho.exact is not None:
            raise DomainError("rotation number is rational")
        r = rho.value
    else:
        r = float(rho)

    def raw(x):
        x = np.asarray(x, dtype=float)
        best = x.copy()
        y = x.copy()
        for n in range(1, n_max + 1):
            y = f(y)
            best = np.maximum(best, y - n * r)
        y = x.copy()
        for n in range(1, n_max + 1):
            y = f.inv(y)
            best = np.maximum(best, y + n * r)
        return best

    c0 = float(raw(np.array([0.0]))[0])
    phi = lambda x: raw(x) - c0
    xs = np.linspace(0.0, 1.0, grid, endpoint=False)
    vals = phi(xs)
    xr = np.linspace(0.0, 1.0, residual_points, endpoint=False)
    res = float(np.max(np.abs(phi(f(xr)) - phi(xr) - r)))
    return Semiconjugacy(xs, vals, r, res, phi)


def variation_log_derivative(f, refinement_levels=12, start_level=1):
    """Lower bound for the total variation of log f' over dyadic partitions."""
    if f.derivative is None:
        raise CapabilityError("derivative required")
    best = 0.0
    for L in range(start_level, refinement_levels + 1):
        xs = np.arange(2**L) / 2**L
        ld = np.log(f.deriv(xs))
        v = float(np.sum(np.abs(np.diff(np.append(ld, ld[0])))))
        best = max(best, v)
    return best


def variation(psi, n=2**16):
    """Cyclic total variation of a function on [0,1) sampled on a grid."""
    xs = np.arange(n) / n
    v = np.asarray(psi(xs), dtype=float)
    return float(np.sum(np.abs(np.diff(np.append(v, v[0])))))


def orbit(f, x0, n):
    """Points x0, f(x0), ..., f^{n-1}(x0) reduced mod 1."""
    step = f.step
    out = np.empty(n)
    x = float(x0) % 1.0
    for i in range(n):
        out[i] = x
        y = step(x)
        x = y - math.floor(y)
    return out


def denjoy_koksma_check(f, psi, k, psi_var=None, rho=None, samples=100,
                        birkhoff=10**5, x0=0.1234, seed=0, slack=1e-3,
                        log_derivative=False, V=None):
    """Check |S_{q_k} psi(x) - q_k int psi dmu| <= var(psi) at sample points.

    With ``log_derivative`` the Denjoy inequality exp(-V) <= (f^{q_k})' <= exp(V)
    is checked as well (psi is then log f').
    """
    if rho is None:
        rho = rotation_number_estimate(f, 0.0, 10**6).value
    rho = float(rho)
    if rotation_number_rational(f, q_max=8) is not None:
        raise DomainError("rotation number is rational")
    cf = convergents(rho, max(k, 1) + 1)
    q = cf.q[k - 1]
    if psi_var is None:
        psi_var = variation(psi)
    orb = orbit(f, x0, birkhoff)
    integral = float(np.mean(psi(orb)))
    rng = np.random.default_rng(seed)
    xs = rng.random(samples)
    S = np.zeros(samples)
    y = xs.copy()
    for _ in range(q):
        S += psi(y % 1.0)
        y = f(y)
    dev = np.abs(S - q * integral)
    out = {"q_k": int(q), "k": int(k), "lhs": float(dev.max()), "bound": float(psi_var),
           "integral": integral, "pass": bool(dev.max() <= psi_var + slack)}
    if log_derivative:
        if V is None:
            V = psi_var
        d = np.zeros(samples)
        y = xs.copy()
        for _ in range(q):
            d += np.log(f.deriv(y))
            y = f(y)
        lo, hi = float(d.min()), float(d.max())
        out.update({"log_dfq_min": lo, "log_dfq_max": hi, "V": float(V),
                    "denjoy_pass": bool(-V - 1e-9 <= lo and hi <= V + 1e-9)})
        out["pass"] = out["pass"] and out["denjoy_pass"]
    return out


# ---------------------------------------------------------------- line measures

class LineMeasure:
    """Radon measure on the line: continuous part through a signed cumulative
    function C(x) = v([0,x)) plus optional atoms (optionally 1-periodic)."""

    def __init__(self, cumulative=None, atoms=(), atom_period=None):
        self.cumulative = cumulative
        self.atoms = list(atoms)
        self.atom_period = atom_period

    def _atom_mass(self, a, b):
        """Atomic mass in [a, b) for a <= b."""
        tot = 0.0
        for p, m in self.atoms:
            if self.atom_period:
                P = self.atom_period
                cnt = math.ceil((b - p) / P) - math.ceil((a - p) / P)
                tot += m * cnt
            elif a <= p < b:
                tot += m
        return tot

    def mass(self, a, b):
        """v([a, b)) for a <= b."""
        if b < a:
            raise PreconditionError("need a <= b")
        c = 0.0
        if self.cumulative is not None:
            c = float(self.cumulative(b) - self.cumulative(a))
        return c + self._atom_mass(a, b)


def lebesgue_line():
    return LineMeasure(lambda x: x)


def translation_number(g, v, xs=None, boxes=None, tol=1e-9, spread_tol=1e-8):
    """tau_v(g) with the sign convention v([x,g(x))) / -v([g(x),x))."""
    g.check_monotone()
    if boxes is None:
        boxes = [(-2.3, -0.7), (-0.4, 0.35), (0.1, 1.9), (0.5, 0.75), (1.25, 3.5)]
    for a, b in boxes:
        ga, gb = float(g(a)), float(g(b))
        if abs(v.mass(ga, gb) - v.mass(a, b)) > tol:
            raise PreconditionError("measure is not invariant under g")
    if xs is None:
        xs = np.linspace(-2.1, 2.4, 10)
    vals = []
    for x in xs:
        gx = float(g(x))
        if gx > x:
            vals.append(v.mass(x, gx))
        elif gx < x:
            vals.append(-v.mass(gx, x))
        else:
            vals.append(0.0)
    vals = np.array(vals)
    if vals.max() - vals.min() > spread_tol:
        raise PreconditionError(f"translation number depends on x (spread {vals.max()-vals.min():.3g})")
    return float(np.median(vals))


def _fixed_points(f, lo, hi, n, tol=1e-9):
    xs = np.linspace(lo, hi, n + 1)
    d = f(xs) - xs
    pts = []
    zero = np.abs(d) <= tol
    # exact (grid) zeros, merged into runs
    for i in range(len(xs)):
        if zero[i]:
            pts.append(xs[i])
        elif i + 1 < len(xs) and not zero[i + 1] and d[i] * d[i + 1] < 0:
            a, b = xs[i], xs[i + 1]
            da = d[i]
            for _ in range(80):
                m = 0.5 * (a + b)
                dm = float(f(m) - m)
                if (dm > 0) == (da > 0):
                    a, da = m, dm
                else:
                    b = m
            pts.append(0.5 * (a + b))
    return np.array(sorted(pts)), xs, d


def detect_crossed_elements(f, g, search_grid=4000, window=(-10.0, 10.0), tol=1e-9):
    """Look for an interval [a,b] on which f and g (in some order) are crossed.

    Returns a certificate dict or None.  Absence is only grid-relative.
    """
    for first, second, names in ((f, g, ("f", "g")), (g, f, ("g", "f"))):
        fix, xs, d = _fixed_points(first, window[0], window[1], search_grid, tol)
        if len(fix) < 2:
            continue
        for a, b in zip(fix[:-1], fix[1:]):
            if b - a <= 2 * (window[1] - window[0]) / search_grid:
                continue
            inner = np.linspace(a, b, 64)[1:-1]
            if np.any(np.abs(first(inner) - inner) <= tol):
                continue
            ga, gb = float(second(a)), float(second(b))
            for end, img in (("a", ga), ("b", gb)):
                if a < img < b:
                    cert = _semigroup_witness(first, second, a, b, end)
                    if cert is None:
                        continue
                    cert.update({"interval": [float(a), float(b)],
                                 "roles": {"fixes_endpoints": names[0], "moves_endpoint": names[1],
                                           "endpoint": end}})
                    return cert
    return None


def _semigroup_witness(f, g, a, b, end, max_power=200):
    """Positive ping-pong witness (f^m, g f^n) restricted to a subinterval."""
    mid = 0.5 * (a + b)
    push_down = float(f(mid)) < mid      # f(x) < x on ]a,b[
    if end == "a":
        # want f decreasing points toward a
        F = f if push_down else LineInv(f)
        c = float(g(a))
        dprime = 0.5 * (c + b)
        for n in range(1, max_power):
            h = lambda x, n=n: g(F.power_eval(x, n))
            xs = np.linspace(a, dprime, 2001)
            hx = np.asarray(h(xs), dtype=float)
            dd = hx - xs
            ch = np.nonzero(dd[:-1] * dd[1:] <= 0)[0]
            if len(ch):
                d_fix = xs[ch[0] + 1]
                for m in range(1, max_power):
                    if F.power_eval(d_fix, m) < c:
                        img1 = [float(a), float(F.power_eval(d_fix, m))]
                        img2 = [float(c), float(h(d_fix))]
                        return {"words": [("f" if push_down else "f^-1") + f"^{m}",
                                          "g " + ("f" if push_down else "f^-1") + f"^{n}"],
                                "domain": [float(a), float(d_fix)],
                                "images": [img1, img2],
                                "disjoint": img1[1] < img2[0]}
        return None
    # mirror case: g(b) inside, push points toward b
    F = LineInv(f) if push_down else f
    c = float(g(b))
    dprime = 0.5 * (a + c)
    for n in range(1, max_power):
        h = lambda x, n=n: g(F.power_eval(x, n))
        xs = np.linspace(dprime, b, 2001)
        hx = np.asarray(h(xs), dtype=float)
        dd = hx - xs
        ch = np.nonzero(dd[:-1] * dd[1:] <= 0)[0]
        if len(ch):
            d_fix = xs[ch[-1]]
            for m in range(1, max_power):
                if F.power_eval(d_fix, m) > c:
                    img1 = [float(F.power_eval(d_fix, m)), float(b)]
                    img2 = [float(h(d_fix)), float(c)]
                    return {"words": [("f^-1" if push_down else "f") + f"^{m}",
                                      "g " + ("f^-1" if push_down else "f") + f"^{n}"],
                            "domain": [float(d_fix), float(b)],
                            "images": [img1, img2],
                            "disjoint": img2[1] < img1[0]}
    return None


class LineInv:
    def __init__(self, f):
        self.f = f

    def __call__(self, x):
        return self.f.inv(x)


def _power_eval(F, x, n):
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    for _ in range(n):
        x = np.asarray(F(x), dtype=float)
    return float(x) if scalar else x


LineInv.power_eval = lambda self, x, n: _power_eval(self, x, n)


def _attach_power_eval():
    from .maps import LineMap
    LineMap.power_eval = lambda self, x, n: _power_eval(self, x, n)


_attach_power_eval()


def classify_minimal_set(gens, x0=0.0, depth=10**4, resolution=1000, tol=1e-10):
    """Heuristic trichotomy for the orbit closure of x0 (depth/resolution relative)."""
    if not gens:
        raise PreconditionError("empty generator list")
    report = {"depth": int(depth), "resolution": int(resolution)}
    # finite orbit: breadth-first search with merging
    scale = 1.0 / max(tol, 1e-15)
    key = lambda y: int(round((y % 1.0) * scale)) % int(round(scale))
    frontier = [float(x0) % 1.0]
    seen = {key(frontier[0])}
    inv = [g.inverse() for g in gens]
    cap = 4096
    closed = False
    for _ in range(depth):
        new = []
        for x in frontier:
            for h in list(gens) + inv:
                y = float(h.step(x)) % 1.0
                ky = key(y)
                if not ({ky - 1, ky, ky + 1} & seen):
                    seen.add(ky)
                    new.append(y)
            if len(seen) > cap:
                break
        if not new:
            closed = True
            break
        if len(seen) > cap:
            break
        frontier = new
    if closed:
        report.update({"kind": "FiniteOrbit", "card": len(seen)})
        return report
    if len(gens) == 1:
        # the ball of radius depth is {f^k(x0) : |k| <= depth}
        pts = np.empty(2 * depth + 1)
        pts[0] = float(x0) % 1.0
        for h, off in ((gens[0], 1), (inv[0], depth + 1)):
            x = pts[0]
            for i in range(depth):
                y = h.step(x)
                x = y - math.floor(y)
                pts[off + i] = x
    else:
        # the ball grows exponentially: sample it by a deterministic random word
        pts = np.empty(depth + 1)
        pts[0] = x = float(x0) % 1.0
        maps = list(gens) + inv
        idx = np.random.default_rng(12345).integers(0, len(maps), size=depth)
        for i in range(depth):
            y = maps[idx[i]].step(x)
            x = y - math.floor(y)
            pts[i + 1] = x
    bins = np.bincount(np.minimum((pts * resolution).astype(int), resolution - 1),
                       minlength=resolution)
    if np.all(bins > 0):
        report["kind"] = "Dense"
        return report
    s = np.sort(pts)
    gaps = np.diff(np.append(s, s[0] + 1.0))
    big = np.nonzero(gaps > 2.0 / resolution)[0]
    gl = sorted(([float(s[i]), float((s[i] + gaps[i]) % 1.0), float(gaps[i])] for i in big),
                key=lambda t: -t[2])
    report.update({"kind": "Cantor", "gaps": gl})
    return report
