"""Markov systems of interval maps, depth approximations of their limit set,
Bowen's positive-measure example and the expanding first-return map."""
from fractions import Fraction
import itertools
import math

import numpy as np
from scipy import optimize

from .errors import PreconditionError, DomainError, ResourceError


# ---------------------------------------------------------------- maps

class IntervalMap:
    """Increasing map on an open domain (lo, hi) with optional inverse/derivative."""

    def __init__(self, f, domain, derivative=None, inverse=None, name=None):
        self.f = f
        self.domain = domain
        self.derivative = derivative
        self.inverse = inverse
        self.name = name

    def __call__(self, x):
        return self.f(x)

    def deriv(self, x):
        return self.derivative(x)


class AffineMap(IntervalMap):
    """x -> a x + b; exact with Fraction coefficients and scalar Fraction inputs."""

    def __init__(self, a, b, domain=(-math.inf, math.inf), name=None):
        self.a, self.b = a, b
        super().__init__(self._f, domain, self._d, self._inv, name)

    def _f(self, x):
        if isinstance(x, np.ndarray):
            return float(self.a) * x + float(self.b)
        return self.a * x + self.b

    def _d(self, x):
        if isinstance(x, np.ndarray):
            return np.full_like(x, float(self.a), dtype=float)
        return self.a

    def _inv(self, y):
        if isinstance(y, np.ndarray):
            return (y - float(self.b)) / float(self.a)
        return (y - self.b) / self.a

    @property
    def descriptor(self):
        return {"type": "affine", "a": str(self.a), "b": str(self.b)}


class MarkovSystem:
    def __init__(self, intervals, maps, incidence, info=None):
        self.intervals = [tuple(I) for I in intervals]
        self.maps = list(maps)
        self.P = np.asarray(incidence, dtype=int)
        k = len(self.intervals)
        if len(self.maps) != k or self.P.shape != (k, k):
            raise PreconditionError("sizes of intervals, maps and incidence differ")
        self.info = info or {}

    @property
    def k(self):
        return len(self.intervals)

    @property
    def descriptor(self):
        return {"intervals": [[str(a), str(b)] for a, b in self.intervals],
                "maps": [getattr(m, "descriptor", {"name": m.name}) for m in self.maps],
                "incidence": self.P.tolist()}


def _range(g):
    lo, hi = g.domain
    return (float(g(np.array([lo]))[0]), float(g(np.array([hi]))[0]))


def validate(sys, tol=1e-10):
    """Check the Markov conditions; returns {valid, violations}."""
    viol = []
    ranges = [_range(g) for g in sys.maps]
    for i, j in itertools.combinations(range(sys.k), 2):
        (a, b), (c, d) = ranges[i], ranges[j]
        if min(b, d) > max(a, c) - tol:
            viol.append({"condition": "(i)", "maps": [i, j],
                         "detail": "ranges of g_i and g_j intersect"})
    for i, g in enumerate(sys.maps):
        lo, hi = g.domain
        Ii = sys.intervals[i]
        if not (ranges[i][0] - tol <= float(Ii[0]) and float(Ii[1]) <= ranges[i][1] + tol):
            viol.append({"condition": "(ran)", "maps": [i],
                         "detail": "I_i is not contained in the range of g_i"})
        for j, Ij in enumerate(sys.intervals):
            a, b = float(Ij[0]), float(Ij[1])
            if sys.P[i, j]:
                if not (lo < a and b < hi):
                    viol.append({"condition": "(ii)", "maps": [i, j],
                                 "detail": "I_j not inside dom(g_i)"})
                    continue
                pts = np.array([a, 0.5 * (a + b), b])
                img = g(pts)
                if np.any(img < float(Ii[0]) - tol) or np.any(img > float(Ii[1]) + tol):
                    viol.append({"condition": "(ii)", "maps": [i, j],
                                 "detail": "g_i(I_j) not inside I_i"})
            else:
                if b > lo + tol and a < hi - tol:
                    viol.append({"condition": "(ii)", "maps": [i, j],
                                 "detail": "p_ij = 0 but I_j meets dom(g_i)"})
    return {"valid": not viol, "violations": viol}


class DepthApprox:
    def __init__(self, depth, words, left, right):
        self.depth = depth
        self.words = words
        self.left = left
        self.right = right

    @property
    def intervals(self):
        return list(zip(self.left, self.right))

    @property
    def total_length(self):
        if self.left and isinstance(self.left[0], Fraction):
            return sum((r - l for l, r in zip(self.left, self.right)), Fraction(0))
        return float(np.sum(np.asarray(self.right, float) - np.asarray(self.left, float)))

    def csv_rows(self):
        return [("".join(str(i + 1) for i in w), float(l), float(r))
                for w, l, r in zip(self.words, self.left, self.right)]


def admissible_count(sys, n):
    if n == 0:
        return 1
    return int(np.linalg.matrix_power(sys.P, n - 1).sum())


def depth_approx(sys, n, exact=False, budget=2**22, check=True):
    """Intervals g_{i_1} ... g_{i_{n-1}}(I_{i_n}) over admissible words of length n.

    Depth 0 is the convex hull of the I_i.  With ``exact`` the maps must accept
    scalar Fractions (affine maps) and the computation is done in rational
    arithmetic.
    """
    if n < 0:
        raise PreconditionError("depth must be >= 0")
    if n == 0:
        lo = min(I[0] for I in sys.intervals)
        hi = max(I[1] for I in sys.intervals)
        return DepthApprox(0, [()], [lo], [hi])
    if admissible_count(sys, n) > budget:
        raise ResourceError("number of admissible words exceeds the budget")
    conv = (lambda v: Fraction(v)) if exact else float
    words = [(i,) for i in range(sys.k)]
    L = [conv(I[0]) for I in sys.intervals]
    R = [conv(I[1]) for I in sys.intervals]
    prev = None
    for level in range(2, n + 1):
        nw, nL, nR = [], [], []
        if not exact:
            Larr, Rarr = np.array(L), np.array(R)
        first = np.array([w[0] for w in words])
        for i, g in enumerate(sys.maps):
            sel = np.nonzero(sys.P[i, first])[0]
            if len(sel) == 0:
                continue
            if exact:
                nL += [g(L[s]) for s in sel]
                nR += [g(R[s]) for s in sel]
            else:
                nL += list(g(Larr[sel]))
                nR += list(g(Rarr[sel]))
            nw += [(i,) + words[s] for s in sel]
        prev = (words, L, R)
        words, L, R = nw, nL, nR
    out = DepthApprox(n, words, L, R)
    if check:
        _check_depth(out, prev)
    return out


def _check_depth(d, prev, tol=1e-10):
    exact = d.left and isinstance(d.left[0], Fraction)
    t = 0 if exact else tol
    order = sorted(range(len(d.left)), key=lambda i: d.left[i])
    for a, b in zip(order, order[1:]):
        if d.right[a] > d.left[b] + t:
            raise DomainError("depth intervals overlap: system is not Markov")
    if prev is not None:
        pw, pL, pR = prev
        idx = {w: i for i, w in enumerate(pw)}
        for w, l, r in zip(d.words, d.left, d.right):
            j = idx[w[:-1]]
            if l < pL[j] - t or r > pR[j] + t:
                raise DomainError("depth intervals are not nested")


# ---------------------------------------------------------------- examples

def middle_thirds_system():
    third = Fraction(1, 3)
    dom = (-0.1, 1.1)
    g1 = AffineMap(third, Fraction(0), dom, "x/3")
    g2 = AffineMap(third, Fraction(2, 3), dom, "x/3+2/3")
    return MarkovSystem([(Fraction(0), third), (Fraction(2, 3), Fraction(1))], [g1, g2],
                        [[1, 1], [1, 1]])


def figure_pair_system():
    """A contraction f fixing 0 and g fixing 1 with disjoint images [0, 0.4] and [0.5, 1]."""
    dom = (-0.05, 1.05)
    f = IntervalMap(lambda x: x / (1 + 1.5 * x), dom, lambda x: 1 / (1 + 1.5 * x) ** 2,
                    lambda y: y / (1 - 1.5 * y), "x/(1+3x/2)")
    g = IntervalMap(lambda x: 1 - (1 - x) / (2 - x), dom, lambda x: 1 / (2 - x) ** 2,
                    None, "1-(1-x)/(2-x)")
    return MarkovSystem([(0.0, 0.4), (0.5, 1.0)], [f, g], [[1, 1], [1, 1]])


def _series_sum(ell, N=10**5):
    """sum_{n>=0} ell(n): direct head plus an integral/Euler-Maclaurin tail."""
    from scipy import integrate
    n = np.arange(N, dtype=float)
    head = float(np.sum(ell(n)))
    tail, _ = integrate.quad(lambda s: float(ell(np.array([s]))[0]), N, np.inf,
                             limit=200, epsabs=1e-16, epsrel=1e-13)
    h = 1e-2
    d1 = float((ell(np.array([N + h])) - ell(np.array([N - h])))[0]) / (2 * h)
    return head + tail + 0.5 * float(ell(np.array([float(N)]))[0]) - d1 / 12


class BowenMaps:
    """The two maps of Bowen's example truncated at level D.

    Level-n cells J_w (|w| = n) have length L_n = (1 - S_n)/2^n with
    S_n = l_0 + ... + l_{n-1}; the gap inside J_w has length l_n/2^n.  g_i maps
    J_w onto J_{iw} and the gap G_w onto G_{iw}; on gaps it is half of a
    Yoccoz map, so its derivative at every tracked gap endpoint is exactly 1/2.
    Level-D cells are mapped the same way (J_w -> J_{iw}), which smooths the
    corners at the truncation depth; there g_i' deviates from 1/2 by O(l_D).
    """

    def __init__(self, ell_values, D):
        self.D = D
        self.ell = np.asarray(ell_values[: D + 2], dtype=float)
        S = np.concatenate([[0.0], np.cumsum(self.ell)])
        self.L = np.array([(1 - S[n]) / 2 ** n for n in range(D + 2)])
        self.gap = np.array([self.ell[n] / 2 ** n for n in range(D + 2)])

    def address(self, x):
        """Digits (0/1, shape N x D), gap level (or -1) and offset inside the piece."""
        x = np.asarray(x, dtype=float)
        N = len(x)
        digits = np.zeros((N, self.D), dtype=np.int8)
        left = np.zeros(N)
        level = np.full(N, -1)
        active = np.ones(N, dtype=bool)
        for j in range(1, self.D + 1):
            r = x - left
            in_first = r < self.L[j]
            in_gap = (~in_first) & (r < self.L[j] + self.gap[j - 1])
            gap_now = active & in_gap
            level[gap_now] = j - 1
            active &= ~in_gap
            second = active & ~in_first
            digits[second, j - 1] = 1
            left = np.where(second, left + self.L[j] + self.gap[j - 1], left)
            # gap points keep the cell's left end plus L_j as anchor
            left = np.where(gap_now, left + self.L[j], left)
        return digits, level, x - left

    def left_of(self, digits, first):
        """Left end of the cell J_{first, digits}: digits shifted one level down."""
        N, D = digits.shape
        left = np.full(N, first * (self.L[1] + self.gap[0]))
        for j in range(1, D + 1):
            left += digits[:, j - 1] * (self.L[j + 1] + self.gap[j])
        return left

    def make(self, i):
        D = self.D
        start = i * (self.L[1] + self.gap[0])
        end = start + self.L[1]

        def f(x):
            x = np.asarray(x, dtype=float)
            out = np.empty_like(x)
            lo, hi = x < 0, x > 1
            mid = ~(lo | hi)
            out[lo] = start + 0.5 * x[lo]
            out[hi] = end + 0.5 * (x[hi] - 1)
            if np.any(mid):
                dig, lev, off = self.address(x[mid])
                res = np.empty(mid.sum())
                g = lev >= 0
                cell = ~g
                if np.any(cell):
                    base = self.left_of(dig[cell], i)
                    res[cell] = base + _half_yoccoz(self.L[D], self.L[D + 1], off[cell])[0]
                if np.any(g):
                    dg = dig[g].copy()
                    # zero the digits below the gap level (they were not set)
                    base = self.left_of(dg, i)
                    m = lev[g]
                    base = base + self.L[m + 2]
                    a = self.gap[m]
                    b = self.gap[m + 1]
                    v, _ = _half_yoccoz(a, b, off[g])
                    res[g] = base + v
                out[mid] = res
            return out

        def df(x):
            x = np.asarray(x, dtype=float)
            out = np.full_like(x, 0.5)
            mid = (x >= 0) & (x <= 1)
            if np.any(mid):
                dig, lev, off = self.address(x[mid])
                res = _half_yoccoz(self.L[D], self.L[D + 1], off)[1]
                g = lev >= 0
                if np.any(g):
                    m = lev[g]
                    _, d = _half_yoccoz(self.gap[m], self.gap[m + 1], off[g])
                    res[g] = d
                out[mid] = res
            return out

        delta = 0.5 * self.ell[0]
        return IntervalMap(f, (-delta, 1 + delta), df, None, f"bowen_g{i + 1}")


def _half_yoccoz(a, b, u):
    """[0,a] -> [0,b] with derivative 1/2 at both ends: x -> phi_{a,2b}(x)/2."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    u = np.clip(u, 0, a)
    r = a / (2 * b)
    t = np.pi * u / a - np.pi / 2
    v = b + (2 * b / np.pi) * np.arctan(np.tan(t) / r)
    v = np.clip(v, 0, 2 * b) / 2
    s2 = np.sin(t) ** 2
    d = 0.5 / (s2 + r * r * (1 - s2))
    return v, d


def bowen_system(ell=lambda n: 1.0 / (n + 2.0) ** 2, depth_cap=16, name="1/(n+2)^2"):
    """Bowen's Markov pair with |I_{i_1..i_n}| = l_n / 2^n (truncated at depth_cap)."""
    vals = np.array([float(ell(n)) for n in range(depth_cap + 2)])
    if np.any(vals <= 0):
        raise PreconditionError("lengths must be positive")
    total = _series_sum(lambda n: np.asarray(ell(n), dtype=float))
    if total >= 1:
        raise PreconditionError(f"sum of lengths {total:.6g} >= 1")
    far = None
    for N in (10**4, 10**3, 10**2):
        if float(ell(N)) > 0:
            far = float(ell(N + 1)) / float(ell(N))
            break
    warnings = []
    if far is None or abs(far - 1) > 1e-2:
        warnings.append(f"ratio l_(n+1)/l_n does not tend to 1 (~{far} at n = {N})")
    B = BowenMaps(vals, depth_cap)
    g1, g2 = B.make(0), B.make(1)
    I1 = (0.0, B.L[1])
    I2 = (B.L[1] + B.gap[0], 1.0)
    info = {"ell": name, "depth_cap": depth_cap, "series_total": total,
            "measure_limit": 1 - total, "ratio_tail": far, "warnings": warnings,
            "smoothing": "scaled Yoccoz maps on gaps, affine cells at the depth cap",
            "bowen": B}
    return MarkovSystem([I1, I2], [g1, g2], [[1, 1], [1, 1]], info)


def lebesgue_estimate(sys, n):
    d = depth_approx(sys, n)
    upper = d.total_length
    lower = sys.info.get("measure_limit", 0.0)
    return {"upper": float(upper), "lower": float(lower), "depth": n}


def bowen_endpoint_derivatives(sys, levels=None):
    """One-sided derivatives of g_1, g_2 sampled at tracked gap endpoints."""
    B = sys.info["bowen"]
    levels = range(min(B.D, 6)) if levels is None else levels
    xs = []
    for m in levels:
        d = depth_approx(sys, m + 1, check=False) if m >= 0 else None
        for l, r in zip(d.left, d.right):
            xs += [float(r)]  # right end of J_{w1} is a left gap endpoint
    xs = np.array(sorted(set(xs)))[:-1]
    xs = xs[(xs > 0) & (xs < 1)]
    vals = np.concatenate([g.deriv(xs) for g in sys.maps])
    return vals


# ---------------------------------------------------------------- first return

class FirstReturnSystem:
    def __init__(self, a, c, b, f, g, f_inv=None, df=None, dg=None, sup_df=None,
                 V_f=None, V_g=None, b_prime=None):
        self.a, self.c, self.b = a, c, b
        self.f, self.g = f, g
        self.f_inv = f_inv
        self.df, self.dg = df, dg
        self.sup_df = sup_df
        self.V_f, self.V_g = V_f, V_g
        self.b_prime = b_prime
        self._check()

    def _check(self):
        a, c, b = float(self.a), float(self.c), float(self.b)
        xs = np.linspace(a, c, 201)[1:]
        fx = np.array([float(self.f(x)) for x in xs])
        if np.any(np.diff(fx) <= 0) or np.any(fx <= xs):
            raise PreconditionError("f must be increasing with f(x) > x on (a, c]")
        ys = np.linspace(c, b, 201)
        gy = np.array([float(self.g(y)) for y in ys])
        if np.any(np.diff(gy) <= 0) or np.any(gy >= ys):
            raise PreconditionError("g must be increasing with g(x) < x on [c, b]")


def affine_first_return(lam=Fraction(3, 2), eta=Fraction(6, 5)):
    """f(x) = lam x on [0, 1/lam], g(x) = eta (x - 1/lam) on [1/lam, 1]."""
    lam, eta = Fraction(lam), Fraction(eta)
    if eta * (1 - 1 / lam) > 1 / lam:
        raise PreconditionError("need eta (1 - 1/lam) <= 1/lam")
    return FirstReturnSystem(Fraction(0), 1 / lam, Fraction(1),
                             lambda x: lam * x, lambda x: eta * (x - 1 / lam),
                             f_inv=lambda y: y / lam, df=lambda x: lam, dg=lambda x: eta,
                             sup_df=lam, V_f=0.0, V_g=0.0, b_prime=eta * (1 - 1 / lam))


def first_return(S, x, guard=1e-12, max_steps=10**6):
    """H(x) = f^m g^n (x) for x in (c, b]; returns (H(x), (n, m), H'(x))."""
    a, c, b = S.a, S.c, S.b
    if not (c < x <= b):
        raise DomainError("x must lie in (c, b]")
    y, der, n = x, 1, 0
    while y > c:
        der = der * S.dg(y)
        y = S.g(y)
        n += 1
        if n > max_steps:
            raise DomainError("g-orbit did not enter (a, c]")
    m = 0
    while y <= c:
        if abs(float(y) - float(c)) <= guard:
            raise DomainError("x is within the guard of a discontinuity point")
        der = der * S.df(y)
        y = S.f(y)
        m += 1
        if m > max_steps:
            raise DomainError("f-orbit did not leave (a, c]")
    if abs(float(y) - float(c)) <= guard:
        raise DomainError("x is within the guard of a discontinuity point")
    return y, (n, m), der


def _var_log(d, lo, hi, n=2**14):
    xs = np.linspace(float(lo), float(hi), n)
    v = np.log(np.array([float(d(x)) for x in xs]))
    return float(np.sum(np.abs(np.diff(v))))


def expansion_certificate(S, kappa=10.0, n_check=1000, seed=0, max_N=10**6):
    if kappa <= 1:
        raise PreconditionError("kappa must exceed 1")
    a, c, b = float(S.a), float(S.c), float(S.b)
    sup_df = float(S.sup_df) if S.sup_df is not None else \
        max(float(S.df(x)) for x in np.linspace(a, c, 4097))
    Vf = float(S.V_f) if S.V_f is not None else _var_log(S.df, a, c)
    Vg = float(S.V_g) if S.V_g is not None else _var_log(S.dg, c, b)
    q = (1 - 1 / sup_df) * math.exp(Vf + Vg)
    ys = np.linspace(c, b, 4097)
    finv = S.f_inv or (lambda y: optimize.brentq(lambda t: float(S.f(t)) - y, a, c, xtol=1e-15))
    disp = np.array([y - float(finv(y)) for y in ys])
    Cf = float(disp.max() / disp.min())
    report = {"q": q, "sup_df": sup_df, "V_f": Vf, "V_g": Vg, "C_f": Cf, "kappa": kappa}
    if q >= 1:
        report.update({"certified": False, "reason": "criterion quantity q >= 1"})
        return report
    N = 1
    while q ** N * Cf >= 1 / kappa:
        N += 1
        if N > max_N:
            report.update({"certified": False, "reason": "N exceeds max_N"})
            return report
    rng = np.random.default_rng(seed)
    checked, worst = 0, math.inf
    while checked < n_check:
        x = c + (b - c) * (1 - rng.random())
        try:
            d = 1.0
            y = x
            for _ in range(N):
                y, _, dd = first_return(S, y)
                d *= float(dd)
        except DomainError:
            continue
        worst = min(worst, d)
        checked += 1
    report.update({"certified": True, "N": N, "checked": checked,
                   "min_derivative": worst, "verified": worst > kappa})
    return report


def golden_threshold():
    """Root of e^{2V} - e^V - 1 = 0 (the log of the golden number)."""
    return optimize.brentq(lambda v: math.exp(2 * v) - math.exp(v) - 1, 0.1, 2.0,
                           xtol=1e-15, rtol=1e-15)
