"""Equivariant interval families and truncated Denjoy counterexamples.

Gaps I_w (w in Z^d) are inserted at the rotation orbit points
t_w = sum_j w_j theta_j (mod 1).  Only finitely many gaps are tracked; the
remaining (untracked) length T is spread uniformly in the rotation
coordinate.  Left endpoints sit at

    P(w) = (sum_{tracked v, t_v < t_w} l_v + T t_w) / L,

L being the total length, so positions are exact for tracked gaps up to the
reported truncation mass T / L.
"""
import bisect
import math
from fractions import Fraction

import numpy as np
from scipy import integrate
import mpmath

from .errors import PreconditionError, DomainError, ResourceError
from .maps import CircleMap


# ---------------------------------------------------------------- families

class EquivariantFamily:
    def __init__(self, kind="yoccoz"):
        if kind not in ("yoccoz", "linear"):
            raise PreconditionError("family must be 'yoccoz' or 'linear'")
        self.kind = kind

    def __call__(self, a, b, x):
        return family_eval(self, a, b, x)


def family_eval(family, a, b, x):
    """(phi_{a,b}(x), phi_{a,b}'(x)) for x in [0, a]."""
    kind = family.kind if isinstance(family, EquivariantFamily) else family
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-15 * np.maximum(a, 1)) or np.any(x > a * (1 + 1e-15)):
        raise DomainError("x outside [0, a]")
    if kind == "linear":
        return b * x / a, np.full_like(x, b / a)
    if np.isscalar(a) and np.isscalar(b) and a == b:
        return x.copy(), np.ones_like(x)          # phi_{a,a} = Id exactly
    r = a / b
    t = np.pi * x / a - np.pi / 2
    val = b / 2 + (b / np.pi) * np.arctan(np.tan(t) / r)
    val = np.where(x <= 0, 0.0, np.where(x >= a, b, val))
    s2 = np.sin(t) ** 2
    der = 1.0 / (s2 + r * r * (1 - s2))
    return val, der


def family_second(a, b, x):
    """Closed-form second derivative of the Yoccoz map phi_{a,b}."""
    r = a / b
    t = np.pi * np.asarray(x, dtype=float) / a - np.pi / 2
    s2 = np.sin(t) ** 2
    return -(1 - r * r) * np.sin(2 * t) * (np.pi / a) / (s2 + r * r * (1 - s2)) ** 2


def family_second_derivative_bound_check(a, b, grid=20001, h=None):
    if not 0.5 <= b / a <= 2:
        raise PreconditionError("need 1/2 <= b/a <= 2")
    xs = np.linspace(0, a, grid)
    _, d = family_eval("yoccoz", a, b, xs)
    fd = np.gradient(d, xs[1] - xs[0])
    m = float(np.max(np.abs(fd)))
    bound = 6 * math.pi * abs(b / a - 1) / a
    slack = 1e-6 * (1 + bound)
    return {"max_second": m, "bound": bound, "pass": m <= bound + slack}


# ---------------------------------------------------------------- moduli

class ModulusOfContinuity:
    """omega(s) for kinds holder(tau), lipschitz, omega_eps (s log(1/s)^{1+eps}), log.

    Beyond the point where omega(s)/s would stop decreasing (or omega stop
    increasing) the modulus is continued linearly.
    """

    def __init__(self, kind, param=None):
        self.kind = kind
        self.param = param
        if kind == "omega_eps":
            self.s0 = math.exp(-(1 + param))
        elif kind == "log":
            self.s0 = math.exp(-1.0)
        else:
            self.s0 = 1.0

    def _raw(self, s):
        if self.kind == "holder":
            return s ** self.param
        if self.kind == "lipschitz":
            return s
        if self.kind == "omega_eps":
            return s * np.log(1 / s) ** (1 + self.param)
        if self.kind == "log":
            return 1 / np.log(1 / s)
        if self.kind == "zd":
            d, eps = self.param
            return s ** (1 / d) * np.log(1 / s) ** (1 / d + eps)
        raise PreconditionError(f"unknown modulus {self.kind}")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        s0 = self.s0
        small = np.minimum(s, s0)
        v = self._raw(np.maximum(small, 1e-300))
        if s0 < 1:
            v = np.where(s > s0, self._raw(s0) * s / s0, v)
        return v

    def check(self, n=2000):
        s = np.logspace(-12, math.log10(self.s0), n)
        w = self(s)
        return bool(np.all(np.diff(w) > 0) and np.all(np.diff(w / s) <= 1e-12 * (w / s)[:-1]))


def omega_eps(eps):
    return ModulusOfContinuity("omega_eps", eps)


# ---------------------------------------------------------------- gap lengths

def lengths_1d(k, eps):
    p = 1 + eps / 2
    return lambda n: 1.0 / ((np.abs(n) + k) * np.log(np.abs(n) + k) ** p)


def _lattice_count(d, r):
    """Number of w in Z^d with |w|_1 = r."""
    if r == 0:
        return 1
    return sum(2 ** i * math.comb(d, i) * math.comb(r - 1, i - 1) for i in range(1, d + 1))


def _count_poly(d):
    """Coefficients (in powers of r) of the lattice count for r >= 1."""
    rs = np.arange(1, d + 2)
    vals = [_lattice_count(d, int(r)) for r in rs]
    return np.polyfit(rs, vals, d - 1) if d > 1 else np.array([2.0])


def shell_tail(d, m, p, R):
    """sum_{r > R} N_d(r) / ((r+m)^d log(r+m)^p)  (Euler-Maclaurin + direct head)."""
    K = 4000
    r = np.arange(R + 1, R + 1 + K, dtype=float)
    cnt = np.array([_lattice_count(d, int(x)) for x in r[: min(K, 50)]] +
                   list(np.polyval(_count_poly(d), r[50:])))
    g = lambda s: np.polyval(_count_poly(d), s) / ((s + m) ** d * np.log(s + m) ** p)
    head = float(np.sum(cnt / ((r + m) ** d * np.log(r + m) ** p)))
    A = R + 1 + K
    # integral of g from A to infinity, split into the slowly decaying leading
    # term c s^{d-1}/(s+m)^d ~ c/(s+m) and a fast remainder
    c = _count_poly(d)[0]
    lead = c * math.log(A + m) ** (1 - p) / (p - 1)
    rem = lambda s: g(s) - c / ((s + m) * np.log(s + m) ** p)
    rem_int, _ = integrate.quad(rem, A, np.inf, limit=200, epsabs=1e-15, epsrel=1e-12)
    h = 1e-3 * A
    g1 = (g(A + h) - g(A - h)) / (2 * h)
    em = 0.5 * g(A) - g1 / 12
    return head + lead + rem_int + float(em)


def series_total_1d(k, eps):
    """sum_{n in Z} l_n, by head summation plus the Euler-Maclaurin tail."""
    ell = lengths_1d(k, eps)
    return float(ell(0)) + shell_tail(1, k, 1 + eps / 2, 0)


# ---------------------------------------------------------------- DenjoyMap

class GapAssignment:
    def __init__(self, thetas, index, lengths, untracked, x0=0.0):
        self.thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        self.index = np.asarray(index, dtype=np.int64).reshape(len(lengths), -1)
        self.lengths = np.asarray(lengths, dtype=float)
        self.untracked = float(untracked)
        self.x0 = x0
        self.t = (x0 + self.index @ self.thetas) % 1.0
        order = np.argsort(self.t, kind="stable")
        cum = np.concatenate([[0.0], np.cumsum(self.lengths[order])[:-1]])
        pos = np.empty_like(self.lengths)
        pos[order] = cum + self.untracked * self.t[order]
        self.total = float(self.lengths.sum() + self.untracked)
        self.position = pos / self.total
        self.norm_length = self.lengths / self.total
        self.lookup = {tuple(w): i for i, w in enumerate(self.index.tolist())}

    @property
    def truncation_mass(self):
        return self.untracked / self.total

    def gap(self, w):
        i = self.lookup[tuple(np.atleast_1d(w).tolist())]
        return float(self.position[i]), float(self.position[i] + self.norm_length[i])

    def table(self):
        return [(tuple(w), float(p), float(l)) for w, p, l in
                zip(self.index.tolist(), self.position, self.norm_length)]


class DenjoyMap:
    """Circle map moving gap I_w onto I_{w + e_j} through the chosen family."""

    def __init__(self, assignment, j=0, family="yoccoz", descriptor=None):
        self.assignment = A = assignment
        self.j = j
        self.family = EquivariantFamily(family)
        e = np.zeros(A.index.shape[1], dtype=np.int64)
        e[j] = 1
        src, tgt = [], []
        for i, w in enumerate(A.index.tolist()):
            k = A.lookup.get(tuple((np.array(w) + e).tolist()))
            if k is not None:
                src.append(i)
                tgt.append(k)
        src, tgt = np.array(src), np.array(tgt)
        order = np.argsort(A.position[src], kind="stable")
        src, tgt = src[order], tgt[order]
        sL = A.position[src]
        sR = sL + A.norm_length[src]
        tL = A.position[tgt].copy()
        # lift targets so that they increase (cyclic order is preserved)
        wrap = np.concatenate([[0], np.cumsum(np.diff(tL) < 0)])
        tL = tL + wrap
        tR = tL + A.norm_length[tgt]
        if not (np.all(np.diff(sL) > 0) and np.all(np.diff(tL) > 0) and tR[-1] < tL[0] + 1):
            raise PreconditionError("gap order is inconsistent with the rotation order")
        ext = lambda v: np.concatenate([[v[-1] - 1], v, [v[0] + 1]])
        self.sL, self.sR, self.tL, self.tR = ext(sL), ext(sR), ext(tL), ext(tR)
        self.src, self.tgt = src, tgt
        self._lists = [x.tolist() for x in (self.sL, self.sR, self.tL, self.tR)]
        self.descriptor = descriptor or {"type": "denjoy"}

    # vectorized evaluation ------------------------------------------------
    def _locate(self, x, L, R):
        m = np.floor(x)
        t = x - m
        i = np.searchsorted(L, t, side="right") - 1
        in_gap = t <= R[i]
        return m, t, i, in_gap

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        m, t, i, g = self._locate(x, self.sL, self.sR)
        a = self.sR[i] - self.sL[i]
        b = self.tR[i] - self.tL[i]
        out = np.empty_like(t)
        if np.any(g):
            out[g] = self.tL[i[g]] + _phi(self.family.kind, a[g], b[g], t[g] - self.sL[i[g]])
        ng = ~g
        if np.any(ng):
            ii = i[ng]
            s0, s1 = self.sR[ii], self.sL[ii + 1]
            u0, u1 = self.tR[ii], self.tL[ii + 1]
            out[ng] = u0 + (t[ng] - s0) * (u1 - u0) / (s1 - s0)
        return out + m

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        m, t, i, g = self._locate(x, self.sL, self.sR)
        out = np.empty_like(t)
        a = self.sR[i] - self.sL[i]
        b = self.tR[i] - self.tL[i]
        if np.any(g):
            out[g] = _dphi(self.family.kind, a[g], b[g], t[g] - self.sL[i[g]])
        ng = ~g
        if np.any(ng):
            ii = i[ng]
            out[ng] = (self.tL[ii + 1] - self.tR[ii]) / (self.sL[ii + 1] - self.sR[ii])
        return out

    def inverse_lift(self, y):
        y = np.asarray(y, dtype=float)
        base = self.tL[1]
        m = np.floor(y - base)
        t = y - m
        i = np.searchsorted(self.tL, t, side="right") - 1
        g = t <= self.tR[i]
        out = np.empty_like(t)
        a = self.sR[i] - self.sL[i]
        b = self.tR[i] - self.tL[i]
        if np.any(g):
            out[g] = self.sL[i[g]] + _phi(self.family.kind, b[g], a[g], t[g] - self.tL[i[g]])
        ng = ~g
        if np.any(ng):
            ii = i[ng]
            s0, s1 = self.tR[ii], self.tL[ii + 1]
            u0, u1 = self.sR[ii], self.sL[ii + 1]
            out[ng] = u0 + (t[ng] - s0) * (u1 - u0) / (s1 - s0)
        return out + m

    def scalar(self, x):
        sL, sR, tL, tR = self._lists
        m = math.floor(x)
        t = x - m
        i = bisect.bisect_right(sL, t) - 1
        if t <= sR[i]:
            a, b = sR[i] - sL[i], tR[i] - tL[i]
            return tL[i] + _phi_scalar(self.family.kind, a, b, t - sL[i]) + m
        return tR[i] + (t - sR[i]) * (tL[i + 1] - tR[i]) / (sL[i + 1] - sR[i]) + m

    def circle_map(self):
        A = self.assignment
        bps = np.concatenate([self.sL[1:-1], self.sR[1:-1]]) % 1.0
        cm = CircleMap(self.lift, self.derivative,
                       "C1+omega" if self.family.kind == "yoccoz" else "C0",
                       self.descriptor, scalar=self.scalar, inverse=self.inverse_lift,
                       breakpoints=None)
        cm.denjoy = self
        cm.gap_breakpoints = bps
        return cm

    def source_gaps(self):
        """(left, right, target_left, target_right) of tracked source gaps."""
        return (self.sL[1:-1], self.sR[1:-1], self.tL[1:-1] % 1.0, self.tR[1:-1] % 1.0)


def _phi(kind, a, b, x):
    if kind == "linear":
        return b * x / a
    r = a / b
    t = np.pi * x / a - np.pi / 2
    v = b / 2 + (b / np.pi) * np.arctan(np.tan(t) / r)
    return np.clip(v, 0.0, b)


def _dphi(kind, a, b, x):
    if kind == "linear":
        return b / a
    r = a / b
    s2 = np.sin(np.pi * x / a - np.pi / 2) ** 2
    return 1.0 / (s2 + r * r * (1 - s2))


def _phi_scalar(kind, a, b, x):
    if kind == "linear":
        return b * x / a
    t = math.pi * x / a - math.pi / 2
    v = b / 2 + (b / math.pi) * math.atan(math.tan(t) * b / a)
    return min(max(v, 0.0), b)


# ---------------------------------------------------------------- builders

def _odd_convergent_window(theta, M_max):
    """Largest M with 2M+1 an odd convergent denominator of theta and M <= M_max."""
    fr = Fraction(theta)
    qs = []
    k2, k1 = 1, 0
    while True:
        aa = math.floor(fr)
        k2, k1 = k1, aa * k1 + k2
        if k1 > 2 * M_max + 1:
            break
        qs.append(k1)
        rem = fr - aa
        if rem == 0:
            break
        fr = 1 / rem
    odd = [q for q in qs if q % 2 == 1]
    return (max(odd) - 1) // 2 if odd else 0


def build_denjoy(theta, k=100, epsilon=1.0, delta_truncation=1e-6, family="yoccoz",
                 max_gaps=2 * 10**6):
    """Truncated Denjoy counterexample with rotation number theta.

    Gap n has length 1/((|n|+k) log(|n|+k)^{1+eps/2}).  Tracked gaps are
    |n| <= M where 2M+1 is an odd convergent denominator of theta and
    l_M >= delta; this makes every complementary arc keep its length so the
    glued map is C^1 with derivative exactly 1 off the gaps.
    """
    if k < 3:
        raise PreconditionError("k must be >= 3")
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    from .rotation import convergents
    convergents(theta % 1.0, 3)           # rejects numerically rational angles
    ell = lengths_1d(k, epsilon)
    # largest M with l_M >= delta
    lo, hi = 0, 1
    while ell(hi) >= delta_truncation:
        hi *= 2
        if hi > max_gaps:
            raise ResourceError("delta too small for the memory budget")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ell(mid) >= delta_truncation:
            lo = mid
        else:
            hi = mid
    M = _odd_convergent_window(theta, lo)
    if M < 1:
        raise PreconditionError("delta too large: no usable window")
    n = np.arange(-M, M + 1)
    lens = ell(n)
    T = shell_tail(1, k, 1 + epsilon / 2, M)
    A = GapAssignment([theta], n[:, None], lens, T)
    desc = {"type": "denjoy", "theta": float(theta), "k": k, "epsilon": epsilon,
            "family": family, "delta": delta_truncation}
    D = DenjoyMap(A, 0, family, desc)
    D.window = M
    D.series_total = float(lens.sum() + T)
    return D


def lengths_zd(d, m, eps):
    p = 1 + eps
    return lambda r: 1.0 / ((r + m) ** d * np.log(r + m) ** p)


def check_independent(thetas, maxcoeff=1000, tol=1e-9):
    vec = [mpmath.mpf(float(t)) for t in thetas] + [mpmath.mpf(1)]
    with mpmath.workdps(15):
        rel = mpmath.pslq(vec, tol=tol, maxcoeff=maxcoeff, maxsteps=10**5)
    if rel is not None:
        raise DomainError(f"angles satisfy the integer relation {rel}")


def build_denjoy_zd(thetas, m=3, epsilon=1.0, delta_truncation=1e-5, family="yoccoz",
                    max_gaps=2 * 10**5):
    """d commuting truncated Denjoy maps (one per generator of Z^d)."""
    thetas = [float(t) % 1.0 for t in thetas]
    d = len(thetas)
    if m < max(d - 1, 3):
        raise PreconditionError("need m >= max(d-1, 3)")
    if d == 1:
        # the single-map builder with l_n = 1/((|n|+m) log(|n|+m)^{1+eps})
        D = build_denjoy(thetas[0], m, 2 * epsilon, delta_truncation, family)
        D.descriptor.update({"type": "denjoy_zd", "thetas": thetas, "m": m, "epsilon": epsilon})
        return [D]
    check_independent(thetas)
    ell = lengths_zd(d, m, epsilon)
    R = 0
    while ell(R + 1) >= delta_truncation:
        R += 1
    count = sum(_lattice_count(d, r) for r in range(R + 1))
    if count > max_gaps:
        raise ResourceError("delta too small for the memory budget")
    idx = _l1_ball(d, R)
    lens = ell(np.abs(idx).sum(axis=1))
    T = shell_tail(d, m, 1 + epsilon, R)
    A = GapAssignment(thetas, idx, lens, T)
    maps = []
    for j in range(d):
        desc = {"type": "denjoy_zd", "thetas": thetas, "m": m, "epsilon": epsilon,
                "direction": j, "delta": delta_truncation}
        Dj = DenjoyMap(A, j, family, desc)
        Dj.radius = R
        maps.append(Dj)
    return maps


def _l1_ball(d, R):
    pts = [()]
    for _ in range(d):
        pts = [p + (i,) for p in pts for i in range(-R, R + 1)]
    arr = np.array(pts, dtype=np.int64)
    return arr[np.abs(arr).sum(axis=1) <= R]


def zd_smoothness_tag(d, eps):
    return f"C1+omega, omega(s) = s^(1/{d}) log(1/s)^(1/{d}+{eps})"


# ---------------------------------------------------------------- diagnostics

def commutator_residual(f1, f2):
    """sup over tracked gaps I_w (with w+e1, w+e2, w+e1+e2 tracked) of |f1 f2 - f2 f1|."""
    A = f1.assignment
    e1 = np.eye(A.index.shape[1], dtype=np.int64)[f1.j]
    e2 = np.eye(A.index.shape[1], dtype=np.int64)[f2.j]
    worst = 0.0
    count = 0
    xs_all = []
    for i, w in enumerate(A.index):
        if all(tuple((w + e).tolist()) in A.lookup for e in (e1, e2, e1 + e2)):
            L = A.position[i]
            l = A.norm_length[i]
            xs_all.append(L + l * np.array([0.13, 0.5, 0.77]))
            count += 1
    xs = np.concatenate(xs_all)
    a = f1.lift(f2.lift(xs))
    b = f2.lift(f1.lift(xs))
    worst = float(np.max(np.abs(a - b)))
    return worst, count


def gap_endpoint_derivatives(D):
    L, R, _, _ = D.source_gaps()
    cm = D.circle_map()
    eps = 1e-13
    # evaluate at the endpoints from inside the gaps
    vals = np.concatenate([cm.deriv(L + eps * 0), cm.deriv(R)])
    return vals


def holder_norm_estimate(f, omega, n_pairs=20000, seed=0, hot=None):
    """Max of |f'(x) - f'(y)| / omega(|x - y|) over sampled pairs (a lower bound).

    Pairs are biased toward the largest gaps (``hot`` intervals, taken from a
    Denjoy map when available) and toward small separations.
    """
    if f.derivative is None:
        from .errors import CapabilityError
        raise CapabilityError("derivative required")
    rng = np.random.default_rng(seed)
    if hot is None and hasattr(f, "denjoy"):
        L, R, _, _ = f.denjoy.source_gaps()
        order = np.argsort(-(R - L))[:200]
        hot = list(zip(L[order], R[order]))
    best = 0.0
    pairs = []
    if hot:
        for L, R in hot:
            a = R - L
            xs = L + a * np.linspace(0, 1, 41)
            X, Y = np.meshgrid(xs, xs)
            m = X < Y
            pairs.append((X[m], Y[m]))
            # also pairs straddling the gap endpoints
            seps = a * np.logspace(-3, 1, 25)
            pairs.append((np.full_like(seps, L), L + seps))
            pairs.append((R - seps, np.full_like(seps, R)))
    n = max(n_pairs - sum(len(p[0]) for p in pairs), 1000)
    x = rng.random(n)
    s = 10 ** rng.uniform(-7, -0.5, n)
    pairs.append((x, x + s))
    for X, Y in pairs:
        d = np.abs(Y - X)
        ok = d > 0
        q = np.abs(f.deriv(X[ok]) - f.deriv(Y[ok])) / omega(np.minimum(d[ok], 0.5))
        if len(q):
            best = max(best, float(q.max()))
    return best


def ratio_expression_max(k, eps, n_max=10**5):
    """max_n |l_{n+1}/l_n - 1| / omega_eps(l_n) over |n| <= n_max (unnormalized)."""
    ell = lengths_1d(k, eps)
    n = np.arange(-n_max, n_max + 1)
    a, b = ell(n), ell(n + 1)
    w = omega_eps(eps)(a)
    return float(np.max(np.abs(b / a - 1) / w))


def wandering_check(maps, w0, depth):
    """Images of the tracked gap I_{w0} under positive words of length <= depth."""
    if not isinstance(maps, (list, tuple)):
        maps = [maps]
    d = len(maps)
    A = maps[0].assignment
    w0 = np.atleast_1d(w0).astype(np.int64)
    start = A.gap(w0)
    cms = [m.circle_map() for m in maps]
    seen = {tuple([0] * d): start}
    frontier = [tuple([0] * d)]
    for _ in range(depth):
        nxt = []
        for key in frontier:
            L, R = seen[key]
            for j in range(d):
                k2 = list(key)
                k2[j] += 1
                k2 = tuple(k2)
                if k2 in seen:
                    continue
                img = (float(cms[j](np.array([L]))[0]), float(cms[j](np.array([R]))[0]))
                seen[k2] = img
                nxt.append(k2)
        frontier = nxt
    arcs = sorted(((L % 1.0, R - L) for L, R in seen.values()))
    total = sum(l for _, l in arcs)
    ok = True
    for (s0, l0), (s1, _) in zip(arcs, arcs[1:] + [(arcs[0][0] + 1, 0)]):
        if s0 + l0 > s1 + 1e-15:
            ok = False
    if not ok:
        from .errors import CircleDynError
        raise CircleDynError("wandering images overlap: construction bug")
    return {"words": len(seen), "disjoint": True, "total_length": total,
            "pass": total <= 1.0}
