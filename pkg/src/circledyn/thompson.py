"""Thompson's groups F and G as reduced pairs of dyadic trees.

A tree is the set of binary-string addresses of its internal vertices; a leaf
with address w stands for the standard dyadic interval [0.w, 0.w + 2^-|w|].
An element is stored as the list of (domain leaf, range leaf) pairs in
domain left-to-right order.  Composition ``a * b`` means "apply b, then a".
"""
from fractions import Fraction
import bisect
import math

import numpy as np

from .errors import PreconditionError, DomainError
from .maps import pl_map, frac_str, _frac


def leaves(internal):
    if not internal:
        return [""]
    out = []
    for w in internal:
        for c in "01":
            if w + c not in internal:
                out.append(w + c)
    return sorted(out)


def interval(w):
    den = 2 ** len(w)
    left = Fraction(int(w, 2) if w else 0, den)
    return left, left + Fraction(1, den)


def encode_tree(internal, w=""):
    if w not in internal:
        return ""
    return "(" + encode_tree(internal, w + "0") + ")" + encode_tree(internal, w + "1")


def decode_tree(s):
    internal = set()
    pos = 0

    def parse(w):
        nonlocal pos
        if pos < len(s) and s[pos] == "(":
            internal.add(w)
            pos += 1
            parse(w + "0")
            if s[pos] != ")":
                raise PreconditionError("malformed tree string")
            pos += 1
            parse(w + "1")

    parse("")
    if pos != len(s):
        raise PreconditionError("malformed tree string")
    return frozenset(internal)


def _tree_of(leafset):
    internal = set()
    for w in leafset:
        for i in range(len(w)):
            internal.add(w[:i])
    return frozenset(internal)


class TreePair:
    """Element of F (flavor 'F') or G (flavor 'G')."""

    def __init__(self, pairs, flavor="G", reduce=True):
        pairs = [(str(a), str(b)) for a, b in pairs]
        self.flavor = flavor
        if reduce:
            pairs = _reduce(pairs)
        self.pairs = tuple(pairs)
        self._check()

    # -- structure
    def _check(self):
        dom = [p[0] for p in self.pairs]
        rng = sorted(p[1] for p in self.pairs)
        if dom != leaves(_tree_of(dom)) or rng != leaves(_tree_of(rng)):
            raise PreconditionError("pairs do not describe two finite dyadic trees")
        n = len(dom)
        r = self.offset
        for i, (_, v) in enumerate(self.pairs):
            if rng[(i + r) % n] != v:
                raise PreconditionError("leaf bijection does not preserve the cyclic order")
        if self.flavor == "F" and r != 0:
            raise PreconditionError("flavor F must send first leaf to first leaf")

    @property
    def domain(self):
        return _tree_of([p[0] for p in self.pairs])

    @property
    def range(self):
        return _tree_of([p[1] for p in self.pairs])

    @property
    def offset(self):
        rng = sorted(p[1] for p in self.pairs)
        return rng.index(self.pairs[0][1])

    def __len__(self):
        return len(self.pairs)

    def __eq__(self, other):
        return isinstance(other, TreePair) and self.pairs == other.pairs

    def __hash__(self):
        return hash(self.pairs)

    def __repr__(self):
        return f"TreePair({self.flavor}, {list(self.pairs)})"

    def is_identity(self):
        return self.pairs == (("", ""),)

    # -- group operations
    def __mul__(self, other):
        return compose(self, other)

    def inverse(self):
        pairs = sorted((b, a) for a, b in self.pairs)
        return TreePair(pairs, self.flavor)

    def __pow__(self, n):
        if n < 0:
            return self.inverse() ** (-n)
        out = identity(self.flavor)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- realizations
    def pieces(self):
        """Affine pieces (a_n, k_n, c_n): x -> 2^k x + c on [a_n, a_{n+1}] (lift)."""
        out = []
        n = len(self.pairs)
        r = self.offset
        for i, (w, v) in enumerate(self.pairs):
            a0, a1 = interval(w)
            b0, b1 = interval(v)
            if i + r >= n:
                b0, b1 = b0 + 1, b1 + 1
            k = len(w) - len(v)
            c = b0 - Fraction(2) ** k * a0
            out.append((a0, k, c))
        return out

    def eval_lift(self, x):
        """Exact value of the lift at a rational x."""
        x = _frac(x)
        m = math.floor(x)
        t = x - m
        ps = self.pieces()
        j = 0
        for i, (a, _, _) in enumerate(ps):
            if a <= t:
                j = i
        a, k, c = ps[j]
        return Fraction(2) ** k * t + c + m

    def breakpoints(self):
        return [p[0] for p in self.pieces()] + [Fraction(1)]

    def to_pl_map(self):
        ps = self.pieces()
        xs = [p[0] for p in ps] + [Fraction(1)]
        ys = [self.eval_lift(x) for x in xs[:-1]] + [self.eval_lift(0) + 1]
        return PLMap(xs, [p[1] for p in ps], ys, self.offset)

    def circle_map(self):
        pl = self.to_pl_map()
        m = pl_map(list(zip(pl.breakpoints, pl.values)))
        m.descriptor = self.descriptor()
        return m

    def descriptor(self):
        dom_leaves = [p[0] for p in self.pairs]
        rng_leaves = sorted(p[1] for p in self.pairs)
        perm = [rng_leaves.index(v) for _, v in self.pairs]
        return {"type": "thompson", "flavor": self.flavor,
                "domain": encode_tree(self.domain), "range": encode_tree(self.range),
                "perm": perm}

    @staticmethod
    def from_descriptor(d):
        dom = leaves(decode_tree(d["domain"]))
        rng = leaves(decode_tree(d["range"]))
        if len(dom) != len(rng) or sorted(d["perm"]) != list(range(len(dom))):
            raise PreconditionError("bad permutation array")
        return TreePair([(w, rng[j]) for w, j in zip(dom, d["perm"])], d.get("flavor", "G"))


class PLMap:
    def __init__(self, breakpoints, slope_exponents, values, offset=0):
        self.breakpoints = breakpoints
        self.slope_exponents = slope_exponents
        self.values = values
        self.offset = offset

    @property
    def slopes(self):
        return [Fraction(2) ** k for k in self.slope_exponents]

    def as_dict(self):
        return {"breakpoints": [frac_str(x) for x in self.breakpoints],
                "slopes": [frac_str(s) for s in self.slopes],
                "values": [frac_str(v) for v in self.values], "offset": self.offset}


def identity(flavor="G"):
    return TreePair([("", "")], flavor)


def _reduce(pairs):
    pairs = list(pairs)
    changed = True
    while changed:
        changed = False
        n = len(pairs)
        for i in range(n - 1):
            (w0, v0), (w1, v1) = pairs[i], pairs[i + 1]
            if (w0 and w1 and w0[:-1] == w1[:-1] and w0[-1] == "0" and w1[-1] == "1"
                    and v0 and v1 and v0[:-1] == v1[:-1] and v0[-1] == "0" and v1[-1] == "1"):
                pairs[i:i + 2] = [(w0[:-1], v0[:-1])]
                changed = True
                break
    return pairs


def _split(pairs, idx):
    w, v = pairs[idx]
    return pairs[:idx] + [(w + "0", v + "0"), (w + "1", v + "1")] + pairs[idx + 1:]


def _expand(pairs, target, side, order):
    """Germinate until every vertex of ``target`` is internal on the given side."""
    for u in sorted(target, key=order):
        for i, p in enumerate(pairs):
            if p[side] == u:
                pairs = _split(pairs, i)
                break
    return pairs


_ORDERS = {"breadth": lambda s: (len(s), s),   # level by level
           "depth": lambda s: s}               # preorder: prefixes sort first


def compose(a, b, strategy="breadth"):
    """a * b: apply b first.  Both refinement strategies give the same normal form."""
    if a.flavor != b.flavor:
        raise PreconditionError("flavor mismatch")
    U = set(b.range) | set(a.domain)
    key = _ORDERS[strategy]
    bp = _expand(list(b.pairs), U, 1, key)
    ap = _expand(list(a.pairs), U, 0, key)
    amap = dict(ap)
    out = [(w, amap[v]) for w, v in bp]
    return TreePair(out, a.flavor)


def abelianization(a):
    if a.flavor != "F":
        raise DomainError("abelianization is defined here for flavor F")
    (w0, v0), (w1, v1) = a.pairs[0], a.pairs[-1]
    return (len(w0) - len(v0), len(w1) - len(v1))


# ---------------------------------------------------------------- generators

def gen_f(flavor="F"):
    """Generator with slopes 1/2, 1, 2 on [0,1/2], [1/2,3/4], [3/4,1]."""
    return TreePair([("0", "00"), ("10", "01"), ("11", "1")], flavor)


def gen_g(flavor="F"):
    """Identity on [0,1/2], then slopes 1/2, 1, 2 on [1/2,3/4], [3/4,7/8], [7/8,1]."""
    return TreePair([("0", "0"), ("10", "100"), ("110", "101"), ("111", "11")], flavor)


def dyadic_rotation(p, q):
    """x -> x + p/2^q as an element of G."""
    n = 2 ** q
    ls = [format(i, f"0{q}b") if q else "" for i in range(n)]
    p %= n
    return TreePair([(ls[i], ls[(i + p) % n]) for i in range(n)], "G")


def commutator(a, b):
    return a * b * a.inverse() * b.inverse()


def relators():
    f, g = gen_f(), gen_g()
    fi = f.inverse()
    gi = g.inverse()
    r1 = commutator(f * gi, fi * g * f)
    r2 = commutator(f * gi, fi * fi * g * f * f)
    return r1, r2


def random_tree(rng, n_leaves):
    leafs = [""]
    internal = set()
    while len(leafs) < n_leaves:
        i = int(rng.integers(len(leafs)))
        w = leafs.pop(i)
        internal.add(w)
        leafs += [w + "0", w + "1"]
    return frozenset(internal)


def random_element(rng, max_leaves=16, flavor="G"):
    n = int(rng.integers(1, max_leaves + 1))
    d = leaves(random_tree(rng, n))
    r = leaves(random_tree(rng, n))
    off = int(rng.integers(n)) if flavor == "G" else 0
    return TreePair([(d[i], r[(i + off) % n]) for i in range(n)], flavor)


def random_word(rng, max_len=12):
    L = int(rng.integers(0, max_len + 1))
    return [(int(rng.integers(2)), int(rng.choice([-1, 1]))) for _ in range(L)]


def word_element(word, flavor="F"):
    gens = [gen_f(flavor), gen_g(flavor)]
    out = identity(flavor)
    for i, e in word:
        out = out * (gens[i] if e > 0 else gens[i].inverse())
    return out


# ------------------------------------------------ independent PL evaluation route

def _pl_points(a):
    ps = a.pieces()
    return [(p[0], p[1], p[2]) for p in ps]


def pl_eval(points, x):
    """Evaluate an affine-piece list at exact x (lift)."""
    m = math.floor(x)
    t = x - m
    j = 0
    for i, (a, _, _) in enumerate(points):
        if a <= t:
            j = i
    a, k, c = points[j]
    return Fraction(2) ** k * t + c + m


def word_pl_values(word, xs, flavor="F"):
    """Apply a word letter by letter (rightmost letter first) to exact dyadic points.

    All values stay dyadic, so they are carried as integer numerators over a
    common power of two large enough for every letter (exact arithmetic).
    """
    gens = [gen_f(flavor), gen_g(flavor)]
    tabs = {(i, e): _pl_points(gens[i] if e > 0 else gens[i].inverse())
            for i in (0, 1) for e in (-1, 1)}
    xs = [Fraction(x) for x in xs]
    if any(x.denominator & (x.denominator - 1) for x in xs):
        return [_word_pl_fraction(tabs, word, x) for x in xs]
    K = max(x.denominator for x in xs).bit_length() + len(word) + 8
    one = 1 << K
    scaled = {key: ([int(a * one) for a, _, _ in pts], [k for _, k, _ in pts],
                    [int(c * one) for _, _, c in pts]) for key, pts in tabs.items()}
    out = []
    for x in xs:
        y = int(x * one)
        for i, e in reversed(word):
            A, Ks, C = scaled[(i, e)]
            m, t = divmod(y, one)
            j = bisect.bisect_right(A, t) - 1
            k = Ks[j]
            if k >= 0:
                v = t << k
            else:
                v, r = divmod(t, 1 << -k)
                if r:
                    return [_word_pl_fraction(tabs, word, x) for x in xs]
            y = v + C[j] + m * one
        out.append(Fraction(y, one))
    return out


def _word_pl_fraction(tabs, word, x):
    y = Fraction(x)
    for i, e in reversed(word):
        y = pl_eval(tabs[(i, e)], y)
    return y


# ---------------------------------------------------------------- rotation numbers in G

def rotation_number_exact(a, q_max=256):
    """Exact rational rotation number of a G element, or None beyond q_max."""
    if a.flavor != "G":
        raise DomainError("rotation numbers are defined for flavor G")
    if q_max < 1:
        raise PreconditionError("q_max must be >= 1")
    base = a.pieces()
    power = identity("G")
    y0 = Fraction(0)
    for q in range(1, q_max + 1):
        power = power * a
        y0 = pl_eval(base, y0)               # true lift iterate F^q(0)
        ps = power.pieces()
        shift = pl_eval(ps, Fraction(0)) - y0  # integer normalization difference
        xs = [p[0] for p in ps] + [Fraction(1)]
        disp = [pl_eval(ps, x) - shift - x for x in xs]
        lo, hi = min(disp), max(disp)
        p = math.ceil(lo)
        if p <= hi:
            # exact fixed point of F^q - p on a piece
            for (x0, d0), (x1, d1) in zip(zip(xs, disp), zip(xs[1:], disp[1:])):
                if (d0 - p) * (d1 - p) <= 0:
                    pt = x0 if d0 == p else x0 + (p - d0) * (x1 - x0) / (d1 - d0)
                    break
            return {"rho": Fraction(p, q) % 1, "q": q, "p": p, "periodic_point": pt}
    return None


# ---------------------------------------------------------------- Farey realization

def farey_interval(w):
    a, b, c, d = 0, 1, 1, 1
    for ch in w:
        m, n = a + c, b + d
        if ch == "0":
            c, d = m, n
        else:
            a, b = m, n
    return (a, b, c, d)


def gamma(w):
    a, b, c, d = farey_interval(w)
    return ((c - a, a), (d - b, b))


def _mat_mul(A, B):
    return ((A[0][0] * B[0][0] + A[0][1] * B[1][0], A[0][0] * B[0][1] + A[0][1] * B[1][1]),
            (A[1][0] * B[0][0] + A[1][1] * B[1][0], A[1][0] * B[0][1] + A[1][1] * B[1][1]))


def _mat_inv(A):
    (p, q), (r, s) = A
    return ((s, -q), (-r, p))


def mobius_eval(A, x):
    (p, q), (r, s) = A
    return Fraction(p * x + q, 1) / (r * x + s)


def mobius_deriv(A, x):
    (p, q), (r, s) = A
    det = p * s - q * r
    return Fraction(det, 1) / (r * x + s) ** 2


def farey_realization(a):
    """Piecewise PSL(2,Z) map gamma_J o gamma_I^{-1} on each Farey leaf interval."""
    pieces = []
    for w, v in a.pairs:
        M = _mat_mul(gamma(v), _mat_inv(gamma(w)))
        fa, fb, fc, fd = farey_interval(w)
        pieces.append({"domain": (Fraction(fa, fb), Fraction(fc, fd)), "matrix": M,
                       "image": tuple(Fraction(x, y) for x, y in
                                      (farey_interval(v)[:2], farey_interval(v)[2:]))})
    return pieces


def farey_c1_residuals(pieces):
    """Exact differences of one-sided derivatives at every breakpoint (wrap included)."""
    res = []
    n = len(pieces)
    for i in range(n):
        L, R = pieces[i], pieces[(i + 1) % n]
        xl = L["domain"][1]
        xr = R["domain"][0]
        dl = mobius_deriv(L["matrix"], xl)
        dr = mobius_deriv(R["matrix"], xr)
        # continuity of values (mod 1) as a sanity check
        vl = mobius_eval(L["matrix"], xl) % 1
        vr = mobius_eval(R["matrix"], xr) % 1
        if vl != vr:
            raise PreconditionError("Farey pieces are not continuous")
        res.append(dl - dr)
    return res


def farey_dict(pieces):
    return [{"domain": [frac_str(p["domain"][0]), frac_str(p["domain"][1])],
             "matrix": [list(r) for r in p["matrix"]]} for p in pieces]


# ---------------------------------------------------------------- Ghys-Sergiescu

class DegreeTwoLift:
    """Increasing H with H(x + 1) = H(x) + 2 and H(0) = 0."""

    def __init__(self, H, check=True, tol=1e-10):
        self.H = H
        if check:
            xs = np.linspace(-1.5, 1.5, 301)
            h = np.array([H(x) for x in xs])
            if abs(H(0.0)) > tol:
                raise PreconditionError("H(0) must vanish")
            if np.max(np.abs(np.array([H(x + 1) for x in xs]) - h - 2)) > tol:
                raise PreconditionError("H(x+1) = H(x) + 2 violated")
            if np.any(np.diff(h) <= 0):
                raise PreconditionError("H must be increasing")

    def __call__(self, x):
        return self.H(x)

    def inv(self, y):
        m = math.floor(y / 2)
        t = y - 2 * m
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.H(mid) < t:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi) + m

    def power(self, x, k):
        for _ in range(abs(k)):
            x = self.H(x) if k > 0 else self.inv(x)
        return x


def sine_lift(s):
    """H(x) = 2x - (s / 2 pi) sin(2 pi x); two fixed points in a fundamental domain iff s > 1."""
    return DegreeTwoLift(lambda x: 2 * x - s / (2 * math.pi) * math.sin(2 * math.pi * x))


def phi_translation(H, c, x):
    """Phi_H(T_c)(x) = H^{-q} T_p H^q (x) for dyadic c = p / 2^q."""
    c = Fraction(c)
    q = int(math.log2(c.denominator))
    return H.power(H.power(x, q) + c.numerator, -q)


def ghys_sergiescu_eval(a, H, x):
    """Phi_H(a)(x) for a G element a (lift evaluation)."""
    x = float(x)
    m = math.floor(x)
    t = x - m
    ps = a.pieces()
    bs = [phi_translation(H, p[0], 0.0) for p in ps]
    j = 0
    for i, b in enumerate(bs):
        if b <= t:
            j = i
    _, k, c = ps[j]
    return phi_translation(H, c, H.power(t, k)) + m


def phiH_minimal_gaps(H, depth):
    """Components of Hbar^{-k}(I), k = 0..depth, where I is the arc between the
    fixed points 0 < b of H.  Returns a dict with one list of arcs per level."""
    # fixed points of H in (0, 1)
    xs = np.linspace(1e-9, 1 - 1e-9, 4001)
    d = np.array([H(x) - x for x in xs])
    roots = []
    for i in range(len(xs) - 1):
        if d[i] == 0 or d[i] * d[i + 1] < 0:
            lo, hi = xs[i], xs[i + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if (H(mid) - mid > 0) == (d[i] > 0):
                    lo = mid
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    if not roots:
        return {"regime": "dense", "levels": []}
    a, b = 0.0, roots[0]
    levels = [[(a, b)]]
    cur = [(a, b)]
    for _ in range(depth):
        nxt = []
        for u, v in cur:
            for m in (0, 1):
                lo, hi = H.inv(u + m), H.inv(v + m)
                nxt.append((lo % 1.0, lo % 1.0 + (hi - lo)))
        nxt.sort()
        levels.append(nxt)
        cur = nxt
    for lev in levels:
        for (u0, v0), (u1, v1) in zip(lev, lev[1:]):
            if v0 > u1 + 1e-15:
                raise PreconditionError("preimage arcs overlap")
    return {"regime": "exceptional", "fixed_points": [a, b], "levels": levels,
            "lengths": [sum(v - u for u, v in lev) for lev in levels]}
