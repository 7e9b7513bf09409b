"""Circle and line map abstractions plus the JSON descriptor format.

A circle map is stored through a lift F of the real line with
F(x + 1) = F(x) + 1; the circle is parametrized by [0, 1).
"""
from fractions import Fraction
import math

import numpy as np

from .errors import InvalidMapError, CapabilityError, PreconditionError


def _frac(s):
    """Parse "p/q" strings (or numbers) into Fractions."""
    if isinstance(s, Fraction):
        return s
    if isinstance(s, int):
        return Fraction(s)
    if isinstance(s, float):
        return Fraction(s).limit_denominator(10**12)
    return Fraction(str(s))


def frac_str(q):
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _bisect_inverse(F, y, lo, hi, iters=64):
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = F(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


class CircleMap:
    """Orientation preserving circle homeomorphism given by a lift.

    ``lift`` and ``derivative`` act on numpy arrays; ``scalar`` is an optional
    pure-float version of the lift used by the long orbit loops.
    """

    def __init__(self, lift, derivative=None, smoothness="C0", descriptor=None,
                 scalar=None, inverse=None, breakpoints=None, second=None):
        self.lift = lift
        self.derivative = derivative
        self.second = second
        self.smoothness_tag = smoothness
        self.descriptor = descriptor or {"type": "callable"}
        self._scalar = scalar
        self._inverse = inverse
        self.breakpoints = breakpoints

    def __call__(self, x):
        return self.lift(np.asarray(x, dtype=float))

    def step(self, x):
        if self._scalar is not None:
            return self._scalar(x)
        return float(self.lift(np.asarray(x, dtype=float)))

    def deriv(self, x):
        if self.derivative is None:
            raise CapabilityError("map has no derivative")
        return self.derivative(np.asarray(x, dtype=float))

    def inv(self, y):
        y = np.asarray(y, dtype=float)
        if self._inverse is not None:
            return self._inverse(y)
        d0 = float(self.lift(np.array(0.0)))
        return _bisect_inverse(self.lift, y, y - d0 - 1.0, y - d0 + 1.0)

    def inverse(self):
        der = None
        if self.derivative is not None:
            der = lambda y: 1.0 / self.derivative(self.inv(y))
        return CircleMap(self.inv, der, self.smoothness_tag,
                         {"type": "inverse", "map": self.descriptor},
                         inverse=self.lift)

    def compose(self, other):
        """self o other."""
        der = None
        if self.derivative is not None and other.derivative is not None:
            der = lambda x: self.derivative(other.lift(x)) * other.derivative(x)
        s, o = self.step, other.step
        return CircleMap(lambda x: self.lift(other.lift(x)), der,
                         _weakest(self.smoothness_tag, other.smoothness_tag),
                         {"type": "composite", "maps": [self.descriptor, other.descriptor]},
                         scalar=lambda x: s(o(x)),
                         inverse=lambda y: other.inv(self.inv(y)))

    def power(self, m):
        if m == 0:
            return rotation(0.0)
        base = self if m > 0 else self.inverse()
        out = base
        for _ in range(abs(m) - 1):
            out = out.compose(base)
        return out

    def iterate(self, x, n):
        """F^n(x) for n >= 0 (vectorized); negative n uses the inverse."""
        x = np.asarray(x, dtype=float)
        f = self.lift if n >= 0 else self.inv
        for _ in range(abs(n)):
            x = f(x)
        return x

    def validate(self, grid=1025, tol=1e-12):
        xs = np.linspace(-1.0, 1.0, grid)
        fx = self.lift(xs)
        res = np.max(np.abs(self.lift(xs + 1.0) - fx - 1.0) / np.maximum(1.0, np.abs(fx)))
        if res > tol * 10 or not np.all(np.isfinite(fx)):
            raise InvalidMapError(f"lift does not commute with unit translation (residual {res:.3g})")
        if np.any(np.diff(fx) <= 0):
            raise InvalidMapError("lift is not strictly increasing on the sample grid")
        return {"commutation_residual": float(res), "monotone": True}

    def check_derivative(self, n=200, h=1e-6, rtol=1e-5, seed=0):
        """Compare the declared derivative with central differences away from breakpoints."""
        if self.derivative is None:
            raise CapabilityError("map has no derivative")
        rng = np.random.default_rng(seed)
        xs = rng.random(n)
        if self.breakpoints is not None and len(self.breakpoints):
            bp = np.asarray(self.breakpoints, dtype=float) % 1.0
            d = np.abs(((xs[:, None] - bp[None, :]) + 0.5) % 1.0 - 0.5)
            xs = xs[np.min(d, axis=1) > 10 * h]
        fd = (self.lift(xs + h) - self.lift(xs - h)) / (2 * h)
        d = self.derivative(xs)
        err = np.max(np.abs(fd - d) / np.abs(d)) if len(xs) else 0.0
        return bool(np.all(d > 0) and err <= rtol), float(err)


_ORDER = ["C0", "C1", "C1+Holder", "C1+bv", "analytic"]


def _weakest(a, b):
    ka = next((i for i, s in enumerate(_ORDER) if a.startswith(s)), 0)
    kb = next((i for i, s in enumerate(_ORDER) if b.startswith(s)), 0)
    return a if ka <= kb else b


class LineMap:
    """Increasing homeomorphism of the real line."""

    def __init__(self, f, derivative=None, fixed_points=None, inverse=None, descriptor=None):
        self.f = f
        self.derivative = derivative
        self.fixed_points = fixed_points
        self._inverse = inverse
        self.descriptor = descriptor or {"type": "callable"}

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    def inv(self, y, lo=-1e6, hi=1e6):
        if self._inverse is not None:
            return self._inverse(np.asarray(y, dtype=float))
        y = np.asarray(y, dtype=float)
        return _bisect_inverse(self.f, y, np.full_like(y, lo), np.full_like(y, hi), iters=100)

    def compose(self, other):
        der = None
        if self.derivative is not None and other.derivative is not None:
            der = lambda x: self.derivative(other.f(x)) * other.derivative(x)
        return LineMap(lambda x: self.f(other.f(x)), der,
                       inverse=lambda y: other.inv(self.inv(y)))

    def power(self, m):
        if m == 0:
            return LineMap(lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(x),
                           inverse=lambda y: y)
        base = self if m > 0 else LineMap(self.inv, inverse=self.f)
        out = base
        for _ in range(abs(m) - 1):
            out = out.compose(base)
        return out

    def check_monotone(self, lo=-10, hi=10, grid=4001):
        xs = np.linspace(lo, hi, grid)
        if np.any(np.diff(self.f(xs)) <= 0):
            raise InvalidMapError("line map is not strictly increasing on the sample grid")


# ---------------------------------------------------------------- constructors

def rotation(theta):
    theta = float(theta)
    return CircleMap(lambda x: x + theta, lambda x: np.ones_like(x), "analytic",
                     {"type": "rotation", "theta": theta},
                     scalar=lambda x: x + theta, inverse=lambda y: y - theta,
                     second=lambda x: np.zeros_like(x))


def pl_map(points):
    """Piecewise-linear lift through exact points (x_i, y_i) of [0,1] x R.

    Requires x_0 = 0, x_n = 1 and y_n = y_0 + 1.
    """
    pts = [(_frac(a), _frac(b)) for a, b in points]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    if xs[0] != 0 or xs[-1] != 1 or ys[-1] != ys[0] + 1:
        raise PreconditionError("PL lift points must span [0,1] with unit displacement")
    if any(b <= a for a, b in zip(xs, xs[1:])) or any(b <= a for a, b in zip(ys, ys[1:])):
        raise InvalidMapError("PL lift must be strictly increasing")
    fx = np.array([float(v) for v in xs])
    fy = np.array([float(v) for v in ys])
    slopes = np.diff(fy) / np.diff(fx)

    def lift(x):
        k = np.floor(x)
        return np.interp(x - k, fx, fy) + k

    def der(x):
        t = np.asarray(x) - np.floor(x)
        i = np.clip(np.searchsorted(fx, t, side="right") - 1, 0, len(slopes) - 1)
        return slopes[i]

    def inverse(y):
        k = np.floor(y - fy[0])
        return np.interp(y - k, fy, fx) + k

    fxl, fyl = fx.tolist(), fy.tolist()
    nseg = len(fxl) - 1
    import bisect

    def scalar(x):
        k = math.floor(x)
        t = x - k
        i = min(bisect.bisect_right(fxl, t) - 1, nseg - 1)
        return fyl[i] + (t - fxl[i]) * (fyl[i + 1] - fyl[i]) / (fxl[i + 1] - fxl[i]) + k

    desc = {"type": "pl", "points": [[frac_str(a), frac_str(b)] for a, b in pts]}
    m = CircleMap(lift, der, "C1+bv" if nseg > 1 else "analytic", desc, scalar=scalar,
                  inverse=inverse, breakpoints=[float(v) for v in xs[:-1]])
    m.exact_points = pts
    return m


def boshernitzan(l1, l2):
    """Two-slope PL circle map with slopes l1 on [0,a] and l2 on [a,1].

    a = (1 - l2)/(l1 - l2) so the lift gains exactly one unit over [0,1].
    Parameters may be floats or exact "p/q" strings.
    """
    exact = all(isinstance(v, (str, int, Fraction)) for v in (l1, l2))
    if exact:
        L1, L2 = _frac(l1), _frac(l2)
        a = (1 - L2) / (L1 - L2)
        m = pl_map([(0, L2 * (1 - a)), (a, L2 * (1 - a) + L1 * a), (1, 1 + L2 * (1 - a))])
        m.descriptor = {"type": "pl", "points": m.descriptor["points"],
                        "slopes": [frac_str(L1), frac_str(L2)]}
        return m
    l1, l2 = float(l1), float(l2)
    if not (l1 > 1 > l2 > 0 or l2 > 1 > l1 > 0):
        raise PreconditionError("need one slope above 1 and one below")
    a = (1.0 - l2) / (l1 - l2)
    c = l2 * (1.0 - a)

    def scalar(x):
        k = math.floor(x)
        t = x - k
        if t <= a:
            return c + l1 * t + k
        return 1.0 + l2 * (t - a) + k

    def lift(x):
        k = np.floor(x)
        t = x - k
        return np.where(t <= a, c + l1 * t, 1.0 + l2 * (t - a)) + k

    def der(x):
        t = np.asarray(x) - np.floor(x)
        return np.where(t < a, l1, l2)

    def inverse(y):
        k = np.floor(y - c)
        s = y - k
        return np.where(s <= c + l1 * a, (s - c) / l1, a + (s - 1.0) / l2) + k

    return CircleMap(lift, der, "C1+bv", {"type": "pl", "slopes": [l1, l2]},
                     scalar=scalar, inverse=inverse, breakpoints=[0.0, a])


def boshernitzan_rho(l1, l2):
    l1, l2 = float(_frac(l1)), float(_frac(l2))
    return math.log(l1) / (math.log(l1) - math.log(l2))


def from_descriptor(d):
    """Build a map from its JSON descriptor."""
    t = d["type"]
    if t == "rotation":
        return rotation(d["theta"])
    if t == "pl":
        if "points" in d:
            m = pl_map(d["points"])
            m.descriptor = dict(d)
            return m
        return boshernitzan(*d["slopes"])
    if t == "moebius":
        from .moebius import Moebius
        return Moebius(d["matrix"]).circle_map()
    if t == "composite":
        maps = [from_descriptor(x) for x in d["maps"]]
        out = maps[-1]
        for m in reversed(maps[:-1]):
            out = m.compose(out)
        out.descriptor = dict(d)
        return out
    if t == "power":
        m = from_descriptor(d["map"]).power(int(d["n"]))
        m.descriptor = dict(d)
        return m
    if t == "inverse":
        return from_descriptor(d["map"]).inverse()
    if t == "denjoy":
        from .denjoy import build_denjoy
        return build_denjoy(d["theta"], d.get("k", 100), d.get("epsilon", 1.0),
                            d.get("delta", 1e-6)).circle_map()
    if t == "thompson":
        from .thompson import TreePair
        return TreePair.from_descriptor(d).circle_map()
    if t == "perturbed_rotation":
        return perturbed_rotation(d["theta"], d["eps"], d.get("k", 1))
    raise PreconditionError(f"unknown map type {t!r}")


def perturbed_rotation(theta, eps, k=1):
    """Arnold-type family x + theta + eps/(2 pi k) sin(2 pi k x); a diffeomorphism when |eps| < 1."""
    if abs(eps) >= 1:
        raise InvalidMapError("|eps| must be < 1")
    c = eps / (2 * math.pi * k)
    w = 2 * math.pi * k
    return CircleMap(lambda x: x + theta + c * np.sin(w * x),
                     lambda x: 1 + eps * np.cos(w * x), "analytic",
                     {"type": "perturbed_rotation", "theta": theta, "eps": eps, "k": k},
                     scalar=lambda x: x + theta + c * math.sin(w * x),
                     second=lambda x: -eps * w * np.sin(w * x))
