"""Germs at fixed points: Sternberg linearization (formal and numerical), the
Szekeres vector field of an interval contraction, and derivative cocycles."""
from fractions import Fraction
import math

import numpy as np
from scipy import integrate, interpolate

from .errors import (PreconditionError, DomainError, ConvergenceError,
                     CapabilityError)


# ---------------------------------------------------------------- Sternberg

class GermExpansion:
    def __init__(self, a, higher=(), radius=0.1):
        if not a > 0:
            raise PreconditionError("need g'(0) = a > 0")
        if radius <= 0:
            raise PreconditionError("radius must be positive")
        self.a = a
        self.higher = list(higher)
        self.radius = radius

    @property
    def coeffs(self):
        """[a_1, a_2, ...] with a_1 = a."""
        return [self.a] + self.higher

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return sum(float(c) * x ** (i + 1) for i, c in enumerate(self.coeffs))


def _poly_mul(p, q, r):
    out = [0] * (r + 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            if i + j > r:
                break
            out[i + j] += a * b
    return out


def sternberg_formal(germ, r):
    """Coefficients b_2..b_r of h(x) = x + b_2 x^2 + ... with h(g(x)) = a h(x) to order r."""
    a = germ.a
    if a == 1:
        raise PreconditionError("germ is not hyperbolic (a = 1)")
    g = [0] + list(germ.coeffs) + [0] * r
    g = g[: r + 1]
    # powers of g truncated at degree r
    powers = [[1] + [0] * r, g]
    for j in range(2, r + 1):
        powers.append(_poly_mul(powers[-1], g, r))
    b = [0, 1] + [0] * (r - 1)
    for i in range(2, r + 1):
        Q = sum(b[j] * powers[j][i] for j in range(1, i))
        b[i] = Q / (a - a ** i)
    return b[2:]


def formal_residual(germ, b, r):
    """Coefficients of h(g(x)) - a h(x) up to degree r (all should vanish)."""
    g = ([0] + list(germ.coeffs) + [0] * r)[: r + 1]
    h = [0, 1] + list(b)
    out = [0] * (r + 1)
    p = [1] + [0] * r
    for j in range(1, len(h)):
        p = _poly_mul(p, g, r)
        for i in range(r + 1):
            out[i] += h[j] * p[i]
    for i in range(1, min(len(h), r + 1)):
        out[i] -= germ.a * h[i]
    return out


class Linearization:
    def __init__(self, g, a, delta, terms, increments, converged, diagnostic=None):
        self.g = g
        self.a = a
        self.delta = delta
        self.terms = terms
        self.increments = increments
        self.converged = converged
        self.diagnostic = diagnostic

    def __call__(self, x):
        """h(x) = x + sum_{n < terms} (g(g^n x) - a g^n x) / a^{n+1} = lim g^N(x)/a^N."""
        x = np.asarray(x, dtype=float)
        y = x.copy()
        h = x.copy()
        an = 1.0
        for _ in range(self.terms):
            gy = self.g(y)
            an *= self.a
            h = h + (gy - self.a * y) / an
            y = gy
        return h

    def residual(self, n=2001):
        xs = np.linspace(-self.delta, self.delta, n)
        xs = xs[np.abs(self.g(xs)) <= self.delta]
        return float(np.max(np.abs(self(self.g(xs)) - self.a * self(xs))))


def sternberg_linearize(g, a=None, delta=0.1, tol=1e-12, max_terms=5000, shrink=5, n=2001,
                        derivative=None):
    """Sum the Picard series of psi -> psi o g / a + psi_1 / a on [-delta, delta].

    Starting from psi = 0 the k-th Picard iterate is
    sum_{n<k} psi_1(g^n x) / a^{n+1} with psi_1 = g - a Id, evaluated pointwise.
    If the increments do not contract, delta is halved (up to ``shrink`` times).
    For a > 1 the inverse germ must be supplied by the caller.
    """
    if a is None:
        h = 1e-6
        a = float((g(np.array([h])) - g(np.array([-h])))[0] / (2 * h))
    if abs(a - 1) < 1e-12:
        raise PreconditionError("germ is not hyperbolic (a = 1)")
    if a > 1:
        raise PreconditionError("expanding germ: linearize its inverse")
    last = None
    for attempt in range(shrink + 1):
        xs = np.linspace(-delta, delta, n)
        xs = xs[xs != 0]
        y = xs.copy()
        an = 1.0
        incs = []
        ok = False
        for k in range(max_terms):
            gy = g(y)
            an *= a
            if an < 1e-290:
                break
            inc = float(np.max(np.abs((gy - a * y) / an)))
            incs.append(inc)
            y = gy
            if not np.all(np.isfinite(y)):
                break
            if inc <= tol:
                ok = True
                break
        ratios = np.array(incs[1:]) / np.maximum(np.array(incs[:-1]), 1e-300)
        tail_ratio = float(np.median(ratios[-20:])) if len(ratios) else math.inf
        if ok:
            return Linearization(g, a, delta, k + 1, incs, True)
        last = {"delta": delta, "terms": len(incs), "last_increment": incs[-1] if incs else None,
                "tail_ratio": tail_ratio}
        if tail_ratio < 1 - 1e-3 and attempt == 0 and len(incs) == max_terms:
            break  # contracting but slow: report rather than shrink
        delta /= 2
    last["diagnostic"] = sternberg_divergence_diagnostic(g, a)
    raise ConvergenceError("Picard iteration did not contract after shrinking delta", last)


def sternberg_divergence_diagnostic(g, a, xs=(1e-2, 1e-3, 1e-4), terms=(50, 200, 800)):
    """Candidate conjugators h_N = g^N / a^N at small x for growing N.

    For a linearizable germ h_N(x)/x converges; growth of h_N(x)/x with N (or
    blow-up of the difference quotients near 0) indicates that no Lipschitz
    conjugacy exists.
    """
    out = []
    for N in terms:
        row = []
        for x in xs:
            y, an = x, 1.0
            for _ in range(N):
                y = float(g(np.array([y]))[0])
                an *= a
            if y == 0 or an < 1e-300:
                raise PreconditionError("orbit underflows; use fewer terms")
            row.append(y / an / x)
        out.append(row)
    out = np.array(out)
    growth = out[-1] / out[0]
    diverges = bool(np.all(growth > 1.5) and np.all(np.diff(out, axis=0) > 0))
    return {"terms": list(terms), "points": list(xs), "ratios": out.tolist(),
            "growth": growth.tolist(), "diverges": diverges}


def sternberg_example(a=0.5):
    """g(x) = a x (1 - 1/log|x|), a C^1 germ with g'(0) = a that is not linearizable."""
    def g(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = a * x * (1 - 1 / np.log(np.abs(x)))
        return np.where(x == 0, 0.0, v)
    return g


# ---------------------------------------------------------------- Szekeres

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_X = 0.5 * (_GL_X + 1)
_GL_W = 0.5 * _GL_W


def _bisect_inv(f, y, lo, hi, iters=80):
    lo = np.full_like(y, lo)
    hi = np.full_like(y, hi) if np.ndim(hi) == 0 else np.array(hi, dtype=float)
    for _ in range(iters):
        m = 0.5 * (lo + hi)
        big = f(m) > y
        hi = np.where(big, m, hi)
        lo = np.where(big, lo, m)
    return 0.5 * (lo + hi)


def _newton_inv(f, df, y, iters=8):
    """Solve f(x) = y for an increasing f with f(x) >= x (safeguarded by bisection)."""
    y = np.asarray(y, dtype=float)
    x = y - (f(y) - y)
    for _ in range(iters):
        x = x - (f(x) - y) / df(x)
    bad = ~(np.abs(f(x) - y) <= 1e-15 * np.maximum(1.0, np.abs(y)) * 8)
    if np.any(bad):
        x = np.where(bad, _bisect_inv(f, y, 0.0, y), x)
    return x


class IntervalField:
    def __init__(self, rho, anchor, c, info):
        self._rho = rho
        self.anchor = anchor
        self.c = c
        self.info = info

    def rho(self, x):
        return self._rho(np.atleast_1d(np.asarray(x, dtype=float)))

    def __call__(self, x):
        return self.rho(x)


def szekeres_field(f, df, b=0.9, anchor=None, f_inv=None, y_min=None, table=4001,
                   tail_correction=True, check=True, grid=400):
    """Vector field rho d/dx on [0, b] whose time-1 map is f (f(x) > x on (0, b]).

    rho = c Delta exp(Sigma) with Delta = f - Id, Theta from the averaged
    derivative and Sigma(x) = sum_{n>0} Theta(f^{-n}(x)).  The series is summed
    until f^{-n}(x) <= y_min; the remaining terms are replaced by
    int_0^{y} Theta (1 + Delta'/2) / Delta - Theta(y)/2 (Euler-Maclaurin in the
    orbit index, with dn/dy taken to second order).  By default (``y_min=None``)
    hyperbolic germs are summed until the proven tail bound C y_min <= 1e-8;
    parabolic germs, whose orbits decay like 1/n, stop at y_min = 1e-3 and rely
    on the tail correction.
    """
    xs = np.linspace(0, b, 2001)[1:]
    d = f(xs) - xs
    if np.any(d <= 0):
        raise DomainError("f has a fixed point inside the interval (or f(x) <= x)")
    if f_inv is None:
        f_inv = lambda y: _newton_inv(f, df, y)
    lam = float(df(np.array([0.0]))[0])
    if lam < 1:
        raise PreconditionError("need f'(0) >= 1")
    c = 1.0 if abs(lam - 1) < 1e-12 else math.log(lam) / (lam - 1)

    def delta(x):
        return f(x) - x

    def theta(x):
        x = np.asarray(x, dtype=float)
        D = delta(x)
        pts = x[..., None] + _GL_X * D[..., None]
        avg = (df(pts) * _GL_W).sum(axis=-1)
        return np.log(df(x)) - np.log(avg)

    # cumulative table of int_0^y Theta (1 + Delta'/2)/Delta on geometric panels
    # Lipschitz constant of log f' on [0, b]
    u = np.linspace(0, b, 4001)
    C = float(np.max(np.abs(np.diff(np.log(df(u))) / np.diff(u))))
    if y_min is None:
        y_min = 1e-3 if lam - 1 < 1e-6 or C == 0 else min(1e-3, 1e-8 / C)

    # Theta/Delta loses digits to cancellation for tiny y, so the stretch
    # [0, y_min/1000] is taken as one panel with the integrand frozen at its end
    edges = np.geomspace(y_min * 1e-3, y_min, 61)
    mids = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * _GL_X
    integrand = lambda s: theta(s) * (1 + 0.5 * (df(s) - 1)) / delta(s)
    panels = (integrand(mids) * _GL_W).sum(axis=1) * (edges[1:] - edges[:-1])
    first = float(integrand(edges[:1])[0]) * edges[0]
    cum = first + np.concatenate([[0.0], np.cumsum(panels)])

    def tail(y):
        i = np.clip(np.searchsorted(edges, y) - 1, 0, len(edges) - 2)
        lo = edges[i]
        pts = lo[:, None] + (y - lo)[:, None] * _GL_X
        part = (integrand(pts) * _GL_W).sum(axis=1) * (y - lo)
        return cum[i] + part - 0.5 * theta(y)

    def sigma(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = f_inv(x)
        s = np.zeros_like(x)
        active = y > y_min
        steps = 0
        while np.any(active):
            s[active] += theta(y[active])
            y[active] = f_inv(y[active])
            active = y > y_min
            steps += 1
            if steps > 10**7:
                raise ConvergenceError("Sigma series did not reach the truncation point")
        s += theta(y)          # first term with f^{-n}(x) <= y_min
        if tail_correction:
            s += tail(y)
        return s

    def rho_direct(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = c * delta(x[pos]) * np.exp(sigma(x[pos]))
        return out

    # smooth table of Sigma for repeated evaluation (ODE right-hand sides)
    tx = np.linspace(0, b, table)
    ts = np.concatenate([[0.0], sigma(tx[1:])])
    spline = interpolate.CubicSpline(tx, ts)

    def rho_table(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return c * delta(x) * np.exp(spline(x))

    if anchor is None:
        anchor = 0.5 * float(f_inv(np.array([b]))[0])
    info = {"lambda": lam, "c": c, "lipschitz_log_derivative": C, "y_min": y_min,
            "tail_bound": C * y_min, "tail_bound_met": C * y_min <= 1e-8,
            "tail_correction": tail_correction,
            "domain": [0.0, b], "quadrature": "Gauss-Legendre(24)"}
    field = IntervalField(rho_table, anchor, c, info)
    field.rho_direct = rho_direct
    field.sigma = sigma
    field.f, field.df, field.f_inv, field.b = f, df, f_inv, b
    if check:
        info.update(szekeres_residuals(field, grid))
    return field


def szekeres_residuals(field, grid=400):
    """Equivariance rho(f x) = f'(x) rho(x) and the normalization int_a^{f(a)} ds/rho = 1,
    both evaluated from the series (not the table)."""
    f, df = field.f, field.df
    rho = getattr(field, "rho_direct", field.rho)
    top = float(field.f_inv(np.array([field.b]))[0])
    xs = np.linspace(0, top, grid + 1)[1:]
    r1 = np.abs(rho(f(xs)) - df(xs) * rho(xs))
    a = field.anchor
    fa = float(f(np.array([a]))[0])
    e = np.linspace(a, fa, 17)
    pts = (e[:-1, None] + (e[1:] - e[:-1])[:, None] * _GL_X).ravel()
    vals = (1.0 / rho(pts)).reshape(16, -1)
    val = float(((vals * _GL_W).sum(axis=1) * np.diff(e)).sum())
    table_err = float(np.max(np.abs(field.rho(xs) - rho(xs))))
    return {"equivariance_residual": float(r1.max()), "time_one_integral": val,
            "normalization_residual": abs(val - 1.0), "table_error": table_err}


def flow_time(field, x, t, rtol=1e-12, atol=1e-14):
    """phi^t(x) for dx/dt = rho(x) (DOP853)."""
    if t == 0:
        return float(x)
    if not 0 < x < field.b:
        raise DomainError("x must lie in (0, b)")

    def rhs(_, y):
        return field.rho(np.array([y[0]]))

    def leave_top(_, y):
        return y[0] - field.b
    leave_top.terminal = True

    def leave_bottom(_, y):
        return y[0]
    leave_bottom.terminal = True
    sol = integrate.solve_ivp(rhs, (0.0, t), [float(x)], method="DOP853", rtol=rtol, atol=atol,
                              events=[leave_top, leave_bottom])
    if sol.status == 1:
        raise DomainError("flow line leaves the interval")
    if not sol.success:
        raise ConvergenceError("ODE integration failed", {"message": sol.message})
    return float(sol.y[0, -1])


def linear_field(lam, b=0.9):
    """Exact field log(lam) x d/dx, for comparison."""
    rho = lambda x: math.log(lam) * np.asarray(x, dtype=float)
    fld = IntervalField(rho, 0.5 * b / lam, math.log(lam) / (lam - 1), {"exact": True})
    fld.b = b
    return fld


# ---------------------------------------------------------------- cocycles

def _derivative_of(f):
    """Derivative callable of a CircleMap/LineMap (or a (map, derivative) pair)."""
    if isinstance(f, tuple):
        return f[1]
    if getattr(f, "derivative", None) is not None:
        d = f.derivative
        return lambda x: d(np.asarray(x, dtype=float))
    raise CapabilityError("derivative required")


def _call(f, x):
    return f[0](x) if isinstance(f, tuple) else f(x)


def _central1(F, x, h):
    """Fourth-order central difference F'(x)."""
    return (-F(x + 2 * h) + 8 * F(x + h) - 8 * F(x - h) + F(x - 2 * h)) / (12 * h)


def _log_derivative(f, h):
    d = _derivative_of(f)
    return lambda x: _central1(lambda t: np.log(d(t)), x, h)


def log_derivative_cocycle_residual(f, g, x, h=1e-5):
    """|LD(f o g) - LD(g) - g' LD(f) o g| with LD = (log F')' by fourth-order central differences."""
    x = np.asarray(x, dtype=float)
    df, dg = _derivative_of(f), _derivative_of(g)
    gx = _call(g, x)
    dfg = lambda t: df(_call(g, t)) * dg(t)
    LD_fg = _central1(lambda t: np.log(dfg(t)), x, h)
    LD_g = _log_derivative(g, h)(x)
    LD_f = _log_derivative(f, h)(gx)
    return np.abs(LD_fg - LD_g - dg(x) * LD_f)


def _schwarzian_from_derivative(d, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    d0 = d(x)
    if np.any(np.abs(d0) < 1e-8):
        raise PreconditionError("derivative too small: Schwarzian ill-conditioned")
    d1 = _central1(d, x, h)
    d2 = (-d(x + 2 * h) + 16 * d(x + h) - 30 * d0 + 16 * d(x - h) - d(x - 2 * h)) / (12 * h ** 2)
    return d2 / d0 - 1.5 * (d1 / d0) ** 2


def schwarzian(f, x, h=1e-4):
    """S(f) = f'''/f' - (3/2)(f''/f')^2 from fourth-order central differences of f'."""
    return _schwarzian_from_derivative(_derivative_of(f), x, h)


def schwarzian_cocycle_residual(f, g, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    df, dg = _derivative_of(f), _derivative_of(g)
    S_fg = _schwarzian_from_derivative(lambda t: df(_call(g, t)) * dg(t), x, h)
    S_g = _schwarzian_from_derivative(dg, x, h)
    S_f = _schwarzian_from_derivative(df, _call(g, x), h)
    return np.abs(S_fg - S_g - dg(x) ** 2 * S_f)
