"""PSL(2,R) on the circle: classification, cross-ratios, the Liouville current,
hyperbolic distance, the Liouville cocycle and ping-pong certificates.

Circle points are parametrized by x in [0,1) through z = exp(2 pi i x); the
projective chart is s = tan(pi (x - 1/2)).
"""
import math

import numpy as np
from scipy import integrate

from .errors import PreconditionError, DomainError, CapabilityError
from .maps import CircleMap


class Moebius:
    """Determinant-one real 2x2 matrix modulo sign."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float).reshape(2, 2)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det <= 0:
            raise PreconditionError("matrix must have positive determinant")
        m = m / math.sqrt(det)
        # sign quotient: make the first nonzero entry of the first column positive
        lead = m[0, 0] if abs(m[0, 0]) > 1e-300 else m[1, 0]
        if lead < 0:
            m = -m
        self.m = m

    @property
    def a(self):
        return tuple(self.m.ravel())

    def __matmul__(self, other):
        return Moebius(self.m @ other.m)

    def inv(self):
        a, b, c, d = self.a
        return Moebius([[d, -b], [-c, a]])

    def trace(self):
        return float(self.m[0, 0] + self.m[1, 1])

    def disk(self):
        """Coefficients (alpha, beta) of z -> (alpha z + beta)/(conj(beta) z + conj(alpha))."""
        a, b, c, d = self.a
        alpha = complex(a + d, b - c) / 2
        beta = complex(a - d, -(b + c)) / 2
        return alpha, beta

    def projective(self, s):
        a, b, c, d = self.a
        return (a * s + b) / (c * s + d)

    def circle_map(self):
        alpha, beta = self.disk()
        r = beta / alpha
        arg0 = math.atan2(alpha.imag, alpha.real)

        def lift(x):
            w = 1 + r * np.exp(-2j * np.pi * x)
            return x + (arg0 + np.angle(w)) / np.pi

        def der(x):
            w = alpha + beta * np.exp(-2j * np.pi * x)
            return 1.0 / np.abs(w) ** 2

        def second(x):
            e = np.exp(-2j * np.pi * x)
            w = alpha + beta * e
            n2 = np.abs(w) ** 2
            dn2 = 4 * np.pi * np.imag(np.conj(alpha) * beta * e)
            return -dn2 / n2 ** 2

        def scalar(x):
            w = 1 + r * complex(math.cos(2 * math.pi * x), -math.sin(2 * math.pi * x))
            return x + (arg0 + math.atan2(w.imag, w.real)) / math.pi

        inv = self.inv()
        ia, ib = inv.disk()
        ir = ib / ia
        iarg = math.atan2(ia.imag, ia.real)
        raw_inv = lambda y: y + (iarg + np.angle(1 + ir * np.exp(-2j * np.pi * y))) / np.pi
        shift = round(float(raw_inv(lift(np.array(0.0)))))

        m = CircleMap(lift, der, "analytic",
                      {"type": "moebius", "matrix": self.m.tolist()},
                      scalar=scalar, inverse=lambda y: raw_inv(y) - shift, second=second)
        m.moebius = self
        return m


def rotation_matrix(theta):
    """Matrix acting on the circle as the rotation x -> x + theta."""
    t = -math.pi * theta
    return Moebius([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def hyperbolic_matrix(lam):
    s = math.sqrt(lam)
    return Moebius([[s, 0.0], [0.0, 1.0 / s]])


def random_moebius(rng, scale=1.0):
    while True:
        m = rng.normal(size=(2, 2)) * scale + np.eye(2)
        if np.linalg.det(m) > 0.05:
            return Moebius(m)


def x_to_s(x):
    return np.tan(np.pi * (np.asarray(x, dtype=float) - 0.5))


def s_to_x(s):
    return 0.5 + np.arctan(s) / np.pi


def act_on_circle(M, x, chart="disk"):
    """(image point in [0,1), derivative) of the circle action."""
    f = M.circle_map()
    x = np.asarray(x, dtype=float)
    if chart == "disk":
        return f(x) % 1.0, f.deriv(x)
    y = s_to_x(M.projective(x_to_s(x)))
    return np.asarray(y) % 1.0, f.deriv(x)


def classify(M, tol=1e-10):
    tr = abs(M.trace())
    a, b, c, d = M.a
    if np.allclose(M.m, np.eye(2), atol=tol):
        return {"kind": "Identity", "trace": tr}
    if tr < 2 - tol:
        return {"kind": "Elliptic", "trace": tr}
    # fixed points of s -> (as+b)/(cs+d): c s^2 + (d - a) s - b = 0
    pts = []
    if abs(c) < 1e-14:
        pts.append(0.0)   # s = infinity <-> x = 0
        if abs(d - a) > 1e-14:
            pts.append(float(s_to_x(b / (d - a))))
    else:
        disc = max((d - a) ** 2 + 4 * b * c, 0.0)
        for sgn in (1, -1):
            pts.append(float(s_to_x(((a - d) + sgn * math.sqrt(disc)) / (2 * c))))
    f = M.circle_map()
    fixed = sorted({round(p % 1.0, 14) for p in pts})
    out = {"kind": "Parabolic" if abs(tr - 2) <= tol else "Hyperbolic", "trace": tr,
           "fixed_points": [{"x": p, "derivative": float(f.deriv(p))} for p in fixed]}
    if out["kind"] == "Hyperbolic":
        ds = [q["derivative"] for q in out["fixed_points"]]
        out["attracting"] = out["fixed_points"][int(np.argmin(ds))]["x"]
        out["repelling"] = out["fixed_points"][int(np.argmax(ds))]["x"]
    return out


# ---------------------------------------------------------------- cross ratio / Lv

def cross_ratio(a, b, c, d):
    """(z_a - z_c)(z_b - z_d) / ((z_a - z_d)(z_b - z_c)) for z = exp(2 pi i x).

    Positive for cyclically ordered points.
    """
    z = [np.exp(2j * np.pi * np.asarray(t, dtype=float)) for t in (a, b, c, d)]
    den = (z[0] - z[3]) * (z[1] - z[2])
    num = (z[0] - z[2]) * (z[1] - z[3])
    if np.any(np.abs(den) < 1e-300) or np.any(np.abs(num) < 1e-300):
        raise DomainError("coincident points")
    val = np.real(num / den)
    return float(val) if np.ndim(val) == 0 else val


def _cyclic_lift(a, b, c, d):
    a = a % 1.0
    b2 = a + (b - a) % 1.0
    c2 = a + (c - a) % 1.0
    d2 = a + (d - a) % 1.0
    if not (a < b2 < c2 < d2 < a + 1):
        raise PreconditionError("points must satisfy a < b < c < d < a cyclically")
    return a, b2, c2, d2


def liouville_density(x, y):
    return np.pi ** 2 / np.sin(np.pi * (x - y)) ** 2


def liouville_box_measure(a, b, c, d, method="closed-form"):
    """Lv([a,b] x [c,d]) for a < b < c < d < a cyclically (points in [0,1))."""
    a, b, c, d = _cyclic_lift(a, b, c, d)
    if method == "closed-form":
        return float(math.log(cross_ratio(a, b, c, d)))
    val, err = integrate.dblquad(lambda y, x: liouville_density(x, y), a, b, c, d,
                                 epsabs=1e-12, epsrel=1e-12)
    return float(val)


def liouville_infinite(a, b, c):
    """Lv([a,b[ x ]b,c]) is infinite: adjacent arcs touch at b."""
    return math.inf


# ---------------------------------------------------------------- hyperbolic geometry

def hyperbolic_distance(P, Q):
    P, Q = complex(P), complex(Q)
    if abs(P) >= 1 or abs(Q) >= 1:
        raise DomainError("points must lie in the open disk")
    t = abs(P - Q) / abs(1 - P.conjugate() * Q)
    return 2 * math.atanh(t)


def moebius_variation(M, cross_check=True, levels=18):
    alpha, beta = M.disk()
    O_image = beta / alpha.conjugate()
    V = 4 * hyperbolic_distance(0, O_image)
    out = {"V": V}
    if cross_check:
        from .rotation import variation_log_derivative
        est = variation_log_derivative(M.circle_map(), levels, start_level=levels)
        out.update({"direct": est, "residual": abs(est - V)})
    return out


# ---------------------------------------------------------------- Liouville cocycle

def lv_jacobian(f, r, s):
    """Jacobian of the diagonal action of f with respect to Lv at (r, s)."""
    fr, fs = f(r), f(s)
    return (np.sin(np.pi * (r - s)) ** 2 / np.sin(np.pi * (fr - fs)) ** 2
            * f.deriv(r) * f.deriv(s))


def cocycle_value(g, r, s):
    """c(g)(r,s) = 1 - Jac(g^{-1})(r,s)^{1/2}."""
    if g.derivative is None:
        raise CapabilityError("derivative required")
    return 1.0 - np.sqrt(lv_jacobian(g.inverse(), r, s))


def psi_apply(g, K, r, s):
    """(Psi(g) K)(r,s) = K(g^{-1} r, g^{-1} s) Jac(g^{-1})(r,s)^{1/2}."""
    gi = g.inverse()
    return K(gi(r), gi(s)) * np.sqrt(lv_jacobian(gi, r, s))


def _grid(N, w):
    x = (np.arange(N) + 0.5) / N
    R, S = np.meshgrid(x, x, indexing="ij")
    d = np.abs(((R - S) + 0.5) % 1.0 - 0.5)
    return R, S, d > w


class TorusGridFunction:
    def __init__(self, values, mask, N, w, symmetric=True):
        self.values = values
        self.mask = mask
        self.N = N
        self.w = w
        self.symmetric = symmetric

    def lv_norm(self):
        x = (np.arange(self.N) + 0.5) / self.N
        R, S = np.meshgrid(x, x, indexing="ij")
        dens = liouville_density(R[self.mask], S[self.mask])
        return float(np.sqrt(np.sum(self.values[self.mask] ** 2 * dens) / self.N ** 2))


def liouville_cocycle(g, N=128, w=None):
    if N < 64:
        raise PreconditionError("grid must have N >= 64")
    if w is None:
        w = 4.0 / N
    R, S, mask = _grid(N, w)
    vals = np.where(mask, cocycle_value(g, R, np.where(mask, S, S + 0.5)), 0.0)
    return TorusGridFunction(vals, mask, N, w)


def cocycle_identity_residual(g1, g2, N=64, w=None):
    """sup |c(g1 g2) - c(g1) - Psi(g1) c(g2)| over the band complement."""
    if w is None:
        w = 4.0 / N
    R, S, mask = _grid(N, w)
    R, S = R[mask], S[mask]
    g12 = g1.compose(g2)
    lhs = cocycle_value(g12, R, S)
    rhs = cocycle_value(g1, R, S) + psi_apply(g1, lambda r, s: cocycle_value(g2, r, s), R, S)
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------- ping-pong

def _arc_contains(outer, p, length):
    """Does arc [p, p + length] lie in the closed arc outer = (start, end)?"""
    s, e = outer
    L = (e - s) % 1.0
    off = (p - s) % 1.0
    return off + length <= L + 1e-15


def _arc_image(f, arc):
    s, e = arc
    L = (e - s) % 1.0
    fs = float(f(s))
    fe = float(f(s + L))
    return fs % 1.0, fe - fs


def _arcs_disjoint(arcs):
    pts = []
    for s, e in arcs:
        pts.append((s % 1.0, (e - s) % 1.0))
    pts.sort()
    for i in range(len(pts)):
        s, L = pts[i]
        s2, _ = pts[(i + 1) % len(pts)]
        gap = (s2 - s) % 1.0 if len(pts) > 1 else 1.0
        if L >= gap:
            return False
    return True


def schottky_certificate(g0, g1, I0, I1, J0, J1, n_check=5):
    """Verify ping-pong inclusions for a pair of Moebius elements.

    g_i maps the complement of J_i into I_i and g_i^{-1} maps the complement
    of I_i into J_i.  Powers 1..n_check are checked directly; larger powers are
    covered by induction plus a derivative bound on the target arcs.
    """
    arcs = {"I0": I0, "I1": I1, "J0": J0, "J1": J1}
    if not _arcs_disjoint(list(arcs.values())):
        raise PreconditionError("arcs overlap")
    g = [g0, g1]
    maps = [x.circle_map() for x in g]
    invs = [x.inv().circle_map() for x in g]
    I, J = [I0, I1], [J0, J1]
    checks = []
    free_ok = True
    semi_ok = True
    for i in (0, 1):
        fwd_src = {"I%d" % i: I[i], "I%d" % (1 - i): I[1 - i], "J%d" % (1 - i): J[1 - i]}
        bwd_src = {"J%d" % i: J[i], "I%d" % (1 - i): I[1 - i], "J%d" % (1 - i): J[1 - i]}
        for n in range(1, n_check + 1):
            fn = maps[i].power(n)
            bn = invs[i].power(n)
            for name, arc in fwd_src.items():
                p, L = _arc_image(fn, arc)
                ok = _arc_contains(I[i], p, L)
                checks.append({"map": f"g{i}^{n}", "arc": name, "into": f"I{i}", "ok": ok})
                free_ok &= ok
                if name.startswith("I"):
                    semi_ok &= ok
            for name, arc in bwd_src.items():
                p, L = _arc_image(bn, arc)
                ok = _arc_contains(J[i], p, L)
                checks.append({"map": f"g{i}^-{n}", "arc": name, "into": f"J{i}", "ok": ok})
                free_ok &= ok
    # tail: attracting fixed point inside I_i and contraction on I_i
    tail = []
    for i in (0, 1):
        cl = classify(g[i])
        if cl["kind"] != "Hyperbolic":
            tail.append({"g": i, "ok": False, "reason": "not hyperbolic"})
            free_ok = False
            continue
        att, rep = cl["attracting"], cl["repelling"]
        in_I = _arc_contains(I[i], att, 0.0)
        in_J = _arc_contains(J[i], rep, 0.0)
        xs = I[i][0] + np.linspace(0, (I[i][1] - I[i][0]) % 1.0, 2001)
        sup_d = float(np.max(maps[i].deriv(xs)))
        ys = J[i][0] + np.linspace(0, (J[i][1] - J[i][0]) % 1.0, 2001)
        sup_di = float(np.max(invs[i].deriv(ys)))
        ok = in_I and in_J and sup_d < 1 and sup_di < 1
        tail.append({"g": i, "attracting": att, "repelling": rep,
                     "sup_derivative_on_I": sup_d, "sup_inverse_derivative_on_J": sup_di, "ok": ok})
        free_ok &= ok
    return {"free_group": bool(free_ok), "free_semigroup": bool(free_ok or semi_ok),
            "n_check": n_check, "inclusions": checks, "tail": tail,
            "arcs": {k: list(v) for k, v in arcs.items()}}


def positive_pingpong_certificate(f, g, A, B, grid=1001):
    """Free-semigroup certificate: f(A u B) in A and g(A u B) in B, A and B disjoint
    intervals of the line (f, g increasing)."""
    if not (A[1] < B[0] or B[1] < A[0]):
        raise PreconditionError("A and B must be disjoint")
    out = {}
    ok = True
    for name, h, T in (("f", f, A), ("g", g, B)):
        for src_name, S in (("A", A), ("B", B)):
            lo, hi = float(h(S[0])), float(h(S[1]))
            inc = T[0] <= lo and hi <= T[1]
            out[f"{name}({src_name})"] = [lo, hi, inc]
            ok &= inc
    return {"free_semigroup": bool(ok), "inclusions": out, "A": list(A), "B": list(B)}


def word_is_identity(word, gens, xs=None, tol=1e-6):
    """Evaluate a word given as a list of (generator index, +-1) on sample points."""
    if xs is None:
        xs = np.linspace(0, 1, 64, endpoint=False)
    M = Moebius(np.eye(2))
    for i, e in word:
        M = M @ (gens[i] if e > 0 else gens[i].inv())
    f = M.circle_map()
    disp = np.abs(((f(xs) - xs) + 0.5) % 1.0 - 0.5)
    return bool(disp.max() <= tol), float(disp.max())
