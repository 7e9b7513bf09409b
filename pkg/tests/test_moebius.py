import cmath
import math

import numpy as np
import pytest

from circledyn import moebius as mo
from circledyn.errors import CapabilityError, DomainError, PreconditionError
from circledyn.maps import CircleMap


def rng(seed=0):
    return np.random.default_rng(seed)


def circ_dist(a, b):
    d = np.abs((np.asarray(a) - np.asarray(b) + 0.5) % 1.0 - 0.5)
    return float(np.max(d))


def random_quadruple(r):
    return np.sort(r.random(4))


# ---------------------------------------------------------------- classification

def test_classify_examples():
    assert mo.classify(mo.Moebius([[1, 1], [0, 1]]))["kind"] == "Parabolic"
    assert mo.classify(mo.rotation_matrix(1 / 6))["kind"] == "Elliptic"
    assert mo.classify(mo.Moebius(np.eye(2)))["kind"] == "Identity"
    h = mo.classify(mo.Moebius([[2, 0], [0, 0.5]]))
    assert h["kind"] == "Hyperbolic"
    ds = {p["x"]: p["derivative"] for p in h["fixed_points"]}
    assert ds[h["attracting"]] < 1 < ds[h["repelling"]]
    # oracle: the fixed points of s -> 4s are s = 0 and s = infinity, i.e. x = 1/2 and 0
    assert sorted(ds) == pytest.approx([0.0, 0.5], abs=1e-14)


def test_positive_determinant_required():
    with pytest.raises(PreconditionError):
        mo.Moebius([[0, 1], [1, 0]])


# ---------------------------------------------------------------- actions

def test_identity_and_rotation_action():
    xs = np.linspace(0, 1, 200, endpoint=False)
    y, d = mo.act_on_circle(mo.Moebius(np.eye(2)), xs)
    assert circ_dist(y, xs) <= 1e-12 and np.max(np.abs(d - 1)) <= 1e-12
    for theta in (0.1, 0.25, 0.7):
        y, d = mo.act_on_circle(mo.rotation_matrix(theta), xs)
        assert circ_dist(y, xs + theta) <= 1e-12
        assert np.max(np.abs(d - 1)) <= 1e-12


def test_charts_agree():
    r = rng(1)
    xs = np.linspace(0.001, 0.999, 300)
    for _ in range(50):
        M = mo.random_moebius(r)
        y1, _ = mo.act_on_circle(M, xs, chart="disk")
        y2, _ = mo.act_on_circle(M, xs, chart="projective")
        assert circ_dist(y1, y2) <= 1e-12


def test_disk_action_matches_complex_formula():
    # oracle: z -> (alpha z + beta)/(conj(beta) z + conj(alpha)) in complex arithmetic
    r = rng(2)
    for _ in range(20):
        M = mo.random_moebius(r)
        al, be = M.disk()
        for x in r.random(10):
            z = cmath.exp(2j * math.pi * x)
            w = (al * z + be) / (be.conjugate() * z + al.conjugate())
            y = (cmath.phase(w) / (2 * math.pi)) % 1.0
            assert circ_dist(mo.act_on_circle(M, x)[0], y) <= 1e-12


def test_group_law():
    r = rng(3)
    xs = np.linspace(0, 1, 100, endpoint=False)
    worst = 0.0
    for _ in range(100):
        A, B = mo.random_moebius(r), mo.random_moebius(r)
        lhs, _ = mo.act_on_circle(A @ B, xs)
        rhs, _ = mo.act_on_circle(A, mo.act_on_circle(B, xs)[0])
        worst = max(worst, circ_dist(lhs, rhs))
    assert worst <= 1e-12


def test_derivative_matches_finite_differences():
    r = rng(4)
    xs = np.linspace(0.05, 0.95, 50)
    h = 1e-6
    for _ in range(10):
        f = mo.random_moebius(r).circle_map()
        fd = (f(xs + h) - f(xs - h)) / (2 * h)
        assert np.max(np.abs(fd - f.deriv(xs))) <= 1e-6


# ---------------------------------------------------------------- cross ratio

def test_cross_ratio_invariance():
    r = rng(5)
    worst = 0.0
    for _ in range(100):
        M = mo.random_moebius(r)
        q = random_quadruple(r)
        img = mo.act_on_circle(M, q)[0]
        worst = max(worst, abs(mo.cross_ratio(*img) - mo.cross_ratio(*q)))
    assert worst <= 1e-10


def test_cross_ratio_square():
    # oracle: (1 - (-1))(i - (-i)) / ((1 - (-i))(i - (-1))) computed directly
    z = [1, 1j, -1, -1j]
    direct = (z[0] - z[2]) * (z[1] - z[3]) / ((z[0] - z[3]) * (z[1] - z[2]))
    cr = mo.cross_ratio(0, 0.25, 0.5, 0.75)
    assert abs(cr) == pytest.approx(2.0, abs=1e-12)
    assert cr == pytest.approx(direct.real, abs=1e-12)


def test_cross_ratio_positive_for_ordered_points():
    r = rng(6)
    for _ in range(100):
        assert mo.cross_ratio(*random_quadruple(r)) > 1


def test_cross_ratio_coincident_points():
    with pytest.raises(DomainError):
        mo.cross_ratio(0.1, 0.3, 0.1, 0.6)
    with pytest.raises(DomainError):
        mo.cross_ratio(0.1, 0.3, 0.3, 0.6)


# ---------------------------------------------------------------- Liouville measure

def test_liouville_symmetry():
    r = rng(7)
    for _ in range(100):
        a, b, c, d = random_quadruple(r)
        assert abs(mo.liouville_box_measure(a, b, c, d)
                   - mo.liouville_box_measure(c, d, a, b)) <= 1e-12


def test_liouville_complementary_identity():
    r = rng(8)
    worst = 0.0
    for _ in range(100):
        a, b, c, d = random_quadruple(r)
        s = (math.exp(-mo.liouville_box_measure(a, b, c, d))
             + math.exp(-mo.liouville_box_measure(b, c, d, a)))
        worst = max(worst, abs(s - 1))
    assert worst <= 1e-9


def test_liouville_invariance():
    r = rng(9)
    for _ in range(100):
        M = mo.random_moebius(r)
        q = random_quadruple(r)
        img = mo.act_on_circle(M, q)[0]
        assert abs(mo.liouville_box_measure(*img) - mo.liouville_box_measure(*q)) <= 1e-9


def test_liouville_quadrature_matches_closed_form():
    r = rng(10)
    for _ in range(5):
        q = random_quadruple(r)
        # keep the arcs apart so the integrand is smooth
        if min(np.diff(q)) < 0.05 or 1 - q[3] + q[0] < 0.05:
            continue
        assert (mo.liouville_box_measure(*q, method="quadrature")
                == pytest.approx(mo.liouville_box_measure(*q), abs=1e-8))
    # explicit configuration
    q = (0.0, 0.2, 0.5, 0.7)
    assert (mo.liouville_box_measure(*q, method="quadrature")
            == pytest.approx(mo.liouville_box_measure(*q), abs=1e-8))


def test_liouville_touching_arcs_infinite():
    assert mo.liouville_infinite(0.1, 0.3, 0.6) == math.inf
    # the closed form blows up as the gap between the arcs closes
    vals = [mo.liouville_box_measure(0.1, 0.3, 0.3 + e, 0.6) for e in (1e-2, 1e-4, 1e-6)]
    assert vals[0] < vals[1] < vals[2] and vals[2] > 10


def test_liouville_rejects_unordered_points():
    with pytest.raises(PreconditionError):
        mo.liouville_box_measure(0.1, 0.5, 0.3, 0.7)


# ---------------------------------------------------------------- distance and variation

def test_distance_examples():
    assert mo.hyperbolic_distance(0, 0) == 0
    for lam in (1.5, 3.0, 10.0):
        V = mo.moebius_variation(mo.hyperbolic_matrix(lam), cross_check=False)["V"]
        # oracle: in the upper half plane dist(i, lam i) = log lam
        assert V == pytest.approx(4 * math.log(lam), abs=1e-12)
    assert mo.moebius_variation(mo.rotation_matrix(0.3), cross_check=False)["V"] == 0


def test_distance_half_plane_oracle():
    # Cayley map w -> (w - i)/(w + i) sends i to 0 and lam i to (lam - 1)/(lam + 1)
    for lam in (2.0, 7.0):
        P = (lam * 1j - 1j) / (lam * 1j + 1j)
        assert mo.hyperbolic_distance(0, P) == pytest.approx(math.log(lam), abs=1e-12)


def test_triangle_inequality():
    r = rng(11)
    for _ in range(200):
        P, Q, R = (0.95 * math.sqrt(r.random()) * cmath.exp(2j * math.pi * r.random())
                   for _ in range(3))
        assert (mo.hyperbolic_distance(P, R)
                <= mo.hyperbolic_distance(P, Q) + mo.hyperbolic_distance(Q, R) + 1e-12)


def test_distance_rejects_boundary():
    with pytest.raises(DomainError):
        mo.hyperbolic_distance(0, 1)


def test_variation_cross_check():
    r = rng(12)
    for _ in range(20):
        out = mo.moebius_variation(mo.random_moebius(r, 0.5))
        assert out["residual"] <= 1e-4


# ---------------------------------------------------------------- Liouville cocycle

def test_cocycle_identity_and_rotation():
    assert np.max(np.abs(mo.liouville_cocycle(mo.Moebius(np.eye(2)).circle_map()).values)) == 0
    c = mo.liouville_cocycle(mo.rotation_matrix(0.3).circle_map())
    assert np.max(np.abs(c.values)) <= 1e-12


def test_cocycle_identity_random_pairs():
    r = rng(13)
    worst = 0.0
    for _ in range(20):
        g1 = mo.random_moebius(r).circle_map()
        g2 = mo.random_moebius(r).circle_map()
        worst = max(worst, mo.cocycle_identity_residual(g1, g2))
    assert worst <= 1e-6


def test_cocycle_value_matches_cross_ratio_jacobian():
    # oracle: for Moebius g, Jac = 1 exactly (Lv is invariant)
    r = rng(14)
    g = mo.random_moebius(r).circle_map()
    R, S = r.random(50), r.random(50)
    keep = np.abs(((R - S) + 0.5) % 1 - 0.5) > 0.05
    assert np.max(np.abs(mo.lv_jacobian(g, R[keep], S[keep]) - 1)) <= 1e-9


def test_cocycle_norm_stable_under_grid_doubling():
    # a non-projective diffeomorphism has a nonzero cocycle
    f = CircleMap(lambda x: x + 0.1 * np.sin(2 * np.pi * x) / (2 * np.pi),
                  lambda x: 1 + 0.1 * np.cos(2 * np.pi * x))
    w = 0.05
    n1 = mo.liouville_cocycle(f, N=128, w=w).lv_norm()
    n2 = mo.liouville_cocycle(f, N=256, w=w).lv_norm()
    assert n1 > 0 and abs(n2 - n1) <= 0.02 * n1


def test_cocycle_requires_grid_and_derivative():
    with pytest.raises(PreconditionError):
        mo.liouville_cocycle(mo.rotation_matrix(0.1).circle_map(), N=32)
    with pytest.raises(CapabilityError):
        mo.cocycle_value(CircleMap(lambda x: x + 0.1), 0.1, 0.4)


# ---------------------------------------------------------------- ping-pong

@pytest.fixture(scope="module")
def schottky_pair():
    g0 = mo.Moebius([[3, 0], [0, 1 / 3]])
    r = mo.rotation_matrix(0.25)
    g1 = r @ g0 @ r.inv()
    return g0, g1


def _arcs(g0, g1, w=0.08):
    arc = lambda c: ((c - w) % 1.0, (c + w) % 1.0)
    c0, c1 = mo.classify(g0), mo.classify(g1)
    return (arc(c0["attracting"]), arc(c1["attracting"]),
            arc(c0["repelling"]), arc(c1["repelling"]))


def test_schottky_certified(schottky_pair):
    g0, g1 = schottky_pair
    cert = mo.schottky_certificate(g0, g1, *_arcs(g0, g1))
    assert cert["free_group"] and cert["free_semigroup"]
    assert all(c["ok"] for c in cert["inclusions"])


def test_schottky_words_are_not_identity(schottky_pair):
    gens = list(schottky_pair)
    r = rng(15)
    for _ in range(200):
        n = int(r.integers(1, 11))
        word = []
        while len(word) < n:
            letter = (int(r.integers(2)), int(r.choice([-1, 1])))
            if word and word[-1] == (letter[0], -letter[1]):
                continue                      # keep the word reduced
            word.append(letter)
        is_id, disp = mo.word_is_identity(word, gens)
        assert not is_id and disp > 1e-6


def test_rotations_fail_certificate():
    g0, g1 = mo.rotation_matrix(0.1), mo.rotation_matrix(0.3)
    arcs = ((0.0, 0.05), (0.25, 0.3), (0.5, 0.55), (0.75, 0.8))
    cert = mo.schottky_certificate(g0, g1, *arcs)
    assert not cert["free_group"]


def test_schottky_overlapping_arcs_rejected(schottky_pair):
    g0, g1 = schottky_pair
    with pytest.raises(PreconditionError):
        mo.schottky_certificate(g0, g1, (0.0, 0.3), (0.2, 0.4), (0.5, 0.6), (0.7, 0.8))


def test_positive_pingpong_on_line():
    f = lambda x: x / 3                    # contraction toward 0, inside A
    g = lambda x: x / 3 + 2                # contraction toward 3, inside B
    cert = mo.positive_pingpong_certificate(f, g, (-1.0, 1.5), (1.6, 3.5))
    assert cert["free_semigroup"]
    # oracle: distinct positive words give distinct affine maps (all words of length <= 6)
    seen = set()
    for n in range(1, 7):
        for k in range(2 ** n):
            x0, x1 = 0.0, 1.0
            for bit in format(k, f"0{n}b"):
                x0, x1 = (f(x0), f(x1)) if bit == "0" else (g(x0), g(x1))
            key = (round(x0, 12), round(x1 - x0, 12))
            assert key not in seen
            seen.add(key)


def test_positive_pingpong_failure():
    f = lambda x: x + 1
    g = lambda x: x + 2
    assert not mo.positive_pingpong_certificate(f, g, (0.0, 1.0), (2.0, 3.0))["free_semigroup"]
    with pytest.raises(PreconditionError):
        mo.positive_pingpong_certificate(f, g, (0.0, 2.0), (1.0, 3.0))
