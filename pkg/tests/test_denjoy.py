import math

import mpmath
import numpy as np
import pytest

from circledyn import denjoy as dj
from circledyn import rotation as rt
from circledyn.errors import DomainError, PreconditionError
from circledyn.maps import CircleMap, rotation

GOLDEN = (math.sqrt(5) - 1) / 2
SILVER = math.sqrt(2) - 1


@pytest.fixture(scope="module")
def D():
    return dj.build_denjoy(GOLDEN, 100, 1.0, 1e-6)


# ---------------------------------------------------------------- families

def test_family_identity():
    xs = np.linspace(0, 0.7, 101)
    v, d = dj.family_eval("yoccoz", 0.7, 0.7, xs)
    assert np.max(np.abs(v - xs)) <= 1e-12 and np.max(np.abs(d - 1)) <= 1e-12


def test_family_equivariance_random_triples():
    r = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        a, b, c = r.uniform(0.1, 2, 3)
        x = r.uniform(0, a)
        y, _ = dj.family_eval("yoccoz", a, b, x)
        z, _ = dj.family_eval("yoccoz", b, c, min(y, b))
        w, _ = dj.family_eval("yoccoz", a, c, x)
        worst = max(worst, abs(z - w))
    assert worst <= 1e-10


def test_family_derivative_matches_finite_differences():
    a, b = 1.0, 1.7
    xs = np.linspace(0.01, 0.99, 99)
    h = 1e-6
    fd = (dj.family_eval("yoccoz", a, b, xs + h)[0] - dj.family_eval("yoccoz", a, b, xs - h)[0]) / (2 * h)
    assert np.max(np.abs(fd - dj.family_eval("yoccoz", a, b, xs)[1])) <= 1e-6


def test_family_endpoint_tangency():
    for a, b in ((1.0, 2.0), (0.3, 0.2)):
        _, d = dj.family_eval("yoccoz", a, b, np.array([0.0, a]))
        assert np.max(np.abs(d - 1)) <= 1e-10


def test_family_max_derivative_distortion():
    xs = np.linspace(0, 1, 200001)
    _, d = dj.family_eval("yoccoz", 1.0, 2.0, xs)
    # closed form (u^2 + 1/a^2)/(u^2 + 1/b^2) maximized at u = 0: 4
    assert np.max(np.abs(d - 1)) == pytest.approx(3.0, abs=1e-8)


def test_family_derivative_bound_random():
    r = np.random.default_rng(1)
    for _ in range(200):
        a, b = r.uniform(0.1, 2, 2)
        _, d = dj.family_eval("yoccoz", a, b, r.uniform(0, a, 50))
        assert np.all(np.abs(d - 1) <= abs(b * b / (a * a) - 1) + 1e-12)


def test_family_rejects_outside_domain():
    with pytest.raises(DomainError):
        dj.family_eval("yoccoz", 1.0, 2.0, 1.5)


def test_second_derivative_bound():
    assert dj.family_second_derivative_bound_check(1.0, 1.0)["max_second"] == 0
    for b in (1.5, 0.75):
        res = dj.family_second_derivative_bound_check(1.0, b)
        assert res["pass"]
        # oracle: closed-form second derivative on a fine grid
        xs = np.linspace(0, 1, 200001)
        assert res["max_second"] == pytest.approx(
            np.max(np.abs(dj.family_second(1.0, b, xs))), rel=1e-3)
    with pytest.raises(PreconditionError):
        dj.family_second_derivative_bound_check(1.0, 3.0)


@pytest.mark.parametrize("omega", [dj.ModulusOfContinuity("holder", 0.5),
                                   dj.ModulusOfContinuity("lipschitz"),
                                   dj.omega_eps(1.0),
                                   dj.ModulusOfContinuity("log")])
def test_moduli_are_admissible(omega):
    assert omega.check()


# ---------------------------------------------------------------- build_denjoy

def test_series_total_matches_direct_summation(D):
    k, p = 100, 1.5
    ell = lambda n: 1 / ((n + k) * np.log(n + k) ** p)
    # route 1: 10^7 explicit terms per side, closed-form integral tail + endpoint term
    N = 10 ** 7
    head = math.fsum(ell(np.arange(1, N, dtype=float)))
    tail = math.log(N + k) ** (1 - p) / (p - 1) + 0.5 * float(ell(np.float64(N)))
    direct = float(ell(np.float64(0))) + 2 * (head + tail)
    assert D.series_total == pytest.approx(direct, abs=1e-10)
    # route 2: Euler-Maclaurin summation with the exact integral supplied
    with mpmath.workdps(30):
        g = lambda n: 1 / ((n + k) * mpmath.log(n + k) ** p)
        one_side = mpmath.sumem(g, [1, mpmath.inf], integral=mpmath.log(1 + k) ** (1 - p) / (p - 1))
    assert D.series_total == pytest.approx(float(ell(np.float64(0)) + 2 * one_side), abs=1e-10)
    # each side is close to the integral 2 / (eps log(k)^(eps/2))
    assert D.series_total / 2 == pytest.approx(2 / math.log(k) ** 0.5, rel=1e-3)


def test_tangent_to_identity_at_gap_endpoints(D):
    assert np.max(np.abs(dj.gap_endpoint_derivatives(D) - 1)) <= 1e-12


def test_rotation_number(D):
    r = rt.rotation_number_estimate(D.circle_map(), 0.1, 10**5)
    assert abs(r.value - GOLDEN) <= 2e-5


def test_homeomorphism_and_inverse(D):
    cm = D.circle_map()
    xs = np.linspace(0, 1, 10**5)
    y = cm(xs)
    assert np.all(np.diff(y) > 0)
    assert y[-1] - y[0] == pytest.approx(1.0)
    assert np.max(np.abs(cm.inv(y) - xs)) <= D.assignment.truncation_mass


def test_gap_order_matches_rotation_order(D):
    A = D.assignment
    t = (A.index[:, 0] * GOLDEN) % 1.0
    order_t = np.argsort(t)
    assert np.all(np.diff(A.position[order_t]) > 0)


def test_gaps_map_onto_next_gaps(D):
    cm = D.circle_map()
    for n in (-5, 0, 3, 100):
        a, b = D.assignment.gap(n)
        c, d = D.assignment.gap(n + 1)
        assert float(cm(np.array(a))) % 1.0 == pytest.approx(c, abs=1e-12)
        assert float(cm(np.array(b))) % 1.0 == pytest.approx(d, abs=1e-12)


def test_rejects_rational_and_bad_parameters():
    with pytest.raises(DomainError):
        dj.build_denjoy(0.5)
    with pytest.raises(PreconditionError):
        dj.build_denjoy(GOLDEN, k=2)


# ---------------------------------------------------------------- Z^d

@pytest.fixture(scope="module")
def Z2():
    return dj.build_denjoy_zd([GOLDEN, SILVER])


def test_zd_commute(Z2):
    res, count = dj.commutator_residual(Z2[0], Z2[1])
    assert res <= 1e-12 and count > 100


def test_zd_rotation_numbers(Z2):
    for m, th in zip(Z2, (GOLDEN, SILVER)):
        r = rt.rotation_number_estimate(m.circle_map(), 0.1, 10**4)
        assert abs(r.value - th) <= r.error_bound


def test_zd_no_fixed_points_for_short_words(Z2):
    f1, f2 = (m.circle_map() for m in Z2)
    xs = np.linspace(0, 1, 2001)
    for i in range(-8, 9):
        for j in range(-8 + abs(i), 9 - abs(i)):
            if i == 0 and j == 0:
                continue
            y = xs
            for _ in range(abs(i)):
                y = f1(y) if i > 0 else f1.inv(y)
            for _ in range(abs(j)):
                y = f2(y) if j > 0 else f2.inv(y)
            d = y - xs
            # a fixed point of the circle map = displacement crossing an integer
            assert np.floor(d.min()) == np.floor(d.max())


def test_zd_d1_specializes():
    (m,) = dj.build_denjoy_zd([GOLDEN], m=3, epsilon=0.5, delta_truncation=1e-4)
    ref = dj.build_denjoy(GOLDEN, 3, 1.0, 1e-4)
    assert np.array_equal(m.assignment.lengths, ref.assignment.lengths)


def test_zd_smoothness_tag():
    assert dj.zd_smoothness_tag(2, 0.5) == "C1+omega, omega(s) = s^(1/2) log(1/s)^(1/2+0.5)"


def test_zd_rejects_dependent_angles():
    with pytest.raises(DomainError):
        dj.build_denjoy_zd([GOLDEN, 2 * GOLDEN - 1])


def test_wandering(Z2, D):
    assert dj.wandering_check([D], [0], 0)["words"] == 1
    r1 = dj.wandering_check([D], [0], 50)
    assert r1["pass"] and r1["words"] == 51
    r2 = dj.wandering_check(Z2, [0, 0], 8)
    assert r2["pass"] and r2["words"] == 45


# ---------------------------------------------------------------- regularity

def test_holder_estimate_of_rotation_is_zero():
    assert dj.holder_norm_estimate(rotation(0.3), dj.omega_eps(1.0)) == 0


def test_holder_gluing_factor():
    # two Yoccoz pieces on [0, 1/2] and [1/2, 1]: [0,1/2] -> [0, 0.6], [1/2, 1] -> [0.6, 1]
    def lift(x):
        x = np.asarray(x, float)
        m = np.floor(x)
        t = x - m
        v1, _ = dj.family_eval("yoccoz", 0.5, 0.6, np.minimum(t, 0.5))
        v2, _ = dj.family_eval("yoccoz", 0.5, 0.4, np.clip(t - 0.5, 0, 0.5))
        return np.where(t <= 0.5, v1, 0.6 + v2) + m

    def der(x):
        t = np.asarray(x, float) % 1.0
        _, d1 = dj.family_eval("yoccoz", 0.5, 0.6, np.minimum(t, 0.5))
        _, d2 = dj.family_eval("yoccoz", 0.5, 0.4, np.clip(t - 0.5, 0, 0.5))
        return np.where(t <= 0.5, d1, d2)

    f = CircleMap(lift, der)
    omega = dj.ModulusOfContinuity("holder", 0.5)
    # per-piece oracle: dense pair grid inside each piece
    C = 0.0
    for lo in (0.0, 0.5):
        xs = lo + 0.5 * np.linspace(0, 1, 801)
        X, Y = np.meshgrid(xs, xs)
        m = X < Y
        C = max(C, float(np.max(np.abs(der(X[m]) - der(Y[m])) / omega(Y[m] - X[m]))))
    glob = dj.holder_norm_estimate(f, omega, hot=[(0.0, 0.5), (0.5, 1.0)])
    assert C > 0 and glob <= 2 * C


def test_holder_estimate_denjoy_threshold(D):
    # threshold 2 / log(100)^(1/2) from the norm bound of the construction
    est = dj.holder_norm_estimate(D.circle_map(), dj.omega_eps(1.0))
    assert est <= 2 / math.log(100) ** 0.5
