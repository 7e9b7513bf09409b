import math

import numpy as np
import pytest

from circledyn import walks as wk
from circledyn.errors import PreconditionError
from circledyn.maps import CircleMap, rotation, perturbed_rotation
from circledyn.measures import (CircleMeasure, lebesgue, point_mass_bin, from_density,
                                invariant_measure)
from circledyn.moebius import Moebius, hyperbolic_matrix

GOLDEN = (math.sqrt(5) - 1) / 2


@pytest.fixture(scope="module")
def schottky():
    return wk.schottky_system()


@pytest.fixture(scope="module")
def schottky_stationary(schottky):
    return wk.stationary_measure(schottky, tol=1e-3)


def conjugated_rotation_system():
    M = Moebius([[1.4, 0.2], [0.3, 1 / 1.4 + 0.3 * 0.2 / 1.4]])
    h, hi = M.circle_map(), M.inv().circle_map()
    maps = [h.compose(rotation(s * GOLDEN)).compose(hi) for s in (1, -1)]
    return wk.GeneratorSystem(maps, [0.5, 0.5], True), h


# ---------------------------------------------------------------- systems

def test_system_validation():
    with pytest.raises(PreconditionError):
        wk.GeneratorSystem([rotation(0.1)], [0.5])
    with pytest.raises(PreconditionError):
        wk.GeneratorSystem([rotation(0.1), rotation(0.2)], [0.5, 0.5], symmetric=True)
    assert wk.schottky_system().inverse_index == [1, 0, 3, 2]


# ---------------------------------------------------------------- diffusion

def test_rotations_fix_lebesgue():
    mu = lebesgue(1024)
    nu = wk.diffusion_apply(mu, wk.rotation_system())
    assert nu.l1(mu) <= 1e-12


def test_diffusion_conserves_mass_and_positivity(schottky):
    mu = from_density(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x), 1024)
    nu = wk.diffusion_apply(mu, schottky)
    assert abs(nu.total() - 1) <= 1e-12
    assert np.all(nu.weights >= 0)


def test_diffusion_dual_consistency(schottky):
    N = 4096
    mu = from_density(lambda x: 1 + 0.5 * np.cos(2 * np.pi * x), N)
    nu = wk.diffusion_apply(mu, schottky)
    for k in range(1, 11):
        psi = lambda x, k=k: np.cos(2 * np.pi * k * x) + np.sin(2 * np.pi * (k - 1) * x)
        lhs = nu.integrate(psi)
        rhs = sum(p * mu.integrate(lambda x, g=g: psi(g(x) % 1.0))
                  for p, g in zip(schottky.probs, schottky.maps))
        assert abs(lhs - rhs) <= 5e-3


def test_single_map_cesaro_gives_invariant_measure():
    f = perturbed_rotation(GOLDEN, 0.5)
    nu = invariant_measure(f, N=2048, iters=1000)
    assert nu.pushforward(f).l1(nu) <= 1e-3


def test_schottky_plain_iteration_residuals_decrease(schottky):
    mu = from_density(lambda x: 1 + 0.9 * np.cos(2 * np.pi * x), 2048)
    res = []
    for _ in range(100):
        nxt = wk.diffusion_apply(mu, schottky)
        res.append(nxt.l1(mu))
        mu = nxt
    assert np.all(np.diff(res) < 0)


# ---------------------------------------------------------------- stationary measures

def test_rotation_system_stationary_is_lebesgue():
    mu, rep = wk.stationary_measure(wk.rotation_system(), tol=1e-3)
    assert mu.l1(lebesgue(mu.N)) <= 1e-3
    assert rep["check_residual"] <= 1e-3


def test_schottky_stationary_unique(schottky_stationary):
    mu, rep = schottky_stationary
    assert rep["seed_distance"] <= 5 * 1e-3
    assert max(rep["residuals"]) <= 1e-3


def test_schottky_stationary_symmetric_under_quarter_turn(schottky_stationary):
    # the system is invariant under conjugation by x -> x + 1/4
    mu, _ = schottky_stationary
    shifted = np.roll(mu.weights, mu.N // 4)
    assert np.sum(np.abs(shifted - mu.weights)) <= 5e-3


def test_dense_system_full_support_no_atoms():
    mu, rep = wk.stationary_measure(wk.dense_system(), tol=1e-3)
    assert rep["min_bin_mass"] > 0
    assert rep["max_atom_candidate"] < 1e-3


def test_stationary_failure_report():
    with pytest.raises(Exception) as exc:
        wk.stationary_measure(wk.schottky_system(), tol=1e-12, max_iter=5)
    assert exc.value.report["iterations"] == 5


# ---------------------------------------------------------------- contraction

def test_contraction_identity_and_rotation():
    ident = CircleMap(lambda x: np.asarray(x, float))
    assert wk.contraction_coefficient(ident) == 0.5
    assert abs(wk.contraction_coefficient(rotation(GOLDEN)) - 0.5) <= 2 / 4096


def test_contraction_of_hyperbolic_powers_decreases():
    g = hyperbolic_matrix(2.0)
    vals = []
    p = g
    for _ in range(10):
        vals.append(wk.contraction_coefficient(p.circle_map()))
        p = p @ g
    assert all(b < a for a, b in zip(vals, vals[1:]))
    # north-south scaling: an eps-arc must absorb a complement of size ~ 1/(lam^n eps),
    # so contr(g^n) ~ lam^(-n/2)
    ratios = np.array(vals[3:]) / np.array(vals[2:-1])
    assert np.all(np.abs(ratios - 2 ** -0.5) <= 0.05)


def test_trace_of_rotation_system_is_half():
    tr, _ = wk.walk_contraction_trace(wk.rotation_system(), 1, 50)
    assert np.all(np.abs(tr - 0.5) <= 2 / 4096)


def test_trace_of_single_map_matches_powers():
    g = hyperbolic_matrix(1.5)
    sys = wk.GeneratorSystem([g.circle_map()])
    tr, _ = wk.walk_contraction_trace(sys, 0, 6)
    p = g
    for k in range(6):
        assert tr[k] == wk.contraction_coefficient(p.circle_map())
        p = g @ p


def test_schottky_traces_contract(schottky):
    finals = [t[-1] for t in wk.contraction_traces(schottky, range(20), 200)]
    assert np.mean(np.array(finals) <= 0.02) >= 0.95


def test_traces_are_deterministic(schottky):
    a, wa = wk.walk_contraction_trace(schottky, 42, 50)
    b, wb = wk.walk_contraction_trace(schottky, 42, 50)
    assert np.array_equal(a, b) and np.array_equal(wa, wb)
    t1 = wk.contraction_traces(schottky, [1, 2, 3], 30, threads=3)
    t2 = wk.contraction_traces(schottky, [1, 2, 3], 30, threads=1)
    assert all(np.array_equal(x, y) for x, y in zip(t1, t2))


# ---------------------------------------------------------------- Dirac limits

def test_schottky_dirac_limit(schottky):
    r = wk.dirac_limit(schottky, 7, 300)
    assert r["concentrated"] and r["arc_length"] <= 0.01


def test_rotation_dirac_diagnostic():
    r = wk.dirac_limit(wk.rotation_system(), 7, 300)
    assert not r["concentrated"] and r["diagnostic"] is not None


def test_deterministic_dirac_limit_is_attracting_fixed_point():
    g = hyperbolic_matrix(3.0).circle_map()
    r = wk.dirac_limit(wk.GeneratorSystem([g]), 0, 60)
    # fixed points 0 and 1/2; the attractor has derivative < 1
    attractor = min((0.0, 0.5), key=lambda x: float(g.deriv(np.array(x))))
    d = abs(r["point"] - attractor)
    assert min(d, 1 - d) <= 1e-6


# ---------------------------------------------------------------- Lyapunov

def test_lyapunov_rotation_is_zero():
    est, ci, _ = wk.lyapunov_exponent(wk.rotation_system(), lebesgue(), n_samples=10**4)
    assert est == 0 and ci == (0.0, 0.0)


def test_lyapunov_symmetric_invariant_measure_is_zero():
    sys, h = conjugated_rotation_system()
    # invariant measure h_* Lebesgue, density 1 / h'(h^{-1}(x))
    hi = h.inverse()
    mu = from_density(lambda x: 1 / h.deriv(hi(x)), 4096)
    est, ci, info = wk.lyapunov_exponent(sys, mu, n_samples=10**5, seed=1)
    assert ci[0] <= 0 <= ci[1]


def test_lyapunov_schottky_negative(schottky, schottky_stationary):
    mu, _ = schottky_stationary
    est, ci, info = wk.lyapunov_exponent(schottky, mu, n_samples=10**5, seed=0)
    assert ci[1] < 0
    # time averages along paths agree in sign
    assert info["time_average"] < 0


def test_lyapunov_rejects_nonstationary(schottky):
    with pytest.raises(PreconditionError):
        wk.lyapunov_exponent(schottky, point_mass_bin(0.3))


def test_ks_forward_inverse_symmetry(schottky):
    assert wk.ks_symmetry_check(schottky, n_steps=10, samples=10**4, seed=0)["pass"]
