import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polydamp.errors import BracketFailure
from polydamp.pseudo_true import (
    brute_force_cisoid,
    brute_force_decay,
    decay_bracket,
    expected_fit_cost,
    lorentzian_objective,
    pseudo_true_cisoid,
    pseudo_true_lorentzian,
    psi_sign_function,
)
from polydamp.signal_model import ComponentParams, TimeGrid


def test_expected_cost_examples(grid200):
    psi = ComponentParams(1, 0.4, 0.9, 0.01)
    assert expected_fit_cost(psi, psi, grid200) == 0.0
    cis = ComponentParams(1, 0, 0.9)
    tiny = ComponentParams(1e-300, 0, 0.9)
    assert expected_fit_cost(tiny, cis, grid200) == pytest.approx(200.0)
    with pytest.raises(ValueError):
        expected_fit_cost(ComponentParams(1, 0, 1, 0, 1e-3), psi, grid200)


def test_cisoid_pseudo_true_examples(grid200):
    psi = ComponentParams(1.7, 0.3, 1.1)
    res = pseudo_true_cisoid(psi, grid200)
    assert (res.r0, res.phi0, res.omega0) == (1.7, 0.3, 1.1)
    res = pseudo_true_cisoid(ComponentParams(1, 0, 1, 1 / 200), grid200)
    direct = sum(math.exp(-(n - 1) / 200) for n in range(1, 201)) / 200
    assert res.r0 == pytest.approx(direct, rel=1e-14)
    assert res.r0 == pytest.approx(0.633702, abs=1e-6)
    res = pseudo_true_cisoid(ComponentParams(1, 0, 1, 0, 1e3), grid200)
    assert res.r0 == pytest.approx(1 / 200, rel=1e-12)


def test_cisoid_pseudo_true_beats_grid(grid200):
    psi = ComponentParams(1, 0.7, 1.0, 0.01)
    best = pseudo_true_cisoid(psi, grid200).as_component()
    c0 = expected_fit_cost(best, psi, grid200)
    rng = np.random.default_rng(0)
    for _ in range(200):
        other = ComponentParams(rng.uniform(0.05, 1), rng.uniform(0, 6.28), 1.0 + rng.normal(0, 0.01))
        assert expected_fit_cost(other, psi, grid200) >= c0


@given(st.floats(0.0, 0.05), st.floats(0.0, 1e-4))
def test_cisoid_amplitude_shrinks(beta, gamma):
    g = TimeGrid.uniform(50)
    r0 = pseudo_true_cisoid(ComponentParams(2.0, 0, 1, beta, gamma), g).r0
    assert r0 <= 2.0
    if beta == 0 and gamma == 0:
        assert r0 == 2.0


def test_sign_function_examples(grid200):
    psi = ComponentParams(1, 0, 1, 0.02)
    assert psi_sign_function(0.02, psi, grid200) == 0.0
    voigt = ComponentParams(1, 0, 1, 0.02, 1e-5)
    assert psi_sign_function(0.02, voigt, grid200) > 0.0
    lo, hi = decay_bracket(voigt, grid200)
    assert psi_sign_function(hi + 1.0, voigt, grid200) <= 0.0


@given(st.floats(0.0, 0.05), st.floats(1e-7, 1e-4), st.sampled_from([20, 50, 200]))
def test_bracket_validity(beta, gamma, n):
    g = TimeGrid.uniform(n)
    psi = ComponentParams(1, 0, 1, beta, gamma)
    lo, hi = decay_bracket(psi, g)
    assert psi_sign_function(lo, psi, g) > 0.0
    assert psi_sign_function(hi, psi, g) <= 0.0
    res = pseudo_true_lorentzian(psi, g)
    assert lo < res.beta0 <= hi


@given(st.floats(0.0, 0.05), st.floats(0.0, 0.1))
def test_sign_positive_below_beta(beta, frac):
    g = TimeGrid.uniform(50)
    psi = ComponentParams(1, 0, 1, beta, 1e-5)
    assert psi_sign_function(beta * frac, psi, g) > 0.0


def test_lorentzian_matched_model_exact():
    g = TimeGrid.uniform(200)
    res = pseudo_true_lorentzian(ComponentParams(1.3, 0.2, 1, 0.02), g)
    assert res.beta0 == 0.02
    assert res.r0 == pytest.approx(1.3, rel=1e-14)


def test_voigt_section6_bias(grid200):
    res = pseudo_true_lorentzian(ComponentParams(1, 0, 1.5, 1 / 150, 1e-5), grid200)
    assert 0 < res.beta0 - 1 / 150 <= 3.97e-3
    assert res.bracket[1] - res.bracket[0] == pytest.approx(3.97e-3, rel=1e-12)


def test_small_instance_against_dense_scan():
    g = TimeGrid.uniform(5)
    psi = ComponentParams(1, 0, 1, 0.1, 0.05)
    res = pseudo_true_lorentzian(psi, g)
    scan = brute_force_decay(psi, g, points=1_000_001)
    assert res.beta0 == pytest.approx(scan, abs=1e-6)
    # the root maximizes the matched power
    for d in (-1e-4, 1e-4):
        assert lorentzian_objective(res.beta0, psi, g) >= lorentzian_objective(res.beta0 + d, psi, g)


def test_continuity_as_gamma_vanishes(grid200):
    psi = ComponentParams(1, 0, 1, 0.01, 1e-8)
    res = pseudo_true_lorentzian(psi, grid200)
    t = grid200.times
    assert abs(res.beta0 - 0.01) < 1e-6 * (t[-1] + t[-2])


def test_bracket_failure_on_underflow():
    g = TimeGrid.uniform(200)
    psi = ComponentParams(1, 0, 1, 500.0, 50.0)
    with pytest.raises(BracketFailure):
        pseudo_true_lorentzian(psi, g)


def test_brute_force_cisoid_agrees(grid200):
    psi = ComponentParams(1, 1.0, 0.8, 0.01, 2e-5)
    r0, phi0, w0 = brute_force_cisoid(psi, grid200)
    exact = pseudo_true_cisoid(psi, grid200)
    assert abs(r0 - exact.r0) <= 1 / 200
    assert abs(phi0 - exact.phi0) <= 2 * math.pi / 181
    assert abs(w0 - exact.omega0) <= 2 * (2 * math.pi / 199) / 120
