import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polydamp.signal_model import (
    ComponentParams,
    ModelClass,
    SignalRecord,
    TimeGrid,
    component_value,
    envelope,
    nls_cost,
    reconstruct,
    synthesize,
    wrap_phase,
)

decay = st.floats(0.0, 0.5)
times = st.floats(0.0, 50.0)


def test_envelope_values():
    assert envelope(0.0, 0.3, 0.1) == 1.0
    assert envelope(200.0, 1 / 200, 0.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert envelope(2.0, 0.5, 0.25) == pytest.approx(math.exp(-2), rel=1e-15)


@given(times, times, decay, st.floats(0.0, 1e-2))
def test_envelope_monotone(t1, t2, beta, gamma):
    lo, hi = sorted((t1, t2))
    assert envelope(hi, beta, gamma) <= envelope(lo, beta, gamma)
    assert 0.0 <= envelope(hi, beta, gamma) <= 1.0


def test_component_value_examples():
    assert component_value(0.0, ComponentParams(1, 0, 0.9, 0.2, 0.1)) == pytest.approx(1 + 0j)
    w = 0.8
    v = component_value(math.pi / w, ComponentParams(2, 0, w))
    assert v == pytest.approx(-2 + 0j, abs=1e-14)
    v = component_value(1.0, ComponentParams(1, 0, 0, 1, 1))
    assert v == pytest.approx(math.exp(-2), rel=1e-15)


@given(st.floats(0.1, 5), st.floats(0, 7), st.floats(-3, 3), decay, st.floats(0, 1e-2), times)
def test_modulus_bounded_by_amplitude(r, phi, omega, beta, gamma, t):
    psi = ComponentParams(r, phi, omega, beta, gamma)
    mod = abs(component_value(t, psi))
    assert mod <= r * (1 + 1e-12)
    assert mod == pytest.approx(r * envelope(t, beta, gamma), rel=1e-12)


def test_class_inference_and_validation():
    assert ComponentParams(1, 0, 1).model_class is ModelClass.CISOID
    assert ComponentParams(1, 0, 1, 0.1).model_class is ModelClass.LORENTZIAN
    assert ComponentParams(1, 0, 1, 0, 0.1).model_class is ModelClass.VOIGT
    assert ComponentParams(1, 0, 1, model_class="voigt").model_class is ModelClass.VOIGT
    with pytest.raises(ValueError):
        ComponentParams(0, 0, 1)
    with pytest.raises(ValueError):
        ComponentParams(1, 0, 1, -0.1)
    with pytest.raises(ValueError):
        ComponentParams(1, 0, 1, 0.1, model_class=ModelClass.CISOID)
    with pytest.raises(ValueError):
        ComponentParams(1, 0, 1, 0.1, 0.1, model_class=ModelClass.LORENTZIAN)
    with pytest.raises(ValueError):
        ModelClass.VOIGT.next()


@given(st.floats(-100, 100))
def test_phase_wrapped(phi):
    w = wrap_phase(phi)
    assert 0.0 <= w < 2 * math.pi
    assert math.cos(w) == pytest.approx(math.cos(phi), abs=1e-9)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid([0.0])
    with pytest.raises(ValueError):
        TimeGrid([0.0, 1.0, 1.0])
    g = TimeGrid.uniform(5, start=2.0, step=0.5)
    assert list(g.times) == [2.0, 2.5, 3.0, 3.5, 4.0]
    assert not g.is_unit_spaced
    assert TimeGrid.uniform(4).is_unit_spaced


def test_synthesize_noise_free_examples(grid200):
    assert np.all(synthesize([], grid200, 0.0).samples == 0)
    ones = synthesize([ComponentParams(1, 0, 0)], TimeGrid([0.0, 0.3, 2.0]), 0.0)
    assert np.all(ones.samples == 1)
    phis = (0.4, 1.9, 5.0)
    comps = [
        ComponentParams(1, phis[0], 0.7),
        ComponentParams(1, phis[1], 0.5, 1 / 200),
        ComponentParams(1, phis[2], 1.5, 1 / 150, 1e-5),
    ]
    sig = synthesize(comps, grid200, 0.0)
    assert sig.samples[0] == pytest.approx(sum(np.exp(1j * p) for p in phis), abs=1e-14)
    assert nls_cost(sig, comps) < 1e-20 * sig.n * np.max(np.abs(sig.samples)) ** 2


def test_synthesize_rejects_negative_variance(grid200):
    with pytest.raises(ValueError):
        synthesize([], grid200, -1.0)


def test_synthesize_deterministic(grid200, three_lines):
    a = synthesize(three_lines, grid200, 1e-3, seed=7)
    b = synthesize(three_lines, grid200, 1e-3, seed=7)
    c = synthesize(three_lines, grid200, 1e-3, seed=8)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_noise_power_and_split():
    g = TimeGrid.uniform(10_000)
    noise = synthesize([], g, 2.0, seed=3).samples
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(2.0, rel=0.05)
    assert np.var(noise.real) == pytest.approx(1.0, rel=0.05)
    assert np.var(noise.imag) == pytest.approx(1.0, rel=0.05)


def test_nls_cost_examples(grid200):
    zero = SignalRecord(np.zeros(200), grid200)
    assert nls_cost(zero, []) == 0.0
    ones = SignalRecord(np.ones(200), grid200)
    assert nls_cost(ones, []) == 200.0


def test_reconstruct_is_sum(grid200, three_lines):
    total = reconstruct(three_lines, grid200)
    parts = sum(component_value(grid200.times, c) for c in three_lines)
    assert np.allclose(total, parts, atol=1e-15)


def test_signal_record_length_check(grid200):
    with pytest.raises(ValueError):
        SignalRecord(np.zeros(10), grid200)
