import math

import numpy as np
import pytest

from polydamp.pipeline import PipelineConfig, _Pipeline, estimate_noise_variance, run_pipeline
from polydamp.pseudo_true import pseudo_true_lorentzian
from polydamp.signal_model import (
    ComponentParams,
    ModelClass,
    SignalRecord,
    TimeGrid,
    reconstruct,
    synthesize,
)
from polydamp.spectrum_test import NeighborhoodSet


def test_single_cisoid_stops_after_first_step(grid200):
    sig = synthesize([ComponentParams(1, 0.4, 1.1)], grid200, 1e-4, seed=3)
    rep = run_pipeline(sig)
    assert rep.classes == [ModelClass.CISOID]
    assert rep.steps_executed == 1


def test_noise_free_voigt_escalates_fully():
    grid = TimeGrid.uniform(100)
    truth = ComponentParams(1, 0.8, 1.2, 0.01, 4e-5)
    rep = run_pipeline(synthesize([truth], grid, 0.0))
    assert rep.steps_executed == 5
    (c,) = rep.components
    assert c.final_class is ModelClass.VOIGT
    assert c.params.beta == pytest.approx(truth.beta, rel=1e-6)
    assert c.params.gamma == pytest.approx(truth.gamma, rel=1e-6)
    # insufficient as cisoid, then as Lorentzian
    assert [v.sufficient for v in c.verdict_history] == [False, False]


def test_three_lines_low_noise(grid200, three_lines):
    rep = run_pipeline(synthesize(three_lines, grid200, 1e-4, seed=11))
    assert [c.final_class for c in rep.components] == [
        ModelClass.LORENTZIAN, ModelClass.CISOID, ModelClass.VOIGT
    ]
    assert [s.step for s in rep.snapshots] == [1, 3, 5]
    assert np.allclose(
        rep.residual.samples,
        reconstruct([], grid200) + synthesize(three_lines, grid200, 1e-4, seed=11).samples
        - reconstruct([c.params for c in rep.components], grid200),
        atol=1e-12,
    )
    assert rep.noise_variance_estimate == pytest.approx(1e-4, rel=0.3)


def test_classes_only_move_up(grid200, three_lines):
    rep = run_pipeline(synthesize(three_lines, grid200, 1e-3, seed=5))
    first = {round(p.omega, 2): p.model_class for p in rep.snapshots[0].components}
    for c in rep.components:
        key = round(c.params.omega, 2)
        if key in first:
            assert c.final_class >= first[key]


def test_pure_noise_empty(grid200):
    rep = run_pipeline(synthesize([], grid200, 1.0, seed=0))
    assert rep.components == []
    assert rep.residual.samples.shape == (200,)


def test_idempotent_on_residual(grid200, three_lines):
    runs, empty = 30, 0
    for s in range(runs):
        rep = run_pipeline(synthesize(three_lines, grid200, 1e-4, seed=100 + s))
        again = run_pipeline(rep.residual)
        empty += not again.components
    assert empty / runs >= 0.9


def test_voigt_window_holds_true_beta(grid200):
    truth = ComponentParams(1, 0, 1.5, 1 / 150, 1e-5)
    beta0 = pseudo_true_lorentzian(truth, grid200).beta0
    sig = synthesize([truth], grid200, 0.0)
    pipe = _Pipeline(sig, PipelineConfig())
    win = pipe.seed_window(truth.with_(beta=beta0, gamma=0.0, model_class=ModelClass.LORENTZIAN), ModelClass.VOIGT)
    assert win.beta[0] <= truth.beta <= win.beta[1]


def test_noise_variance_estimate():
    g = TimeGrid.uniform(10_000)
    assert estimate_noise_variance(synthesize([], g, 1.0, seed=1)) == pytest.approx(1.0, rel=0.05)
    assert estimate_noise_variance(SignalRecord(np.zeros(50), TimeGrid.uniform(50))) == 0.0
    # a constant periodogram of P over the complement
    y = np.zeros(64, dtype=complex)
    y[0] = 1.0  # impulse: flat periodogram of 1/N
    nb = NeighborhoodSet.around(1.0, 64, 3)
    assert estimate_noise_variance(SignalRecord(y, TimeGrid.uniform(64)), [nb]) == pytest.approx(1 / 64)


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(alpha=0.0)
    with pytest.raises(ValueError):
        PipelineConfig(half_width=-1)
    assert PipelineConfig(half_width=5).fit.half_width == 5
