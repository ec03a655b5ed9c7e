import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polydamp.config import ConfigError, ExperimentConfig, GridSpec, dump, load, loads, section6_config
from polydamp.estimation import FitConfig
from polydamp.fileio import SignalFileError, format_signal, parse_signal, report_dict
from polydamp.pipeline import run_pipeline
from polydamp.signal_model import ComponentParams, SignalRecord, TimeGrid, synthesize


def test_default_config_round_trip(tmp_path):
    cfg = section6_config(seed=9, noise_variances=(1e-4, 3.3e-3))
    path = tmp_path / "c.yaml"
    dump(cfg, path)
    assert load(path) == cfg
    assert loads(cfg.dumps()).dumps() == cfg.dumps()


@given(
    st.integers(2, 500),
    st.floats(-10, 10),
    st.floats(1e-3, 10),
    st.lists(st.floats(1e-12, 10), min_size=1, max_size=4),
    st.integers(1, 1000),
    st.integers(0, 2**31),
)
def test_round_trip_property(n, start, step, s2, reps, seed):
    cfg = ExperimentConfig(
        grid=GridSpec(n, start, step), noise_variances=tuple(s2), repetitions=reps, seed=seed,
        fit=FitConfig(refine_tolerance=1e-9),
    )
    assert loads(cfg.dumps()) == cfg


def test_minimal_config():
    cfg = loads("grid:\n  n: 50\n")
    assert cfg.grid.n == 50 and cfg.components == ()


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("grid:\n  n: 200\nrepetitions: 0\n", 3, "repetitions"),
        ("grid:\n  n: 200\n  step: -1\n", 3, "step"),
        ("grid:\n  n: 1\n", 2, "grid.n"),
        ("grid:\n  n: 200\nbogus: 1\n", 3, "unknown key"),
        ("grid:\n  n: 200\ncomponents:\n  - {r: 1, phi: 0, omega: 0.5}\n  - {r: 1, phi: x, omega: 0.5}\n", 5, "phi"),
        ("grid:\n  n: 200\nnoise_variances: [1e-3, -1]\n", 3, "positive"),
        ("grid:\n  n: 200\ntest: {alpha: 2}\n", 3, "alpha"),
        ("grid:\n  n: 200\nfit:\n  max_components: 2.5\n", 4, "integer"),
        ("grid:\n  n: 200\nseed: abc\n", 3, "number"),
        ("grid: [1\n", 2, "malformed"),
    ],
)
def test_line_precise_errors(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        loads(text, "cfg.yaml")
    msg = str(err.value)
    assert msg.startswith(f"cfg.yaml:{line}:"), msg
    assert fragment in msg


def test_missing_grid_and_file():
    with pytest.raises(ConfigError, match="grid"):
        loads("seed: 1\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load("/nonexistent/x.yaml")


def test_random_phase_draws():
    cfg = section6_config()
    a = cfg.draw_components(np.random.default_rng(1))
    b = cfg.draw_components(np.random.default_rng(1))
    assert a == b and len(a) == 3
    assert [c.model_class.label for c in a] == ["Cisoid", "Lorentzian", "Voigt"]


def test_signal_file_round_trip():
    g = TimeGrid(np.array([0.0, 0.1, 0.35, 1.0 / 3.0 + 1]))
    sig = SignalRecord(np.array([1 + 2j, -1e-300 + 0j, math.pi - 1j / 7, 0j]), g, 0.125)
    back, meta = parse_signal(format_signal(sig, {"seed": 4}))
    assert np.array_equal(back.samples, sig.samples)
    assert np.array_equal(back.grid.times, g.times)
    assert back.noise_variance == 0.125 and meta["seed"] == "4"


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("index,t,re\n0,0,1\n", "header"),
        ("index,t,re,im\n0,0,1\n", "4 columns"),
        ("index,t,re,im\n0,0,a,1\n", "non-numeric"),
        ("index,t,re,im\n", "no samples"),
        ("index,t,re,im\n0,1,0,0\n1,0,0,0\n", "increasing"),
    ],
)
def test_signal_file_errors(text, fragment):
    with pytest.raises(SignalFileError, match=fragment):
        parse_signal(text)


def test_report_dict(grid200):
    rep = run_pipeline(synthesize([ComponentParams(1, 0.4, 1.1, 0.01)], grid200, 1e-4, seed=2))
    d = report_dict(rep)
    assert d["steps_executed"] == 3
    assert d["components"][0]["class"] == "Lorentzian"
    assert len(d["components"][0]["verdicts"]) == 2
