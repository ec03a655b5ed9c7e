"""Estimation and classification of polynomially damped complex sinusoids."""

from .crlb import FisherMatrix, crlb_diag, fisher_information
from .errors import (
    BracketFailure,
    DegenerateEnvelope,
    EmptyComplement,
    NoCandidate,
    PolydampError,
    SingularFisher,
)
from .estimation import FitConfig, FitResult, fit_multi, fit_single, solve_amp_phase
from .pipeline import PipelineConfig, PipelineReport, run_pipeline
from .pseudo_true import PseudoTrueResult, pseudo_true_cisoid, pseudo_true_lorentzian
from .signal_model import (
    ComponentParams,
    ModelClass,
    SignalRecord,
    TimeGrid,
    envelope,
    nls_cost,
    reconstruct,
    synthesize,
)
from .spectrum_test import classify_residual, periodogram

__version__ = "0.1.0"
