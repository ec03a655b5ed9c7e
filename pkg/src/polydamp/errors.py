"""Exception types raised by the estimation and testing routines."""


class PolydampError(Exception):
    """Base class for numerical failures (CLI exit code 2)."""


class DegenerateEnvelope(PolydampError):
    """The template envelope is numerically zero on the whole grid."""


class NoCandidate(PolydampError):
    """No spectral peak above the numerical floor."""


class BracketFailure(PolydampError):
    """Endpoint signs do not bracket a root of the decay sign function."""


class EmptyComplement(PolydampError):
    """Neighbourhoods leave no bins for estimating the noise power."""


class SingularFisher(PolydampError):
    """The active Fisher sub-matrix is too ill-conditioned to invert."""
