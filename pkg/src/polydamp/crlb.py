"""Cramér-Rao bounds for multi-component damped-cisoid models.

Each component contributes the five parameters ``(r, phi, omega, beta,
gamma)`` in that order. The Fisher matrix always covers all of them;
which ones are actually estimated is chosen when inverting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import SingularFisher
from .signal_model import ComponentParams, ModelClass, TimeGrid, component_value

PARAM_NAMES = ("r", "phi", "omega", "beta", "gamma")
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class FisherMatrix:
    matrix: np.ndarray
    n_components: int
    sigma2: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (5 * self.n_components, 5 * self.n_components):
            raise ValueError(f"expected a {5 * self.n_components}-square matrix, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("Fisher matrix has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def labels(self) -> list[str]:
        return [f"{name}{k}" for k in range(self.n_components) for name in PARAM_NAMES]


def partials(t: np.ndarray, psi: ComponentParams) -> np.ndarray:
    """``(5, N)`` complex derivatives of one component's waveform."""
    t = np.asarray(t, dtype=float)
    mu = component_value(t, psi)
    return np.stack([mu / psi.r, 1j * mu, 1j * t * mu, -t * mu, -t * t * mu])


def jacobian(components: Sequence[ComponentParams], grid: TimeGrid) -> np.ndarray:
    """``(N, 5K)`` complex Jacobian of the summed model."""
    if not components:
        return np.zeros((grid.n, 0), dtype=complex)
    return np.concatenate([partials(grid.times, c) for c in components]).T


def fisher_information(
    components: Sequence[ComponentParams], grid: TimeGrid, sigma2: float
) -> FisherMatrix:
    """``(2 / sigma2) Re(J^H J)`` for circular complex Gaussian noise."""
    if not (sigma2 > 0.0 and math.isfinite(sigma2)):
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    j = jacobian(components, grid)
    f = (2.0 / sigma2) * np.real(j.conj().T @ j)
    f = 0.5 * (f + f.T)
    return FisherMatrix(f, len(components), float(sigma2))


def active_mask(classes: Sequence[ModelClass | str | int]) -> np.ndarray:
    """Boolean mask over the 5K parameters keeping what each class estimates."""
    out = []
    for cls in classes:
        cls = ModelClass.parse(cls)
        out += [True, True, True, cls >= ModelClass.LORENTZIAN, cls is ModelClass.VOIGT]
    return np.array(out, dtype=bool)


def condition_number(f: np.ndarray) -> float:
    """Condition number after symmetric diagonal scaling to unit diagonal.

    Parameters live on wildly different scales (gamma multiplies t**2), so
    the raw condition number says more about units than identifiability.
    """
    d = np.sqrt(np.diag(f))
    if np.any(d <= 0.0):
        return math.inf
    eig = np.linalg.eigvalsh(f / np.outer(d, d))
    if eig[0] <= 0.0:
        return math.inf
    return float(eig[-1] / eig[0])


def crlb_diag(fisher: FisherMatrix | np.ndarray, active: Sequence[bool] | None = None) -> np.ndarray:
    """Variance bounds for the active parameters, in mask order.

    Inactive parameters are treated as known. Raises :class:`SingularFisher`
    when the scaled sub-matrix is too ill-conditioned to invert.
    """
    f = fisher.matrix if isinstance(fisher, FisherMatrix) else np.asarray(fisher, dtype=float)
    mask = np.ones(f.shape[0], dtype=bool) if active is None else np.asarray(active, dtype=bool)
    if mask.shape != (f.shape[0],):
        raise ValueError(f"mask length {mask.size} does not match matrix size {f.shape[0]}")
    sub = f[np.ix_(mask, mask)]
    if sub.size == 0:
        return np.zeros(0)
    cond = condition_number(sub)
    if cond > CONDITION_LIMIT:
        raise SingularFisher(f"Fisher matrix condition number {cond:.3g} exceeds {CONDITION_LIMIT:g}")
    d = np.sqrt(np.diag(sub))
    scaled = sub / np.outer(d, d)
    factor = linalg.cho_factor(scaled, lower=True)
    inv = linalg.cho_solve(factor, np.eye(sub.shape[0]))
    return np.diag(inv) / (d * d)


def component_bounds(
    components: Sequence[ComponentParams], grid: TimeGrid, sigma2: float
) -> list[dict[str, float]]:
    """Root-CRLB per component and parameter under each component's own class.

    Parameters a class does not estimate are reported as NaN.
    """
    fim = fisher_information(components, grid, sigma2)
    mask = active_mask([c.model_class for c in components])
    var = iter(crlb_diag(fim, mask))
    out = []
    for k in range(len(components)):
        row = {}
        for i, name in enumerate(PARAM_NAMES):
            row[name] = math.sqrt(next(var)) if mask[5 * k + i] else math.nan
        out.append(row)
    return out


def cisoid_omega_bound(r: float, n: int, sigma2: float) -> float:
    """Frequency variance bound of a single cisoid on a unit-spaced grid."""
    return 6.0 * sigma2 / (r * r * n * (n * n - 1.0))
