"""Polynomially damped cisoid signal family.

Each component is ``r * exp(-beta*t - gamma*t**2) * exp(i*(phi + omega*t))``.
Cisoids have ``beta = gamma = 0``, Lorentzians ``gamma = 0`` and Voigt
components may use both decay terms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class ModelClass(enum.IntEnum):
    """Envelope class of a component, ordered by model complexity."""

    CISOID = 0
    LORENTZIAN = 1
    VOIGT = 2

    @classmethod
    def parse(cls, value: "str | int | ModelClass") -> "ModelClass":
        if isinstance(value, ModelClass):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown model class {value!r}") from None
        return cls(value)

    @property
    def label(self) -> str:
        return self.name.capitalize()

    def next(self) -> "ModelClass":
        if self is ModelClass.VOIGT:
            raise ValueError("Voigt is the richest model class")
        return ModelClass(self + 1)


def wrap_phase(phi: float) -> float:
    """Map an angle to [0, 2*pi)."""
    wrapped = math.fmod(phi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    # fmod of values just below 0 can round up to exactly 2*pi
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


@dataclass(frozen=True)
class ComponentParams:
    """Parameters ``(r, phi, omega, beta, gamma)`` of one damped component.

    ``model_class`` defaults to the least complex class consistent with the
    decay values. An explicit class is checked against them.
    """

    r: float
    phi: float
    omega: float
    beta: float = 0.0
    gamma: float = 0.0
    model_class: ModelClass | None = None

    def __post_init__(self):
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "phi", wrap_phase(float(self.phi)))
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "gamma", float(self.gamma))
        if not self.r > 0.0:
            raise ValueError(f"amplitude must be positive, got r={self.r}")
        if self.beta < 0.0 or self.gamma < 0.0:
            raise ValueError(
                f"decay parameters must be non-negative (beta={self.beta}, gamma={self.gamma})"
            )
        if not all(math.isfinite(v) for v in (self.r, self.phi, self.omega, self.beta, self.gamma)):
            raise ValueError("component parameters must be finite")
        if self.model_class is None:
            if self.gamma > 0.0:
                cls = ModelClass.VOIGT
            elif self.beta > 0.0:
                cls = ModelClass.LORENTZIAN
            else:
                cls = ModelClass.CISOID
            object.__setattr__(self, "model_class", cls)
        else:
            cls = ModelClass.parse(self.model_class)
            object.__setattr__(self, "model_class", cls)
            if cls is ModelClass.CISOID and (self.beta != 0.0 or self.gamma != 0.0):
                raise ValueError("a cisoid must have beta = gamma = 0")
            if cls is ModelClass.LORENTZIAN and self.gamma != 0.0:
                raise ValueError("a Lorentzian component must have gamma = 0")

    def with_(self, **changes) -> "ComponentParams":
        return replace(self, **changes)

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.phi, self.omega, self.beta, self.gamma])

    @property
    def complex_amplitude(self) -> complex:
        return self.r * complex(math.cos(self.phi), math.sin(self.phi))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sampling instants."""

    times: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        if times.size < 2:
            raise ValueError("a time grid needs at least two instants")
        if not np.all(np.isfinite(times)):
            raise ValueError("time grid contains non-finite values")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("time grid must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, n: int, start: float = 0.0, step: float = 1.0) -> "TimeGrid":
        """Grid ``t_n = start + (n - 1) * step`` for ``n = 1..N``."""
        return cls(start + step * np.arange(n, dtype=float))

    @property
    def n(self) -> int:
        return int(self.times.size)

    def __len__(self) -> int:
        return self.n

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def is_unit_spaced(self) -> bool:
        return bool(np.allclose(np.diff(self.times), 1.0, rtol=0.0, atol=1e-12))

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self) -> int:
        return hash(self.times.tobytes())


@dataclass(frozen=True)
class SignalRecord:
    """Complex samples on a time grid, with the noise variance if known."""

    samples: np.ndarray = field(repr=False)
    grid: TimeGrid
    noise_variance: float | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex).ravel()
        if samples.size != self.grid.n:
            raise ValueError(
                f"sample count {samples.size} does not match grid length {self.grid.n}"
            )
        object.__setattr__(self, "samples", samples)
        if self.noise_variance is not None and not self.noise_variance > 0.0:
            object.__setattr__(self, "noise_variance", None)

    @property
    def n(self) -> int:
        return self.grid.n

    def with_samples(self, samples: np.ndarray) -> "SignalRecord":
        return SignalRecord(samples, self.grid, self.noise_variance)


def envelope(t, beta: float, gamma: float):
    """``exp(-beta*t - gamma*t**2)``; accepts scalars or arrays."""
    return np.exp(-beta * np.asarray(t, dtype=float) - gamma * np.square(t))


def component_value(t, psi: ComponentParams):
    """Noise-free value of one component at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    return psi.r * envelope(t, psi.beta, psi.gamma) * np.exp(1j * (psi.phi + psi.omega * t))


def reconstruct(components: Iterable[ComponentParams], grid: TimeGrid) -> np.ndarray:
    """Sum of component waveforms sampled on ``grid``."""
    out = np.zeros(grid.n, dtype=complex)
    for psi in components:
        out += component_value(grid.times, psi)
    return out


def complex_noise(rng: np.random.Generator, n: int, sigma2: float) -> np.ndarray:
    """Circularly symmetric Gaussian noise with total variance ``sigma2``."""
    scale = math.sqrt(sigma2 / 2.0)
    draws = rng.standard_normal((n, 2))
    return scale * (draws[:, 0] + 1j * draws[:, 1])


def synthesize(
    components: Sequence[ComponentParams],
    grid: TimeGrid,
    sigma2: float,
    seed: int | np.random.Generator | None = None,
) -> SignalRecord:
    """Sample the model on ``grid`` and add complex white Gaussian noise."""
    if sigma2 < 0.0 or not math.isfinite(sigma2):
        raise ValueError(f"noise variance must be non-negative, got {sigma2}")
    clean = reconstruct(components, grid)
    if sigma2 > 0.0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        clean = clean + complex_noise(rng, grid.n, sigma2)
    return SignalRecord(clean, grid, sigma2 if sigma2 > 0.0 else None)


def nls_cost(signal: SignalRecord, components: Sequence[ComponentParams]) -> float:
    """Sum of squared moduli of the residual ``y - sum_k mu_k``."""
    resid = signal.samples - reconstruct(components, signal.grid)
    return float(np.vdot(resid, resid).real)
