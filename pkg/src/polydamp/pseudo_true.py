"""Limits of mismatched single-component fits.

When a damped component is fitted with a simpler envelope, the estimates
converge (at high SNR) to the parameters minimising the expected fit cost,
not to the true ones. Frequency and phase stay unbiased. A cisoid template
recovers the mean envelope as its amplitude. A Lorentzian template fitted to a Voigt
line overshoots the linear decay, by at most ``gamma * (t_N + t_{N-1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketFailure
from .signal_model import ComponentParams, ModelClass, TimeGrid, component_value, envelope


@dataclass(frozen=True)
class PseudoTrueResult:
    r0: float
    phi0: float
    omega0: float
    beta0: float | None = None
    bracket: tuple[float, float] | None = None

    def as_component(self) -> ComponentParams:
        beta = 0.0 if self.beta0 is None else self.beta0
        cls = ModelClass.CISOID if self.beta0 is None else ModelClass.LORENTZIAN
        return ComponentParams(self.r0, self.phi0, self.omega0, beta, 0.0, cls)


def expected_fit_cost(theta: ComponentParams, psi: ComponentParams, grid: TimeGrid) -> float:
    """Noise-free template mismatch ``sum_n |mu(t_n; psi) - mu(t_n; theta)|**2``.

    For fixed noise variance this equals the expected negative
    log-likelihood of the template ``theta`` up to additive and positive
    multiplicative constants.
    """
    if theta.model_class is ModelClass.VOIGT:
        raise ValueError("the template must be a cisoid or a Lorentzian")
    t = grid.times
    diff = component_value(t, psi) - component_value(t, theta)
    return float(np.vdot(diff, diff).real)


def pseudo_true_cisoid(psi: ComponentParams, grid: TimeGrid) -> PseudoTrueResult:
    """Cisoid template: amplitude shrinks to the mean envelope."""
    r0 = psi.r * float(np.mean(envelope(grid.times, psi.beta, psi.gamma)))
    return PseudoTrueResult(r0, psi.phi, psi.omega)


def _pairs(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays ``(m, n)`` over all pairs with ``m > n``."""
    n, m = np.triu_indices(t.size, k=1)
    return m, n


def _psi(beta0: float, t, a, m, n) -> float:
    tm, tn = t[m], t[n]
    weight = (tm - tn) * np.exp(-beta0 * (tm + tn))
    return float(np.sum(weight * (a[n] * np.exp(-beta0 * tm) - a[m] * np.exp(-beta0 * tn))))


def psi_sign_function(beta0: float, psi: ComponentParams, grid: TimeGrid) -> float:
    """Function with the sign and zeros of the derivative of the Lorentzian
    template's matched power with respect to its decay ``beta0``.

    Evaluated pair by pair so that each term's sign survives rounding.
    """
    t = grid.times
    m, n = _pairs(t)
    return _psi(beta0, t, envelope(t, psi.beta, psi.gamma), m, n)


def lorentzian_objective(beta0: float, psi: ComponentParams, grid: TimeGrid) -> float:
    """Matched power ``(r/2) (sum a_n e^{-beta0 t_n})**2 / sum e^{-2 beta0 t_n}``."""
    t = grid.times
    a = envelope(t, psi.beta, psi.gamma)
    e = np.exp(-beta0 * t)
    return 0.5 * psi.r * float(np.sum(a * e)) ** 2 / float(np.sum(e * e))


def decay_bracket(psi: ComponentParams, grid: TimeGrid) -> tuple[float, float]:
    """``(beta, beta + gamma * (t_N + t_{N-1}))``, the two largest instants."""
    t = grid.times
    return psi.beta, psi.beta + psi.gamma * float(t[-1] + t[-2])


def pseudo_true_lorentzian(
    psi: ComponentParams, grid: TimeGrid, tol: float | None = None
) -> PseudoTrueResult:
    """Lorentzian template: decay found by bisection inside the proven bracket."""
    lo, hi = decay_bracket(psi, grid)
    if psi.gamma == 0.0:
        beta0 = psi.beta
    else:
        t = grid.times
        a = envelope(t, psi.beta, psi.gamma)
        m, n = _pairs(t)
        f_lo = _psi(lo, t, a, m, n)
        f_hi = _psi(hi, t, a, m, n)
        if not (f_lo > 0.0 and f_hi <= 0.0):
            raise BracketFailure(
                f"sign function is {f_lo:.3g} at beta={lo:.6g} and {f_hi:.3g} at {hi:.6g}"
            )
        right = hi
        if t.size >= 3:
            # tighter endpoint using the second and third largest instants
            alt = psi.beta + psi.gamma * float(t[-2] + t[-3])
            if alt > lo and _psi(alt, t, a, m, n) <= 0.0:
                right = alt
        if tol is None:
            tol = 1e-12 * (1.0 + (hi - lo))
        left = lo
        while right - left > tol:
            mid = 0.5 * (left + right)
            if mid <= left or mid >= right:
                break
            if _psi(mid, t, a, m, n) > 0.0:
                left = mid
            else:
                right = mid
        beta0 = right
    t = grid.times
    e = np.exp(-beta0 * t)
    r0 = psi.r * float(np.sum(envelope(t, psi.beta, psi.gamma) * e)) / float(np.sum(e * e))
    return PseudoTrueResult(r0, psi.phi, psi.omega, beta0, (lo, hi))


def brute_force_cisoid(
    psi: ComponentParams, grid: TimeGrid, r_points: int = 201, phi_points: int = 181, omega_points: int = 121,
    omega_halfwidth: float | None = None,
) -> tuple[float, float, float]:
    """Dense-grid minimiser of :func:`expected_fit_cost` over cisoid templates.

    Independent of the closed form: searches amplitude in ``[0, r]``, phase
    over the full circle and frequency in a window around ``psi.omega``.
    Returns ``(r0, phi0, omega0)``.
    """
    t = grid.times
    target = component_value(t, psi)
    if omega_halfwidth is None:
        omega_halfwidth = 2.0 * math.pi / grid.span
    rs = np.linspace(0.0, psi.r, r_points)
    phis = np.linspace(0.0, 2.0 * math.pi, phi_points, endpoint=False)
    omegas = psi.omega + np.linspace(-omega_halfwidth, omega_halfwidth, omega_points)
    best = (math.inf, 0.0, 0.0, 0.0)
    # |y - r e^{i(phi + w t)}|^2 = |y|^2 - 2 r Re(e^{-i phi} sum y e^{-i w t}) + r^2 N
    y_energy = float(np.vdot(target, target).real)
    proj = np.exp(-1j * np.outer(omegas, t)) @ target
    rot = np.exp(-1j * phis)
    cross = np.real(proj[:, None] * rot[None, :])
    for r in rs:
        cost = y_energy - 2.0 * r * cross + r * r * t.size
        k = np.unravel_index(np.argmin(cost), cost.shape)
        if cost[k] < best[0]:
            best = (float(cost[k]), float(r), float(phis[k[1]]), float(omegas[k[0]]))
    return best[1], best[2], best[3]


def brute_force_decay(
    psi: ComponentParams, grid: TimeGrid, points: int = 1_000_001, lo: float | None = None, hi: float | None = None
) -> float:
    """Dense scan maximiser of :func:`lorentzian_objective` over ``beta0``."""
    b_lo, b_hi = decay_bracket(psi, grid)
    lo = b_lo if lo is None else lo
    hi = b_hi if hi is None else hi
    t = grid.times
    a = envelope(t, psi.beta, psi.gamma)
    betas = np.linspace(lo, hi, points)
    best_val, best_beta = -math.inf, lo
    for chunk in np.array_split(betas, max(1, points // 20000)):
        e = np.exp(-np.outer(chunk, t))
        vals = (e @ a) ** 2 / np.einsum("ij,ij->i", e, e)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_beta = float(vals[k]), float(chunk[k])
    return best_beta
