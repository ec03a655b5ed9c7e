"""Approximate maximum-likelihood fitting under a fixed envelope class.

Components are found one at a time by greedy deflation. Each new component
starts from a coarse search (zero-padded periodogram peaks for the
frequency, logarithmic grids for the decays) and is polished by cyclic
golden-section line searches. Amplitude and phase never enter the nonlinear
search: for a fixed template they follow from a one-dimensional complex
least-squares solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import DegenerateEnvelope, NoCandidate
from .signal_model import (
    TWO_PI,
    ComponentParams,
    ModelClass,
    SignalRecord,
    nls_cost,
    reconstruct,
)
from .spectrum_test import dense_periodogram, strongest_peak_test

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_ENV_FLOOR = np.finfo(float).eps


@dataclass(frozen=True)
class FitConfig:
    max_components: int = 8
    omega_peaks: int = 3
    beta_bins: int = 16
    gamma_bins: int = 12
    refine_tolerance: float = 1e-10
    refine_max_iters: int = 5
    cycle_passes: int = 2
    alpha_stop: float = 0.01
    half_width: int = 3
    oversample: int = 8
    # weak peaks this close to a much stronger fitted line are its misfit
    satellite_ratio: float = 0.5

    def __post_init__(self):
        if self.max_components < 1:
            raise ValueError("max_components must be at least 1")
        if self.omega_peaks < 1:
            raise ValueError("omega_peaks must be at least 1")
        if self.beta_bins < 2 or self.gamma_bins < 2:
            raise ValueError("decay grids need at least two points")
        if not self.refine_tolerance > 0.0:
            raise ValueError("refine_tolerance must be positive")
        if self.refine_max_iters < 1 or self.cycle_passes < 0:
            raise ValueError("iteration counts must be positive")
        if not 0.0 < self.alpha_stop < 1.0:
            raise ValueError("alpha_stop must lie in (0, 1)")
        if self.half_width < 0 or self.oversample < 1:
            raise ValueError("half_width must be >= 0 and oversample >= 1")
        if not 0.0 <= self.satellite_ratio < 1.0:
            raise ValueError("satellite_ratio must lie in [0, 1)")


@dataclass
class FitResult:
    components: list[ComponentParams]
    residual: SignalRecord
    cost: float


@dataclass(frozen=True)
class SearchWindow:
    """Optional box restricting the nonlinear search of one component."""

    omega: tuple[float, float] | None = None
    beta: tuple[float, float] | None = None
    gamma: tuple[float, float] | None = None


# ---------------------------------------------------------------------------
# linear sub-problem


def _template(times: np.ndarray, omega: float, beta: float, gamma: float) -> np.ndarray:
    return np.exp((-beta + 1j * omega) * times - gamma * times * times)


def _complex_amplitude(y: np.ndarray, b: np.ndarray) -> tuple[complex, float]:
    energy = float(np.vdot(b, b).real)
    if not energy > _ENV_FLOOR:
        raise DegenerateEnvelope(f"template energy {energy:.3g} is numerically zero")
    return complex(np.vdot(b, y)) / energy, energy


def solve_amp_phase(
    signal: SignalRecord, omega: float, beta: float = 0.0, gamma: float = 0.0
) -> tuple[float, float]:
    """Least-squares amplitude and phase for a fixed template."""
    c, _ = _complex_amplitude(signal.samples, _template(signal.grid.times, omega, beta, gamma))
    r = abs(c)
    if r == 0.0:
        return 0.0, 0.0
    phi = math.atan2(c.imag, c.real) % TWO_PI
    return r, phi


def _profile_cost(y: np.ndarray, y_energy: float, times: np.ndarray, omega, beta, gamma) -> float:
    b = _template(times, omega, beta, gamma)
    energy = float(np.vdot(b, b).real)
    if not energy > _ENV_FLOOR:
        return y_energy
    proj = np.vdot(b, y)
    return y_energy - (proj.real**2 + proj.imag**2) / energy


def _params_from(y, times, omega, beta, gamma, model_class) -> ComponentParams:
    c, _ = _complex_amplitude(y, _template(times, omega, beta, gamma))
    if c == 0:
        raise NoCandidate("least-squares amplitude is zero")
    return ComponentParams(abs(c), math.atan2(c.imag, c.real), omega, beta, gamma, model_class)


# ---------------------------------------------------------------------------
# coarse grids


def decay_grids(times: np.ndarray, config: FitConfig) -> tuple[np.ndarray, np.ndarray]:
    span = float(times[-1] - times[0])
    betas = np.concatenate(([0.0], np.geomspace(1e-4 / span, 10.0 / span, config.beta_bins)))
    gammas = np.concatenate(
        ([0.0], np.geomspace(1e-4 / span**2, 10.0 / span**2, config.gamma_bins))
    )
    return betas, gammas


def gamma_max(times: np.ndarray, config: FitConfig) -> float:
    return float(decay_grids(times, config)[1][-1])


def _restrict(grid: np.ndarray, bounds: tuple[float, float] | None, size: int) -> np.ndarray:
    if bounds is None:
        return grid
    lo, hi = bounds
    inside = grid[(grid >= lo) & (grid <= hi)]
    if inside.size >= 2:
        return np.unique(np.concatenate((inside, [lo, hi])))
    return np.linspace(lo, hi, size)


def _omega_candidates(
    signal: SignalRecord,
    config: FitConfig,
    window: tuple[float, float] | None,
    exclude: Sequence[float],
) -> np.ndarray:
    omegas, power = dense_periodogram(signal, config.oversample)
    floor = 1e-14 * max(float(np.vdot(signal.samples, signal.samples).real), 1e-300)
    peaks = (power >= np.roll(power, 1)) & (power >= np.roll(power, -1)) & (power > floor)
    allowed = np.ones_like(peaks)
    if window is not None:
        lo, hi = window
        # windows may straddle the 0 / 2 pi seam
        rel = (omegas - lo) % TWO_PI
        allowed &= rel <= (hi - lo)
    bin_width = TWO_PI / signal.n
    for w in exclude:
        dist = np.abs((omegas - w + math.pi) % TWO_PI - math.pi)
        allowed &= dist > (config.half_width + 0.5) * bin_width
    idx = np.flatnonzero(peaks & allowed)
    if idx.size == 0 and window is not None:
        # a window narrower than the peak spacing may hold no local maximum
        inside = np.flatnonzero(allowed & (power > floor))
        if inside.size:
            idx = inside[[np.argmax(power[inside])]]
    if idx.size == 0:
        raise NoCandidate("no periodogram peak above the numerical floor")
    idx = idx[np.argsort(power[idx])[::-1][: config.omega_peaks]]
    return omegas[idx]


def _coarse_decays(y, y_energy, times, omega, betas, gammas) -> tuple[float, float, float]:
    bb, gg = np.meshgrid(betas, gammas, indexing="ij")
    bb = bb.ravel()
    gg = gg.ravel()
    env = np.exp(-np.outer(bb, times) - np.outer(gg, times * times))
    rot = np.exp(-1j * omega * times) * y
    proj = env @ rot
    energy = np.einsum("ij,ij->i", env, env)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(energy > _ENV_FLOOR, np.abs(proj) ** 2 / energy, 0.0)
    costs = y_energy - gain
    best = costs.min()
    # parsimony among ties: grids are sorted so the first hit has the smallest decays
    tie = np.flatnonzero(costs <= best + 1e-12 * max(abs(best), y_energy, 1e-300))
    k = int(tie[0])
    return float(bb[k]), float(gg[k]), float(costs[k])


# ---------------------------------------------------------------------------
# local refinement


def golden_section(f, lo: float, hi: float, iters: int = 24) -> tuple[float, float]:
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _active(model_class: ModelClass) -> list[int]:
    return [0, 1, 2][: int(model_class) + 1]


def _window_bounds(window: SearchWindow | None) -> list[tuple[float, float]]:
    bounds = [(-math.inf, math.inf), (0.0, math.inf), (0.0, math.inf)]
    if window is not None:
        for i, bnd in enumerate((window.omega, window.beta, window.gamma)):
            if bnd is not None:
                bounds[i] = (max(bounds[i][0], bnd[0]), min(bounds[i][1], bnd[1]))
    return bounds


def refine(
    signal: SignalRecord,
    start: ComponentParams,
    model_class: ModelClass,
    config: FitConfig,
    window: SearchWindow | None = None,
    steps: Sequence[float] | None = None,
) -> tuple[ComponentParams, float]:
    """Cyclic golden-section descent over the active nonlinear parameters,
    finished by a bounded Gauss-Newton polish.

    ``steps`` gives the initial half-width of each line search (omega,
    beta, gamma). Every accepted move lowers the profiled cost, so the
    result is never worse than ``start``.
    """
    y = signal.samples
    times = signal.grid.times
    y_energy = float(np.vdot(y, y).real)
    span = signal.grid.span
    x = np.array([start.omega, start.beta, start.gamma])
    if model_class < ModelClass.VOIGT:
        x[2] = 0.0
    if model_class < ModelClass.LORENTZIAN:
        x[1] = 0.0
    if steps is None:
        steps = (TWO_PI / (config.oversample * signal.n), 0.5 / span, 0.5 / span**2)
    h = np.array(steps, dtype=float)
    floors = np.array([1e-15, 1e-16 / span, 1e-16 / span**2])
    bounds = _window_bounds(window)
    for i in range(3):
        x[i] = min(max(x[i], bounds[i][0]), bounds[i][1])

    def cost_at(v):
        return _profile_cost(y, y_energy, times, v[0], v[1], v[2])

    best = cost_at(x)
    active = _active(model_class)
    for _ in range(config.refine_max_iters):
        moved = np.zeros(3)
        for i in active:
            lo = max(x[i] - h[i], bounds[i][0])
            hi = min(x[i] + h[i], bounds[i][1])
            if hi <= lo:
                continue
            trial = x.copy()

            def line(v, i=i, trial=trial):
                trial[i] = v
                return cost_at(trial)

            xi, fi = golden_section(line, lo, hi)
            if fi < best:
                moved[i] = xi - x[i]
                x[i] = xi
                best = fi
        for i in active:
            h[i] = max(2.0 * abs(moved[i]), 0.25 * h[i], floors[i])
        # a cycle without moves only means the optimum is closer than h
        if (
            float(np.linalg.norm(moved)) < config.refine_tolerance
            and float(np.linalg.norm(h[active])) < 10.0 * config.refine_tolerance
        ):
            break
    params = _params_from(y, times, x[0], x[1], x[2], model_class)
    (params,), cost = polish(signal, [params], [window])
    return params, cost


def _layout(comps, windows):
    """Parameter vector layout for the joint polish.

    Per component: Re c, Im c, then each free nonlinear parameter.
    """
    x0, lb, ub, slots = [], [], [], []
    for k, comp in enumerate(comps):
        c = comp.complex_amplitude
        x0 += [c.real, c.imag]
        lb += [-np.inf, -np.inf]
        ub += [np.inf, np.inf]
        bounds = _window_bounds(windows[k] if windows is not None else None)
        values = (comp.omega, comp.beta, comp.gamma)
        free = []
        for i in _active(comp.model_class):
            lo, hi = bounds[i]
            if not hi > lo:
                continue
            # least_squares needs a strictly feasible start
            v = min(max(values[i], lo), hi)
            if v == lo and math.isfinite(lo):
                v = lo + 1e-12 * (1.0 + abs(lo)) if not math.isfinite(hi) else lo + 1e-9 * (hi - lo)
            elif v == hi and math.isfinite(hi):
                v = hi - 1e-9 * (hi - lo)
            x0.append(v)
            lb.append(lo)
            ub.append(hi)
            free.append(i)
        slots.append(free)
    return np.array(x0), np.array(lb), np.array(ub), slots


def _unpack(x, comps, slots):
    out = []
    pos = 0
    for comp, free in zip(comps, slots):
        c = complex(x[pos], x[pos + 1])
        pos += 2
        nl = [comp.omega, comp.beta, comp.gamma]
        for i in free:
            nl[i] = float(x[pos])
            pos += 1
        out.append((c, nl))
    return out


def polish(
    signal: SignalRecord,
    comps: Sequence[ComponentParams],
    windows: Sequence[SearchWindow | None] | None = None,
    max_nfev: int = 200,
) -> tuple[list[ComponentParams], float]:
    """Joint bounded least-squares refinement of all component parameters.

    Trust-region reflective steps with the analytic Jacobian; the result is
    kept only if it lowers the cost.
    """
    comps = list(comps)
    if not comps:
        return comps, float(np.vdot(signal.samples, signal.samples).real)
    times = signal.grid.times
    y = signal.samples
    x0, lb, ub, slots = _layout(comps, windows)

    def model(x):
        total = np.zeros_like(y)
        waves = []
        for c, (w, b, g) in _unpack(x, comps, slots):
            base = _template(times, w, b, g)
            waves.append((c, base))
            total += c * base
        return total, waves

    def fun(x):
        diff = y - model(x)[0]
        return np.concatenate((diff.real, diff.imag))

    def jac(x):
        _, waves = model(x)
        cols = []
        for (c, base), free in zip(waves, slots):
            mu = c * base
            cols += [base, 1j * base]
            for i in free:
                cols.append((1j * times, -times, -times * times)[i] * mu)
        d = -np.column_stack(cols)
        return np.vstack((d.real, d.imag))

    start_cost = float(np.sum(fun(x0) ** 2))
    try:
        sol = optimize.least_squares(
            fun, x0, jac=jac, bounds=(lb, ub), method="trf", x_scale="jac",
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev,
        )
    except (ValueError, np.linalg.LinAlgError):
        return _recost(signal, comps)
    new_cost = float(np.sum(sol.fun**2))
    if not (new_cost <= start_cost and np.all(np.isfinite(sol.x))):
        return _recost(signal, comps)
    out = []
    for comp, (c, (w, b, g)) in zip(comps, _unpack(sol.x, comps, slots)):
        if c == 0:
            return _recost(signal, comps)
        out.append(
            ComponentParams(abs(c), math.atan2(c.imag, c.real), w, max(b, 0.0), max(g, 0.0), comp.model_class)
        )
    return _recost(signal, out)


def _recost(signal, comps):
    return list(comps), nls_cost(signal, comps)


# ---------------------------------------------------------------------------
# single component and deflation


def fit_single(
    signal: SignalRecord,
    model_class: ModelClass,
    config: FitConfig | None = None,
    window: SearchWindow | None = None,
    exclude_omegas: Sequence[float] = (),
) -> ComponentParams:
    """Best single component of ``model_class`` for ``signal``.

    Coarse search over periodogram peaks (outside neighbourhoods of
    ``exclude_omegas``) and the decay grids, then local refinement of the
    best decay pair found at each peak.
    """
    config = config or FitConfig()
    model_class = ModelClass.parse(model_class)
    y = signal.samples
    times = signal.grid.times
    y_energy = float(np.vdot(y, y).real)
    if y_energy == 0.0:
        raise NoCandidate("signal is identically zero")
    window = window or SearchWindow()
    betas, gammas = decay_grids(times, config)
    if model_class < ModelClass.LORENTZIAN:
        betas = betas[:1]
    else:
        betas = _restrict(betas, window.beta, config.beta_bins)
    if model_class < ModelClass.VOIGT:
        gammas = gammas[:1]
    else:
        gammas = _restrict(gammas, window.gamma, config.gamma_bins)

    best: tuple[float, ComponentParams] | None = None
    for omega in _omega_candidates(signal, config, window.omega, exclude_omegas):
        beta, gamma, _ = _coarse_decays(y, y_energy, times, omega, betas, gammas)
        steps = (
            TWO_PI / (config.oversample * signal.n),
            _grid_step(betas, beta),
            _grid_step(gammas, gamma),
        )
        seed = ComponentParams(1.0, 0.0, omega, beta, gamma, None)
        params, cost = refine(signal, seed, model_class, config, window, steps)
        if best is None or cost < best[0]:
            best = (cost, params)
    assert best is not None
    return best[1]


def _grid_step(grid: np.ndarray, value: float) -> float:
    if grid.size < 2:
        return 0.0
    k = int(np.searchsorted(grid, value))
    neighbours = [abs(grid[j] - value) for j in (k - 1, k + 1) if 0 <= j < grid.size]
    neighbours = [d for d in neighbours if d > 0.0]
    return max(neighbours) if neighbours else float(grid[1] - grid[0])


def local_window(
    comp: ComponentParams,
    n: int,
    omega_bins: float = 2.0,
    rel: float | None = None,
) -> SearchWindow:
    """Box of ``+-omega_bins`` DFT bins in frequency and, if ``rel`` is given,
    ``+-rel`` relative in the decays."""
    dw = omega_bins * TWO_PI / n
    win_b = win_g = None
    if rel is not None:
        win_b = (comp.beta * (1.0 - rel), comp.beta * (1.0 + rel))
        win_g = (comp.gamma * (1.0 - rel), comp.gamma * (1.0 + rel))
    return SearchWindow((comp.omega - dw, comp.omega + dw), win_b, win_g)


def gap_window(omega: float, known: Sequence[float], n: int, half_width: int) -> SearchWindow:
    """Frequency window around a new peak that stays clear of known neighbourhoods."""
    bin_width = TWO_PI / n
    reach = (half_width + 0.5) * bin_width
    lo, hi = omega - reach, omega + reach
    for w in known:
        d = (w - omega + math.pi) % TWO_PI - math.pi
        if d > 0:
            hi = min(hi, omega + d - reach)
        else:
            lo = max(lo, omega + d + reach)
    if hi <= lo:
        lo = hi = omega
    return SearchWindow((lo, hi))


def fit_multi(
    signal: SignalRecord,
    model_class: ModelClass,
    config: FitConfig | None = None,
    seeds: Sequence[tuple[ComponentParams, SearchWindow]] = (),
    protected_omegas: Sequence[float] = (),
    extend: bool = True,
) -> FitResult:
    """Greedy deflation with joint re-estimation after every new component.

    ``seeds`` are components whose energy is known to be in ``signal``;
    each is refitted first inside its window. Deflation then continues
    while the strongest periodogram peak outside the neighbourhoods of the
    fitted and ``protected_omegas`` frequencies is significant at
    ``config.alpha_stop``, unless ``extend`` is false. A final round of
    cyclic refits follows.
    """
    config = config or FitConfig()
    model_class = ModelClass.parse(model_class)
    comps: list[ComponentParams] = []
    windows: list[SearchWindow | None] = []

    def residual() -> SignalRecord:
        return signal.with_samples(signal.samples - reconstruct(comps, signal.grid))

    def add(params: ComponentParams, win: SearchWindow | None):
        nonlocal comps
        comps.append(params)
        windows.append(win)
        comps, _ = polish(signal, comps, windows)

    for _seed, win in seeds:
        add(fit_single(residual(), model_class, config, win), win)

    floor = 1e-20 * float(np.vdot(signal.samples, signal.samples).real)
    skipped: list[float] = []
    reach = (2 * config.half_width + 1) * TWO_PI / signal.n
    while extend and len(comps) < config.max_components and len(skipped) <= config.max_components:
        known = [*protected_omegas, *(c.omega for c in comps)]
        resid = residual()
        if float(np.vdot(resid.samples, resid.samples).real) <= floor:
            break
        peak = strongest_peak_test(resid, known + skipped, config.half_width, config.alpha_stop)
        if peak is None or peak.verdict.sufficient:
            break
        win = gap_window(peak.omega, known + skipped, signal.n, config.half_width)
        try:
            params = fit_single(resid, model_class, config, win)
        except (NoCandidate, DegenerateEnvelope):
            break
        if _is_satellite(params, comps, reach, config.satellite_ratio):
            skipped.append(peak.omega)
            continue
        add(params, win)

    comps = cyclic_refine(signal, comps, config, windows)
    comps.sort(key=lambda c: -c.r)
    resid = residual()
    return FitResult(comps, resid, float(np.vdot(resid.samples, resid.samples).real))


def _is_satellite(p: ComponentParams, comps, reach: float, ratio: float) -> bool:
    return any(
        abs((p.omega - c.omega + math.pi) % TWO_PI - math.pi) <= reach and p.r < ratio * c.r
        for c in comps
    )


def _wave(times: np.ndarray, p: ComponentParams) -> np.ndarray:
    return p.complex_amplitude * _template(times, p.omega, p.beta, p.gamma)


def cyclic_refine(
    signal: SignalRecord,
    comps: Sequence[ComponentParams],
    config: FitConfig,
    windows: Sequence[SearchWindow | None] | None = None,
    passes: int | None = None,
) -> list[ComponentParams]:
    """Refit each component against the residual of all the others, in turn.

    A refit replaces the old component only if the total cost does not rise.
    """
    comps = list(comps)
    times = signal.grid.times
    passes = config.cycle_passes if passes is None else passes
    if not comps or passes == 0:
        return comps
    residual = signal.samples - reconstruct(comps, signal.grid)
    cost = float(np.vdot(residual, residual).real)
    span = signal.grid.span
    step = (TWO_PI / (4 * config.oversample * signal.n), 0.05 / span, 0.05 / span**2)
    for _ in range(passes):
        for i, comp in enumerate(comps):
            partial = residual + _wave(times, comp)
            win = windows[i] if windows is not None else None
            try:
                new, _ = refine(signal.with_samples(partial), comp, comp.model_class, config, win, step)
            except (DegenerateEnvelope, NoCandidate):
                continue
            new_resid = partial - _wave(times, new)
            new_cost = float(np.vdot(new_resid, new_resid).real)
            if new_cost <= cost:
                comps[i] = new
                residual = new_resid
                cost = new_cost
    return comps
