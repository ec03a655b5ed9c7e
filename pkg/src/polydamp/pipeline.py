"""Sequential fit-test-escalate procedure.

1. fit cisoids;
2. test each fitted line for leftover spectral power;
3. refit the flagged ones as Lorentzians;
4. test those again;
5. refit the still-flagged ones as Voigt lines, searching the linear decay
   only below the Lorentzian estimate, which overshoots the true value for
   a Voigt line.

A final joint refinement polishes every parameter in a small box around
its estimate. Later steps run only when an earlier test flags something.

Flagged components are escalated one at a time, strongest evidence first:
misfit leakage from a damped line fitted too simply spreads into the
neighbourhoods of nearby lines, so a verdict is only trusted once the
lines with stronger evidence have been refitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimation import (
    FitConfig,
    SearchWindow,
    fit_multi,
    gamma_max,
    local_window,
    polish,
)
from .signal_model import TWO_PI, ComponentParams, ModelClass, SignalRecord, reconstruct
from .spectrum_test import (
    NeighborhoodSet,
    WhitenessVerdict,
    classify_residual,
    complement_bins,
    line_significance,
    periodogram,
)


@dataclass(frozen=True)
class PipelineConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    alpha: float = 0.01
    half_width: int = 3
    # weak lines this close to a much stronger one are treated as its misfit
    satellite_ratio: float = 0.5
    final_omega_bins: float = 2.0
    final_rel: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.half_width < 0:
            raise ValueError("half_width must be non-negative")
        if self.fit.half_width != self.half_width:
            object.__setattr__(
                self, "fit", _replace_fit(self.fit, half_width=self.half_width)
            )


def _replace_fit(cfg: FitConfig, **changes) -> FitConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


@dataclass
class ClassifiedComponent:
    params: ComponentParams
    verdict_history: list[WhitenessVerdict] = field(default_factory=list)

    @property
    def final_class(self) -> ModelClass:
        return self.params.model_class


@dataclass
class StageSnapshot:
    """Component estimates right after one of the fitting steps."""

    step: int
    components: list[ComponentParams]


@dataclass
class PipelineReport:
    components: list[ClassifiedComponent]
    residual: SignalRecord
    noise_variance_estimate: float
    steps_executed: int
    snapshots: list[StageSnapshot] = field(default_factory=list)

    @property
    def classes(self) -> list[ModelClass]:
        return [c.final_class for c in self.components]


def estimate_noise_variance(
    residual: SignalRecord,
    neighborhoods: Sequence[NeighborhoodSet] = (),
    exclude_dc: bool = True,
) -> float:
    """Mean residual periodogram over the bins outside all neighbourhoods."""
    per = periodogram(residual)
    comp = complement_bins(per.n, neighborhoods, exclude_dc)
    if comp.size == 0:
        from .errors import EmptyComplement

        raise EmptyComplement("neighbourhoods cover every periodogram bin")
    return float(per.values[comp].mean())


def _bin_distance(w1: float, w2: float, n: int) -> float:
    d = (w1 - w2 + math.pi) % TWO_PI - math.pi
    return abs(d) * n / TWO_PI


class _Pipeline:
    def __init__(self, signal: SignalRecord, config: PipelineConfig):
        self.signal = signal
        self.cfg = config
        self.n = signal.n
        self.tracked: list[ClassifiedComponent] = []
        self.frozen: set[int] = set()

    # -- helpers ---------------------------------------------------------
    def params(self) -> list[ComponentParams]:
        return [c.params for c in self.tracked]

    def residual(self) -> SignalRecord:
        return self.signal.with_samples(self.signal.samples - reconstruct(self.params(), self.signal.grid))

    def satellites(self, host: int) -> list[int]:
        hp = self.tracked[host].params
        reach = 2 * self.cfg.half_width + 1
        out = []
        for j, c in enumerate(self.tracked):
            if j == host or j in self.frozen:
                continue
            if (
                _bin_distance(c.params.omega, hp.omega, self.n) <= reach
                and c.params.r < self.cfg.satellite_ratio * hp.r
            ):
                out.append(j)
        return out

    def is_satellite(self, j: int) -> bool:
        c = self.tracked[j].params
        reach = 2 * self.cfg.half_width + 1
        return any(
            k != j
            and _bin_distance(c.omega, o.params.omega, self.n) <= reach
            and c.r < self.cfg.satellite_ratio * o.params.r
            for k, o in enumerate(self.tracked)
        )

    def polish_all(self, rel: float | None = None):
        if not self.tracked:
            return
        wins = [
            local_window(c.params, self.n, self.cfg.final_omega_bins, rel) for c in self.tracked
        ]
        new, _ = polish(self.signal, self.params(), wins)
        for c, p in zip(self.tracked, new):
            c.params = p

    def seed_window(self, comp: ComponentParams, target: ModelClass) -> SearchWindow:
        dw = self.cfg.final_omega_bins * TWO_PI / self.n
        omega = (comp.omega - dw, comp.omega + dw)
        if target is ModelClass.VOIGT:
            times = self.signal.grid.times
            reach = gamma_max(times, self.cfg.fit) * (times[-1] + times[-2])
            return SearchWindow(omega, (max(comp.beta - reach, 0.0), comp.beta))
        return SearchWindow(omega)

    # -- stages ----------------------------------------------------------
    def escalate_stage(self, current: ModelClass) -> bool:
        """Test/escalate loop for all unfrozen components of class ``current``."""
        target = current.next()
        escalated = False
        while True:
            verdicts = classify_residual(
                self.residual(), [c.params.omega for c in self.tracked], self.cfg.half_width, self.cfg.alpha
            )
            cands = [
                j
                for j, (c, v) in enumerate(zip(self.tracked, verdicts))
                if j not in self.frozen
                and c.params.model_class is current
                and not v.sufficient
                and not self.is_satellite(j)
            ]
            if not cands:
                for j, (c, v) in enumerate(zip(self.tracked, verdicts)):
                    if j not in self.frozen and c.params.model_class is current:
                        c.verdict_history.append(v)
                        self.frozen.add(j)
                return escalated
            host = max(cands, key=lambda j: verdicts[j].xi)
            cluster = [host, *self.satellites(host)]
            history = [*self.tracked[host].verdict_history, verdicts[host]]
            host_params = self.tracked[host].params
            keep = [j for j in range(len(self.tracked)) if j not in cluster]
            working = self.residual().samples + reconstruct(
                [self.tracked[j].params for j in cluster], self.signal.grid
            )
            result = fit_multi(
                self.signal.with_samples(working),
                target,
                self.cfg.fit,
                seeds=[(host_params, self.seed_window(host_params, target))],
                protected_omegas=[self.tracked[j].params.omega for j in keep],
                extend=False,
            )
            frozen_params = {id(self.tracked[j]) for j in self.frozen}
            survivors = [self.tracked[j] for j in keep]
            new = [ClassifiedComponent(p, list(history)) for p in result.components]
            self.tracked = survivors + new
            self.frozen = {j for j, c in enumerate(self.tracked) if id(c) in frozen_params}
            self.polish_all()
            escalated = True

    def prune(self):
        """Drop weak lines whose power is not significant once refitted
        neighbours no longer leak into them."""
        changed = True
        while changed and self.tracked:
            changed = False
            resid = self.residual().samples
            for j in sorted(range(len(self.tracked)), key=lambda j: self.tracked[j].params.r):
                p = self.tracked[j].params
                others = [c.params.omega for k, c in enumerate(self.tracked) if k != j]
                probe = self.signal.with_samples(resid + reconstruct([p], self.signal.grid))
                pval = line_significance(probe, p.omega, others, self.cfg.half_width)
                if pval > self.cfg.fit.alpha_stop:
                    del self.tracked[j]
                    self.frozen = set()
                    self.polish_all()
                    changed = True
                    break

    def run(self) -> PipelineReport:
        snapshots = []
        first = fit_multi(self.signal, ModelClass.CISOID, self.cfg.fit)
        self.tracked = [ClassifiedComponent(p) for p in first.components]
        snapshots.append(StageSnapshot(1, self.params()))
        steps = 1
        if self.tracked and self.escalate_stage(ModelClass.CISOID):
            steps = 3
            snapshots.append(StageSnapshot(3, self.params()))
            if self.escalate_stage(ModelClass.LORENTZIAN):
                steps = 5
                snapshots.append(StageSnapshot(5, self.params()))
        self.prune()
        self.polish_all(self.cfg.final_rel)
        self.tracked.sort(key=lambda c: c.params.omega)
        resid = self.residual()
        hoods = [
            NeighborhoodSet.around(c.params.omega, self.n, self.cfg.half_width) for c in self.tracked
        ]
        try:
            sigma2 = estimate_noise_variance(resid, hoods)
        except Exception:
            sigma2 = float("nan")
        return PipelineReport(self.tracked, resid, sigma2, steps, snapshots)


def run_pipeline(signal: SignalRecord, config: PipelineConfig | None = None) -> PipelineReport:
    """Estimate and classify all components of ``signal``."""
    return _Pipeline(signal, config or PipelineConfig()).run()
