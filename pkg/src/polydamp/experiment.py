"""Monte Carlo sweeps over noise levels.

Each repetition draws its own integer seed from the master seed, the
noise-level index and the repetition index, so results do not depend on
how repetitions are scheduled across workers. The same integer seed fed to
:func:`simulate_record` regenerates the exact record of that repetition.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import ExperimentConfig
from .crlb import PARAM_NAMES, active_mask, crlb_diag, fisher_information
from .errors import PolydampError
from .pipeline import run_pipeline
from .signal_model import TWO_PI, ComponentParams, ModelClass, SignalRecord, synthesize

PROFILE_DESK = 200
PROFILE_FULL = 500


def repetition_seed(master: int, level: int, rep: int) -> int:
    state = np.random.SeedSequence([master, level, rep]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def simulate_record(
    config: ExperimentConfig, sigma2: float, seed: int
) -> tuple[SignalRecord, list[ComponentParams]]:
    """Draw random phases, then noise, from one generator seeded with ``seed``."""
    rng = np.random.default_rng(seed)
    truth = config.draw_components(rng)
    return synthesize(truth, config.grid.build(), sigma2, rng), truth


def _wrap(d: float) -> float:
    return (d + math.pi) % TWO_PI - math.pi


def match(truth: Sequence[ComponentParams], est: Sequence[ComponentParams]) -> list[int | None]:
    """Index of the estimate assigned to each true component, by frequency."""
    if not truth or not est:
        return [None] * len(truth)
    cost = np.array([[abs(_wrap(e.omega - t.omega)) for e in est] for t in truth])
    rows, cols = linear_sum_assignment(cost)
    out: list[int | None] = [None] * len(truth)
    for r, c in zip(rows, cols):
        out[r] = int(c)
    return out


@dataclass
class ComponentOutcome:
    true_class: ModelClass
    est_class: ModelClass | None = None
    errors: dict[str, float] = field(default_factory=dict)
    crlb_var: dict[str, float] = field(default_factory=dict)
    step1_omega_error: float = math.nan
    step3_beta_error: float = math.nan


@dataclass
class RepetitionOutcome:
    level: int
    rep: int
    sigma2: float
    seed: int
    status: str
    k_hat: int
    correct: bool
    components: list[ComponentOutcome]


def _errors(t: ComponentParams, e: ComponentParams) -> dict[str, float]:
    return {
        "r": e.r - t.r,
        "phi": _wrap(e.phi - t.phi),
        "omega": _wrap(e.omega - t.omega),
        "beta": e.beta - t.beta,
        "gamma": e.gamma - t.gamma,
    }


def _crlb_vars(truth: Sequence[ComponentParams], grid, sigma2: float) -> list[dict[str, float]]:
    try:
        fim = fisher_information(truth, grid, sigma2)
        mask = active_mask([c.model_class for c in truth])
        var = iter(crlb_diag(fim, mask))
    except PolydampError:
        return [{name: math.nan for name in PARAM_NAMES} for _ in truth]
    out = []
    for k in range(len(truth)):
        out.append({n: float(next(var)) if mask[5 * k + i] else math.nan for i, n in enumerate(PARAM_NAMES)})
    return out


def run_repetition(config: ExperimentConfig, level: int, rep: int) -> RepetitionOutcome:
    sigma2 = config.noise_variances[level]
    seed = repetition_seed(config.seed, level, rep)
    signal, truth = simulate_record(config, sigma2, seed)
    comps = [ComponentOutcome(t.model_class) for t in truth]
    for c, v in zip(comps, _crlb_vars(truth, signal.grid, sigma2)):
        c.crlb_var = v
    try:
        report = run_pipeline(signal, config.pipeline_config())
    except (PolydampError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return RepetitionOutcome(level, rep, sigma2, seed, f"error: {type(exc).__name__}: {exc}", 0, False, comps)
    est = [c.params for c in report.components]
    for k, j in enumerate(match(truth, est)):
        if j is not None:
            comps[k].est_class = est[j].model_class
            comps[k].errors = _errors(truth[k], est[j])
    snaps = {s.step: s.components for s in report.snapshots}
    for step, attr, name in ((1, "step1_omega_error", "omega"), (3, "step3_beta_error", "beta")):
        if step not in snaps:
            continue
        for k, j in enumerate(match(truth, snaps[step])):
            if j is not None:
                p = snaps[step][j]
                # only errors of the mismatched fits are of interest here
                if step == 3 and p.model_class is not ModelClass.LORENTZIAN:
                    continue
                setattr(comps[k], attr, _errors(truth[k], p)[name])
    correct = len(est) == len(truth) and all(c.est_class is c.true_class for c in comps)
    return RepetitionOutcome(level, rep, sigma2, seed, "ok", len(est), correct, comps)


def _task(args):
    return run_repetition(*args)


def run_montecarlo(config: ExperimentConfig, workers: int = 1, progress=None) -> list[RepetitionOutcome]:
    """All repetitions at all noise levels, ordered by (level, rep)."""
    tasks = [
        (config, level, rep)
        for level in range(len(config.noise_variances))
        for rep in range(config.repetitions)
    ]
    out = []
    if workers <= 1:
        for t in tasks:
            out.append(_task(t))
            if progress:
                progress(len(out), len(tasks))
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for res in pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))):
            out.append(res)
            if progress:
                progress(len(out), len(tasks))
    return out


# ---------------------------------------------------------------------------
# summaries


@dataclass
class LevelSummary:
    sigma2: float
    component: int
    true_class: ModelClass
    runs: int
    failed: int
    correct_runs: int
    run_rate: float
    class_rate: float
    rmse: dict[str, float]
    root_crlb: dict[str, float]


def summarize(config: ExperimentConfig, outcomes: Sequence[RepetitionOutcome]) -> list[LevelSummary]:
    rows = []
    for level, sigma2 in enumerate(config.noise_variances):
        reps = [o for o in outcomes if o.level == level]
        good = [o for o in reps if o.correct]
        failed = sum(o.status != "ok" for o in reps)
        for k, spec in enumerate(config.components):
            true_class = reps[0].components[k].true_class if reps else ModelClass.CISOID
            hits = sum(o.components[k].est_class is o.components[k].true_class for o in reps)
            rmse, bound = {}, {}
            for name in PARAM_NAMES:
                errs = [o.components[k].errors[name] for o in good]
                var = [o.components[k].crlb_var.get(name, math.nan) for o in good]
                estimated = name in ("r", "phi", "omega") or (
                    name == "beta" and true_class >= ModelClass.LORENTZIAN
                ) or true_class is ModelClass.VOIGT
                ok = errs and estimated
                rmse[name] = math.sqrt(float(np.mean(np.square(errs)))) if ok else math.nan
                bound[name] = math.sqrt(float(np.mean(var))) if ok else math.nan
            rows.append(
                LevelSummary(
                    sigma2, k, true_class, len(reps), failed, len(good),
                    len(good) / len(reps) if reps else math.nan,
                    hits / len(reps) if reps else math.nan,
                    rmse, bound,
                )
            )
    return rows


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def write_runs_csv(path: Path, config: ExperimentConfig, outcomes: Sequence[RepetitionOutcome]) -> None:
    head = ["sigma2", "seed", "rep", "status", "k_hat", "correct", "component", "true_class", "est_class"]
    head += [f"err_{n}" for n in PARAM_NAMES] + ["step1_omega_error", "step3_beta_error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for o in outcomes:
            for k, c in enumerate(o.components):
                w.writerow(
                    [_fmt(o.sigma2), o.seed, o.rep, o.status, o.k_hat, int(o.correct), k,
                     c.true_class.label, c.est_class.label if c.est_class is not None else ""]
                    + [_fmt(c.errors.get(n, math.nan)) for n in PARAM_NAMES]
                    + [_fmt(c.step1_omega_error), _fmt(c.step3_beta_error)]
                )


def write_summary_csv(path: Path, config: ExperimentConfig, rows: Sequence[LevelSummary]) -> None:
    head = ["sigma2", "seed", "component", "true_class", "runs", "failed", "correct_runs",
            "run_rate", "class_rate"]
    for n in ("omega", "beta", "gamma"):
        head += [f"rmse_{n}", f"root_crlb_{n}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for r in rows:
            line = [_fmt(r.sigma2), config.seed, r.component, r.true_class.label, r.runs, r.failed,
                    r.correct_runs, _fmt(r.run_rate), _fmt(r.class_rate)]
            for n in ("omega", "beta", "gamma"):
                line += [_fmt(r.rmse[n]), _fmt(r.root_crlb[n])]
            w.writerow(line)


def error_cdf(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Sorted finite values and their empirical CDF levels ``i / n``."""
    v = np.sort(np.asarray([x for x in values if math.isfinite(x)], dtype=float))
    return v, np.arange(1, v.size + 1) / max(v.size, 1)


def write_cdf_csv(path: Path, outcomes: Sequence[RepetitionOutcome], attr: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma2", "seed", "component", "error", "cdf"])
        levels = sorted({o.level for o in outcomes})
        for level in levels:
            reps = [o for o in outcomes if o.level == level]
            for k in range(len(reps[0].components)):
                pairs = sorted(
                    (getattr(o.components[k], attr), o.seed) for o in reps
                    if math.isfinite(getattr(o.components[k], attr))
                )
                for i, (err, seed) in enumerate(pairs, 1):
                    w.writerow([_fmt(reps[0].sigma2), seed, k, _fmt(err), _fmt(i / len(pairs))])


def write_outputs(out_dir: Path, config: ExperimentConfig, outcomes: Sequence[RepetitionOutcome]) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = summarize(config, outcomes)
    paths = {
        "summary": out_dir / "summary.csv",
        "runs": out_dir / "runs.csv",
        "step1": out_dir / "step1_omega_error_cdf.csv",
        "step3": out_dir / "step3_beta_error_cdf.csv",
    }
    write_summary_csv(paths["summary"], config, rows)
    write_runs_csv(paths["runs"], config, outcomes)
    write_cdf_csv(paths["step1"], outcomes, "step1_omega_error")
    write_cdf_csv(paths["step3"], outcomes, "step3_beta_error")
    (out_dir / "config.yaml").write_text(config.dumps())
    return list(paths.values()) + [out_dir / "config.yaml"]
