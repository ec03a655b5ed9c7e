"""Figures derived from Monte Carlo results.

Plots are read-only views of the summaries; nothing here feeds back into
the CSV output.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import LevelSummary, RepetitionOutcome, error_cdf  # noqa: E402

STYLE = {
    "figure.figsize": (5.5, 3.8),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "svg.hashsalt": "polydamp",
}


def _save(fig, path: Path) -> Path:
    # fixed metadata keeps repeated runs byte-identical
    meta = {"Date": None} if path.suffix == ".svg" else {"Software": None}
    fig.savefig(path, metadata=meta, bbox_inches="tight")
    plt.close(fig)
    return path


def _by_component(rows: Sequence[LevelSummary]) -> dict[int, list[LevelSummary]]:
    out: dict[int, list[LevelSummary]] = {}
    for r in rows:
        out.setdefault(r.component, []).append(r)
    for v in out.values():
        v.sort(key=lambda r: r.sigma2)
    return out


def plot_classification(rows: Sequence[LevelSummary], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, rs in _by_component(rows).items():
            ax.semilogx([r.sigma2 for r in rs], [r.class_rate for r in rs], "o-",
                        label=f"component {k + 1} ({rs[0].true_class.label})")
        ax.set_xlabel("noise variance")
        ax.set_ylabel("correct classification rate")
        ax.set_ylim(-0.05, 1.05)
        ax.legend()
        return _save(fig, path)


def plot_rmse(rows: Sequence[LevelSummary], param: str, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, rs in _by_component(rows).items():
            s2 = [r.sigma2 for r in rs]
            rmse = [r.rmse[param] for r in rs]
            bound = [r.root_crlb[param] for r in rs]
            if all(b != b for b in bound):  # parameter not estimated
                continue
            line = ax.loglog(s2, rmse, "o-", label=f"component {k + 1} RMSE")[0]
            ax.loglog(s2, bound, "--", color=line.get_color(), label=f"component {k + 1} root-CRLB")
        ax.set_xlabel("noise variance")
        ax.set_ylabel(f"{param} error")
        ax.legend()
        return _save(fig, path)


def plot_cdf(outcomes: Sequence[RepetitionOutcome], attr: str, xlabel: str, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        levels = sorted({o.level for o in outcomes})
        for level in levels:
            reps = [o for o in outcomes if o.level == level]
            for k in range(len(reps[0].components)):
                x, y = error_cdf([getattr(o.components[k], attr) for o in reps])
                if x.size:
                    ax.step(x, y, where="post", label=f"sigma2={reps[0].sigma2:g}, comp. {k + 1}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("empirical CDF")
        ax.legend()
        return _save(fig, path)


def render_all(
    out_dir: Path,
    rows: Sequence[LevelSummary],
    outcomes: Sequence[RepetitionOutcome],
    fmt: str = "png",
) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [plot_classification(rows, out_dir / f"classification.{fmt}")]
    for p in ("omega", "beta", "gamma"):
        paths.append(plot_rmse(rows, p, out_dir / f"rmse_{p}.{fmt}"))
    paths.append(plot_cdf(outcomes, "step1_omega_error", "step-1 frequency error",
                          out_dir / f"step1_omega_error_cdf.{fmt}"))
    paths.append(plot_cdf(outcomes, "step3_beta_error", "step-3 linear decay error",
                          out_dir / f"step3_beta_error_cdf.{fmt}"))
    return paths
