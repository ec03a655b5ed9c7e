"""Signal files and estimation reports.

Signal files are CSV with ``# key: value`` metadata lines on top and the
columns ``index,t,re,im``. Floats are written with ``repr`` so a
write/read cycle is exact. Reports are YAML documents mirroring
:class:`~polydamp.pipeline.PipelineReport`.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .pipeline import PipelineReport
from .signal_model import SignalRecord, TimeGrid

COLUMNS = ("index", "t", "re", "im")


class SignalFileError(ValueError):
    pass


def format_signal(signal: SignalRecord, metadata: dict[str, Any] | None = None) -> str:
    buf = io.StringIO()
    meta = {"n": signal.n}
    if signal.noise_variance is not None:
        meta["noise_variance"] = signal.noise_variance
    meta.update(metadata or {})
    for key, value in meta.items():
        buf.write(f"# {key}: {value!r}\n" if isinstance(value, float) else f"# {key}: {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for i, (t, y) in enumerate(zip(signal.grid.times, signal.samples)):
        w.writerow([i, repr(float(t)), repr(float(y.real)), repr(float(y.imag))])
    return buf.getvalue()


def write_signal(path: str | Path, signal: SignalRecord, metadata: dict[str, Any] | None = None) -> None:
    Path(path).write_text(format_signal(signal, metadata))


def parse_signal(text: str, source: str = "<signal>") -> tuple[SignalRecord, dict[str, str]]:
    """Inverse of :func:`format_signal`. Metadata values come back as strings."""
    meta: dict[str, str] = {}
    rows = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        cells = next(csv.reader([line]))
        if not header_seen:
            if tuple(c.strip() for c in cells) != COLUMNS:
                raise SignalFileError(f"{source}:{lineno}: expected header {','.join(COLUMNS)}")
            header_seen = True
            continue
        if len(cells) != 4:
            raise SignalFileError(f"{source}:{lineno}: expected 4 columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError:
            raise SignalFileError(f"{source}:{lineno}: non-numeric value") from None
    if not rows:
        raise SignalFileError(f"{source}: no samples")
    arr = np.array(rows)
    if not np.all(np.isfinite(arr)):
        raise SignalFileError(f"{source}: non-finite sample or time")
    try:
        grid = TimeGrid(arr[:, 0])
    except ValueError as exc:
        raise SignalFileError(f"{source}: {exc}") from None
    sigma2 = None
    if "noise_variance" in meta:
        try:
            sigma2 = float(meta["noise_variance"])
        except ValueError:
            raise SignalFileError(f"{source}: bad noise_variance {meta['noise_variance']!r}") from None
    return SignalRecord(arr[:, 1] + 1j * arr[:, 2], grid, sigma2), meta


def read_signal(path: str | Path) -> tuple[SignalRecord, dict[str, str]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SignalFileError(f"cannot read {path}: {exc.strerror}") from None
    return parse_signal(text, str(path))


def _num(x: float) -> float | None:
    return None if math.isnan(x) else float(x)


def report_dict(report: PipelineReport) -> dict[str, Any]:
    comps = []
    for c in report.components:
        p = c.params
        comps.append(
            {
                "class": p.model_class.label,
                "r": p.r,
                "phi": p.phi,
                "omega": p.omega,
                "beta": p.beta,
                "gamma": p.gamma,
                "verdicts": [
                    {k: (_num(v) if isinstance(v, float) else v) for k, v in vd.as_dict().items()}
                    for vd in c.verdict_history
                ],
            }
        )
    return {
        "steps_executed": report.steps_executed,
        "noise_variance_estimate": _num(report.noise_variance_estimate),
        "components": comps,
        "snapshots": [
            {
                "step": s.step,
                "components": [
                    {"class": p.model_class.label, "r": p.r, "phi": p.phi, "omega": p.omega,
                     "beta": p.beta, "gamma": p.gamma}
                    for p in s.components
                ],
            }
            for s in report.snapshots
        ],
    }


def write_report(path: str | Path, report: PipelineReport) -> None:
    Path(path).write_text(yaml.safe_dump(report_dict(report), sort_keys=False))
