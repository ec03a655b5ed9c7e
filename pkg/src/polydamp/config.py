"""Experiment configuration files.

A config is a YAML mapping::

    grid:
      n: 200          # number of samples
      start: 0.0      # first instant
      step: 1.0       # spacing, t_n = start + (n - 1) * step
    components:       # may be empty
      - {r: 1.0, phi: uniform-random, omega: 0.7}
      - {r: 1.0, phi: 0.3, omega: 0.5, beta: 0.005}
    noise_variances: [1.0e-4, 1.0e-3, 1.0e-2]
    repetitions: 200
    seed: 1
    fit: {max_components: 8, omega_peaks: 3, ...}   # FitConfig fields
    test: {half_width: 3, alpha: 0.01}
    output_dir: results

Every key except ``grid`` is optional. A component phase may be the
string ``uniform-random``, redrawn for each simulated record. Validation
errors quote the file and line of the offending entry.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .estimation import FitConfig
from .pipeline import PipelineConfig
from .signal_model import TWO_PI, ComponentParams, TimeGrid

RANDOM_PHASE = "uniform-random"


class ConfigError(ValueError):
    """Invalid configuration, with the source location when known."""


@dataclass(frozen=True)
class ComponentSpec:
    r: float
    phi: float | str
    omega: float
    beta: float = 0.0
    gamma: float = 0.0
    model_class: str | None = None

    def __post_init__(self):
        if isinstance(self.phi, str) and self.phi != RANDOM_PHASE:
            raise ValueError(f"phase must be a number or {RANDOM_PHASE!r}")
        # validates r, decays and class consistency
        self.resolve(0.0)

    @property
    def random_phase(self) -> bool:
        return self.phi == RANDOM_PHASE

    def resolve(self, phi: float | None = None) -> ComponentParams:
        if phi is None:
            if self.random_phase:
                raise ValueError("a random phase needs a drawn value")
            phi = float(self.phi)
        return ComponentParams(self.r, phi, self.omega, self.beta, self.gamma, self.model_class)


@dataclass(frozen=True)
class GridSpec:
    n: int = 200
    start: float = 0.0
    step: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid.n must be at least 2")
        if not (self.step > 0.0 and math.isfinite(self.step)):
            raise ValueError("grid.step must be positive")

    def build(self) -> TimeGrid:
        return TimeGrid.uniform(self.n, self.start, self.step)


@dataclass(frozen=True)
class TestSpec:
    half_width: int = 3
    alpha: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("test.alpha must lie in (0, 1)")
        if self.half_width < 0:
            raise ValueError("test.half_width must be non-negative")


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    components: tuple[ComponentSpec, ...] = ()
    noise_variances: tuple[float, ...] = (1e-4, 1e-3, 1e-2)
    repetitions: int = 200
    seed: int = 1
    fit: FitConfig = field(default_factory=FitConfig)
    test: TestSpec = field(default_factory=TestSpec)
    output_dir: str = "results"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if not self.noise_variances:
            raise ValueError("noise_variances must not be empty")
        for s2 in self.noise_variances:
            if not (s2 > 0.0 and math.isfinite(s2)):
                raise ValueError(f"noise variances must be positive, got {s2}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        # raises on a bad alpha or half-width
        self.pipeline_config()

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(fit=self.fit, alpha=self.test.alpha, half_width=self.test.half_width)

    def draw_components(self, rng: np.random.Generator) -> list[ComponentParams]:
        """Concrete components, drawing random phases from ``rng`` in order."""
        return [
            c.resolve(rng.uniform(0.0, TWO_PI) if c.random_phase else None) for c in self.components
        ]

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        comps = []
        for c in self.components:
            d = {"r": c.r, "phi": c.phi, "omega": c.omega, "beta": c.beta, "gamma": c.gamma}
            if c.model_class is not None:
                d["model_class"] = c.model_class
            comps.append(d)
        return {
            "grid": asdict(self.grid),
            "components": comps,
            "noise_variances": list(self.noise_variances),
            "repetitions": self.repetitions,
            "seed": self.seed,
            "fit": asdict(self.fit),
            "test": asdict(self.test),
            "output_dir": self.output_dir,
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def section6_config(**changes) -> ExperimentConfig:
    """The three-line test signal: a cisoid, a Lorentzian and a Voigt line."""
    comps = (
        ComponentSpec(1.0, RANDOM_PHASE, 0.7),
        ComponentSpec(1.0, RANDOM_PHASE, 0.5, 1.0 / 200.0),
        ComponentSpec(1.0, RANDOM_PHASE, 1.5, 1.0 / 150.0, 1e-5),
    )
    return ExperimentConfig(components=comps, **changes)


# ---------------------------------------------------------------------------
# parsing with source positions


def _where(source: str, node: yaml.Node) -> str:
    return f"{source}:{node.start_mark.line + 1}"


def _fail(source: str, node: yaml.Node, msg: str):
    raise ConfigError(f"{_where(source, node)}: {msg}")


def _plain(node: yaml.Node):
    """Python value of a composed node using the safe constructor."""
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_document(node)
    finally:
        loader.dispose()


def _mapping(source: str, node: yaml.Node, what: str) -> dict[str, tuple[yaml.Node, yaml.Node]]:
    if not isinstance(node, yaml.MappingNode):
        _fail(source, node, f"{what} must be a mapping")
    out = {}
    for k, v in node.value:
        key = _plain(k)
        if not isinstance(key, str):
            _fail(source, k, f"{what} keys must be strings")
        if key in out:
            _fail(source, k, f"duplicate key {key!r} in {what}")
        out[key] = (k, v)
    return out


def _number(source, node, name, integer=False):
    value = _plain(node)
    if isinstance(value, str):
        # YAML 1.1 reads exponent forms without a dot, like 1e-3, as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(source, node, f"{name} must be a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            _fail(source, node, f"{name} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _build(source, node, cls, what, integers=(), strings=(), extra=None):
    """Construct dataclass ``cls`` from a mapping node, locating any error."""
    items = _mapping(source, node, what)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, (knode, vnode) in items.items():
        if key not in known:
            _fail(source, knode, f"unknown key {key!r} in {what}")
        if extra is not None and key in extra:
            kwargs[key] = extra[key](vnode)
        elif key in strings:
            value = _plain(vnode)
            if not isinstance(value, str):
                _fail(source, vnode, f"{what}.{key} must be a string")
            kwargs[key] = value
        else:
            kwargs[key] = _number(source, vnode, f"{what}.{key}", key in integers)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        # point at the entry the message names, if any
        culprit = next((v for k, (_, v) in items.items() if re.search(rf"\b{k}\b", str(exc))), node)
        _fail(source, culprit, f"invalid {what}: {exc}")


def loads(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate a config document."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{line}: malformed YAML ({getattr(exc, 'problem', exc)})") from None
    if root is None:
        raise ConfigError(f"{source}: empty config")
    top = _mapping(source, root, "config")
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs: dict[str, Any] = {}
    for key, (knode, vnode) in top.items():
        if key not in known:
            _fail(source, knode, f"unknown key {key!r}")
        if key == "grid":
            kwargs[key] = _build(source, vnode, GridSpec, "grid", integers=("n",))
        elif key == "fit":
            ints = tuple(f.name for f in fields(FitConfig) if f.type in ("int", int))
            kwargs[key] = _build(source, vnode, FitConfig, "fit", integers=ints)
        elif key == "test":
            kwargs[key] = _build(source, vnode, TestSpec, "test", integers=("half_width",))
        elif key == "components":
            if not isinstance(vnode, yaml.SequenceNode):
                _fail(source, vnode, "components must be a list")
            comps = []
            for i, cnode in enumerate(vnode.value):

                def phase(n, i=i):
                    value = _plain(n)
                    if isinstance(value, str):
                        if value != RANDOM_PHASE:
                            _fail(source, n, f"components[{i}].phi must be a number or {RANDOM_PHASE!r}")
                        return value
                    return _number(source, n, f"components[{i}].phi")

                comps.append(
                    _build(
                        source, cnode, ComponentSpec, f"components[{i}]",
                        strings=("model_class",), extra={"phi": phase},
                    )
                )
            kwargs[key] = tuple(comps)
        elif key == "noise_variances":
            if not isinstance(vnode, yaml.SequenceNode):
                _fail(source, vnode, "noise_variances must be a list")
            values = []
            for n in vnode.value:
                v = _number(source, n, "noise variance")
                if not v > 0.0:
                    _fail(source, n, f"noise variances must be positive, got {v}")
                values.append(v)
            kwargs[key] = tuple(values)
        elif key in ("repetitions", "seed"):
            value = _number(source, vnode, key, integer=True)
            if value < (1 if key == "repetitions" else 0):
                _fail(source, vnode, f"{key} out of range: {value}")
            kwargs[key] = value
        elif key == "output_dir":
            value = _plain(vnode)
            if not isinstance(value, str):
                _fail(source, vnode, "output_dir must be a string")
            kwargs[key] = value
    if "grid" not in kwargs:
        raise ConfigError(f"{source}: missing required key 'grid'")
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{_where(source, root)}: {exc}") from None


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, str(path))


def dump(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(config.dumps())
