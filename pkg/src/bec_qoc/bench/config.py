"""Experiment configuration files.

A config is an INI file with the sections ``[problem]``, ``[algorithm]``,
``[filter]``, ``[run]`` and an optional ``[sweep]``.  Key names carry their
units (``T_ms``, ``beta_hbar_hz_um``) and unknown keys are an error, so a
misspelled or mis-united value never slips through silently.

Example::

    [problem]
    T_ms = 1.09
    n_steps = 3501

    [algorithm]
    name = group
    M = 60

    [run]
    seeds = 1-10
    max_evals = 500
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..controls import DEFAULT_AMPLITUDE, DEFAULT_TAU
from ..gpe import (DEFAULT_BETA_HZ_UM, DEFAULT_GAMMA, DEFAULT_P_HZ, DEFAULT_R0_UM, DEFAULT_STEPS,
                   DEFAULT_T_MS, RB87_MASS_KG)

ALGORITHMS = ("grape", "group", "dgroup", "nm-crab", "nm-dcrab", "krotov")
SWEEP_AXES = ("beta-scale", "potential-scale", "basis-size", "krotov-step")
FULL_SCALE_SEEDS = 100
FULL_SCALE_EVALS = 2500


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = path or "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")
        self.line = line


@dataclass(frozen=True)
class ProblemConfig:
    mass_kg: float = RB87_MASS_KG
    beta_hbar_hz_um: float = DEFAULT_BETA_HZ_UM
    p2_hz: float = DEFAULT_P_HZ[0]
    p4_hz: float = DEFAULT_P_HZ[1]
    p6_hz: float = DEFAULT_P_HZ[2]
    r0_um: float = DEFAULT_R0_UM
    gamma: float = DEFAULT_GAMMA
    T_ms: float = DEFAULT_T_MS
    n_steps: int = DEFAULT_STEPS + 1
    x_min_um: float = -2.5
    x_max_um: float = 2.5
    n_points: int = 128
    beta_scale: float = 1.0
    potential_scale: float = 1.0

    @property
    def dt_ms(self) -> float:
        return self.T_ms / (self.n_steps - 1)


@dataclass(frozen=True)
class AlgorithmConfig:
    name: str = "group"
    M: int = 60
    basis: str = "cb"
    method: str = "auto"  # lbfgs for grape, bfgs for group/dgroup
    space: str = "h1"
    memory: int = 10
    initial_step_um: float = 0.02
    backend: str = "adjoint"
    superiterations: int = 1
    simplex_scale_um: float = 0.01
    alpha: float = 0.1
    max_sweeps: int = 10_000


@dataclass(frozen=True)
class FilterConfig:
    kind: str = "none"
    tau_ms: float = DEFAULT_TAU
    path: str = ""


@dataclass(frozen=True)
class RunConfig:
    seeds: tuple[int, ...] = (1,)
    max_evals: int = 500
    output_dir: str = "results"
    init_basis_size: int = 20
    init_amplitude_um: float = DEFAULT_AMPLITUDE


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if not all(math.isfinite(v) for v in self.values):
            raise ConfigError("sweep values must be finite")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    run: RunConfig = field(default_factory=RunConfig)
    sweep: SweepSpec | None = None
    source: str = ""

    def full_scale(self) -> "ExperimentConfig":
        seeds = tuple(range(1, FULL_SCALE_SEEDS + 1))
        return replace(self, run=replace(self.run, seeds=seeds, max_evals=FULL_SCALE_EVALS))

    def with_output(self, out: str) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, output_dir=str(out)))

    def cells(self) -> list[tuple[str, float | None]]:
        """``(label, sweep value)`` for each sweep cell; one unlabeled cell without a sweep."""
        if self.sweep is None:
            return [(self.algorithm.name, None)]
        return [(f"{self.algorithm.name}_{self.sweep.axis}={_fmt(v)}", v) for v in self.sweep.values]

    def for_cell(self, value: float | None) -> "ExperimentConfig":
        """The config a single sweep cell runs with."""
        if value is None or self.sweep is None:
            return self
        axis = self.sweep.axis
        if axis == "beta-scale":
            return replace(self, problem=replace(self.problem, beta_scale=value))
        if axis == "potential-scale":
            return replace(self, problem=replace(self.problem, potential_scale=value))
        if axis == "basis-size":
            if value != int(value) or value < 1:
                raise ConfigError(f"basis size must be a positive integer, got {value}")
            return replace(self, algorithm=replace(self.algorithm, M=int(value)))
        return replace(self, algorithm=replace(self.algorithm, alpha=value))


def _fmt(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


# -- parsing ---------------------------------------------------------------

_SECTIONS = {"problem": ProblemConfig, "algorithm": AlgorithmConfig, "filter": FilterConfig,
             "run": RunConfig}
_POSITIVE = {"mass_kg", "r0_um", "T_ms", "n_steps", "n_points", "M", "memory", "initial_step_um",
             "superiterations", "simplex_scale_um", "alpha", "max_sweeps", "tau_ms", "max_evals",
             "init_basis_size", "beta_scale", "potential_scale"}
_NONNEGATIVE = {"beta_hbar_hz_um", "gamma", "init_amplitude_um"}
_CHOICES = {"name": ALGORITHMS, "basis": ("cb", "crab"), "method": ("auto", "lbfgs", "steepest", "bfgs"),
            "space": ("h1", "l2"), "backend": ("adjoint", "goat"),
            "kind": ("none", "exponential", "file")}


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"1-3, 7"`` -> ``(1, 2, 3, 7)``."""
    seeds: list[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = re.fullmatch(r"(-?\d+)\s*-\s*(-?\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise ValueError("duplicate seeds")
    return tuple(seeds)


def parse_values(text: str) -> tuple[float, ...]:
    """Comma list or ``start:stop:step`` range (inclusive of ``stop``)."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"bad range {text!r}")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(n))
    return tuple(float(v) for v in text.split(",") if v.strip())


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            if k == key:
                return i
    return None


def _convert(name: str, raw: str, default):
    if name == "seeds":
        return parse_seeds(raw)
    if isinstance(default, bool):
        raise TypeError
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def loads(text: str, path: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str  # keys are case sensitive (T_ms, M)
    try:
        parser.read_string(text, source=path or "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], path, line) from None
    if parser.defaults():
        raise ConfigError("keys outside a section", path, None)

    blocks = {}
    for section in parser.sections():
        if section == "sweep":
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", path, _line_of(text, section))
    for section, cls in _SECTIONS.items():
        defaults = cls()
        values = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                line = _line_of(text, section, key)
                if not hasattr(defaults, key) or key in ("beta_scale", "potential_scale"):
                    raise ConfigError(f"unknown key {key!r} in [{section}]", path, line)
                try:
                    value = _convert(key, raw, getattr(defaults, key))
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})", path, line) from None
                _validate(key, value, path, line)
                values[key] = value
        blocks[section] = replace(defaults, **values)

    sweep = None
    if parser.has_section("sweep"):
        items = dict(parser.items("sweep"))
        for key in items:
            if key not in ("axis", "values"):
                raise ConfigError(f"unknown key {key!r} in [sweep]", path, _line_of(text, "sweep", key))
        for key in ("axis", "values"):
            if key not in items:
                raise ConfigError(f"[sweep] needs {key!r}", path, _line_of(text, "sweep"))
        try:
            values = parse_values(items["values"])
        except ValueError as exc:
            raise ConfigError(f"bad sweep values: {exc}", path, _line_of(text, "sweep", "values")) from None
        try:
            sweep = SweepSpec(items["axis"].strip(), values)
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[1], path, _line_of(text, "sweep", "axis")) from None

    cfg = ExperimentConfig(blocks["problem"], blocks["algorithm"], blocks["filter"], blocks["run"],
                           sweep, text)
    _cross_check(cfg, text, path)
    return cfg


def _validate(key, value, path, line):
    if key in _POSITIVE and not value > 0:
        raise ConfigError(f"{key} must be positive, got {value}", path, line)
    if key in _NONNEGATIVE and not value >= 0:
        raise ConfigError(f"{key} must be non-negative, got {value}", path, line)
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(f"{key} must be one of {', '.join(_CHOICES[key])}; got {value!r}", path, line)
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"{key} must be finite", path, line)


def _cross_check(cfg: ExperimentConfig, text: str, path):
    p = cfg.problem
    if p.n_steps < 3:
        raise ConfigError("n_steps must be >= 3", path, _line_of(text, "problem", "n_steps"))
    if p.n_points < 8 or p.n_points & (p.n_points - 1):
        raise ConfigError("n_points must be a power of two >= 8", path,
                          _line_of(text, "problem", "n_points"))
    if not p.x_max_um > p.x_min_um:
        raise ConfigError("x_max_um must exceed x_min_um", path, _line_of(text, "problem", "x_max_um"))
    if cfg.filter.kind == "file" and not cfg.filter.path:
        raise ConfigError("filter kind 'file' needs a path", path, _line_of(text, "filter", "kind"))
    if cfg.algorithm.name == "krotov" and cfg.filter.kind != "none":
        raise ConfigError("krotov does not support a control filter", path,
                          _line_of(text, "filter", "kind"))


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    cfg = loads(text, str(path))
    if cfg.filter.kind == "file" and not Path(cfg.filter.path).is_absolute():
        cfg = replace(cfg, filter=replace(cfg.filter, path=str(path.parent / cfg.filter.path)))
    return cfg
