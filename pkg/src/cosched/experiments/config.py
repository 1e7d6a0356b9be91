"""Experiment configuration: INI-style text files mapped onto frozen dataclasses.

A config file has the sections ``[experiment]``, ``[topology]``,
``[quantizer]``, ``[solver]``, ``[cpu]``, ``[penalty]`` and ``[ml]``. Every key
is optional; omitted keys take the dataclass defaults below. Lists are
comma-separated, ``none`` marks an unset optional value, and ``alpha = auto``
asks for half the admissible step-size bound of the built instance.
"""

import configparser
import dataclasses
import math
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..quantize import QuantizerConfig

TOPOLOGY_KINDS = ("erdos-renyi", "exponential", "file")
ML_KINDS = ("none", "regression", "svm", "logistic", "nonconvex")


class ConfigError(ValueError):
    """Invalid or unparsable configuration; the message names the offending key."""


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "experiment"


@dataclass(frozen=True)
class TopologySection:
    kind: str = "erdos-renyi"
    n: int = 20
    p: float = 0.4
    switch_period: int = 100
    graph_pool_size: int = 3
    switch_mode: str = "cyclic"
    seed: int = 1
    graph_files: tuple = ()


@dataclass(frozen=True)
class QuantizerSection:
    rho: float = 0.125
    enabled: bool = True

    def to_quantizer(self):
        return QuantizerConfig(rho=self.rho, enabled=self.enabled)


@dataclass(frozen=True)
class SolverSection:
    alpha: Union[float, str] = "auto"
    dt: float = 1e-3
    steps: int = 10000
    z_init: str = "local-gradient"
    x_init: str = "equal"
    seed: int = 0
    record_every: int = 10
    early_stop: bool = False
    consensus_tol: float = 1e-6
    gradient_tol: float = 1e-6
    marginal_tol: float = 1e-6


@dataclass(frozen=True)
class CpuSection:
    enabled: bool = True
    b: Optional[float] = 8600.0
    load_fraction: Optional[float] = None
    kappa_max: tuple = ()
    kappa_range: tuple = (500.0, 900.0)
    demand: tuple = ()
    demand_range: tuple = (300.0, 500.0)
    used: tuple = ()
    seed: int = 0


@dataclass(frozen=True)
class PenaltySection:
    enabled: bool = True
    epsilon: float = 1.0
    sigma: float = 2.0
    lower: float = 0.0
    upper: float = 700.0
    variant: str = "power"


@dataclass(frozen=True)
class MlSection:
    kind: str = "none"
    m: Optional[int] = None
    dataset: Optional[str] = None
    n_points: int = 1000
    dim: int = 2
    separation: float = 4.0
    margin: float = 0.25
    noise: float = 0.5
    coef_range: float = 5.0
    shard_fraction: float = 0.75
    data_seed: int = 0
    C: float = 5.0
    mu: float = 2.0
    theta: float = 0.01

    @property
    def param_dim(self):
        if self.kind == "none":
            return 0
        if self.kind == "nonconvex":
            return 1
        return self.dim + 1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    topology: TopologySection = field(default_factory=TopologySection)
    quantizer: QuantizerSection = field(default_factory=QuantizerSection)
    solver: SolverSection = field(default_factory=SolverSection)
    cpu: CpuSection = field(default_factory=CpuSection)
    penalty: PenaltySection = field(default_factory=PenaltySection)
    ml: MlSection = field(default_factory=MlSection)

    @property
    def name(self):
        return self.experiment.name

    def replace(self, section, **changes):
        """Copy with some keys of one section changed (validated again)."""
        sec = dataclasses.replace(getattr(self, section), **changes)
        cfg = dataclasses.replace(self, **{section: sec})
        validate(cfg)
        return cfg

    def to_dict(self):
        return dataclasses.asdict(self)


SECTIONS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


# --------------------------------------------------------------------------
# value conversion


def _parse_value(tp, raw):
    raw = raw.strip()
    origin = typing.get_origin(tp)
    if origin is Union:
        args = typing.get_args(tp)
        if type(None) in args:
            if raw.lower() in ("none", ""):
                return None
            (inner,) = [a for a in args if a is not type(None)]
            return _parse_value(inner, raw)
        # alpha: float or "auto"
        if raw.lower() == "auto":
            return "auto"
        return _parse_value(float, raw)
    if tp is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if tp is int:
        if not re.fullmatch(r"[+-]?\d+", raw):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(raw)
    if tp is float:
        return float(raw)
    if tp is tuple:
        if not raw:
            return ()
        return tuple(float(v) if _looks_numeric(v) else v.strip() for v in raw.split(","))
    return raw


def _looks_numeric(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def _key_lines(text):
    """Map ``(section, key)`` to its 1-based line number in ``text``."""
    lines = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"([^=:]+)[=:]", stripped)
        if m and section is not None:
            lines[(section, m.group(1).strip())] = lineno
    return lines


# --------------------------------------------------------------------------
# load / write


def _describe_parse_error(exc):
    if isinstance(exc, configparser.MissingSectionHeaderError):
        return f"line {exc.lineno}: key outside any [section]: {exc.line.strip()!r}"
    if isinstance(exc, configparser.ParsingError) and getattr(exc, "errors", None):
        lineno, line = exc.errors[0]
        return f"line {lineno}: cannot parse {line.strip()!r}"
    if isinstance(exc, configparser.DuplicateOptionError):
        return f"line {exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]"
    if isinstance(exc, configparser.DuplicateSectionError):
        return f"line {exc.lineno}: duplicate section [{exc.section}]"
    return f"parse error: {exc}"


def parse_config(text, source="<string>"):
    """Parse config text; raises ``ConfigError`` carrying file and line information."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str  # keys are case-sensitive (``C``)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {_describe_parse_error(exc)}") from None
    where = _key_lines(text)
    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{name}]; expected one of {sorted(SECTIONS)}")
        cls = SECTIONS[name]
        hints = typing.get_type_hints(cls)
        values = {}
        for key, raw in parser.items(name):
            line = where.get((name, key), "?")
            if key not in hints:
                raise ConfigError(f"{source}, line {line}: unknown key '{key}' in [{name}]")
            try:
                values[key] = _parse_value(hints[key], raw)
            except ValueError as exc:
                raise ConfigError(f"{source}, line {line}: [{name}] {key}: {exc}") from None
        try:
            sections[name] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: [{name}]: {exc}") from None
    cfg = ExperimentConfig(**sections)
    validate(cfg)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def format_config(cfg):
    out = []
    for name in SECTIONS:
        sec = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in dataclasses.fields(sec):
            out.append(f"{f.name} = {_format_value(getattr(sec, f.name))}")
        out.append("")
    return "\n".join(out)


def write_config(cfg, path):
    path = Path(path)
    path.write_text(format_config(cfg))
    return path


# --------------------------------------------------------------------------
# validation


def _fail(section, key, msg):
    raise ConfigError(f"[{section}] {key}: {msg}")


def _positive(section, key, value):
    if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
        _fail(section, key, f"must be a positive number, got {value!r}")


def _pair(section, key, value):
    if len(value) != 2 or not all(isinstance(v, float) for v in value) or not value[0] <= value[1]:
        _fail(section, key, f"must be two numbers 'low, high' with low <= high, got {value!r}")


def validate(cfg):
    """Check every cross-field invariant; raises ``ConfigError`` naming the key."""
    t = cfg.topology
    if t.kind not in TOPOLOGY_KINDS:
        _fail("topology", "kind", f"must be one of {TOPOLOGY_KINDS}, got {t.kind!r}")
    if t.n < 2:
        _fail("topology", "n", f"need at least 2 nodes, got {t.n}")
    if not 0 < t.p <= 1:
        _fail("topology", "p", f"must lie in (0, 1], got {t.p}")
    if t.switch_period < 1:
        _fail("topology", "switch_period", f"must be >= 1, got {t.switch_period}")
    if t.graph_pool_size < 1:
        _fail("topology", "graph_pool_size", f"must be >= 1, got {t.graph_pool_size}")
    if t.switch_mode not in ("cyclic", "random"):
        _fail("topology", "switch_mode", f"must be 'cyclic' or 'random', got {t.switch_mode!r}")
    if t.kind == "exponential" and (t.n & (t.n - 1)):
        _fail("topology", "n", f"exponential graphs need a power of two, got {t.n}")
    if t.kind == "file" and not t.graph_files:
        _fail("topology", "graph_files", "kind 'file' needs at least one edge-list path")

    q = cfg.quantizer
    if q.enabled and not 0 < q.rho <= 1:
        _fail("quantizer", "rho", f"must lie in (0, 1] when enabled, got {q.rho}")

    s = cfg.solver
    if s.alpha != "auto":
        if isinstance(s.alpha, str):
            _fail("solver", "alpha", f"must be a positive number or 'auto', got {s.alpha!r}")
        _positive("solver", "alpha", s.alpha)
    _positive("solver", "dt", s.dt)
    if s.steps < 0:
        _fail("solver", "steps", f"must be >= 0, got {s.steps}")
    if s.record_every < 1:
        _fail("solver", "record_every", f"must be >= 1, got {s.record_every}")
    if s.z_init not in ("local-gradient", "zero"):
        _fail("solver", "z_init", f"must be 'local-gradient' or 'zero', got {s.z_init!r}")
    if s.x_init not in ("equal", "random"):
        _fail("solver", "x_init", f"must be 'equal' or 'random', got {s.x_init!r}")
    for key in ("consensus_tol", "gradient_tol", "marginal_tol"):
        _positive("solver", key, getattr(s, key))

    c = cfg.cpu
    if c.enabled:
        if (c.b is None) == (c.load_fraction is None):
            _fail("cpu", "b", "set exactly one of 'b' and 'load_fraction'")
        if c.load_fraction is not None and not 0 <= c.load_fraction <= 1:
            _fail("cpu", "load_fraction", f"must lie in [0, 1], got {c.load_fraction}")
        for key in ("kappa_max", "demand", "used"):
            vals = getattr(c, key)
            if vals and len(vals) != t.n:
                _fail("cpu", key, f"has {len(vals)} entries but the network has n={t.n} nodes")
            if vals and not all(isinstance(v, float) for v in vals):
                _fail("cpu", key, f"entries must be numbers, got {vals!r}")
        if not c.kappa_max:
            _pair("cpu", "kappa_range", c.kappa_range)
            if c.kappa_range[0] <= 0:
                _fail("cpu", "kappa_range", f"capacities must be positive, got {c.kappa_range}")
        elif min(c.kappa_max) <= 0:
            _fail("cpu", "kappa_max", "capacities must be positive")
        if not c.demand:
            _pair("cpu", "demand_range", c.demand_range)
        if c.used and min(c.used) < 0:
            _fail("cpu", "used", "already-used cycles must be nonnegative")

    p = cfg.penalty
    if p.enabled:
        if not p.lower < p.upper:
            _fail("penalty", "lower", f"must be below upper ({p.lower} >= {p.upper})")
        _positive("penalty", "epsilon", p.epsilon)
        if p.variant == "power":
            if p.sigma < 2 or p.sigma != int(p.sigma):
                _fail("penalty", "sigma", f"power variant needs an integer >= 2, got {p.sigma}")
        elif p.variant == "softplus":
            _positive("penalty", "sigma", p.sigma)
        else:
            _fail("penalty", "variant", f"must be 'power' or 'softplus', got {p.variant!r}")

    m = cfg.ml
    if m.kind not in ML_KINDS:
        _fail("ml", "kind", f"must be one of {ML_KINDS}, got {m.kind!r}")
    if m.kind != "none":
        if not 0 < m.shard_fraction <= 1:
            _fail("ml", "shard_fraction", f"must lie in (0, 1], got {m.shard_fraction}")
        if m.dataset is None:
            if m.n_points < 1:
                _fail("ml", "n_points", f"must be >= 1, got {m.n_points}")
            if m.dim < 1:
                _fail("ml", "dim", f"must be >= 1, got {m.dim}")
        if m.m is not None and m.dataset is None and m.m != m.param_dim:
            _fail("ml", "m", f"is {m.m} but kind {m.kind!r} with dim={m.dim} has {m.param_dim} parameters")
        if m.kind == "svm":
            _positive("ml", "mu", m.mu)
            if m.C < 0:
                _fail("ml", "C", f"must be nonnegative, got {m.C}")
        if m.kind == "logistic" and m.theta < 0:
            _fail("ml", "theta", f"must be nonnegative, got {m.theta}")
    if not c.enabled and m.kind == "none":
        _fail("ml", "kind", "with the cpu section disabled an ML objective is required")
    return cfg
