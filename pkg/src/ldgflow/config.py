"""Run configuration: INI-style ``key = value`` sections, validated on load.

Every invalid value raises :class:`ConfigError` naming ``section.key``;
syntax errors carry the line number. ``m = exact`` selects the singular
potential. :func:`dumps` writes floats with ``repr`` so a load/dump/load
cycle reproduces the configuration exactly.
"""

from dataclasses import dataclass, field, fields, replace
import configparser
import math

import numpy as np

from .dynamics import PRESETS, SchemeParams, initial_state, regularize_initial
from .errors import ConfigError
from .fields import Grid
from .potential import Coefficient, LinearU, QuadraticG, SqrtU, ThermoFunctions


@dataclass(frozen=True)
class GridSection:
    dim: int = 2
    n: int = 32


@dataclass(frozen=True)
class SchemeSection:
    dt: float = 1e-3
    steps: int = 100
    xi: float = 0.0
    m: float = math.inf
    delta: float = 0.0
    epsilon: float = 0.0
    r: float = 3.2
    forcing: str = "none"


@dataclass(frozen=True)
class ThermoSection:
    U: str = "sqrt:2,1"
    G_inner: float = 1.0
    G_outer: float = 2.0
    mu: str = "1.0"
    kappa: str = "1.0"
    Gamma: str = "1.0"


@dataclass(frozen=True)
class InitSection:
    preset: str = "equilibrium"
    amplitude: float = 0.1
    seed: int = 0
    theta0: float = 1.0
    velocity: float = 1.0
    hot_spot: float = 0.5


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    diagnostics: str = "diagnostics.csv"
    diag_every: int = 1
    snapshot_every: int = 0
    snapshot_prefix: str = "snap"


@dataclass(frozen=True)
class ToleranceSection:
    newton: float = 1e-12
    margin: float = 1e-8
    theta_floor: float = 1e-10
    cfl_warn: float = 0.5
    cfl_abort: float = 2.0
    check_seed: int = 20240601


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    scheme: SchemeSection = field(default_factory=SchemeSection)
    thermo: ThermoSection = field(default_factory=ThermoSection)
    init: InitSection = field(default_factory=InitSection)
    output: OutputSection = field(default_factory=OutputSection)
    tolerance: ToleranceSection = field(default_factory=ToleranceSection)

    def make_grid(self):
        return Grid(self.grid.n, self.grid.dim)

    def thermo_functions(self):
        return ThermoFunctions(
            U=parse_U(self.thermo.U, "thermo.U"),
            G=QuadraticG(self.thermo.G_inner, self.thermo.G_outer),
            mu=parse_coefficient(self.thermo.mu, "thermo.mu"),
            kappa=parse_coefficient(self.thermo.kappa, "thermo.kappa"),
            Gamma=parse_coefficient(self.thermo.Gamma, "thermo.Gamma"),
        )

    def scheme_params(self):
        s, tol = self.scheme, self.tolerance
        return SchemeParams(
            dt=s.dt, xi=s.xi, m=s.m, delta=s.delta, epsilon=s.epsilon, r=s.r,
            forcing=parse_forcing(s.forcing, self.make_grid(), "scheme.forcing"),
            thermo=self.thermo_functions(), theta_floor=tol.theta_floor,
            cfl_warn=tol.cfl_warn, cfl_abort=tol.cfl_abort, newton_tol=tol.newton,
            margin=tol.margin)

    def initial_state(self):
        i = self.init
        state = initial_state(self.make_grid(), i.preset, amplitude=i.amplitude, seed=i.seed,
                              theta0=i.theta0, velocity=i.velocity, hot_spot=i.hot_spot)
        return regularize_initial(state, self.scheme.delta)


SECTIONS = {f.name: f.default_factory for f in fields(RunConfig)}


def _floats(text, count, key):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != count:
        raise ConfigError(f"expected {count} comma-separated numbers, got {text!r}", key)
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"not a number list: {text!r}", key) from None


def parse_U(text, key="thermo.U"):
    kind, _, args = text.partition(":")
    kind = kind.strip()
    if kind == "sqrt":
        a, b = _floats(args, 2, key)
        if not a > b > 0:
            raise ConfigError("sqrt U needs a > b > 0 so that U(0) > 0 and U' < 0", key)
        return SqrtU(a, b)
    if kind == "linear":
        alpha, theta_star = _floats(args, 2, key)
        if not (alpha > 0 and theta_star > 0):
            raise ConfigError("linear U needs alpha > 0 and theta_star > 0", key)
        return LinearU(alpha, theta_star)
    raise ConfigError(f"unknown U form {kind!r}; use sqrt:a,b or linear:alpha,theta_star", key)


def parse_coefficient(text, key):
    text = text.strip()
    if text.startswith("tanh:"):
        lo, hi, theta_c, width = _floats(text[5:], 4, key)
        if not (lo > 0 and hi > 0 and width > 0):
            raise ConfigError("tanh coefficient needs lo, hi, width > 0", key)
        return Coefficient(lo, hi, theta_c, width)
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"expected a number or tanh:lo,hi,theta_c,width, got {text!r}", key) from None
    if not value > 0:
        raise ConfigError("transport coefficients must be positive", key)
    return Coefficient.constant(value)


def parse_forcing(text, grid, key="scheme.forcing"):
    """``none`` or ``kolmogorov:A`` for the static body force ``(A sin x2, 0, 0)``."""
    text = text.strip()
    if text == "none":
        return None
    if text.startswith("kolmogorov:"):
        (amp,) = _floats(text[len("kolmogorov:"):], 1, key)
        g = grid.zeros(3)
        g[0] = amp * np.sin(grid.coords[1])
        return g
    raise ConfigError(f"unknown forcing {text!r}; use none or kolmogorov:A", key)


def _convert(section, name, ftype, raw):
    key = f"{section}.{name}"
    raw = raw.strip()
    try:
        if section == "scheme" and name == "m":
            if raw.lower() in ("exact", "inf", "infinity"):
                return math.inf
            return float(raw)
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {ftype.__name__}", key) from None
    return raw


def _types(cls):
    hints = {"int": int, "float": float, "str": str}
    return {f.name: hints.get(f.type, f.type) if isinstance(f.type, str) else f.type
            for f in fields(cls)}


def _require(cond, key, message):
    if not cond:
        raise ConfigError(message, key)


def validate(cfg):
    """Check every value against the solver preconditions; returns ``cfg``."""
    g, s, th, i, o, tol = cfg.grid, cfg.scheme, cfg.thermo, cfg.init, cfg.output, cfg.tolerance
    _require(g.dim in (2, 3), "grid.dim", "must be 2 or 3")
    _require(g.n >= 8 and g.n & (g.n - 1) == 0, "grid.n", "must be a power of two >= 8")
    _require(s.dt > 0 and math.isfinite(s.dt), "scheme.dt", "must be positive and finite")
    _require(s.steps >= 0, "scheme.steps", "must be >= 0")
    _require(math.isfinite(s.xi), "scheme.xi", "must be finite")
    _require(s.m > 0, "scheme.m", "must be positive or 'exact'")
    _require(s.delta >= 0 and math.isfinite(s.delta), "scheme.delta", "must be >= 0")
    _require(s.epsilon >= 0 and math.isfinite(s.epsilon), "scheme.epsilon", "must be >= 0")
    if s.delta > 0:
        _require(3.0 < s.r < 10.0 / 3.0, "scheme.r",
                 f"r = {s.r} violates the constraint r in (3, 10/3) required when delta > 0")
    parse_forcing(s.forcing, Grid(8, 2))
    u = parse_U(th.U)
    if isinstance(u, LinearU):
        _require(s.delta > 0, "thermo.U",
                 "linear U has unbounded slope growth; it needs truncation (delta > 0)")
    _require(0 < th.G_inner < th.G_outer, "thermo.G_outer", "need 0 < G_inner < G_outer")
    _require(th.G_inner > 2.0 / 3.0, "thermo.G_inner",
             "cutoff must start beyond tr Q^2 = 2/3 so physical Q are untouched")
    for name in ("mu", "kappa", "Gamma"):
        parse_coefficient(getattr(th, name), f"thermo.{name}")
    presets = [p.strip() for p in i.preset.split(",") if p.strip()]
    _require(presets and all(p in PRESETS for p in presets), "init.preset",
             f"unknown preset in {i.preset!r}; choose from {', '.join(PRESETS)}")
    _require(i.theta0 > 0, "init.theta0", "initial temperature must be positive")
    _require(i.amplitude >= 0, "init.amplitude", "must be >= 0")
    _require(i.hot_spot > -1, "init.hot_spot", "must exceed -1 to keep theta positive")
    _require(o.diag_every >= 1, "output.diag_every", "must be >= 1")
    _require(o.snapshot_every >= 0, "output.snapshot_every", "must be >= 0")
    _require(tol.newton > 0, "tolerance.newton", "must be positive")
    _require(tol.margin >= 1e-8, "tolerance.margin", "domain margin must be >= 1e-8")
    _require(tol.theta_floor > 0, "tolerance.theta_floor", "must be positive")
    _require(0 < tol.cfl_warn <= tol.cfl_abort, "tolerance.cfl_abort", "need 0 < cfl_warn <= cfl_abort")
    return cfg


def loads(text, source="<string>"):
    """Parse configuration text."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", line=exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", f"{exc.section}.{exc.option}", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line=lineno) from None
    parts = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section; expected one of {', '.join(SECTIONS)}", section)
        cls = type(SECTIONS[section]())
        types = _types(cls)
        values = {}
        for name, raw in parser.items(section):
            if name not in types:
                raise ConfigError(f"unknown key; expected one of {', '.join(types)}",
                                  f"{section}.{name}")
            values[name] = _convert(section, name, types[name], raw)
        parts[section] = cls(**values)
    return validate(RunConfig(**parts))


def load_config(path):
    """Read and validate a configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return loads(text, source=str(path))


def _fmt(value):
    if isinstance(value, float):
        return "exact" if math.isinf(value) else repr(value)
    return str(value)


def dumps(cfg):
    """Serialise every key (defaults included) back to configuration text."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        part = getattr(cfg, section)
        for f in fields(part):
            lines.append(f"{f.name} = {_fmt(getattr(part, f.name))}")
        lines.append("")
    return "\n".join(lines)


def with_overrides(cfg, section, **values):
    """Copy of ``cfg`` with some keys of one section replaced, revalidated."""
    return validate(replace(cfg, **{section: replace(getattr(cfg, section), **values)}))
