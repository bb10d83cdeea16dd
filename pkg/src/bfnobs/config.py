"""Experiment configuration: an INI grammar, validation and serialisation.

Grammar (``configparser`` INI, ``#`` or ``;`` comments, every key optional
unless stated)::

    [experiment]
    kind = bfn            # forward_observer | bfn | gramian_study |
                          # crystallization | refinement_study  (required)
    seed = 0
    output_dir =          # empty: chosen by the CLI

    [grid]
    x0 = 0.0
    x1 = 1.0
    n = 128
    interpolation = spectral      # spectral | linear

    [profile]
    shape = constant      # constant | sinusoidal | relaxing
    mean = 1.0            # constant value, sinusoid mean, or relaxing limit
    amplitude = 0.0
    period = 1.0          # sinusoidal
    rate = 1.0            # relaxing

    [observer]
    type = window         # window | cld
    x_min = 0.6
    x_max = 1.0
    chord_samples = 0     # cld only, 0 means 2n
    r = 5.0               # must be > 0
    dt = 0.003125
    scheme = strang_splitting     # strang_splitting | lie_splitting
    correction = exact            # exact | rk4

    [run]
    horizon = 0.6         # observation horizon T (gramian: tau)
    iterations = 20       # BFN cycles
    noise_std = 0.0
    initial_modes = 4     # Fourier modes of the random true state
    window_len = 0.2      # forward_observer: output-energy window
    sizes = 32, 64, 128   # refinement_study grid sizes

    [crystallization]     # crystallization and refinement_study only
    x_min = 1.0
    x_max = 3.0
    T = 2.0
    growth_mean = 0.5
    growth_amplitude = 0.25
    growth_period = 2.0
    csd_center = 1.5
    csd_width = 0.06
    nucleation_center = 1.0
    nucleation_width = 0.13
    nucleation_height = 0.6

For ``crystallization`` and ``refinement_study`` the domain is derived
from the ``[crystallization]`` section, and ``[grid] x0/x1`` and the
``[observer]`` window are ignored.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("forward_observer", "bfn", "gramian_study", "crystallization", "refinement_study")
SHAPES = ("constant", "sinusoidal", "relaxing")


class ConfigError(ValueError):
    """All problems found in a configuration, one message per entry."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class GridSection:
    x0: float = 0.0
    x1: float = 1.0
    n: int = 128
    interpolation: str = "spectral"


@dataclass(frozen=True)
class ProfileSection:
    shape: str = "constant"
    mean: float = 1.0
    amplitude: float = 0.0
    period: float = 1.0
    rate: float = 1.0


@dataclass(frozen=True)
class ObserverSection:
    type: str = "window"
    x_min: float = 0.6
    x_max: float = 1.0
    chord_samples: int = 0
    r: float = 5.0
    dt: float = 1.0 / 320
    scheme: str = "strang_splitting"
    correction: str = "exact"


@dataclass(frozen=True)
class RunSection:
    horizon: float = 0.6
    iterations: int = 20
    noise_std: float = 0.0
    initial_modes: int = 4
    window_len: float = 0.2
    sizes: tuple = (32, 64, 128)


@dataclass(frozen=True)
class CrystallizationSection:
    x_min: float = 1.0
    x_max: float = 3.0
    T: float = 2.0
    growth_mean: float = 0.5
    growth_amplitude: float = 0.25
    growth_period: float = 2.0
    csd_center: float = 1.5
    csd_width: float = 0.06
    nucleation_center: float = 1.0
    nucleation_width: float = 0.13
    nucleation_height: float = 0.6


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    output_dir: str = ""
    grid: GridSection = field(default_factory=GridSection)
    profile: ProfileSection = field(default_factory=ProfileSection)
    observer: ObserverSection = field(default_factory=ObserverSection)
    run: RunSection = field(default_factory=RunSection)
    crystallization: CrystallizationSection = field(default_factory=CrystallizationSection)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "grid": GridSection,
    "profile": ProfileSection,
    "observer": ObserverSection,
    "run": RunSection,
    "crystallization": CrystallizationSection,
}
_TOP = {"kind": str, "seed": int, "output_dir": str}


def _convert(raw: str, typ, where: str, errors: list):
    text = raw.strip()
    try:
        if typ is int:
            return int(text)
        if typ is float:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if typ is tuple:
            return tuple(int(p) for p in text.replace(",", " ").split())
        return text
    except ValueError:
        errors.append(f"{where}: cannot read {text!r} as {typ.__name__}")
        return None


def _field_types(cls) -> dict:
    hints = {"float": float, "int": int, "str": str, "tuple": tuple}
    return {f.name: hints[f.type] for f in dataclasses.fields(cls)}


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate INI text; raises :class:`ConfigError` listing every problem."""
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"), interpolation=None, strict=True
    )
    parser.optionxform = str  # keep key case (``T``)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError([f"{source}, line {exc.lineno}: parse error: key outside any [section]"])
    except configparser.ParsingError as exc:
        raise ConfigError(
            [
                f"{source}, line {lineno}: parse error: malformed line {line.replace(chr(92) + 'n', '')}"
                for lineno, line in exc.errors
            ]
        )
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"{source}, line {line}" if line is not None else source
        raise ConfigError([f"{where}: parse error: {getattr(exc, 'message', exc)}"])

    errors: list[str] = []
    known = {"experiment", *_SECTIONS}
    for name in parser.sections():
        if name not in known:
            errors.append(f"unknown section [{name}]")

    top = {}
    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            if key not in _TOP:
                errors.append(f"experiment.{key}: unknown key")
                continue
            val = _convert(raw, _TOP[key], f"experiment.{key}", errors)
            if val is not None:
                top[key] = val
    if "kind" not in top:
        errors.append("experiment.kind: required, one of " + ", ".join(KINDS))

    sections = {}
    for name, cls in _SECTIONS.items():
        types = _field_types(cls)
        values = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in types:
                    errors.append(f"{name}.{key}: unknown key")
                    continue
                val = _convert(raw, types[key], f"{name}.{key}", errors)
                if val is not None:
                    values[key] = val
        sections[name] = cls(**values)

    cfg = ExperimentConfig(kind=top.get("kind", ""), **{k: v for k, v in top.items() if k != "kind"}, **sections)
    errors.extend(validate(cfg, kind_checked="kind" in top))
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path) -> ExperimentConfig:
    """Read a config file; ``FileNotFoundError`` when missing, :class:`ConfigError` when invalid."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


def validate(cfg: ExperimentConfig, kind_checked: bool = True) -> list[str]:
    """Every constraint violated by ``cfg`` as ``section.key: message`` strings."""
    e: list[str] = []
    if kind_checked and cfg.kind not in KINDS:
        e.append(f"experiment.kind: {cfg.kind!r} is not one of " + ", ".join(KINDS))
    if cfg.seed < 0:
        e.append("experiment.seed: must satisfy seed >= 0")

    g = cfg.grid
    if g.n < 4:
        e.append("grid.n: must satisfy n >= 4")
    if not g.x1 > g.x0:
        e.append("grid.x1: must satisfy x1 > x0")
    if g.interpolation not in ("spectral", "linear"):
        e.append("grid.interpolation: must be spectral or linear")

    p = cfg.profile
    if p.shape not in SHAPES:
        e.append("profile.shape: must be one of " + ", ".join(SHAPES))
    if p.shape == "sinusoidal" and not p.period > 0:
        e.append("profile.period: must satisfy period > 0")
    if p.shape == "relaxing" and not p.rate > 0:
        e.append("profile.rate: must satisfy rate > 0")

    o = cfg.observer
    if o.type not in ("window", "cld"):
        e.append("observer.type: must be window or cld")
    if not o.r > 0:
        e.append("observer.r: must satisfy r > 0")
    if not o.dt > 0:
        e.append("observer.dt: must satisfy dt > 0")
    if o.scheme not in ("strang_splitting", "lie_splitting"):
        e.append("observer.scheme: must be strang_splitting or lie_splitting")
    if o.correction not in ("exact", "rk4"):
        e.append("observer.correction: must be exact or rk4")
    if o.chord_samples < 0:
        e.append("observer.chord_samples: must satisfy chord_samples >= 0")
    crystal = cfg.kind in ("crystallization", "refinement_study")
    if not crystal:
        if not o.x_max > o.x_min:
            e.append("observer.x_max: must satisfy x_max > x_min")
        elif not (g.x0 <= o.x_min and o.x_max <= g.x1):
            e.append("observer.x_min: window must lie inside [grid.x0, grid.x1]")
        if o.type == "cld" and not o.x_min > 0:
            e.append("observer.x_min: cld window needs x_min > 0")

    r = cfg.run
    if not r.horizon > 0:
        e.append("run.horizon: must satisfy horizon > 0")
    elif cfg.kind in ("forward_observer", "bfn") and o.dt > 0:
        steps = r.horizon / o.dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            e.append("run.horizon: must be an integer multiple of observer.dt")
    if r.iterations < 0:
        e.append("run.iterations: must satisfy iterations >= 0")
    if r.noise_std < 0:
        e.append("run.noise_std: must satisfy noise_std >= 0")
    if r.initial_modes < 1:
        e.append("run.initial_modes: must satisfy initial_modes >= 1")
    if not r.window_len > 0:
        e.append("run.window_len: must satisfy window_len > 0")
    elif cfg.kind == "forward_observer" and r.window_len > r.horizon * (1 + 1e-12):
        e.append("run.window_len: must not exceed run.horizon")
    if cfg.kind == "refinement_study" and (not r.sizes or min(r.sizes) < 4):
        e.append("run.sizes: need at least one grid size, each >= 4")

    c = cfg.crystallization
    if crystal:
        if not c.x_min > 0:
            e.append("crystallization.x_min: must satisfy x_min > 0")
        if not c.x_max > c.x_min:
            e.append("crystallization.x_max: must satisfy x_max > x_min")
        if not c.T > 0:
            e.append("crystallization.T: must satisfy T > 0")
        if not c.growth_period > 0:
            e.append("crystallization.growth_period: must satisfy growth_period > 0")
        if not (c.growth_mean > 0 and abs(c.growth_amplitude) < 1):
            e.append("crystallization.growth_mean: growth rate must stay positive (mean > 0, |amplitude| < 1)")
        if not (c.csd_width > 0 and c.nucleation_width > 0):
            e.append("crystallization.csd_width: pulse widths must be positive")
        if cfg.kind == "crystallization" and o.dt > 0:
            steps = c.T / o.dt
            if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
                e.append("crystallization.T: must be an integer multiple of observer.dt")
    return e


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(str(i) for i in v)
    return str(v)


def serialize(cfg: ExperimentConfig) -> str:
    """INI text that :func:`parse_config_text` maps back to ``cfg``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["experiment"] = {"kind": cfg.kind, "seed": str(cfg.seed), "output_dir": cfg.output_dir}
    for name in _SECTIONS:
        sec = getattr(cfg, name)
        parser[name] = {f.name: _fmt(getattr(sec, f.name)) for f in dataclasses.fields(sec)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)
