"""
Experiment configuration: TOML tables parsed into frozen dataclasses.

Parsing is total or fails with a :class:`ConfigError` naming the field and,
when it can be located, the line. Unknown keys are rejected. Serializing a
parsed config writes every field, so defaults are materialized.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from fdelab.errors import ConfigError

INITIAL_KINDS = ("separable", "eigen_bump", "gaussian_bump", "file")


@dataclass(frozen=True)
class DomainConfig:
    dim: int = 1
    extents: tuple[float, ...] = (1.0,)
    cells: tuple[int, ...] = (256,)


@dataclass(frozen=True)
class Bump:
    center: tuple[float, ...] = (0.5,)
    width: float = 0.1
    height: float = 1.0


@dataclass(frozen=True)
class InitialData:
    kind: str = "separable"
    T_star: float = 1.0
    amplitude: float = 1.0
    bumps: tuple[Bump, ...] = ()
    path: str = ""


@dataclass(frozen=True)
class ModelConfig:
    p: float = 2.0
    initial_data: InitialData = field(default_factory=InitialData)


@dataclass(frozen=True)
class TimeConfig:
    dt0: float = 1e-3
    kappa: float = 0.05
    extinction_rel: float = 1e-8
    newton_tol: float = 1e-12
    newton_max: int = 50
    fit_window: int = 20


@dataclass(frozen=True)
class RescaledConfig:
    ds: float = 1e-3
    steps: int = 2000
    perturbation: float = 1e-3
    n_modes: int = 6


@dataclass(frozen=True)
class AuditConfig:
    r: float = 2.0
    q: float = 1.5
    r_list: tuple[float, ...] = (2.0, 3.0, 4.0)
    samples: int = 64
    representation_points: int = 5
    t0_frac: float = 0.2
    t1_frac: float = 0.6
    sobolev_fields: int = 200
    seed: int = 0
    refine: bool = True


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple[str, ...] = ("json", "csv")


@dataclass(frozen=True)
class OmegaConfig:
    enabled: bool = False
    p: float = 5.0
    steps: int = 4096


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    domain: DomainConfig = field(default_factory=DomainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    rescaled: RescaledConfig = field(default_factory=RescaledConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    omega: OmegaConfig = field(default_factory=OmegaConfig)

    def refined(self, factor: int) -> ExperimentConfig:
        """Uniform refinement in space and time by an integer factor."""
        if factor < 1:
            raise ConfigError("refinement factor must be a positive integer", field="--refine")
        dom = dataclasses.replace(self.domain, cells=tuple(c * factor for c in self.domain.cells))
        tim = dataclasses.replace(self.time, dt0=self.time.dt0 / factor)
        return dataclasses.replace(self, domain=dom, time=tim)

    def with_output(self, directory: str) -> ExperimentConfig:
        return dataclasses.replace(self, output=dataclasses.replace(self.output, directory=directory))

    def with_seed(self, seed: int) -> ExperimentConfig:
        return dataclasses.replace(self, audit=dataclasses.replace(self.audit, seed=int(seed)))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


class _Locator:
    """Maps dotted key paths to source lines for diagnostics."""

    _header = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\- ]+?)\s*\]\]?")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")

    def __init__(self, text: str):
        self.lines: dict[str, int] = {}
        table = ""
        for no, line in enumerate(text.splitlines(), start=1):
            m = self._header.match(line)
            if m:
                table = m.group(1).replace(" ", "")
                self.lines.setdefault(table, no)
                continue
            m = self._key.match(line)
            if m:
                path = f"{table}.{m.group(1)}" if table else m.group(1)
                self.lines.setdefault(path, no)

    def line(self, path: str) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return None


def _fail(loc: _Locator, path: str, message: str):
    raise ConfigError(f"{path}: {message}", field=path, line=loc.line(path))


def _coerce(loc: _Locator, path: str, value: Any, target: Any, default: Any):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            _fail(loc, path, "expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(loc, path, "expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(loc, path, "expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            _fail(loc, path, "expected a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            _fail(loc, path, "expected an array")
        return tuple(value)
    return value


def _table(loc: _Locator, path: str, data: Any, cls):
    if not isinstance(data, dict):
        _fail(loc, path, "expected a table")
    proto = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            sub = f"{path}.{key}" if path else key
            _fail(loc, sub, "unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        default = getattr(proto, f.name)
        value = data[f.name]
        if dataclasses.is_dataclass(default):
            kwargs[f.name] = _table(loc, sub, value, type(default))
        elif f.name == "bumps":
            if not isinstance(value, list):
                _fail(loc, sub, "expected an array of tables")
            kwargs[f.name] = tuple(_bump(loc, f"{sub}[{i}]", b) for i, b in enumerate(value))
        else:
            value = _coerce(loc, sub, value, f.type, default)
            if isinstance(default, tuple) and default and isinstance(default[0], (int, float)):
                kind = type(default[0])
                for item in value:
                    if isinstance(item, bool) or not isinstance(item, (int, float)):
                        _fail(loc, sub, "expected numeric entries")
                    if kind is int and not isinstance(item, int):
                        _fail(loc, sub, "expected integer entries")
                value = tuple(kind(v) for v in value)
            kwargs[f.name] = value
    return cls(**kwargs)


def _bump(loc: _Locator, path: str, data: Any) -> Bump:
    b = _table(loc, path, data, Bump)
    return dataclasses.replace(b, center=tuple(float(c) for c in b.center))


def _validate(loc: _Locator, cfg: ExperimentConfig):
    d = cfg.domain
    if d.dim not in (1, 2):
        _fail(loc, "domain.dim", "must be 1 or 2")
    if len(d.extents) != d.dim or len(d.cells) != d.dim:
        _fail(loc, "domain", "extents and cells need one entry per dimension")
    if any(e <= 0 for e in d.extents):
        _fail(loc, "domain.extents", "must be positive")
    if any(c < 4 for c in d.cells):
        _fail(loc, "domain.cells", "need at least 4 cells per axis")
    if not cfg.model.p > 1:
        _fail(loc, "model.p", "must exceed 1")
    ini = cfg.model.initial_data
    if ini.kind not in INITIAL_KINDS:
        _fail(loc, "model.initial_data.kind", f"must be one of {', '.join(INITIAL_KINDS)}")
    if ini.kind == "gaussian_bump":
        if not ini.bumps:
            _fail(loc, "model.initial_data.bumps", "gaussian_bump needs at least one bump")
        for i, b in enumerate(ini.bumps):
            if len(b.center) != d.dim:
                _fail(loc, f"model.initial_data.bumps[{i}].center", "wrong dimension")
            if not (b.width > 0 and b.height > 0):
                _fail(loc, f"model.initial_data.bumps[{i}]", "width and height must be positive")
    if ini.kind == "file" and not ini.path:
        _fail(loc, "model.initial_data.path", "file initial data needs a path")
    if not ini.T_star > 0:
        _fail(loc, "model.initial_data.T_star", "must be positive")
    if not ini.amplitude > 0:
        _fail(loc, "model.initial_data.amplitude", "must be positive")
    t = cfg.time
    for name in ("dt0", "kappa", "extinction_rel", "newton_tol"):
        if not getattr(t, name) > 0:
            _fail(loc, f"time.{name}", "must be positive")
    if t.newton_max < 1:
        _fail(loc, "time.newton_max", "must be at least 1")
    if t.fit_window < 2:
        _fail(loc, "time.fit_window", "must be at least 2")
    rs = cfg.rescaled
    if not 0 < rs.ds < 1:
        _fail(loc, "rescaled.ds", "must lie in (0, 1)")
    if rs.steps < 1 or rs.n_modes < 2:
        _fail(loc, "rescaled", "steps >= 1 and n_modes >= 2 required")
    if not 0 < rs.perturbation <= 1e-3:
        _fail(loc, "rescaled.perturbation", "must lie in (0, 1e-3]")
    a = cfg.audit
    if not a.r > 0:
        _fail(loc, "audit.r", "must be positive")
    if not a.q > 1:
        _fail(loc, "audit.q", "must exceed 1")
    if any(r <= 0 for r in a.r_list):
        _fail(loc, "audit.r_list", "entries must be positive")
    if not 0 < a.t0_frac < a.t1_frac < 1:
        _fail(loc, "audit", "need 0 < t0_frac < t1_frac < 1")
    if a.samples < 2 or a.representation_points < 1 or a.sobolev_fields < 1:
        _fail(loc, "audit", "sample counts must be positive")
    bad = set(cfg.output.formats) - {"json", "csv"}
    if bad:
        _fail(loc, "output.formats", f"unsupported format(s): {', '.join(sorted(bad))}")
    if cfg.omega.steps < 4 or cfg.omega.steps % 2:
        _fail(loc, "omega.steps", "must be an even integer >= 4")


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", line=int(m.group(1)) if m else None) from exc
    loc = _Locator(text)
    cfg = _table(loc, "", data, ExperimentConfig)
    _validate(loc, cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field=str(path)) from exc
    return parse_config(text)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = config_to_dict(value)
        elif isinstance(value, tuple):
            out[f.name] = [config_to_dict(v) if dataclasses.is_dataclass(v) else v for v in value]
        else:
            out[f.name] = value
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    """TOML text with every default written out."""
    return tomli_w.dumps(config_to_dict(cfg))
