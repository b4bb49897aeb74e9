"""Run configuration: a TOML file with [model], [scheme] and [grid] tables."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .spectra import KINDS, PotentialModel

DIAGNOSTICS = ("density", "lvt", "tf-functional", "friedel", "trace", "folding-validate")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    dim: int = 1
    length: float | None = None
    omegas: tuple | None = None
    radius: float | None = None
    kappa: float | None = None
    mass: float | None = None
    hbar: float | None = None

    def build(self):
        units = {k: v for k, v in (("mass", self.mass), ("hbar", self.hbar)) if v is not None}
        if self.kind == "box1d":
            return PotentialModel.box1d(self.length if self.length is not None else math.pi, **units)
        if self.kind == "harmonic":
            omegas = self.omegas if self.omegas is not None else (1.0,) * self.dim
            return PotentialModel.harmonic(omegas, **units)
        if self.kind == "billiard":
            return PotentialModel.billiard(self.dim, self.radius if self.radius is not None else 1.0, **units)
        return PotentialModel.quartic2d(self.kappa if self.kappa is not None else 0.6, **units)


@dataclass(frozen=True)
class SchemeConfig:
    kind: str = "zero"
    temperature: float | None = None
    gap: float | None = None
    window_width: float | None = None


@dataclass(frozen=True)
class GridConfig:
    lo: float | None = None
    hi: float | None = None
    points: int = 2001
    cut: str = "diagonal"


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    N: int
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    diagnostics: tuple = ("density",)
    output_dir: str | None = None
    seed: int = 0
    levels: int | None = None

    def to_dict(self):
        return asdict(self)


def _table(data, name):
    t = data.get(name, {})
    if not isinstance(t, dict):
        raise ConfigError(name, "must be a table")
    return t


def _typed(table, prefix, key, kind, default=None):
    if key not in table:
        return default
    v = table[key]
    try:
        if kind is int:
            if isinstance(v, bool) or int(v) != v:
                raise TypeError
            return int(v)
        if kind is float:
            if isinstance(v, bool):
                raise TypeError
            return float(v)
        if kind is str:
            if not isinstance(v, str):
                raise TypeError
            return v
    except (TypeError, ValueError):
        raise ConfigError(f"{prefix}{key}", f"expected {kind.__name__}, got {v!r}") from None
    raise AssertionError(kind)


def _known(table, prefix, keys):
    for k in table:
        if k not in keys:
            raise ConfigError(f"{prefix}{k}", "unknown key")


def parse_config(data):
    """Validate a mapping (as read from TOML) into a RunConfig."""
    _known(data, "", ("model", "scheme", "grid", "N", "diagnostics", "output_dir", "seed", "levels"))
    if "model" not in data:
        raise ConfigError("model", "missing table")
    m = _table(data, "model")
    _known(m, "model.", ("kind", "dim", "length", "omegas", "radius", "kappa", "mass", "hbar"))
    kind = _typed(m, "model.", "kind", str)
    if kind not in KINDS:
        raise ConfigError("model.kind", f"must be one of {KINDS}, got {kind!r}")
    omegas = m.get("omegas")
    if omegas is not None:
        if not isinstance(omegas, list) or not omegas:
            raise ConfigError("model.omegas", "expected a non-empty list of frequencies")
        omegas = tuple(float(w) for w in omegas)
    dim_default = {"box1d": 1, "quartic2d": 2, "billiard": 2, "harmonic": len(omegas) if omegas else 1}[kind]
    model = ModelConfig(kind, _typed(m, "model.", "dim", int, dim_default), _typed(m, "model.", "length", float),
                        omegas, _typed(m, "model.", "radius", float), _typed(m, "model.", "kappa", float),
                        _typed(m, "model.", "mass", float), _typed(m, "model.", "hbar", float))
    try:
        model.build()
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None

    if "N" not in data:
        raise ConfigError("N", "missing")
    N = _typed(data, "", "N", int)
    if N < 2 or N % 2:
        raise ConfigError("N", f"must be even and >= 2, got {N}")

    s = _table(data, "scheme")
    _known(s, "scheme.", ("kind", "temperature", "gap", "window_width"))
    scheme = SchemeConfig(_typed(s, "scheme.", "kind", str, "zero"), _typed(s, "scheme.", "temperature", float),
                          _typed(s, "scheme.", "gap", float), _typed(s, "scheme.", "window_width", float))
    if scheme.kind not in ("zero", "thermal", "bcs"):
        raise ConfigError("scheme.kind", f"must be zero, thermal or bcs, got {scheme.kind!r}")
    if scheme.kind == "thermal" and not (scheme.temperature and scheme.temperature > 0):
        raise ConfigError("scheme.temperature", "thermal scheme needs temperature > 0")
    if scheme.kind == "bcs" and not (scheme.gap and scheme.gap > 0):
        raise ConfigError("scheme.gap", "bcs scheme needs gap > 0")

    g = _table(data, "grid")
    _known(g, "grid.", ("lo", "hi", "points", "cut"))
    grid = GridConfig(_typed(g, "grid.", "lo", float), _typed(g, "grid.", "hi", float),
                      _typed(g, "grid.", "points", int, 2001), _typed(g, "grid.", "cut", str, "diagonal"))
    if grid.points < 16:
        raise ConfigError("grid.points", "need at least 16 points")
    if grid.cut not in ("x", "diagonal"):
        raise ConfigError("grid.cut", "must be 'x' or 'diagonal'")

    diags = data.get("diagnostics", ["density"])
    if isinstance(diags, str):
        diags = [diags]
    if not isinstance(diags, list) or not diags:
        raise ConfigError("diagnostics", "need at least one diagnostic")
    for d in diags:
        if d not in DIAGNOSTICS:
            raise ConfigError("diagnostics", f"unknown diagnostic {d!r}; choose from {DIAGNOSTICS}")
    levels = _typed(data, "", "levels", int)
    if levels is not None and levels < N // 2:
        raise ConfigError("levels", "must hold at least N/2 states")
    return RunConfig(model, N, scheme, grid, tuple(diags), _typed(data, "", "output_dir", str),
                     _typed(data, "", "seed", int, 0), levels)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("file", f"cannot parse {path}: {exc}") from None
    return parse_config(data)
