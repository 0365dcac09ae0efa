"""Experiment configuration: one TOML file of record plus CLI overrides."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError

KINDS = ("betti", "morse-verify", "witten-scan", "semiclassical", "susy-pairing")
STAR_KINDS = ("combinatorial", "circumcentric", "random")
POTENTIALS = ("harmonic", "double-well", "torus-witten")

# per-potential settings; "schedule" is the default lambda (or t) schedule
POTENTIAL_DEFAULTS = {
    "harmonic": {"N": 1024, "domain": (-8.0, 8.0), "n_eigs": 3, "tolerance": 1e-3,
                 "require_monotone": False, "schedule": (10.0,)},
    "double-well": {"N": 2048, "domain": (-3.0, 3.0), "n_eigs": 2, "tolerance": 0.05,
                    "require_monotone": True, "schedule": (5.0, 10.0, 20.0, 40.0)},
    "torus-witten": {"n_eigs": 3, "tolerance": 0.3, "require_monotone": True,
                     "schedule": (5.0, 10.0, 20.0)},
}


@dataclass(frozen=True)
class SolverSettings:
    k: int = 20
    tol: float = 1e-9
    max_iterations: int = 200
    method: str = "auto"

    def request_kw(self, seed: int) -> dict:
        return {"tol": self.tol, "max_iterations": self.max_iterations, "seed": seed,
                "method": self.method}


@dataclass(frozen=True)
class SemiclassicalSettings:
    potential: str = "double-well"
    N: int = 2048
    domain: tuple = (-3.0, 3.0)
    n_eigs: int = 2
    order: int = 4
    tolerance: float = 0.05
    require_monotone: bool = True
    degree: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    name: str = ""
    complex: str | None = None
    complex_params: dict = field(default_factory=dict)
    off_path: str | None = None
    function: str | None = None
    schedule: tuple = ()
    grid: int | None = None
    order: int = 2
    stars: str = "combinatorial"
    low_lying: bool = False
    seed: int = 0
    out: str = "results"
    solver: SolverSettings = field(default_factory=SolverSettings)
    semiclassical: SemiclassicalSettings = field(default_factory=SemiclassicalSettings)

    @property
    def experiment_id(self) -> str:
        return self.name or self.kind

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Return a copy with every non-None keyword applied, then revalidated."""
        kw = {k: v for k, v in kw.items() if v is not None}
        if "schedule" in kw:
            kw["schedule"] = tuple(kw["schedule"])
        return validate(replace(self, **kw))


DEFAULTS = {
    "betti": {"complex": "octahedron"},
    "morse-verify": {"function": "torus/cos2x+cosy"},
    "witten-scan": {"function": "torus/cos+cos", "schedule": (0.0, 1.0, 2.0, 5.0)},
    "semiclassical": {"schedule": (5.0, 10.0, 20.0, 40.0)},
    "susy-pairing": {"complex": "octahedron", "function": "sphere/height", "schedule": (0.0, 1.0)},
}


def _nested(cls, table, path):
    if not isinstance(table, dict):
        raise ConfigError("expected a table", path)
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"unknown key; expected one of {sorted(known)}", f"{path}.{key}")
        if key == "domain":
            value = tuple(value)
        kw[key] = value
    return cls(**kw)


def _semiclassical(table):
    if not isinstance(table, dict):
        raise ConfigError("expected a table", "semiclassical")
    potential = table.get("potential", SemiclassicalSettings.potential)
    if potential not in POTENTIALS:
        raise ConfigError(f"expected one of {list(POTENTIALS)}", "semiclassical.potential")
    base = {k: v for k, v in POTENTIAL_DEFAULTS[potential].items() if k != "schedule"}
    return _nested(SemiclassicalSettings, {**base, **table}, "semiclassical")


def from_mapping(data: dict, kind: str | None = None) -> ExperimentConfig:
    """Build and validate a config from a parsed TOML table.

    ``kind`` (from the CLI subcommand) fills a missing kind and must agree
    with an explicit one.
    """
    data = dict(data)
    if "experiment" in data and isinstance(data["experiment"], dict):
        inner = data.pop("experiment")
        if data:
            raise ConfigError("keys outside [experiment] are not allowed alongside it",
                              sorted(data)[0])
        data = dict(inner)
    file_kind = data.pop("kind", None)
    if kind is not None and file_kind is not None and file_kind != kind:
        raise ConfigError(f"config is for {file_kind!r}, subcommand is {kind!r}", "kind")
    kind = kind or file_kind
    if kind is None:
        raise ConfigError("missing experiment kind", "kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {list(KINDS)}", "kind")
    kw = dict(DEFAULTS[kind])
    known = {f.name for f in fields(ExperimentConfig)} - {"kind"}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key; expected one of {sorted(known)}", key)
        if key == "solver":
            value = _nested(SolverSettings, value, "solver")
        elif key == "semiclassical":
            value = _semiclassical(value)
            if "schedule" not in data:
                kw["schedule"] = POTENTIAL_DEFAULTS[value.potential]["schedule"]
        elif key == "schedule":
            if not isinstance(value, list):
                raise ConfigError("expected an array of numbers", "schedule")
            value = tuple(value)
        elif key == "complex_params" and not isinstance(value, dict):
            raise ConfigError("expected a table", "complex_params")
        kw[key] = value
    return validate(ExperimentConfig(kind=kind, **kw))


def _read(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such file {str(path)!r}", "config")
    try:
        return tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", "config") from None


def load(path, kind: str | None = None) -> ExperimentConfig:
    return from_mapping(_read(path), kind)


def load_batch(path, kind: str | None = None) -> list[ExperimentConfig]:
    """One config, or every ``[[experiments]]`` entry of a batch file."""
    data = _read(path)
    if "experiments" not in data:
        return [from_mapping(data, kind)]
    entries = data.pop("experiments")
    if data or not isinstance(entries, list) or not entries:
        raise ConfigError("a batch file holds only a non-empty [[experiments]] array",
                          "experiments")
    out = []
    for i, entry in enumerate(entries):
        try:
            out.append(from_mapping(entry, kind))
        except ConfigError as exc:
            raise ConfigError(str(exc), f"experiments[{i}]") from None
    return out


def _number(value, path, integer=False, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", path)
    if integer and not isinstance(value, int):
        raise ConfigError("expected an integer", path)
    if not math.isfinite(value):
        raise ConfigError("must be finite", path)
    if positive and value <= 0:
        raise ConfigError("must be > 0", path)
    if nonneg and value < 0:
        raise ConfigError("must be >= 0", path)
    return value


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown kind {cfg.kind!r}", "kind")
    if not isinstance(cfg.name, str):
        raise ConfigError("expected a string", "name")
    sched = tuple(_number(x, f"schedule[{i}]") for i, x in enumerate(cfg.schedule))
    for i, (a, b) in enumerate(zip(sched, sched[1:])):
        if not b > a:
            raise ConfigError(f"schedule must be strictly increasing ({a} then {b})",
                              f"schedule[{i + 1}]")
    if cfg.kind in ("witten-scan", "susy-pairing"):
        if any(x < 0 for x in sched):
            raise ConfigError("t values must be >= 0", "schedule")
        if not sched:
            raise ConfigError("empty t schedule", "schedule")
    if cfg.kind == "semiclassical":
        if not sched or any(x <= 0 for x in sched):
            raise ConfigError("lambda values must be > 0 and non-empty", "schedule")
    if cfg.grid is not None:
        _number(cfg.grid, "grid", integer=True, positive=True)
        if cfg.grid < 4:
            raise ConfigError("grid needs at least 4 points per axis", "grid")
    _number(cfg.order, "order", integer=True, positive=True)
    if cfg.order % 2:
        raise ConfigError("stencil order must be even", "order")
    _number(cfg.seed, "seed", integer=True, nonneg=True)
    if cfg.seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits", "seed")
    if cfg.stars not in STAR_KINDS:
        raise ConfigError(f"expected one of {list(STAR_KINDS)}", "stars")
    if cfg.off_path is not None and cfg.complex is not None:
        raise ConfigError("give either complex or off_path, not both", "off_path")
    if cfg.off_path is not None and not Path(cfg.off_path).is_file():
        raise ConfigError(f"no such file {cfg.off_path!r}", "off_path")
    s = cfg.solver
    _number(s.k, "solver.k", integer=True, positive=True)
    _number(s.tol, "solver.tol", positive=True)
    _number(s.max_iterations, "solver.max_iterations", integer=True, positive=True)
    if s.method not in ("auto", "dense", "banded", "lanczos"):
        raise ConfigError("expected auto, dense, banded or lanczos", "solver.method")
    sc = cfg.semiclassical
    if sc.potential not in POTENTIALS:
        raise ConfigError(f"expected one of {list(POTENTIALS)}", "semiclassical.potential")
    _number(sc.N, "semiclassical.N", integer=True, positive=True)
    _number(sc.n_eigs, "semiclassical.n_eigs", integer=True, positive=True)
    _number(sc.order, "semiclassical.order", integer=True, positive=True)
    _number(sc.tolerance, "semiclassical.tolerance", positive=True)
    _number(sc.degree, "semiclassical.degree", integer=True, nonneg=True)
    if len(sc.domain) != 2 or not sc.domain[0] < sc.domain[1]:
        raise ConfigError("expected [lo, hi] with lo < hi", "semiclassical.domain")
    return replace(cfg, schedule=tuple(float(x) for x in sched))


def parse_schedule(text: str) -> tuple:
    """'0,1,2,5' -> (0.0, 1.0, 2.0, 5.0)."""
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as comma-separated numbers", "t-schedule") from None
