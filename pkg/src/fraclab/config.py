"""Plain-text run configuration: one ``key = value`` per line, ``#`` starts a comment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .operator import SCHEMES

COMMANDS = ("eigen", "solve", "scan-antimax", "blowup", "verify-max", "verify-antimax-linear", "oracle")
METHODS = ("auto", "subcritical", "homotopy", "linear")


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass
class RunConfig:
    command: str = ""
    a: float = 0.0
    b: float = 1.0
    n: int = 64
    s: float = 0.5
    p: float = 2.0
    scheme: str = "midpoint"
    forcing: str = "const:1"
    # lambda values; *_rel variants are multiples of lambda_1
    lam: float | None = None
    lam_rel: float | None = None
    lambdas: list | None = None
    lambdas_rel: list | None = None
    eps: list | None = None
    eps_rel: list | None = None
    deltas: list | None = None
    deltas_rel: list | None = None
    scalings: list | None = None
    method: str = "auto"
    eigen2: bool = False
    knots: int = 21
    discover_delta: bool = False
    mirror: bool = True
    # solver overrides
    tol: float | None = None
    max_iters: int | None = None
    step0: float | None = None
    armijo: float | None = None
    radius: float | None = None
    relax: float | None = None
    t_steps: int | None = None
    out: str | None = None
    seed: int = 0
    threads: int = 0
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def forcing_kind(self) -> tuple[str, str]:
        kind, _, arg = self.forcing.partition(":")
        return kind, arg

    def solver_overrides(self) -> dict:
        keys = ("tol", "max_iters", "step0", "armijo", "radius", "relax", "t_steps")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            out["lambda" if f.name == "lam" else "lambda_rel" if f.name == "lam_rel" else f.name] = v
        return out


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _flist(v: str) -> list:
    items = [t for t in v.replace(",", " ").split() if t]
    if not items:
        raise ValueError("empty list")
    return [_float(t) for t in items]


def _str(v: str) -> str:
    return v


# config key -> (attribute, converter)
KEYS = {
    "command": ("command", _str),
    "a": ("a", _float),
    "b": ("b", _float),
    "n": ("n", _int),
    "s": ("s", _float),
    "p": ("p", _float),
    "scheme": ("scheme", _str),
    "forcing": ("forcing", _str),
    "lambda": ("lam", _float),
    "lambda_rel": ("lam_rel", _float),
    "lambdas": ("lambdas", _flist),
    "lambdas_rel": ("lambdas_rel", _flist),
    "eps": ("eps", _flist),
    "eps_rel": ("eps_rel", _flist),
    "deltas": ("deltas", _flist),
    "deltas_rel": ("deltas_rel", _flist),
    "scalings": ("scalings", _flist),
    "method": ("method", _str),
    "eigen2": ("eigen2", _bool),
    "knots": ("knots", _int),
    "discover_delta": ("discover_delta", _bool),
    "mirror": ("mirror", _bool),
    "tol": ("tol", _float),
    "max_iters": ("max_iters", _int),
    "step0": ("step0", _float),
    "armijo": ("armijo", _float),
    "radius": ("radius", _float),
    "relax": ("relax", _float),
    "t_steps": ("t_steps", _int),
    "out": ("out", _str),
    "seed": ("seed", _int),
    "threads": ("threads", _int),
}


def parse_config(text: str, base_dir: str | Path | None = None) -> RunConfig:
    """Parse and validate a configuration text.

    Unknown or repeated keys are errors. Relative ``custom-file`` paths are
    resolved against ``base_dir`` (default: the working directory).
    """
    cfg = RunConfig()
    if base_dir is not None:
        cfg.base_dir = Path(base_dir)
    lines_of = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        value = value.strip()
        if key not in KEYS:
            raise ConfigParseError(f"unknown key {key!r}", lineno, key)
        if key in lines_of:
            raise ConfigParseError(f"key {key!r} repeats line {lines_of[key]}", lineno, key)
        if not value:
            raise ConfigParseError(f"missing value for {key!r}", lineno, key)
        attr, conv = KEYS[key]
        try:
            setattr(cfg, attr, conv(value))
        except ValueError as exc:
            raise ConfigParseError(f"bad value for {key!r}: {value!r} ({exc})", lineno, key) from None
        lines_of[key] = lineno
    validate(cfg, lines_of)
    return cfg


def _fail(msg, key, lines_of):
    raise ConfigParseError(msg, lines_of.get(key), key)


def validate(cfg: RunConfig, lines_of: dict | None = None) -> RunConfig:
    lines_of = lines_of or {}
    if not cfg.command:
        _fail("command is required", "command", lines_of)
    if cfg.command not in COMMANDS:
        _fail(f"command must be one of {', '.join(COMMANDS)}", "command", lines_of)
    if not cfg.a < cfg.b:
        _fail("a must be less than b", "b", lines_of)
    if cfg.n < 1:
        _fail("n must be >= 1", "n", lines_of)
    if not 0.0 < cfg.s < 1.0:
        _fail("s must lie in (0,1)", "s", lines_of)
    if not cfg.p > 1.0:
        _fail("p must lie in (1,inf)", "p", lines_of)
    if cfg.scheme not in SCHEMES:
        _fail(f"scheme must be one of {', '.join(SCHEMES)}", "scheme", lines_of)
    if cfg.method not in METHODS:
        _fail(f"method must be one of {', '.join(METHODS)}", "method", lines_of)
    if cfg.knots < 3:
        _fail("knots must be >= 3", "knots", lines_of)
    if cfg.threads < 0:
        _fail("threads must be >= 0", "threads", lines_of)
    _validate_forcing(cfg, lines_of)
    _validate_command(cfg, lines_of)
    from .solver import SolveOpts

    try:
        SolveOpts(**cfg.solver_overrides())
    except ValueError as exc:
        key = next((k for k in cfg.solver_overrides() if k in str(exc)), "tol")
        _fail(str(exc), key, lines_of)
    return cfg


def _validate_forcing(cfg, lines_of):
    kind, arg = cfg.forcing_kind()
    if kind == "const":
        try:
            _float(arg)
        except ValueError:
            _fail(f"forcing const needs a number, got {arg!r}", "forcing", lines_of)
    elif kind == "eigen1":
        if arg:
            _fail("forcing eigen1 takes no argument", "forcing", lines_of)
    elif kind == "custom-file":
        path = Path(arg)
        if not path.is_absolute():
            path = cfg.base_dir / path
        if not arg or not path.is_file():
            _fail(f"forcing file {arg!r} does not exist", "forcing", lines_of)
    else:
        _fail("forcing must be const:c, eigen1 or custom-file:path", "forcing", lines_of)


def _one_of(cfg, names, lines_of, required=True):
    given = [k for k in names if getattr(cfg, KEYS[k][0]) is not None]
    if len(given) > 1:
        _fail(f"give only one of {', '.join(names)}", given[1], lines_of)
    if required and not given:
        _fail(f"command {cfg.command} needs one of {', '.join(names)}", names[0], lines_of)
    return given[0] if given else None


def _positive_list(cfg, key, lines_of):
    vals = getattr(cfg, KEYS[key][0])
    if vals is not None and any(not v > 0 for v in vals):
        _fail(f"{key} values must be positive", key, lines_of)


def _validate_command(cfg, lines_of):
    c = cfg.command
    if c == "solve":
        _one_of(cfg, ("lambda", "lambda_rel"), lines_of)
        if cfg.method == "linear" and cfg.p != 2.0:
            _fail("method linear requires p = 2", "method", lines_of)
    elif c == "verify-max":
        _one_of(cfg, ("lambdas", "lambdas_rel"), lines_of)
    elif c == "scan-antimax":
        key = _one_of(cfg, ("eps", "eps_rel"), lines_of)
        _positive_list(cfg, key, lines_of)
    elif c == "blowup":
        key = _one_of(cfg, ("deltas", "deltas_rel"), lines_of)
        _positive_list(cfg, key, lines_of)
        vals = getattr(cfg, KEYS[key][0])
        if any(b >= a for a, b in zip(vals, vals[1:])):
            _fail(f"{key} must be strictly decreasing", key, lines_of)
    elif c == "verify-antimax-linear":
        if cfg.p != 2.0:
            _fail("verify-antimax-linear requires p = 2", "p", lines_of)
        key = _one_of(cfg, ("deltas", "deltas_rel"), lines_of)
        _positive_list(cfg, key, lines_of)
    if cfg.scalings is not None:
        if c != "scan-antimax":
            _fail("scalings apply only to scan-antimax", "scalings", lines_of)
        _positive_list(cfg, "scalings", lines_of)
