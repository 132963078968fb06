"""Flat ``key = value`` experiment configuration.

One assignment per line; ``#`` starts a comment.  Lists are comma separated.
Keys of the form ``sweep.<key>`` declare sweep axes over numeric keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

from .dynamics import PRESETS, SCHEMES, StepperConfig, default_dt
from .discretization import build_grid
from .errors import ConfigError, InvalidArgumentError
from .fields import ModelParams

__all__ = ["ExperimentConfig", "parse_config", "load_config", "KEYS", "REQUIRED"]

REQUIRED = ("extents", "counts", "d1", "d2", "a", "b", "D1", "D2")
_PARAM_KEYS = ("d1", "d2", "a", "b", "D1", "D2")


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(s)
    return v


def _int(s):
    f = float(s)
    if not f.is_integer():
        raise ValueError(s)
    return int(f)


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _list(conv):
    def parse(s):
        items = [x.strip() for x in s.split(",") if x.strip()]
        if not items:
            raise ValueError(s)
        return tuple(conv(x) for x in items)
    return parse


def _auto(conv):
    def parse(s):
        return None if s.lower() == "auto" else conv(s)
    return parse


def _str(s):
    return s


# key -> (attribute, converter, default, numeric)
KEYS = {
    "extents": ("extents", _list(_float), None, False),
    "counts": ("counts", _list(_int), None, False),
    "d1": ("d1", _float, None, True),
    "d2": ("d2", _float, None, True),
    "a": ("a", _float, None, True),
    "b": ("b", _float, None, True),
    "D1": ("D1", _float, None, True),
    "D2": ("D2", _float, None, True),
    "dt": ("dt", _auto(_float), None, True),
    "scheme": ("scheme", _str, "imex1", False),
    "t_end": ("t_end", _float, 10.0, True),
    "stride": ("stride", _int, 100, True),
    "seeds": ("seeds", _list(_int), (0,), False),
    "preset": ("preset", _str, "random", False),
    "amplitude": ("amplitude", _float, 1.0, True),
    "initial_norm_k0": ("initial_norm_k0", _float, 0.0, True),
    "burn_in": ("burn_in", _auto(_float), None, True),
    "rel_tol": ("rel_tol", _float, 1e-6, True),
    "blowup": ("blowup", _float, 1e8, True),
    "diag.decay": ("diag_decay", _bool, True, False),
    "diag.absorption": ("diag_absorption", _bool, True, False),
    "diag.symmetry": ("diag_symmetry", _bool, False, False),
    "diag.tails": ("diag_tails", _bool, False, False),
    "diag.truncated_h1": ("diag_truncated_h1", _bool, False, False),
    "diag.trace": ("diag_trace", _bool, False, False),
    "diag.dimension": ("diag_dimension", _bool, False, False),
    "epsilon": ("epsilon", _float, 0.1, True),
    "window": ("window", _float, 1.0, True),
    "trace.m": ("trace_m", _list(_int), (1,), False),
    "trace.T": ("trace_T", _float, 5.0, True),
    "trace.burn_in": ("trace_burn_in", _float, 0.0, True),
    "trace.reorth": ("trace_reorth", _int, 10, True),
    "dimension.K3": ("dim_K3", _float, 1.0, True),
    "dimension.delta": ("dim_delta", _auto(_float), None, True),
    "dimension.C_gn": ("dim_C_gn", _auto(_float), None, True),
    "out": ("out", _str, "out", False),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings.  Build with :func:`parse_config`."""

    extents: tuple
    counts: tuple
    d1: float
    d2: float
    a: float
    b: float
    D1: float
    D2: float
    dt: float = None
    scheme: str = "imex1"
    t_end: float = 10.0
    stride: int = 100
    seeds: tuple = (0,)
    preset: str = "random"
    amplitude: float = 1.0
    initial_norm_k0: float = 0.0
    burn_in: float = None
    rel_tol: float = 1e-6
    blowup: float = 1e8
    diag_decay: bool = True
    diag_absorption: bool = True
    diag_symmetry: bool = False
    diag_tails: bool = False
    diag_truncated_h1: bool = False
    diag_trace: bool = False
    diag_dimension: bool = False
    epsilon: float = 0.1
    window: float = 1.0
    trace_m: tuple = (1,)
    trace_T: float = 5.0
    trace_burn_in: float = 0.0
    trace_reorth: int = 10
    dim_K3: float = 1.0
    dim_delta: float = None
    dim_C_gn: float = None
    out: str = "out"
    sweep: tuple = field(default=())

    def __post_init__(self):
        try:
            self.params()
            self.grid()
            self.stepper()
        except InvalidArgumentError as err:
            raise ConfigError(str(err)) from None
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {', '.join(PRESETS)}")
        checks = [
            ("t_end", self.t_end > 0), ("stride", self.stride >= 1), ("amplitude", self.amplitude >= 0),
            ("initial_norm_k0", self.initial_norm_k0 >= 0), ("rel_tol", self.rel_tol >= 0),
            ("epsilon", self.epsilon > 0), ("window", self.window > 0), ("trace.T", self.trace_T > 0),
            ("trace.burn_in", self.trace_burn_in >= 0), ("trace.reorth", self.trace_reorth >= 1),
            ("dimension.K3", self.dim_K3 > 0), ("blowup", self.blowup > 0),
            ("trace.m", all(m >= 1 for m in self.trace_m)),
            ("burn_in", self.burn_in is None or self.burn_in >= 0),
            ("dimension.delta", self.dim_delta is None or self.dim_delta > 0),
            ("dimension.C_gn", self.dim_C_gn is None or self.dim_C_gn > 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"{name} out of range")
        if self.preset == "zero" and self.initial_norm_k0 > 0:
            raise ConfigError("initial_norm_k0 cannot rescale the zero preset")
        if self.trace_burn_in >= self.trace_T:
            raise ConfigError("trace.burn_in must be below trace.T")

    @property
    def dim(self):
        return max(len(self.extents), len(self.counts))

    def grid(self):
        ext = self.extents[0] if len(self.extents) == 1 else self.extents
        cnt = self.counts[0] if len(self.counts) == 1 else self.counts
        return build_grid(self.dim, ext, cnt)

    def params(self):
        return ModelParams(**{k: getattr(self, k) for k in _PARAM_KEYS})

    def stepper(self):
        dt = self.dt if self.dt is not None else default_dt(self.params())
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}; expected one of {', '.join(SCHEMES)}")
        return StepperConfig(dt=dt, scheme=self.scheme, blowup=self.blowup)

    def with_values(self, **values):
        """Copy with config keys (dotted names allowed) overridden."""
        kw = {}
        for key, val in values.items():
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r}")
            kw[KEYS[key][0]] = val
        return replace(self, **kw)

    def echo(self):
        """``(key, value)`` pairs of every setting, in schema order."""
        out = []
        for key, (attr, _, _, _) in KEYS.items():
            out.append((key, getattr(self, attr)))
        for key, vals in self.sweep:
            out.append(("sweep." + key, vals))
        return out


def parse_config(text):
    """Parse a configuration document into an :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        For unknown, duplicate or missing keys, malformed values and
        out-of-range settings.
    """
    seen = {}
    values = {}
    sweep = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} on lines {seen[key]} and {lineno}")
        seen[key] = lineno
        if key.startswith("sweep."):
            target = key[len("sweep."):]
            if target not in KEYS or not KEYS[target][3]:
                raise ConfigError(f"line {lineno}: sweep axis {target!r} is not a numeric key")
            try:
                sweep.append((target, _list(KEYS[target][1])(val)))
            except ValueError:
                raise ConfigError(f"line {lineno}: malformed value for {key!r}: {val!r}") from None
            continue
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r} (line {lineno})")
        attr, conv, _, _ = KEYS[key]
        try:
            values[attr] = conv(val)
        except ValueError:
            raise ConfigError(f"line {lineno}: malformed value for {key!r}: {val!r}") from None
    missing = [k for k in REQUIRED if KEYS[k][0] not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return ExperimentConfig(**values, sweep=tuple(sweep))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
