"""Line-based ``key = value`` experiment configs.

Frequencies accept plain rad/s, ``2pi*<MHz>`` (e.g. ``2pi*16``) or a multiple
of the coupling (``20g``, ``20*g``).  Times accept seconds or a ``us``/``ns``/``ms``
suffix.  ``#`` starts a comment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .model import MHZ, TWO_PI, SystemParams, optimal_detuning


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


# key -> (kind, default); defaults are the trapped-atom parameter set
SCHEMA: dict[str, tuple[str, object]] = {
    "g": ("rate", "2pi*16"),
    "g_L": ("rate", None),
    "g_R": ("rate", None),
    "kappa": ("rate", "2pi*1.4"),
    "kappa_L": ("rate", None),
    "kappa_R": ("rate", None),
    "delta_L": ("rate", "20g"),
    "delta_R": ("rate", "auto"),
    "n": ("int", "3"),
    "m": ("int", "0"),
    "target_m": ("int", None),
    "T": ("time", "0.5us"),
    "gamma_s": ("rate", "0"),
    "eta": ("float", "1"),
    "seed": ("int", "0"),
    "n_traj": ("int", "100000"),
    "runs": ("int", "1000"),
    "max_trials": ("int", "100"),
    "trials_table": ("int", "10"),
    "basis": ("choice:reduced,ladder,single,full,eliminated", "reduced"),
    "model": ("choice:full,eliminated", "full"),
    "couplings": ("floats", None),
    "t_end": ("time", None),
    "samples": ("int", "201"),
    "bins": ("int", "50"),
    "oracle": ("bool", "true"),
    "oracle_runs": ("int", "1"),
    "grid.g_over_kappa": ("grid", "1,200,40"),
    "grid.n": ("ints", "1,2,3,4,5,6"),
    "grid.mc": ("int", "0"),
}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


@dataclass
class Config:
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        value = self.values.get(key)
        return default if value is None else value

    def resolved(self) -> dict:
        """Every key in schema order, frequencies in rad/s and times in s."""
        return {k: self.values.get(k) for k in SCHEMA}

    def params(self, step: int | None = None) -> SystemParams:
        v = self.values
        step = v["m"] if step is None else step
        params = SystemParams(v["g_L"], v["g_R"], v["kappa_L"], v["kappa_R"], v["delta_L"],
                              v["delta_L"] if v["delta_R"] == "auto" else v["delta_R"],
                              v["n"], v["T"], v["gamma_s"], v["eta"])
        if v["delta_R"] == "auto":
            params = params.replace(delta_R=optimal_detuning(params, step))
        return params


def _parse_rate(text: str, g: float | None, line, key):
    text = text.replace(" ", "")
    m = re.fullmatch(r"2(?:pi|π)\*(" + _NUMBER + r")", text, flags=re.IGNORECASE)
    if m:
        return TWO_PI * float(m.group(1)) * MHZ
    m = re.fullmatch(r"(" + _NUMBER + r")\*?g", text)
    if m:
        if g is None:
            raise ConfigError("multiples of g need a defined g", line, key)
        return float(m.group(1)) * g
    if re.fullmatch(_NUMBER, text):
        return float(text)
    raise ConfigError(f"cannot read frequency {text!r}", line, key)


def _parse_time(text: str, line, key):
    m = re.fullmatch(r"(" + _NUMBER + r")\s*(s|ms|us|µs|ns)?", text.strip())
    if not m:
        raise ConfigError(f"cannot read time {text!r}", line, key)
    unit = {"s": 1.0, None: 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}[m.group(2)]
    return float(m.group(1)) * unit


def _convert(key, kind, text, g, line):
    try:
        if kind == "rate":
            if key == "delta_R" and text.strip().lower() == "auto":
                return "auto"
            value = _parse_rate(text, g, line, key)
            if key != "delta_L" and key != "delta_R" and value < 0:
                raise ConfigError("must be >= 0", line, key)
            return value
        if kind == "time":
            return _parse_time(text, line, key)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ConfigError(f"expected a boolean, got {text!r}", line, key)
            return low in ("true", "1", "yes", "on")
        if kind == "ints":
            return [int(x) for x in text.split(",") if x.strip()]
        if kind == "floats":
            return [float(x) for x in text.split(",") if x.strip()]
        if kind == "grid":
            parts = [p.strip() for p in text.split(",")]
            if len(parts) != 3:
                raise ConfigError("grid needs min,max,steps", line, key)
            return [float(parts[0]), float(parts[1]), int(parts[2])]
        if kind.startswith("choice:"):
            options = kind.split(":", 1)[1].split(",")
            if text.strip() not in options:
                raise ConfigError(f"expected one of {options}, got {text!r}", line, key)
            return text.strip()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), line, key) from None
    raise AssertionError(kind)


def parse_config(text: str, overrides: dict | None = None) -> Config:
    raw: dict[str, tuple[str, int | None]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError("unknown key", lineno, key)
        if key in raw:
            raise ConfigError(f"duplicate key (first on line {raw[key][1]})", lineno, key)
        if not value:
            raise ConfigError("empty value", lineno, key)
        raw[key] = (value, lineno)
    for key, value in (overrides or {}).items():
        raw[key] = (str(value), None)

    cfg = Config()

    def read(key, g=None):
        kind, default = SCHEMA[key]
        if key in raw:
            text, line = raw[key]
            cfg.lines[key] = line
        elif default is None:
            return None
        else:
            text, line = str(default), None
        return _convert(key, kind, text, g, line)

    v = cfg.values
    v["g"] = read("g")
    v["g_L"] = read("g_L", v["g"])
    v["g_R"] = read("g_R", v["g"])
    v["g_L"] = v["g"] if v["g_L"] is None else v["g_L"]
    v["g_R"] = v["g"] if v["g_R"] is None else v["g_R"]
    g_ref = v["g_L"]
    for key in SCHEMA:
        if key not in v:
            v[key] = read(key, g_ref)
    v["kappa_L"] = v["kappa"] if v["kappa_L"] is None else v["kappa_L"]
    v["kappa_R"] = v["kappa"] if v["kappa_R"] is None else v["kappa_R"]

    if v["n"] < 1:
        raise ConfigError("must be >= 1", cfg.lines.get("n"), "n")
    if not 0 <= v["m"] <= v["n"] - 1:
        raise ConfigError("need 0 <= m <= n-1", cfg.lines.get("m"), "m")
    if not 0.0 <= v["eta"] <= 1.0:
        raise ConfigError("must lie in [0, 1]", cfg.lines.get("eta"), "eta")
    if not (v["seed"] >= 0 and v["seed"] < 2**64):
        raise ConfigError("must be an unsigned 64-bit integer", cfg.lines.get("seed"), "seed")
    for key in ("n_traj", "runs", "samples", "bins"):
        if v[key] < 1:
            raise ConfigError("must be >= 1", cfg.lines.get(key), key)
    for key in ("max_trials", "trials_table", "oracle_runs", "grid.mc"):
        if v[key] < 0:
            raise ConfigError("must be >= 0", cfg.lines.get(key), key)
    lo, hi, steps = v["grid.g_over_kappa"]
    if steps < 1 or lo <= 0 or hi < lo or not v["grid.n"]:
        raise ConfigError("empty or invalid grid", cfg.lines.get("grid.g_over_kappa"), "grid.g_over_kappa")
    if v["couplings"] is not None and len(v["couplings"]) != v["n"]:
        raise ConfigError("need one factor per atom", cfg.lines.get("couplings"), "couplings")
    if not math.isfinite(v["delta_L"]) or v["delta_L"] == 0:
        raise ConfigError("delta_L must be finite and nonzero", cfg.lines.get("delta_L"), "delta_L")
    return cfg


def load_config(path: str | None, overrides: dict | None = None) -> Config:
    if path is None:
        return parse_config("", overrides)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, overrides)
