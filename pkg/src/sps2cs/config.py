"""Preset files: flat ``key = value`` text with dotted keys and unit suffixes.

Example::

    # qutrit
    omega_eg_ghz = 8.0
    Delta.c2_mhz = -250     # sets omega_c.c2 = omega_fg - Delta
    g.c2_mhz = 12.03
    kappa_inv.all_us = 100
    T_us = 15
    phi = pi

Frequencies (``_ghz``, ``_mhz``, ``_khz``, ``_hz``) are ordinary frequencies and
are converted to angular units; times (``_us``, ``_ns``, ``_s``) to seconds.
"""
from __future__ import annotations

import ast
import hashlib
import math
import operator
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .device import (
    GHZ,
    MHZ,
    NS,
    US,
    DeviceError,
    DeviceParams,
    cavity_labels,
    cs_labels,
    rates_from_T,
    set_path,
    sps_labels,
)

UNITS = {
    "_ghz": GHZ,
    "_mhz": MHZ,
    "_khz": 2 * math.pi * 1e3,
    "_hz": 2 * math.pi,
    "_us": US,
    "_ns": NS,
    "_s": 1.0,
}

MAP_FIELDS = ("omega_c", "g", "mu", "kappa", "kappa_inv", "unwanted", "crosstalk", "Delta", "Delta_p")
SCALAR_FIELDS = (
    "n", "omega_eg", "omega_fe", "omega_fg", "g_r", "g_tilde", "Delta_tilde", "Omega_p", "phi",
    "omega_p", "m", "mu_rule", "Omega_p_rule", "crosstalk_ratio", "gamma_eg", "gamma_fe", "gamma_fg",
    "gamma_e_phi", "gamma_f_phi", "alpha", "c_amp", "d_amp", "tau_p", "tau_alpha", "tau_d",
    "tau_c", "T",
)


STRING_FIELDS = ("mu_rule", "Omega_p_rule")


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<preset>", line: int = 0, col: int = 0):
        self.source, self.line, self.col = source, line, col
        loc = f"{source}:{line}:{col}: " if line else f"{source}: "
        super().__init__(loc + message)


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": math.pi, "inf": math.inf, "j": 1j}


def parse_number(text: str) -> complex | float | int:
    """Evaluate a small arithmetic expression (numbers, pi, sqrt, complex literals)."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return node.value
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id == "sqrt" and len(node.args) == 1):
            return math.sqrt(ev(node.args[0]))
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(text.strip(), mode="eval"))


def _split_unit(key: str) -> tuple[str, float]:
    for suf in sorted(UNITS, key=len, reverse=True):
        if key.endswith(suf):
            return key[: -len(suf)], UNITS[suf]
    return key, 1.0


def parse_preset(text: str, source: str = "<preset>") -> DeviceParams:
    raw: dict[str, tuple] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", source, lineno, len(body) - len(body.lstrip()) + 1)
        key, value = body.split("=", 1)
        col = len(key) + 2 + (len(value) - len(value.lstrip()))
        key = key.strip()
        value = value.strip()
        name, scale = _split_unit(key)
        field, _, sub = name.partition(".")
        if field not in SCALAR_FIELDS and field not in MAP_FIELDS:
            raise ConfigError(f"unknown key {key!r}", source, lineno, line.index(key) + 1)
        if sub and field not in MAP_FIELDS:
            raise ConfigError(f"{field!r} does not take a sub-key", source, lineno, line.index(key) + 1)
        if field in STRING_FIELDS:
            val = value
        else:
            try:
                val = parse_number(value)
            except (ValueError, SyntaxError, ZeroDivisionError) as exc:
                raise ConfigError(f"bad value {value!r}: {exc}", source, lineno, col) from None
            if scale != 1.0:
                val = val * scale
        if name in raw:
            raise ConfigError(f"duplicate key {name!r}", source, lineno, 1)
        raw[name] = (val, lineno)
    return _assemble(raw, source)


def _assemble(raw: dict, source: str) -> DeviceParams:
    def take(name, default=None, required=False):
        if name in raw:
            return raw.pop(name)[0]
        if required:
            raise ConfigError(f"missing required key {name!r}", source)
        return default

    def take_map(field):
        out = {}
        for name in [k for k in raw if k.startswith(field + ".")]:
            out[name.split(".", 1)[1]] = raw.pop(name)[0]
        return out

    try:
        n = int(take("n", required=True))
        kw = {"n": n}
        kw["Omega_p_rule"] = take("Omega_p_rule", "explicit")
        for f in ("omega_eg", "omega_fe", "omega_fg", "g_tilde", "Delta_tilde", "Omega_p"):
            optional = f == "Omega_p" and kw["Omega_p_rule"] == "match"
            kw[f] = float(take(f, 0.0 if optional else None, required=not optional))
        kw["g_r"] = float(take("g_r", 0.0))
        omega_c = {c: float(v) for c, v in take_map("omega_c").items()}
        for c, d in take_map("Delta").items():
            _consistent(omega_c, c, kw["omega_fg"] - float(d), source)
        for c, d in take_map("Delta_p").items():
            _consistent(omega_c, c, kw["omega_fe"] - float(d), source)
        kw["omega_c"] = omega_c
        kw["g"] = {c: float(v) for c, v in take_map("g").items()}
        kw["mu"] = {c: float(v) for c, v in take_map("mu").items()}
        kw["mu_rule"] = take("mu_rule", "explicit")
        for f in ("phi", "omega_p", "crosstalk_ratio", "tau_p", "tau_alpha", "tau_d", "tau_c",
                  "gamma_eg", "gamma_fe", "gamma_fg", "gamma_e_phi", "gamma_f_phi"):
            v = take(f)
            if v is not None:
                kw[f] = float(v)
        for f in ("alpha", "c_amp", "d_amp"):
            v = take(f)
            if v is not None:
                kw[f] = complex(v) if isinstance(v, complex) else float(v)
        m = take("m")
        if m is not None:
            kw["m"] = int(m)
        T = take("T")
        if T is not None:
            kw.update(rates_from_T(float(T)))
        kappa = {c: 0.0 for c in cavity_labels(n)}
        _fill(kappa, take_map("kappa"), lambda v: float(v), source)
        _fill(kappa, take_map("kappa_inv"), lambda v: 0.0 if math.isinf(v) else 1.0 / float(v), source)
        kw["kappa"] = kappa
        kw["unwanted"] = {k: float(v) for k, v in take_map("unwanted").items()}
        xt = {}
        for k, v in take_map("crosstalk").items():
            a, _, b = k.partition("-")
            xt[(a, b)] = float(v)
        kw["crosstalk"] = xt
        if raw:
            name, (_, lineno) = next(iter(raw.items()))
            raise ConfigError(f"unused key {name!r}", source, lineno, 1)
        return DeviceParams(**kw)
    except DeviceError as exc:
        raise ConfigError(str(exc), source) from None
    except TypeError as exc:
        raise ConfigError(f"bad value type: {exc}", source) from None


def _consistent(omega_c: dict, c: str, value: float, source: str):
    if c in omega_c and abs(omega_c[c] - value) > 1e-9 * abs(value):
        raise ConfigError(f"detuning for {c} inconsistent with omega_c.{c}", source)
    omega_c[c] = value


def _fill(target: dict, entries: dict, conv, source: str):
    for k, v in entries.items():
        keys = list(target) if k == "all" else [k]
        for key in keys:
            if key not in target:
                raise ConfigError(f"unknown cavity {key!r}", source)
            target[key] = conv(v)


def load_preset(path: str | Path) -> DeviceParams:
    path = resolve_preset(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read preset: {exc.strerror}", str(path)) from None
    return parse_preset(text, str(path))


def resolve_preset(path: str | Path) -> Path:
    """Accept a file path, or the bare name of a shipped preset."""
    p = Path(path)
    if p.exists():
        return p
    shipped = resources.files("sps2cs") / "presets" / p.name
    if shipped.is_file():
        return Path(str(shipped))
    return p


def preset_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(resolve_preset(path)).read_bytes()).hexdigest()


def apply_overrides(p: DeviceParams, overrides: list[str]) -> DeviceParams:
    """Apply ``key=value`` overrides; keys may carry unit suffixes (``g.c2_mhz=10``)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value", "--set")
        key, value = (s.strip() for s in item.split("=", 1))
        name, scale = _split_unit(key)
        try:
            val = value if name in STRING_FIELDS else parse_number(value) * scale
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"bad override value {value!r}: {exc}", "--set") from None
        if name.startswith("kappa_inv."):
            _, _, which = name.partition(".")
            k = 0.0 if math.isinf(val) else 1.0 / val
            name, val = f"kappa.{which}", k
        try:
            p = set_path(p, name, val)
        except (DeviceError, TypeError) as exc:
            raise ConfigError(str(exc), "--set") from None
    return p


@dataclass(frozen=True)
class Tier:
    name: str
    alpha: float
    dims: tuple
    solver: str
    n_trajectories: int = 0

    def space(self):
        from .hilbert import HilbertSpace

        return HilbertSpace(self.dims, ["qutrit", *sps_labels(2), *cs_labels(2)])


TIERS = {
    "A": Tier("A", 1.2, (3, 3, 3, 18, 12), "trajectories", 200),
    "B": Tier("B", 1.86, (3, 3, 3, 38, 17), "trajectories", 500),
}
