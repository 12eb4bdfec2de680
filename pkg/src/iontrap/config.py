"""Scenario files: schema, strict parsing and validation.

A scenario is an INI file (``key = value`` under ``[section]`` headers) or a
JSON object of sections.  Sections are ``scenario`` (kind, seed), ``coupling``
for kinds that drive laser pulses, and one section named after the kind.
Every key not in the schema is an error; every missing key takes its default
and is echoed in the resolved config.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

TWO_PI = 2 * math.pi
KINDS = ("trap", "cool", "flop", "cat", "wigner", "densmat", "cngate", "register", "ramsey")


@dataclass(frozen=True)
class Field:
    type: str  # float, int, bool, str, float_list
    default: Any
    check: Callable[[Any], str | None] | None = None
    choices: tuple = ()


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _at_least(lo):
    return lambda v: None if v >= lo else f"must be >= {lo}"


def _between(lo, hi, hi_open=False):
    def check(v):
        if v < lo or (v >= hi if hi_open else v > hi):
            return f"must lie in [{lo}, {hi}{')' if hi_open else ']'}"
        return None
    return check


def _increasing_positive(v):
    if not v:
        return "must not be empty"
    if v[0] <= 0 or any(b <= a for a, b in zip(v, v[1:])):
        return "must be positive and strictly increasing"
    return None


def _coupling(ld_limit: bool = False) -> dict[str, Field]:
    return {
        "g": Field("float", TWO_PI * 500e3, _positive),
        "eta": Field("float", 0.2, _between(0.0, 1.0, hi_open=True)),
        "omega_x": Field("float", TWO_PI * 11e6, _positive),
        "delta": Field("float", 0.0),
        "ld_limit": Field("bool", ld_limit),
    }


_STATE_CHOICES = ("fock", "coherent", "thermal", "cat02")

SCHEMA: dict[str, dict[str, dict[str, Field]]] = {
    "trap": {
        "trap": {
            "q_x": Field("float", 0.1, _between(1e-6, 0.4)),
            "Omega_T": Field("float", TWO_PI * 100e6, _positive),
            "R": Field("float", 200e-6, _positive),
            "mass_u": Field("float", 9.012182, _positive),
            "charge_e": Field("float", 1.0, _positive),
            "periods": Field("float", 10.0, _at_least(3.0)),
            "x0": Field("float", 1e-6),
            "y0": Field("float", 0.5e-6),
        },
    },
    "cool": {
        "coupling": _coupling(),
        "cool": {
            "n_bar": Field("float", 1.0, _nonneg),
            "cycles": Field("int", 5, _nonneg),
            "n_max": Field("int", 30, _at_least(2)),
            "gamma_linewidth": Field("float", TWO_PI * 19.4e6, _nonneg),
        },
    },
    "flop": {
        "coupling": _coupling(),
        "flop": {
            "state": Field("str", "coherent", choices=("coherent", "thermal", "fock")),
            "n_bar": Field("float", 3.1, _nonneg),
            "fock_n": Field("int", 0, _nonneg),
            "n_max": Field("int", 30, _at_least(2)),
            "n_fit": Field("int", 10, _nonneg),
            "shots": Field("int", 4000, _at_least(1)),
            "gamma0": Field("float", 0.0, _nonneg),
            "decay_exponent": Field("float", 0.0),
            "tau_max": Field("float", 0.0, _nonneg),
            "tau_points": Field("int", 0, _nonneg),
        },
    },
    "cat": {
        "coupling": _coupling(ld_limit=True),
        "cat": {
            "alpha1_re": Field("float", 1.5),
            "alpha1_im": Field("float", 0.0),
            "alpha2_re": Field("float", -1.5),
            "alpha2_im": Field("float", 0.0),
            "phi": Field("float", 0.0),
            "n_max": Field("int", 40, _at_least(2)),
            "probe_phases": Field("int", 32, _at_least(3)),
        },
    },
    "wigner": {
        "coupling": _coupling(),
        "wigner": {
            "state": Field("str", "fock", choices=_STATE_CHOICES),
            "fock_n": Field("int", 1, _nonneg),
            "alpha_re": Field("float", 0.0),
            "alpha_im": Field("float", 0.0),
            "n_bar": Field("float", 1.0, _nonneg),
            "n_max": Field("int", 30, _at_least(2)),
            "radii": Field("float_list", [0.4, 0.8, 1.2, 1.6, 2.0, 2.4], _increasing_positive),
            "phases_per_radius": Field("int", 8, _at_least(1)),
            "include_origin": Field("bool", True),
            "pipeline": Field("str", "ideal", choices=("ideal", "signal")),
            "n_fit": Field("int", 10, _nonneg),
            "shots": Field("int", 4000, _at_least(1)),
        },
    },
    "densmat": {
        "densmat": {
            "state": Field("str", "cat02", choices=_STATE_CHOICES),
            "fock_n": Field("int", 1, _nonneg),
            "alpha_re": Field("float", 0.0),
            "alpha_im": Field("float", 0.0),
            "n_bar": Field("float", 1.0, _nonneg),
            "n_max": Field("int", 30, _at_least(2)),
            "n_fit": Field("int", 3, _nonneg),
            "shots": Field("int", 0, _nonneg),
            "radii": Field("float_list", [0.4, 0.8, 1.2, 1.6, 2.0, 2.4], _increasing_positive),
            "phases_per_radius": Field("int", 8, _at_least(1)),
            "include_origin": Field("bool", True),
        },
    },
    "cngate": {
        "coupling": _coupling(ld_limit=True),
        "cngate": {
            "n_max": Field("int", 8, _at_least(2)),
        },
    },
    "register": {
        "coupling": _coupling(ld_limit=True),
        "register": {
            "n_ions": Field("int", 2, _between(2, 6)),
            "control": Field("int", 0, _nonneg),
            "target": Field("int", 1, _nonneg),
            "n_max": Field("int", 3, _at_least(2)),
            "ghz_phase": Field("float", 0.0),
        },
    },
    "ramsey": {
        "ramsey": {
            "N": Field("int", 2, _between(1, 6)),
            "mode": Field("str", "entangled", choices=("entangled", "uncorrelated")),
            "T_R": Field("float", 1e-3, _positive),
            "omega_o": Field("float", 0.0),
            "detuning": Field("str", "max_slope"),
            "shots": Field("int", 10_000, _at_least(1)),
            "runs": Field("int", 2000, _at_least(2)),
            "fringe_points": Field("int", 41, _at_least(2)),
        },
    },
}

SCENARIO_SECTION = {
    "kind": Field("str", None, choices=KINDS),
    "seed": Field("int", 0, _nonneg),
}


@dataclass(frozen=True)
class FieldError:
    section: str
    key: str | None
    message: str
    line: int | None = None

    def as_dict(self) -> dict:
        return {"section": self.section, "key": self.key, "line": self.line, "message": self.message}

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        name = f"{self.section}.{self.key}" if self.key else f"[{self.section}]"
        return f"{where}{name}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, errors: list[FieldError]):
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in self.errors))


@dataclass(frozen=True)
class Scenario:
    kind: str
    parameters: dict
    seed: int
    output_path: str | None = None
    source: str | None = None

    def resolved(self) -> dict:
        """Full config with every default filled in, as written beside outputs."""
        return {"scenario": {"kind": self.kind, "seed": self.seed}, **self.parameters}

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def section(self, name: str) -> dict:
        return self.parameters[name]


# ------------------------------------------------------------------ parsing


def _ini_lines(text: str) -> dict[tuple[str, str | None], int]:
    """Line number of every section header and key in an INI text."""
    where: dict[tuple[str, str | None], int] = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), i)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), i)
    return where


def _json_lines(text: str, data: dict) -> dict[tuple[str, str | None], int]:
    lines = text.splitlines()
    where: dict[tuple[str, str | None], int] = {}
    cursor = 0
    for section, body in data.items():
        for i in range(cursor, len(lines)):
            if f'"{section}"' in lines[i]:
                where[(section, None)] = i + 1
                cursor = i
                break
        if isinstance(body, dict):
            start = where.get((section, None), 1) - 1
            for key in body:
                for i in range(start, len(lines)):
                    if f'"{key}"' in lines[i]:
                        where[(section, key.lower())] = i + 1
                        break
    return where


def _load_raw(path: Path) -> tuple[dict[str, dict[str, Any]], dict, bool]:
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([FieldError("file", None, f"invalid JSON: {exc.msg}", exc.lineno)]) from None
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigError([FieldError("file", None, "JSON config must be an object of section objects", 1)])
        lines = _json_lines(text, data)
        return {s: {k.lower(): v for k, v in body.items()} for s, body in data.items()}, lines, True
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError([FieldError("file", None, f"invalid INI: {exc.message.splitlines()[0]}", line)]) from None
    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    return raw, _ini_lines(text), False


def _coerce(value: Any, spec: Field, from_text: bool):
    t = spec.type
    if t == "bool":
        if isinstance(value, bool):
            return value
        if from_text and isinstance(value, str):
            low = value.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
        raise TypeError("expected a boolean")
    if t == "int":
        if isinstance(value, bool):
            raise TypeError("expected an integer")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if from_text and isinstance(value, str):
            try:
                return int(value.strip())
            except ValueError:
                pass
        raise TypeError("expected an integer")
    if t == "float":
        if isinstance(value, bool):
            raise TypeError("expected a number")
        if isinstance(value, (int, float)):
            out = float(value)
        elif from_text and isinstance(value, str):
            try:
                out = float(value.strip())
            except ValueError:
                raise TypeError("expected a number") from None
        else:
            raise TypeError("expected a number")
        if not math.isfinite(out):
            raise TypeError("expected a finite number")
        return out
    if t == "float_list":
        if from_text and isinstance(value, str):
            items = [v for v in re.split(r"[,\s]+", value.strip()) if v]
        elif isinstance(value, list):
            items = value
        else:
            raise TypeError("expected a list of numbers")
        return [_coerce(v, Field("float", None), from_text) for v in items]
    if t == "str":
        if not isinstance(value, str):
            raise TypeError("expected a string")
        return value.strip()
    raise AssertionError(t)


def _validate_fields(section: str, raw: dict, fields: dict[str, Field], lines: dict, from_text: bool,
                     errors: list[FieldError]) -> dict:
    out = {}
    lower = {k.lower(): k for k in fields}
    for key in raw:
        if key not in lower:
            errors.append(FieldError(section, key, "unknown key", lines.get((section, key))))
    for key_l, key in lower.items():
        spec = fields[key]
        if key_l not in raw:
            out[key] = spec.default
            continue
        line = lines.get((section, key_l))
        try:
            value = _coerce(raw[key_l], spec, from_text)
        except TypeError as exc:
            errors.append(FieldError(section, key, f"{exc}, got {raw[key_l]!r}", line))
            continue
        if spec.choices and value not in spec.choices:
            errors.append(FieldError(section, key, f"must be one of {', '.join(spec.choices)}; got {value!r}", line))
            continue
        if spec.check is not None:
            msg = spec.check(value)
            if msg:
                errors.append(FieldError(section, key, f"{msg}; got {value!r}", line))
                continue
        out[key] = value
    return out


def _semantic_checks(kind: str, params: dict, lines: dict, errors: list[FieldError]) -> None:
    if kind == "register":
        reg = params["register"]
        for key in ("control", "target"):
            if reg[key] >= reg["n_ions"]:
                errors.append(FieldError("register", key, f"ion {reg[key]} does not exist for n_ions={reg['n_ions']}",
                                         lines.get(("register", key))))
        if reg["control"] == reg["target"]:
            errors.append(FieldError("register", "target", "must differ from control", lines.get(("register", "target"))))
    if kind == "ramsey":
        det = params["ramsey"]["detuning"]
        if det != "max_slope":
            try:
                params["ramsey"]["detuning"] = float(det)
            except ValueError:
                errors.append(FieldError("ramsey", "detuning", f"must be a number or 'max_slope'; got {det!r}",
                                         lines.get(("ramsey", "detuning"))))


def validate_config(path, kind: str | None = None, seed: int | None = None) -> Scenario:
    """Parse and validate a scenario file without running it.

    ``kind`` (e.g. from the subcommand) must agree with ``scenario.kind`` if
    both are given; ``seed`` overrides ``scenario.seed``.

    Raises:
        ConfigError: with one :class:`FieldError` per problem.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError([FieldError("file", None, f"config file {str(path)!r} not found")])
    raw, lines, is_json = _load_raw(path)
    return _resolve(raw, lines, not is_json, kind, seed, str(path))


def resolve_defaults(kind: str, seed: int | None = None) -> Scenario:
    """Scenario built entirely from defaults."""
    return _resolve({}, {}, False, kind, seed, None)


def _resolve(raw: dict, lines: dict, from_text: bool, kind: str | None, seed: int | None, source) -> Scenario:
    errors: list[FieldError] = []
    head = _validate_fields("scenario", raw.get("scenario", {}), SCENARIO_SECTION, lines, from_text, errors)
    file_kind = head.get("kind")
    if kind is not None and file_kind is not None and kind != file_kind:
        errors.append(FieldError("scenario", "kind", f"file declares {file_kind!r} but {kind!r} was requested",
                                 lines.get(("scenario", "kind"))))
    kind = kind or file_kind
    if kind is None:
        errors.append(FieldError("scenario", "kind", "no scenario kind given"))
        raise ConfigError(errors)
    if kind not in SCHEMA:
        errors.append(FieldError("scenario", "kind", f"unknown kind {kind!r}"))
        raise ConfigError(errors)
    schema = SCHEMA[kind]
    for section in raw:
        if section != "scenario" and section not in schema:
            errors.append(FieldError(section, None, f"unknown section for kind {kind!r}", lines.get((section, None))))
    params = {}
    for section, fields in schema.items():
        params[section] = _validate_fields(section, raw.get(section, {}), fields, lines, from_text, errors)
    if not errors:
        _semantic_checks(kind, params, lines, errors)
    if errors:
        raise ConfigError(errors)
    final_seed = head.get("seed", 0) if seed is None else seed
    if final_seed < 0:
        raise ConfigError([FieldError("scenario", "seed", "must be >= 0")])
    return Scenario(kind, params, int(final_seed), source=source)
