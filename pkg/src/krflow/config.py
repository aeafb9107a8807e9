"""Run configuration in INI syntax.

Example::

    [run]
    command = flow-torus
    out = results/torus

    [torus]
    n = 1
    resolution = 64
    filter = two_thirds

Sections ``[torus]``, ``[p1]`` and ``[audit]`` take the fields of
:class:`~krflow.maflow.TorusFlowConfig`, :class:`~krflow.p1flow.P1FlowConfig`
and :class:`AuditConfig`; ``[cone]`` takes ``model`` and ``class``; and
``[verify]`` takes :class:`VerifyConfig` fields.  Values are scalars,
``none`` for an unset optional, or comma-separated lists.  Unknown sections
and keys are errors.  ``KRFLOW_OUT`` in the environment overrides the
output directory.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import re
import typing
from dataclasses import dataclass, field

from .maflow import TorusFlowConfig
from .p1flow import P1FlowConfig

COMMANDS = ("verify", "flow-torus", "flow-p1", "cone")
OUT_ENV = "KRFLOW_OUT"


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class VerifyConfig:
    seed: int = 0
    resolution: int = 32
    trials: int = 4
    samples: int = 1000


@dataclass(frozen=True)
class AuditConfig:
    trace_margin: float = 1.0
    phidot_slack: float = 1e-10
    dpdt_rtol: float = 0.05
    dpdt_floor: float = 1e-8


@dataclass(frozen=True)
class ConeConfig:
    model: str = "P1"
    cls: tuple = (2,)


@dataclass(frozen=True)
class RunConfig:
    command: str
    out: str = "out"
    torus: TorusFlowConfig = field(default_factory=TorusFlowConfig)
    p1: P1FlowConfig = field(default_factory=P1FlowConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    cone: ConeConfig = field(default_factory=ConeConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)


SECTIONS = {"torus": TorusFlowConfig, "p1": P1FlowConfig, "audit": AuditConfig, "verify": VerifyConfig}


def _line_of(text, section, key=None):
    """1-based line of ``[section]`` or of ``key`` inside it."""
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            k = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            if k == key:
                return i
    return None


def _convert(kind, raw):
    s = raw.strip()
    origin = typing.get_origin(kind)
    args = typing.get_args(kind)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if s.lower() in ("none", ""):
            return None
        kind = next(a for a in args if a is not type(None))
    if kind is bool:
        low = s.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {s!r}")
    if kind is int:
        return int(s)
    if kind is float:
        return float(s)
    if kind is str:
        return s
    if kind is tuple or origin is tuple:
        return tuple(float(x) for x in s.split(",") if x.strip())
    raise TypeError(f"unsupported field type {kind!r}")


def _section(text, parser, name, cls):
    if not parser.has_section(name):
        return cls()
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kw = {}
    for key, raw in parser.items(name):
        line = _line_of(text, name, key)
        if key not in names:
            raise ConfigError(f"unknown key {name}.{key}", line, f"{name}.{key}")
        try:
            kw[key] = _convert(hints[key], raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {name}.{key}: {exc}", line, f"{name}.{key}") from None
    try:
        return cls(**kw)
    except ValueError as exc:
        bad = next((k for k in kw if k in str(exc)), None)
        line = _line_of(text, name, bad) if bad else _line_of(text, name)
        raise ConfigError(f"invalid [{name}]: {exc}", line, f"{name}.{bad}" if bad else name) from None


def parse_config(text, env=None):
    """Parse configuration text into a :class:`RunConfig`."""
    env = os.environ if env is None else env
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], exc.lineno) from None
    except configparser.ParsingError as exc:
        line, content = exc.errors[0]
        raise ConfigError(f"cannot parse {content.strip()}", line) from None
    known = set(SECTIONS) | {"run", "cone"}
    for sec in parser.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]", _line_of(text, sec), sec)

    run = dict(parser.items("run")) if parser.has_section("run") else {}
    for key in run:
        if key not in ("command", "out"):
            raise ConfigError(f"unknown key run.{key}", _line_of(text, "run", key), f"run.{key}")
    command = run.get("command", "").strip()
    if command not in COMMANDS:
        raise ConfigError(f"run.command must be one of {', '.join(COMMANDS)}",
                          _line_of(text, "run", "command") or _line_of(text, "run"), "run.command")
    out = env.get(OUT_ENV) or run.get("out", "out").strip()

    cone = ConeConfig()
    if parser.has_section("cone"):
        items = dict(parser.items("cone"))
        for key in items:
            if key not in ("model", "class"):
                raise ConfigError(f"unknown key cone.{key}", _line_of(text, "cone", key), f"cone.{key}")
        cone = ConeConfig(items.get("model", "P1").strip(),
                          parse_class(items.get("class", "2")))

    sections = {name: _section(text, parser, name, cls) for name, cls in SECTIONS.items()}
    return RunConfig(command, out, cone=cone, **sections)


def parse_class(text):
    """Class coordinates ``"a,b,..."``; integers and fractions stay exact."""
    parts = [p.strip() for p in text.strip().strip("()").split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty class")
    out = []
    for p in parts:
        if re.fullmatch(r"[+-]?\d+(/\d+)?", p):
            out.append(p)
        else:
            try:
                out.append(float(p))
            except ValueError:
                raise ConfigError(f"bad class coordinate {p!r}") from None
    return tuple(out)


def load_config(path, env=None):
    with open(path) as fh:
        return parse_config(fh.read(), env)
