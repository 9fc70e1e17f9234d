"""Strict INI experiment configuration with a canonical serialised form.

Sections mirror key prefixes (``grid.n`` lives under ``[grid]`` as ``n``).
Unknown sections or keys, malformed values and missing required keys raise
:class:`ConfigError` carrying the offending line number.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .coeffs import LIBRARY
from .errors import ConfigurationError

EXPERIMENTS = ("heat-logconvexity", "parabolic-backward", "controllability", "tamed-nse")


class ConfigError(ConfigurationError):
    """Invalid configuration; ``line`` is 1-based or ``None`` for whole-file problems."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.line = line


def _positive(x):
    if x <= 0:
        raise ValueError("must be positive")
    return x


def _nonneg(x):
    if x < 0:
        raise ValueError("must be nonnegative")
    return x


def _at_least(n):
    def check(x):
        if x < n:
            raise ValueError(f"must be >= {n}")
        return x

    return check


def _choice(options):
    def check(x):
        if x not in options:
            raise ValueError(f"must be one of {', '.join(sorted(options))}")
        return x

    return check


def _modes(text: str) -> str:
    """Canonical ``k:amp`` list for a sine-mode combination, e.g. ``1:1 2:0.5``."""
    parts = text.split()
    if not parts:
        raise ValueError("needs at least one k:amplitude pair")
    out = []
    for p in parts:
        k, sep, a = p.partition(":")
        if not sep:
            raise ValueError(f"expected k:amplitude, got {p!r}")
        kk = int(k)
        if kk < 1:
            raise ValueError("sine mode index must be >= 1")
        out.append(f"{kk}:{float(a)!r}")
    return " ".join(out)


def _float_list(text: str) -> str:
    vals = [float(v) for v in text.replace(",", " ").split()]
    if not vals:
        raise ValueError("needs at least one value")
    return " ".join(repr(v) for v in vals)


def parse_modes(text: str) -> list[tuple[int, float]]:
    return [(int(k), float(a)) for k, a in (p.split(":") for p in text.split())]


def parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split()]


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: type
    default: Any = None
    required: tuple[str, ...] = ()
    check: Callable | None = None
    doc: str = ""

    @property
    def dotted(self) -> str:
        return f"{self.section}.{self.name}"


ONE_D = ("heat-logconvexity", "parabolic-backward", "controllability")

SCHEMA: tuple[Key, ...] = (
    Key("run", "replicates", int, 1, (), _at_least(1), "replicate count"),
    Key("problem", "name", str, None, ("parabolic-backward", "controllability"), _choice(set(LIBRARY)), "library problem"),
    Key("problem", "T", float, None, (), _positive, "horizon passed to the problem data (defaults to time.T)"),
    Key("problem", "gamma_check_samples", int, 1000, (), _at_least(1), "samples for the assumption check"),
    Key("grid", "n", int, None, ONE_D, _at_least(8), "interior nodes on (0, pi)"),
    Key("time", "dt", float, None, ONE_D, _positive, "time step"),
    Key("time", "T", float, None, ONE_D, _positive, "horizon"),
    Key("noise", "J", int, None, (), _at_least(1), "noise modes (4 on the interval, 8 on the torus)"),
    Key("noise", "sigma", float, None, (), _nonneg, "noise amplitude (0 on the interval, 0.1 on the torus)"),
    Key("noise", "decay_p", float, 2.0, (), _nonneg, "power-law decay of mu_j"),
    Key("noise", "seed", int, 0, (), _nonneg, "master seed"),
    Key("diagnostics", "initial", str, "1:1.0", (), _modes, "z(0) for heat-logconvexity as sine modes"),
    Key("diagnostics", "x1", str, "1:2.0", (), _modes, "first initial datum"),
    Key("diagnostics", "x2", str, "1:1.0 3:0.5", (), _modes, "second initial datum"),
    Key("diagnostics", "t0", float, 0.1, (), _nonneg, "start of the backward window"),
    Key("diagnostics", "paths", int, 20, (), _at_least(1), "coupled paths per replicate"),
    Key("diagnostics", "C1", float, 1.0, (), _positive, "calibration constant"),
    Key("diagnostics", "C2", float, 1.0, (), _positive, "calibration constant"),
    Key("diagnostics", "C3", float, 1.0, (), _positive, "calibration constant"),
    Key("diagnostics", "C4", float, 1.0, (), _positive, "calibration constant"),
    Key("control", "target", str, "1:1.0", (), _modes, "target as sine modes"),
    Key("control", "reg", float, 1e-12, (), _nonneg, "Tikhonov weight"),
    Key("control", "eps", float, 1e-6, (), _positive, "reach tolerance"),
    Key("nse", "K", int, None, ("tamed-nse",), _at_least(1), "lattice half-width"),
    Key("nse", "N_tame", float, 10.0, (), _at_least(1), "taming threshold"),
    Key("nse", "nu", float, 1.0, (), _positive, "viscosity"),
    Key("nse", "dt", float, None, ("tamed-nse",), _positive, "time step"),
    Key("nse", "T", float, None, ("tamed-nse",), _positive, "horizon"),
    Key("nse", "paths", int, None, ("tamed-nse",), _at_least(2), "coupled paths"),
    Key("nse", "eps", float, 1e-8, (), _positive, "log regularisation"),
    Key("nse", "record_every", int, 10, (), _at_least(1), "steps between diagnostics"),
    Key("nse", "amplitude", float, 3.5, (), _nonneg, "Taylor-Green amplitude of X1(0)"),
    Key("sweep", "parameter", str, None, (), None, "dotted key to sweep"),
    Key("sweep", "values", str, None, (), _float_list, "values of the swept key"),
)

SECTIONS = tuple(dict.fromkeys(k.section for k in SCHEMA))
BY_NAME = {k.dotted: k for k in SCHEMA}
EXPERIMENT_DEFAULTS = {
    "noise.J": {"tamed-nse": 8, None: 4},
    "noise.sigma": {"tamed-nse": 0.1, None: 0.0},
    "problem.name": {"heat-logconvexity": "heat", None: None},
}
SWEEPABLE = tuple(k.dotted for k in SCHEMA if k.kind in (int, float) and k.section not in ("run", "sweep"))

_KEY_LINE = re.compile(r"^\s*([^=:\s#;][^=:]*?)\s*[=:]")
_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")


def _convert(key: Key, raw: str):
    raw = raw.strip()
    if key.kind is int:
        value = int(raw)
    elif key.kind is float:
        value = float(raw)
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("must be finite")
    else:
        value = raw
        if not value:
            raise ValueError("must not be empty")
    if key.check is not None:
        value = key.check(value)
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved configuration; ``values`` maps every dotted key to its value or ``None``."""

    experiment: str
    values: tuple[tuple[str, Any], ...]

    def __getitem__(self, dotted: str):
        return dict(self.values)[dotted]

    def get(self, dotted: str, default=None):
        v = dict(self.values).get(dotted)
        return default if v is None else v

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        if dotted not in BY_NAME:
            raise ConfigError(f"unknown key {dotted!r}")
        key = BY_NAME[dotted]
        if key.kind is int and isinstance(value, float) and value.is_integer():
            value = int(value)
        try:
            v = _convert(key, repr(value) if isinstance(value, float) else str(value))
        except ValueError as exc:
            raise ConfigError(f"{dotted}: {exc}") from exc
        return ExperimentConfig(self.experiment, tuple((k, v if k == dotted else old) for k, old in self.values))

    @property
    def seed(self) -> int:
        return int(self["noise.seed"])

    def serialize(self) -> str:
        """Canonical text: schema order, unset keys omitted, floats in shortest round-trip form."""
        lines = [f"# experiment: {self.experiment}"]
        vals = dict(self.values)
        for section in SECTIONS:
            body = []
            for key in SCHEMA:
                if key.section != section or vals[key.dotted] is None:
                    continue
                v = vals[key.dotted]
                body.append(f"{key.name} = {v!r}" if isinstance(v, float) else f"{key.name} = {v}")
            if body:
                lines.append("")
                lines.append(f"[{section}]")
                lines.extend(body)
        return "\n".join(lines) + "\n"


def parse_config(text: str, experiment: str, source: str = "<config>") -> ExperimentConfig:
    """Parse ``text`` strictly for ``experiment``."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}", None, source)
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\x00none", comment_prefixes=("#", ";"), inline_comment_prefixes=None, empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno, source) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, source) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.section}.{exc.option}", exc.lineno, source) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected key = value)", lineno, source) from exc

    lines: dict[str, int] = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_LINE.match(line)
        if m:
            section = m.group(1).strip()
            lines.setdefault(f"[{section}]", i)
            continue
        m = _KEY_LINE.match(line)
        if m and section is not None and not line.startswith((" ", "\t")):
            lines.setdefault(f"{section}.{m.group(1).strip()}", i)

    resolved: dict[str, Any] = {k.dotted: None for k in SCHEMA}
    for sec in parser.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", lines.get(f"[{sec}]"), source)
        for name, raw in parser.items(sec):
            dotted = f"{sec}.{name}"
            if dotted not in BY_NAME:
                raise ConfigError(f"unknown key {dotted}", lines.get(dotted), source)
            try:
                resolved[dotted] = _convert(BY_NAME[dotted], raw)
            except ValueError as exc:
                raise ConfigError(f"{dotted}: {exc}", lines.get(dotted), source) from exc

    for key in SCHEMA:
        if resolved[key.dotted] is None and experiment in key.required:
            raise ConfigError(f"missing required key {key.dotted}", None, source)
    for key in SCHEMA:
        if resolved[key.dotted] is None:
            table = EXPERIMENT_DEFAULTS.get(key.dotted)
            if table is not None:
                resolved[key.dotted] = table.get(experiment, table[None])
            else:
                resolved[key.dotted] = key.default
    if resolved["problem.T"] is None and resolved["time.T"] is not None:
        resolved["problem.T"] = resolved["time.T"]

    param, values = resolved["sweep.parameter"], resolved["sweep.values"]
    if (param is None) != (values is None):
        raise ConfigError("sweep needs both parameter and values", lines.get("[sweep]"), source)
    if param is not None and param not in SWEEPABLE:
        raise ConfigError(f"sweep.parameter {param!r} is not a numeric key", lines.get("sweep.parameter"), source)
    return ExperimentConfig(experiment, tuple(resolved.items()))


def load_config(path: str | Path, experiment: str) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from exc
    return parse_config(text, experiment, str(p))


def describe_schema() -> str:
    """One line per key: dotted name, type, default and purpose."""
    out = []
    for k in SCHEMA:
        req = f" (required for {', '.join(k.required)})" if k.required else ""
        out.append(f"{k.dotted:28s} {k.kind.__name__:5s} default={k.default!r}{req}: {k.doc}")
    return "\n".join(out)
