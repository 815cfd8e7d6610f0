"""Scenario configuration files.

INI-style sections parsed with configparser::

    [run]
    include = common.ini          ; other files, resolved relative to this one
    seed = 0
    threads = 1

    [scenario torus-sine]
    geometry = torus2
    geometry.n = 32
    form = sine
    form.eps = 0.5
    analyses = spectrum, mane, flow, isoperimetric, verify
    mane.tol = 1e-4

Values are parsed as Python literals when possible (numbers, tuples,
lists), otherwise kept as strings.  Keys with a dot are grouped, so the
scenario above has ``geometry = {"kind": "torus2", "n": 32}``.
"""

from __future__ import annotations

import ast
import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

ANALYSES = ("spectrum", "mane", "flow", "shadow", "isoperimetric", "verify")
ORDER = {name: i for i, name in enumerate(ANALYSES)}
ALIASES = {"iso": "isoperimetric", "spectral": "spectrum"}

DEFAULT_TOLERANCES = {
    "mane": 1e-4,          # Hamiltonian minimax stopping tolerance
    "lagrangian": 1e-3,    # bisection tolerance on k
    "cipp": 0.05,          # relative agreement of c(H) and c(L)
    "normcomp": 1e-6,      # absolute slack in the L2 / critical speed comparison
    "null_loop": 0.05,     # relative deficit allowed for the null-loop witness
    "comass": 0.05,        # relative window for the comass at the critical speed
    "shadow": 1e-6,        # absolute slack in the averaged-difference bound
    "tower": 1e-3,         # monotonicity slack of the cover sequence
    "lp_gap": 1e-6,        # relative LP duality gap
    "stokes": 1e-12,       # relative discrete Stokes defect
}


class ConfigError(ValueError):
    def __init__(self, message, path=None, line=None, column=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
                if column is not None:
                    loc += f":{column}"
            loc += ": "
        super().__init__(loc + message)
        self.path, self.line, self.column = path, line, column


class DependencyError(ConfigError):
    pass


def parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("yes", "true", "on"):
        return True
    if low in ("no", "false", "off"):
        return False
    if low in ("none", ""):
        return None
    if low in ("pi", "2pi"):
        return math.pi * (2 if low == "2pi" else 1)
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    if "," in text:
        return [parse_value(p) for p in text.split(",") if p.strip()]
    return text


def _group(items):
    """{'a': 1, 'a.b': 2} -> {'a': {'kind': 1, 'b': 2}}."""
    flat, nested = {}, {}
    for key, value in items:
        head, _, rest = key.partition(".")
        if rest:
            nested.setdefault(head, {})[rest] = value
        else:
            flat[head] = value
    for head, sub in nested.items():
        base = flat.get(head)
        if isinstance(base, dict):
            base.update(sub)
        else:
            flat[head] = {"kind": base, **sub} if base is not None else dict(sub)
    for head, value in list(flat.items()):
        if head in ("geometry", "form") and not isinstance(value, dict):
            flat[head] = {"kind": value}
    return flat


@dataclass
class Scenario:
    id: str
    geometry: dict | None = None
    form: dict | None = None
    analyses: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    options: dict = field(default_factory=dict)

    def opt(self, analysis, key, default=None):
        return self.options.get(analysis, {}).get(key, default)

    def tol(self, key):
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def describe(self):
        return {"id": self.id, "geometry": self.geometry, "form": self.form,
                "analyses": list(self.analyses), "seed": self.seed}


@dataclass
class RunConfig:
    scenarios: list
    seed: int = 0
    threads: int = 1
    tol_scale: float = 1.0
    path: str | None = None
    settings: dict = field(default_factory=dict)


def _read(path, parser, seen):
    path = Path(path).resolve()
    if path in seen:
        raise ConfigError("include cycle", str(path))
    seen.add(path)
    if not path.exists():
        raise ConfigError("file not found", str(path))
    local = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    local.optionxform = str
    try:
        local.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", str(path), exc.lineno, 1) from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        col = 1 + len(line) - len(line.lstrip()) if isinstance(line, str) else None
        raise ConfigError(f"cannot parse {line!r}", str(path), lineno, col) from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message if hasattr(exc, "message") else str(exc), str(path),
                          getattr(exc, "lineno", None), 1) from exc
    # configparser joins indented lines onto the previous value; no key here is multi-line
    lines = path.read_text(encoding="utf-8").splitlines()
    for section in local.sections():
        for key, value in local.items(section):
            if "\n" in value:
                cont = value.split("\n")[1]
                lineno = next((i + 1 for i, ln in enumerate(lines) if ln.strip() == cont.strip()
                               and ln[:1].isspace()), None)
                col = 1 + len(lines[lineno - 1]) - len(lines[lineno - 1].lstrip()) if lineno else None
                raise ConfigError(f"cannot parse {cont.strip()!r} (indented line)", str(path), lineno, col)
    includes = []
    if local.has_option("run", "include"):
        includes = [s.strip() for s in local.get("run", "include").split(",") if s.strip()]
    for inc in includes:
        _read(path.parent / inc, parser, seen)
    # later files override earlier ones
    for section in local.sections():
        if not parser.has_section(section):
            parser.add_section(section)
        for key, value in local.items(section):
            if section == "run" and key == "include":
                continue
            parser.set(section, key, value)


def load_config(path, seed=None, threads=None, tol_scale=None):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    _read(path, parser, set())
    run = {k: parse_value(v) for k, v in parser.items("run")} if parser.has_section("run") else {}
    g_seed = int(seed if seed is not None else run.get("seed", 0))
    g_threads = int(threads if threads is not None else run.get("threads", 1))
    scale = float(tol_scale if tol_scale is not None else run.get("tol_scale", 1.0))
    if not scale > 0:
        raise ConfigError("tol_scale must be positive", str(path))
    scenarios = []
    for section in parser.sections():
        if section == "run":
            continue
        kind, _, name = section.partition(" ")
        if kind != "scenario" or not name.strip():
            raise ConfigError(f"unknown section [{section}]", str(path))
        items = [(k, parse_value(v)) for k, v in parser.items(section)]
        scenarios.append(scenario_from_items(name.strip(), items, g_seed, g_threads, scale, str(path)))
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenario ids must be unique", str(path))
    return RunConfig(scenarios, g_seed, g_threads, scale, str(path), run)


def scenario_from_items(name, items, seed=0, threads=1, tol_scale=1.0, path=None):
    data = _group(items)
    analyses = data.pop("analyses", [])
    if isinstance(analyses, str):
        analyses = [analyses]
    analyses = [ALIASES.get(a, a) for a in (analyses or [])]
    for a in analyses:
        if a not in ORDER:
            raise ConfigError(f"scenario {name}: unknown analysis {a!r}", path)
    analyses = sorted(set(analyses), key=ORDER.get)
    tols = dict(data.pop("tol", {}) or {})
    tols.pop("kind", None)
    for k, v in tols.items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError(f"scenario {name}: unknown tolerance {k!r}", path)
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"scenario {name}: tolerance {k} must be positive", path)
    tols = {k: float(tols.get(k, d)) * tol_scale for k, d in DEFAULT_TOLERANCES.items()}
    geometry = data.pop("geometry", None)
    form = data.pop("form", None)
    sc_seed = int(data.pop("seed", seed))
    sc_threads = int(data.pop("threads", threads))
    options = {}
    for key, value in data.items():
        if isinstance(value, dict):
            value.pop("kind", None)
            options[ALIASES.get(key, key)] = value
        else:
            raise ConfigError(f"scenario {name}: unknown key {key!r}", path)
    for key, spec in (("geometry", geometry), ("form", form)):
        if spec is None:
            continue
        f = spec.get("file")
        if f and path and not os.path.isabs(f):
            spec["file"] = str(Path(path).resolve().parent / f)
        if f and not os.path.exists(spec["file"]):
            raise ConfigError(f"scenario {name}: {key} file {spec['file']} not found", path)
    sc = Scenario(name, geometry, form, analyses, tols, sc_seed, sc_threads, options)
    check_dependencies(sc)
    return sc


_NEEDS_MESH = {"spectrum", "mane", "isoperimetric"}


def check_dependencies(sc: Scenario):
    """Raise DependencyError when a requested analysis lacks its inputs."""
    kind = (sc.geometry or {}).get("kind")
    for a in sc.analyses:
        if a in _NEEDS_MESH and sc.geometry is None:
            raise DependencyError(f"scenario {sc.id}: analysis '{a}' requires a geometry")
        if a in ("mane", "flow", "isoperimetric") and sc.form is None:
            raise DependencyError(f"scenario {sc.id}: analysis '{a}' requires a form")
        if a == "shadow" and kind not in ("hyperbolic", None):
            raise DependencyError(f"scenario {sc.id}: shadowing runs in the hyperbolic plane")
        if a == "flow" and sc.geometry is None:
            raise DependencyError(f"scenario {sc.id}: analysis 'flow' requires a geometry")
