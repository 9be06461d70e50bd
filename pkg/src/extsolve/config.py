"""Experiment configuration files.

A config is a sectioned ``key = value`` file read with :mod:`configparser`.
Arrays are comma lists. Errors carry the file name and line number of the
offending key (or of its section when the key is missing)::

    [operator]
    kind = Laplace2D

    [shell.inner]
    kind = circle
    radii = 1
    n_nodes = 64

    [shell.outer]
    kind = circle
    radii = 3
    n_nodes = 64

    [problem]
    kind = inner-dirichlet
    method = mfs
    n_sources = 64

    [data]
    source = manufactured
    z0 = 5, 0

Sections
--------
``operator``     kind, a, branch, mu, lam
``shell.<role>`` role in inner | middle | outer | probe; kind, center, radii,
                 n_nodes, amplitude, lobes, path (triangle soup)
``problem``      kind (inner-dirichlet | continuation | cauchy |
                 dirichlet-extension), method (mfs | single-layer),
                 reduction (probe | pv | hat), n_sources, oversample
``data``         source (manufactured | zero | file), z0, column, amplitude,
                 file, noise, seed
``regularization`` method, alpha, tau, selection, delta
``study``        n_sources, n_nodes, noise, source_radii (comma lists)
``probe.<name>`` field-error probe set; same keys as a shell
"""

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .kernels import KINDS, OperatorSpec
from .problems import METHODS, REDUCTIONS
from .reglinalg import RegConfig

PROBLEM_KINDS = ("inner-dirichlet", "continuation", "cauchy", "dirichlet-extension")
SHELL_ROLES = ("inner", "middle", "outer", "probe")
DATA_SOURCES = ("manufactured", "zero", "file")

_ALLOWED = {
    "operator": {"kind", "a", "branch", "mu", "lam"},
    "shell": {"kind", "center", "radii", "radius", "n_nodes", "amplitude", "lobes", "path"},
    "problem": {"kind", "method", "reduction", "n_sources", "oversample"},
    "data": {"source", "z0", "column", "amplitude", "file", "noise", "seed"},
    "regularization": {"method", "alpha", "tau", "selection", "delta"},
    "study": {"n_sources", "n_nodes", "noise", "source_radii"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` is a ``path:line: message`` diagnostic."""

    def __init__(self, path, line, message):
        self.path, self.line = str(path), line
        loc = f"{self.path}:{line}" if line else self.path
        super().__init__(f"{loc}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    path: str
    operator: OperatorSpec
    shells: dict
    probes: dict
    problem: str
    method: str
    reduction: str
    n_sources: Optional[int]
    oversample: int
    data_source: str
    z0: Optional[tuple]
    column: int
    amplitude: float
    data_file: Optional[str]
    noise: float
    seed: int
    reg: RegConfig
    study: dict = field(default_factory=dict)


class _Reader:
    """Typed access to a parsed config with line-anchored errors."""

    _section_re = re.compile(r"^\s*\[([^\]]+)\]")
    _key_re = re.compile(r"^\s*([^=:\s#;][^=:]*?)\s*[=:]")

    def __init__(self, path, text):
        self.path = path
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            self.cp.read_string(text, source=str(path))
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(path, exc.lineno, f"duplicate section [{exc.section}]") from None
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(path, exc.lineno, f"duplicate key {exc.option!r} in [{exc.section}]") from None
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError(path, exc.lineno, "key outside of any [section]") from None
        except configparser.ParsingError as exc:
            lineno, line = exc.errors[0]
            raise ConfigError(path, lineno, f"cannot parse line {line.strip()!r}") from None
        self.lines = {}
        section = None
        for i, raw in enumerate(text.splitlines(), start=1):
            m = self._section_re.match(raw)
            if m:
                section = m.group(1).strip()
                self.lines[(section, None)] = i
                continue
            m = self._key_re.match(raw)
            if m and section is not None and not raw[:1].isspace():
                self.lines.setdefault((section, m.group(1).strip().lower()), i)

    def error(self, section, key, message):
        line = self.lines.get((section, key)) or self.lines.get((section, None), 0)
        where = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(self.path, line, f"{where}: {message}")

    def has(self, section, key=None):
        if not self.cp.has_section(section):
            return False
        return key is None or self.cp.has_option(section, key)

    def check_keys(self, section, allowed):
        for key in self.cp.options(section):
            if key not in allowed:
                self.error(section, key, f"unknown key (allowed: {', '.join(sorted(allowed))})")

    def raw(self, section, key, default=None, required=False):
        if self.has(section, key):
            value = self.cp.get(section, key).strip()
            if value == "":
                self.error(section, key, "empty value")
            return value
        if required:
            if not self.has(section):
                raise ConfigError(self.path, 0, f"missing section [{section}]")
            self.error(section, None, f"missing required key {key!r}")
        return default

    def choice(self, section, key, options, default=None, required=False):
        value = self.raw(section, key, default, required)
        if value is not None and value not in options:
            self.error(section, key, f"{value!r} is not one of {', '.join(options)}")
        return value

    def number(self, section, key, cast=float, default=None, required=False, check=None, what=""):
        value = self.raw(section, key, None, required)
        if value is None:
            return default
        try:
            out = cast(value)
        except ValueError:
            self.error(section, key, f"expected {cast.__name__}, got {value!r}")
        if check is not None and not check(out):
            self.error(section, key, f"value {value} out of range{what}")
        return out

    def numbers(self, section, key, cast=float, default=None, required=False, check=None, what=""):
        value = self.raw(section, key, None, required)
        if value is None:
            return default
        try:
            out = tuple(cast(v) for v in value.split(","))
        except ValueError:
            self.error(section, key, f"expected a comma list of {cast.__name__}, got {value!r}")
        if check is not None and not all(check(v) for v in out):
            self.error(section, key, f"value out of range in {value!r}{what}")
        return out


def _shell_spec(r, section, base_dir):
    r.check_keys(section, _ALLOWED["shell"])
    spec = {"kind": r.raw(section, "kind", required=True)}
    if spec["kind"] == "triangulated":
        path = Path(r.raw(section, "path", required=True))
        spec["path"] = str(path if path.is_absolute() else base_dir / path)
        return spec
    radii = r.numbers(section, "radii", default=None, check=lambda v: v > 0, what=" (radii > 0)")
    if radii is None:
        radii = r.numbers(section, "radius", required=True, check=lambda v: v > 0, what=" (radius > 0)")
    spec["radii"] = radii
    center = r.numbers(section, "center")
    if center is not None:
        spec["center"] = center
    spec["n_nodes"] = r.number(section, "n_nodes", int, 64, check=lambda v: v >= 4, what=" (n_nodes >= 4)")
    for key, cast in (("amplitude", float), ("lobes", int)):
        value = r.number(section, key, cast)
        if value is not None:
            spec[key] = value
    return spec


def load_config(path):
    """Parse and validate ``path``; raise :class:`ConfigError` on any problem."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(path, 0, f"cannot read config: {exc.strerror}") from None
    r = _Reader(path, text)
    for section in r.cp.sections():
        head = section.split(".", 1)[0]
        if head in ("shell", "probe"):
            if "." not in section:
                r.error(section, None, f"section needs a name, e.g. [{head}.inner]")
            if head == "shell" and section.split(".", 1)[1] not in SHELL_ROLES:
                r.error(section, None, f"shell role must be one of {', '.join(SHELL_ROLES)}")
        elif head in _ALLOWED:
            r.check_keys(section, _ALLOWED[head])
        else:
            r.error(section, None, "unknown section")

    kind = r.choice("operator", "kind", KINDS, required=True)
    try:
        op = OperatorSpec(kind, a=r.number("operator", "a", default=1.0),
                          branch=r.raw("operator", "branch", "decaying"),
                          mu=r.number("operator", "mu", default=1.0),
                          lam=r.number("operator", "lam", default=1.0))
    except ValueError as exc:
        r.error("operator", None, str(exc))

    base_dir = path.parent
    shells = {s.split(".", 1)[1]: _shell_spec(r, s, base_dir)
              for s in r.cp.sections() if s.startswith("shell.")}
    if "inner" not in shells:
        raise ConfigError(path, 0, "missing section [shell.inner]")
    probes = {s.split(".", 1)[1]: _shell_spec(r, s, base_dir)
              for s in r.cp.sections() if s.startswith("probe.")}

    problem = r.choice("problem", "kind", PROBLEM_KINDS, required=True)
    method = r.choice("problem", "method", METHODS, "mfs")
    reduction = r.choice("problem", "reduction", REDUCTIONS, "probe")
    n_sources = r.number("problem", "n_sources", int, check=lambda v: v >= 1, what=" (>= 1)")
    oversample = r.number("problem", "oversample", int, 1, check=lambda v: v >= 1, what=" (>= 1)")
    if method == "mfs" and "outer" not in shells:
        r.error("problem", "method", "mfs needs a [shell.outer] section for the sources")
    if method == "single-layer" and problem != "dirichlet-extension" and "middle" not in shells:
        r.error("problem", "method", "single-layer needs a [shell.middle] section for the density")
    if problem == "cauchy" and "middle" not in shells:
        r.error("problem", "kind", "cauchy needs a [shell.middle] section bounding the annulus")
    if problem == "dirichlet-extension" and not ({"middle", "outer"} & set(shells)):
        r.error("problem", "kind", "dirichlet-extension needs a virtual [shell.outer] or [shell.middle]")

    source = r.choice("data", "source", DATA_SOURCES, "manufactured")
    z0 = r.numbers("data", "z0", required=source == "manufactured")
    if z0 is not None and len(z0) != op.dim:
        r.error("data", "z0", f"expected {op.dim} coordinates, got {len(z0)}")
    column = r.number("data", "column", int, 0, check=lambda v: 0 <= v < op.k, what=f" (0..{op.k - 1})")
    amplitude = r.number("data", "amplitude", default=1.0)
    data_file = r.raw("data", "file", required=source == "file")
    if data_file is not None and not Path(data_file).is_absolute():
        data_file = str(base_dir / data_file)
    noise = r.number("data", "noise", default=0.0, check=lambda v: v >= 0, what=" (>= 0)")
    seed = r.number("data", "seed", int, 0, check=lambda v: v >= 0, what=" (>= 0)")

    try:
        reg = RegConfig(method=r.raw("regularization", "method", "tikhonov"),
                        alpha=r.number("regularization", "alpha"),
                        tau=r.number("regularization", "tau", default=1e-12),
                        selection=r.raw("regularization", "selection", "fixed"),
                        delta=r.number("regularization", "delta"))
    except ValueError as exc:
        r.error("regularization", None, str(exc))

    study = {}
    for key, cast, check in (("n_sources", int, lambda v: v >= 1), ("n_nodes", int, lambda v: v >= 4),
                             ("noise", float, lambda v: v >= 0), ("source_radii", float, lambda v: v > 0)):
        values = r.numbers("study", key, cast, check=check)
        if values is not None:
            study[key] = values
    if "n_sources" in study and "n_nodes" in study and len(study["n_sources"]) != len(study["n_nodes"]):
        r.error("study", "n_nodes", "n_sources and n_nodes sweeps must have the same length")

    return ExperimentConfig(str(path), op, shells, probes, problem, method, reduction, n_sources,
                            oversample, source, z0, column, amplitude, data_file, noise, seed,
                            reg, study)
