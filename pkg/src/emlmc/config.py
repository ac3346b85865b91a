"""Run configuration stored as a sectioned ``key = value`` text file.

Example::

    [problem]
    name = test1

    [levels]
    L = 3
    h0 = 0.35355339059327379
    dt0 = 0.125
    schedule = paper_test1

Unknown keys and out-of-range values raise :class:`ConfigError` naming the
offending field as ``section.key``.
"""
import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace

from .mlmc import SCHEDULE_KINDS, make_schedule
from .problems import Test1Problem, Test2Problem
from .random_inputs import KLParams
from .stepper import BOOTSTRAP_MODES

PROBLEMS = ("test1", "test2", "custom")
SOLVERS = ("cholesky", "block_cg", "cg")


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class RunConfig:
    # [problem]
    problem: str = "test1"
    base: str = "test1"  # what a custom run overrides
    T: float = None
    omega: float = None
    kl_a0: float = 1.0
    kl_corr_length: float = 0.25
    kl_sigma: float = 0.15
    kl_terms: int = 3
    # [levels]
    L: int = 3
    h0: float = math.sqrt(2.0) / 4.0
    dt0: float = 0.125
    schedule: str = "paper_test1"
    J_L: int = 2
    epsilon: float = 0.01
    J: tuple = None
    # [fem]
    degree: int = 2
    # [solver]
    solver: str = "cholesky"
    tol: float = 1e-10
    bootstrap: str = "backward_euler_ensemble"
    # [run]
    seed: int = 0
    replicas: int = 1
    jobs: int = 1
    output: str = "out"
    # [emit]
    csv: bool = True
    vtk: bool = True
    audit: bool = True

    def validate(self):
        def need(ok, path, msg):
            if not ok:
                raise ConfigError(path, msg)

        need(self.problem in PROBLEMS, "problem.name", f"expected one of {PROBLEMS}")
        need(self.base in ("test1", "test2"), "problem.base", "expected test1 or test2")
        need(self.T is None or self.T > 0, "problem.T", "must be positive")
        for key in ("kl_a0", "kl_corr_length", "kl_sigma"):
            need(getattr(self, key) > 0, f"problem.{key}", "must be positive")
        need(self.kl_terms >= 0, "problem.kl_terms", "must be nonnegative")
        need(self.L >= 0, "levels.L", "must be nonnegative")
        need(self.h0 > 0, "levels.h0", "must be positive")
        need(self.dt0 > 0, "levels.dt0", "must be positive")
        need(self.schedule in SCHEDULE_KINDS, "levels.schedule",
             f"expected one of {SCHEDULE_KINDS}")
        if self.schedule == "explicit":
            need(self.J is not None, "levels.J", "required for an explicit schedule")
            need(len(self.J) == self.L + 1, "levels.J", f"needs L + 1 = {self.L + 1} entries")
        need(self.J_L >= 1, "levels.J_L", "must be at least 1")
        need(self.epsilon >= 0, "levels.epsilon", "must be nonnegative")
        need(self.degree in (1, 2), "fem.degree", "supported degrees are 1 and 2")
        need(self.solver in SOLVERS, "solver.method", f"expected one of {SOLVERS}")
        need(self.tol > 0, "solver.tol", "must be positive")
        need(self.bootstrap in BOOTSTRAP_MODES, "solver.bootstrap",
             f"expected one of {BOOTSTRAP_MODES}")
        need(self.replicas >= 1, "run.replicas", "must be at least 1")
        need(self.jobs >= 1, "run.jobs", "must be at least 1")
        if self.omega is not None:
            need(abs(self.omega) <= math.sqrt(3.0), "problem.omega",
                 "must lie in [-sqrt3, sqrt3]")
        try:
            self.make_schedule()
        except ValueError as exc:
            raise ConfigError("levels", str(exc)) from exc
        from .mesh import admissible_n

        try:
            admissible_n(self.h0)
        except ValueError as exc:
            raise ConfigError("levels.h0", str(exc)) from exc
        return self

    @property
    def kind(self):
        return self.base if self.problem == "custom" else self.problem

    def make_schedule(self):
        return make_schedule(self.schedule, self.h0, self.dt0, self.L, J_L=self.J_L,
                             epsilon=self.epsilon, J=self.J)

    def make_problem(self):
        if self.kind == "test1":
            return Test1Problem(T=self.T if self.T is not None else 1.0, omega=self.omega)
        kl = KLParams(self.kl_a0, self.kl_corr_length, self.kl_sigma, self.kl_terms)
        return Test2Problem(T=self.T if self.T is not None else 0.5, kl=kl)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw).validate()


# file layout: section -> [(key in file, attribute)]
_LAYOUT = {
    "problem": [("name", "problem"), ("base", "base"), ("T", "T"), ("omega", "omega"),
                ("kl_a0", "kl_a0"), ("kl_corr_length", "kl_corr_length"),
                ("kl_sigma", "kl_sigma"), ("kl_terms", "kl_terms")],
    "levels": [("L", "L"), ("h0", "h0"), ("dt0", "dt0"), ("schedule", "schedule"),
               ("J_L", "J_L"), ("epsilon", "epsilon"), ("J", "J")],
    "fem": [("degree", "degree")],
    "solver": [("method", "solver"), ("tol", "tol"), ("bootstrap", "bootstrap")],
    "run": [("seed", "seed"), ("replicas", "replicas"), ("jobs", "jobs"),
            ("output", "output")],
    "emit": [("csv", "csv"), ("vtk", "vtk"), ("audit", "audit")],
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse(attr, text, path):
    kind = _TYPES[attr]
    text = text.strip()
    if text.lower() == "none":
        return None
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return low in ("true", "yes", "1")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(path, f"cannot parse {text!r} as {kind.__name__}") from None
    return text


def to_text(cfg):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in _LAYOUT.items():
        parser[section] = {key: _format(getattr(cfg, attr)) for key, attr in keys}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def from_text(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    values = {}
    for section in parser.sections():
        if section not in _LAYOUT:
            raise ConfigError(section, "unknown section")
        keys = dict(_LAYOUT[section])
        for key, text_value in parser[section].items():
            if key not in keys:
                raise ConfigError(f"{section}.{key}", "unknown key")
            values[keys[key]] = _parse(keys[key], text_value, f"{section}.{key}")
    return replace(_DEFAULTS, **values).validate()


def load(path):
    with open(path) as fh:
        return from_text(fh.read())


def save(cfg, path):
    with open(path, "w") as fh:
        fh.write(to_text(cfg))
