"""Level schedules, coupled level corrections and the telescoping estimator."""
import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fem, stepper
from .linalg import SolverError
from .mesh import build_single
from .random_inputs import SampleStream, probe_lattice, split_for_stability

SCHEDULE_KINDS = ("paper_test1", "corollary", "explicit")


@dataclass(frozen=True)
class LevelSchedule:
    """Per-level mesh size, time step and sample count, levels ``0..L``."""

    kind: str
    h0: float
    dt0: float
    J: tuple

    @property
    def L(self):
        return len(self.J) - 1

    def h(self, l):
        return self.h0 / 2 ** l

    def dt(self, l):
        return self.dt0 / 2 ** l

    def rows(self):
        return [(l, self.h(l), self.dt(l), self.J[l]) for l in range(self.L + 1)]


def corollary_counts(L, J_L, epsilon=0.01, m=2):
    return tuple(int(math.ceil((l + 1) ** (1.0 + epsilon) * 2.0 ** (2 * m * (L - l)) * J_L))
                 for l in range(L + 1))


def make_schedule(kind, h0, dt0, L, J_L=2, epsilon=0.01, m=2, J=None):
    """Build a :class:`LevelSchedule`.

    ``paper_test1`` uses ``J_l = 2^(4(L-l)+1)``; ``corollary`` uses
    ``ceil((l+1)^(1+eps) 2^(2m(L-l)) J_L)``; ``explicit`` takes ``J``.
    """
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}")
    if not (h0 > 0 and dt0 > 0):
        raise ValueError("h0 and dt0 must be positive")
    if kind == "explicit":
        if J is None:
            raise ValueError("explicit schedule needs the sample counts J")
        counts = tuple(int(j) for j in J)
    else:
        if L is None or int(L) < 0:
            raise ValueError("L must be a nonnegative integer")
        L = int(L)
        if kind == "paper_test1":
            counts = tuple(2 ** (4 * (L - l) + 1) for l in range(L + 1))
        else:
            if m != 2:
                # the time step follows sqrt(h^m); only m = 2 keeps dt halving per level
                raise ValueError("corollary schedule needs m = 2 for nested time grids")
            if J_L < 1:
                raise ValueError("J_L must be at least 1")
            counts = corollary_counts(L, J_L, epsilon, m)
    if not counts or min(counts) < 1:
        raise ValueError("every level needs at least one sample")
    if any(b > a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"sample counts must be nonincreasing in l, got {counts}")
    return LevelSchedule(kind, float(h0), float(dt0), counts)


@functools.lru_cache(maxsize=32)
def level_space(h, degree=2):
    return fem.FeSpace(build_single(h), degree)


def warm_spaces(schedule, degree=2):
    """Build every level space and its cached operators ahead of timing."""
    for l in range(schedule.L + 1):
        V = level_space(schedule.h(l), degree)
        V.mass, V.laplace, V._stiffness_kernel, V._load_operator
        if l:
            _transfer(level_space(schedule.h(l - 1), degree), V)


@functools.lru_cache(maxsize=64)
def _transfer(coarse, fine):
    return fem.prolongation(coarse, fine)


def shared_steps(schedule, l, T):
    """Step indices on level ``l`` of the level-0 times ``m dt0``, m = 0..N0."""
    n0 = stepper._check_steps(T, schedule.dt0)
    return [m * 2 ** l for m in range(n0 + 1)]


@dataclass
class LevelCorrection:
    level: int
    h: float
    dt: float
    J: int
    space: object
    means: dict                 # level-0 time index -> mean correction values
    var_L2: float
    var_H1: float
    n_groups: int
    iterations: int = 0
    wall_time: float = 0.0
    audits: list = field(default_factory=list)
    samples: list = field(default_factory=list, repr=False)

    @property
    def mean_field(self):
        return fem.NodalField(self.space, self.means[max(self.means)])

    @property
    def norm_L2(self):
        return float(fem.norm_error_L2(self.mean_field))


def draw_samples(problem, seed, level, replica, J):
    stream = SampleStream(seed, level, replica)
    return [problem.draw(stream, j) for j in range(J)]


def _sample_variance(values, space):
    if values.shape[1] < 2:
        return 0.0, 0.0
    dev = fem.NodalField(space, values - values.mean(axis=1, keepdims=True))
    J = values.shape[1]
    l2 = fem.norm_error_L2(dev) ** 2
    h1 = fem.norm_error_H1semi(dev) ** 2
    return float(l2.sum() / (J - 1)), float(h1.sum() / (J - 1))


def _solve_level(groups, samples, space, dt, problem, steps, pipeline, options):
    """Member solutions at ``steps``; columns follow ``samples`` order."""
    col = {id(s): k for k, s in enumerate(samples)}
    out = {s: np.empty((space.n_dof, len(samples))) for s in steps}
    iterations, wall, audits = 0, 0.0, []
    if pipeline == "independent":
        run = stepper.run_independent(samples, space, dt, problem, options, steps)
        return run.snapshots, run.iterations, run.wall_time, audits
    for group in groups:
        run = stepper.run_group(group, space, dt, problem, options, steps)
        cols = [col[id(s)] for s in group.samples]
        for s in steps:
            out[s][:, cols] = run.snapshots[s]
        iterations += run.iterations
        wall += run.wall_time
        if run.audit:
            audits.append(run.audit)
    return out, iterations, wall, audits


def _in_context(exc, where):
    if isinstance(exc, SolverError):
        return SolverError(f"{where}: {exc}", residual=exc.residual,
                           iterations=exc.iterations)
    return ValueError(f"{where}: {exc}")


def run_level_correction(l, schedule, problem, seed=0, replica=0, degree=2,
                         options=None, pipeline="ensemble", coupled=True,
                         samples=None):
    """Sample mean of ``u_l - P u_{l-1}`` on the level-0 time grid.

    Fine and coarse solves consume the same draws and the same groups.
    ``coupled=False`` drops the coarse companion (plain level-``l`` MC).
    """
    if pipeline not in ("ensemble", "independent"):
        raise ValueError(f"unknown pipeline {pipeline!r}")
    if not 0 <= l <= schedule.L:
        raise ValueError(f"level {l} outside 0..{schedule.L}")
    options = options or stepper.StepperOptions()
    J = schedule.J[l]
    if samples is None:
        samples = draw_samples(problem, seed, l, replica, J)
    fine = level_space(schedule.h(l), degree)
    coarse = level_space(schedule.h(l - 1), degree) if (l > 0 and coupled) else None
    meshes = [fine.mesh] + ([coarse.mesh] if coarse is not None else [])
    t0 = time.perf_counter()
    groups = split_for_stability(samples, probe_lattice(meshes))
    split_time = time.perf_counter() - t0 if pipeline == "ensemble" else 0.0

    try:
        times = list(range(len(shared_steps(schedule, 0, problem.T))))
        f_steps = shared_steps(schedule, l, problem.T)
        U, its, wall, audits = _solve_level(groups, samples, fine, schedule.dt(l),
                                            problem, f_steps, pipeline, options)
    except (SolverError, ValueError) as exc:
        raise _in_context(exc, f"level {l} fine solve, replica {replica}") from exc
    Y = {m: U[s] for m, s in zip(times, f_steps)}
    if coarse is not None:
        c_steps = shared_steps(schedule, l - 1, problem.T)
        try:
            Uc, its_c, wall_c, audits_c = _solve_level(
                groups, samples, coarse, schedule.dt(l - 1), problem, c_steps,
                pipeline, options)
        except (SolverError, ValueError) as exc:
            raise _in_context(exc, f"level {l} coarse solve, replica {replica}") from exc
        P = _transfer(coarse, fine)
        for m, s in zip(times, c_steps):
            Y[m] = Y[m] - P @ Uc[s]
        its += its_c
        wall += wall_c
        audits += audits_c
    var_l2, var_h1 = _sample_variance(Y[times[-1]], fine)
    return LevelCorrection(
        level=l, h=schedule.h(l), dt=schedule.dt(l), J=J, space=fine,
        means={m: Y[m].mean(axis=1) for m in times}, var_L2=var_l2, var_H1=var_h1,
        n_groups=len(groups) if pipeline == "ensemble" else J,
        iterations=its, wall_time=wall + split_time, audits=audits,
        samples=samples)


@dataclass
class MlmcEstimate:
    space: object
    fields: dict                # level-0 time index -> values on the level-L space
    corrections: list
    schedule: LevelSchedule = None
    seed: int = None
    replica: int = None

    @property
    def field(self):
        return fem.NodalField(self.space, self.fields[max(self.fields)])

    @property
    def wall_time(self):
        return sum(c.wall_time for c in self.corrections)


def combine(corrections, schedule=None, seed=None, replica=None):
    """Telescoped sum of the level corrections on the finest space."""
    by_level = {c.level: c for c in corrections}
    L = max(by_level) if by_level else -1
    missing = [l for l in range(L + 1) if l not in by_level]
    if L < 0 or missing:
        raise ValueError(f"missing level corrections {missing or [0]}")
    top = by_level[L].space
    fields = {}
    for l in range(L + 1):
        c = by_level[l]
        P = None if c.space is top else _transfer(c.space, top)
        for m, v in c.means.items():
            add = v if P is None else P @ v
            fields[m] = fields[m] + add if m in fields else add.copy()
    return MlmcEstimate(top, fields, [by_level[l] for l in range(L + 1)],
                        schedule, seed, replica)


def run_mlmc(schedule, problem, seed=0, replica=0, degree=2, options=None,
             pipeline="ensemble"):
    corr = [run_level_correction(l, schedule, problem, seed, replica, degree,
                                 options, pipeline) for l in range(schedule.L + 1)]
    return combine(corr, schedule, seed, replica)


def single_level_mc(l, J, problem, schedule, seed=0, replica=0, degree=2,
                    options=None):
    """Plain ensemble MC mean at level ``l`` with ``J`` draws, final time."""
    samples = draw_samples(problem, seed, l, replica, J)
    c = run_level_correction(l, schedule, problem, seed, replica, degree, options,
                             coupled=False, samples=samples)
    return c.mean_field
