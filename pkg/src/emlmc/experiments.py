"""Batch experiments: convergence study, pipeline comparison, generic runs."""
import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem, mlmc
from .stepper import StepperOptions

LEVEL_COLUMNS = ["pipeline", "replica", "l", "h_l", "dt_l", "J_l", "groups",
                 "correction_norm", "var_L2", "var_H1", "iterations", "wall_time"]
AUDIT_COLUMNS = ["run", "L", "replica", "level", "dt", "n_dof", "group", "members",
                 "theta_hat", "theta_plus_hat", "step", "lhs", "rhs",
                 "rhs_l2_surrogate", "holds"]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def options_of(cfg):
    return StepperOptions(solver=cfg.solver, tol=cfg.tol, bootstrap=cfg.bootstrap,
                          audit=cfg.audit)


def level_rows(estimate, pipeline):
    return [[pipeline, estimate.replica, c.level, c.h, c.dt, c.J, c.n_groups,
             c.norm_L2, c.var_L2, c.var_H1, c.iterations, c.wall_time]
            for c in estimate.corrections]


def audit_rows(estimate, run, L):
    rows = []
    for c in estimate.corrections:
        for g, a in enumerate(c.audits):
            for step, lhs, rhs, l2 in a["history"]:
                rows.append([run, L, estimate.replica, c.level, a["dt"], a["n_dof"], g,
                             a["members"], a["theta_hat"], a["theta_plus_hat"], step,
                             lhs, rhs, l2, lhs <= rhs * (1.0 + 1e-8)])
    return rows


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# convergence ---------------------------------------------------------------
@dataclass
class ConvergenceRow:
    L: int
    E_L2: float
    rate_L2: float
    E_H1: float
    rate_H1: float


@dataclass
class ConvergenceResult:
    rows: list
    level_rows: dict = field(default_factory=dict)   # L -> rows
    audit_rows: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def audits_hold(self):
        return all(r[-1] for r in self.audit_rows)


def rates(errors):
    """``log2(e_prev / e_curr)``; NaN for the first entry."""
    out = [float("nan")]
    for prev, curr in zip(errors, errors[1:]):
        out.append(math.log2(prev / curr))
    return out


def error_metrics(estimate, problem):
    """Squared final L2 error and squared H1 errors on the level-0 times."""
    T, dt0 = problem.T, estimate.schedule.dt0
    space = estimate.space
    last = max(estimate.fields)
    e2 = fem.norm_error_L2(fem.NodalField(space, estimate.fields[last]),
                           lambda x, y: problem.exact_mean(x, y, T)) ** 2
    h1 = []
    for m in sorted(estimate.fields):
        if m == 0:
            continue
        t = m * dt0
        err = fem.norm_error_H1semi(fem.NodalField(space, estimate.fields[m]),
                                    lambda x, y, t=t: problem.exact_mean_grad(x, y, t))
        h1.append(err ** 2)
    return float(e2), [float(v) for v in h1]


def _convergence_task(args):
    cfg, L, replica = args
    schedule = replace(cfg, L=L).make_schedule()
    problem = cfg.make_problem()
    est = mlmc.run_mlmc(schedule, problem, cfg.seed, replica, cfg.degree, options_of(cfg))
    e2, h1 = error_metrics(est, problem)
    return L, replica, e2, h1, level_rows(est, "ensemble"), audit_rows(est, "convergence", L)


def run_convergence(cfg, levels=None, out_dir=None):
    """Rows ``L = 1..levels`` of the Test 1 error table."""
    if cfg.kind != "test1":
        raise ValueError("problem.name: convergence study needs test1 (closed-form mean)")
    start = time.perf_counter()
    L_max = cfg.L if levels is None else int(levels)
    tasks = [(cfg, L, r) for L in range(1, L_max + 1) for r in range(cfg.replicas)]
    results = _map(_convergence_task, tasks, cfg.jobs)
    res = ConvergenceResult(rows=[])
    e_l2, e_h1 = [], []
    for L in range(1, L_max + 1):
        mine = [r for r in results if r[0] == L]
        e_l2.append(math.sqrt(np.mean([r[2] for r in mine])))
        e_h1.append(math.sqrt(np.mean([v for r in mine for v in r[3]])))
        res.level_rows[L] = [row for r in mine for row in r[4]]
        res.audit_rows += [row for r in mine for row in r[5]]
    for L, a, ra, b, rb in zip(range(1, L_max + 1), e_l2, rates(e_l2), e_h1, rates(e_h1)):
        res.rows.append(ConvergenceRow(L, a, ra, b, rb))
    res.wall_time = time.perf_counter() - start
    if out_dir is not None:
        write_convergence(res, out_dir, cfg)
    return res


def write_convergence(res, out_dir, cfg):
    os.makedirs(out_dir, exist_ok=True)
    if cfg.csv:
        write_rows(os.path.join(out_dir, "convergence.csv"),
                   ["L", "E_L2", "rate_L2", "E_H1", "rate_H1"],
                   [[r.L, r.E_L2, r.rate_L2, r.E_H1, r.rate_H1] for r in res.rows])
        for L, rows in res.level_rows.items():
            write_rows(os.path.join(out_dir, f"levels_{L}.csv"), LEVEL_COLUMNS, rows)
        if cfg.audit:
            write_rows(os.path.join(out_dir, "energy_audit.csv"), AUDIT_COLUMNS,
                       res.audit_rows)


# pipeline comparison ---------------------------------------------------------
@dataclass
class CompareResult:
    psi_E: object
    psi_I: object
    max_diff: float
    time_ensemble: float
    time_independent: float
    raw_ensemble: float
    raw_independent: float
    level_rows: list = field(default_factory=list)
    audit_rows: list = field(default_factory=list)

    @property
    def time_ratio(self):
        return self.time_independent / self.time_ensemble


def run_compare(cfg, out_dir=None, replica=0):
    """EMLMC against the per-sample MLMC pipeline on identical draws."""
    schedule = cfg.make_schedule()
    problem = cfg.make_problem()
    opts = options_of(cfg)
    mlmc.warm_spaces(schedule, cfg.degree)
    t0 = time.perf_counter()
    est_E = mlmc.run_mlmc(schedule, problem, cfg.seed, replica, cfg.degree, opts,
                          pipeline="ensemble")
    t1 = time.perf_counter()
    est_I = mlmc.run_mlmc(schedule, problem, cfg.seed, replica, cfg.degree,
                          replace(opts, audit=False), pipeline="independent")
    t2 = time.perf_counter()
    diff = est_E.field.values - est_I.field.values
    res = CompareResult(
        psi_E=est_E.field, psi_I=est_I.field, max_diff=float(np.abs(diff).max()),
        time_ensemble=est_E.wall_time, time_independent=est_I.wall_time,
        raw_ensemble=t1 - t0, raw_independent=t2 - t1,
        level_rows=level_rows(est_E, "ensemble") + level_rows(est_I, "independent"),
        audit_rows=audit_rows(est_E, "compare", schedule.L))
    if out_dir is not None:
        write_compare(res, out_dir, cfg, schedule.L)
    return res


def write_compare(res, out_dir, cfg, L):
    os.makedirs(out_dir, exist_ok=True)
    space = res.psi_E.space
    if cfg.vtk:
        fem.write_vtk(os.path.join(out_dir, "psi_E.vtk"), {"psi_E": res.psi_E})
        fem.write_vtk(os.path.join(out_dir, "psi_I.vtk"), {"psi_I": res.psi_I})
    if cfg.csv:
        e, i = res.psi_E.values, res.psi_I.values
        write_rows(os.path.join(out_dir, "diff.csv"), ["x", "y", "psi_E", "psi_I", "diff"],
                   [[x, y, a, b, a - b] for (x, y), a, b in zip(space.dof_coords, e, i)])
        write_rows(os.path.join(out_dir, f"levels_{L}.csv"), LEVEL_COLUMNS, res.level_rows)
        write_rows(os.path.join(out_dir, "compare.csv"),
                   ["max_diff", "time_ensemble", "time_independent", "time_ratio",
                    "raw_ensemble", "raw_independent"],
                   [[res.max_diff, res.time_ensemble, res.time_independent,
                     res.time_ratio, res.raw_ensemble, res.raw_independent]])
        if cfg.audit:
            write_rows(os.path.join(out_dir, "energy_audit.csv"), AUDIT_COLUMNS,
                       res.audit_rows)


# generic run -----------------------------------------------------------------
@dataclass
class CustomResult:
    estimates: list
    level_rows: list = field(default_factory=list)
    audit_rows: list = field(default_factory=list)


def _custom_task(args):
    cfg, replica = args
    schedule = cfg.make_schedule()
    return mlmc.run_mlmc(schedule, cfg.make_problem(), cfg.seed, replica, cfg.degree,
                         options_of(cfg))


def run_custom(cfg, out_dir=None):
    """Full EMLMC for every replica of the configured problem."""
    ests = _map(_custom_task, [(cfg, r) for r in range(cfg.replicas)], cfg.jobs)
    res = CustomResult(estimates=ests)
    for est in ests:
        res.level_rows += level_rows(est, "ensemble")
        res.audit_rows += audit_rows(est, "run", cfg.L)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if cfg.csv:
            for est in ests:
                fem.write_csv(os.path.join(out_dir, f"psi_r{est.replica}.csv"),
                              est.field, name="psi")
            write_rows(os.path.join(out_dir, f"levels_{cfg.L}.csv"), LEVEL_COLUMNS,
                       res.level_rows)
            if cfg.audit:
                write_rows(os.path.join(out_dir, "energy_audit.csv"), AUDIT_COLUMNS,
                           res.audit_rows)
        if cfg.vtk:
            fem.write_vtk(os.path.join(out_dir, "psi_E.vtk"),
                          {f"psi_r{e.replica}": e.field for e in ests})
    return res
