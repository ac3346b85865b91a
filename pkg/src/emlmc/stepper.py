"""Second-order ensemble time stepping on one group of samples.

All members share the matrix ``3/(2 dt) M + A(abar)``; each member's
deviation ``A(a_j - abar)`` acts on the extrapolated state
``2 u^n - u^{n-1}`` on the right-hand side. The independent reference
pipeline instead factors ``3/(2 dt) M + A(a_j)`` for every sample.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .kernels import shared_pattern_spmm
from .linalg import LinearSolver, SolverError, factorize

BOOTSTRAP_MODES = ("analytic", "backward_euler_ensemble")


@dataclass
class StepperOptions:
    solver: str = "cholesky"
    tol: float = 1e-10
    bootstrap: str = "backward_euler_ensemble"
    audit: bool = False


class GroupOperators:
    """Matrices for one group on one space and time step."""

    def __init__(self, space, group, dt, options=None):
        self.options = options or StepperOptions()
        self.space, self.group, self.dt = space, group, dt
        pts = space.quad_points(fem.ASSEMBLY_RULE)
        vals = group.values(pts[:, 0], pts[:, 1]).T  # (Pq, J)
        abar = vals.mean(axis=1)
        self.M = space.mass
        self.A_bar = space.matrix(fem.stiffness_data(space, abar))
        self.dev_data = fem.stiffness_data(space, vals - abar[:, None])  # (nnz, J)
        self.trivial_dev = group.size == 1
        system = (1.5 / dt) * self.M + self.A_bar
        self.split = fem.DirichletSplit.of(system, space)
        self.solver = LinearSolver(self.split.A_II, method=self.options.solver,
                                   tol=self.options.tol)

    def member_stiffness(self, j):
        return self.space.matrix(self.dev_data[:, j])

    def deviation(self, W):
        """Stack of ``A(a_j - abar) @ W[:, j]``."""
        return shared_pattern_spmm(self.space.indptr, self.space.indices,
                                   self.dev_data, W)


@dataclass
class GroupRun:
    """Snapshots (by step index) and diagnostics of one group trajectory."""

    dt: float
    n_steps: int
    snapshots: dict
    iterations: int = 0
    wall_time: float = 0.0  # excludes the energy audit
    audit: dict = field(default_factory=dict)


def _data(problem, samples, space, t, which):
    xy = space.dof_coords
    if which == "bc":
        xb = xy[space.boundary_dofs]
        return problem.boundary(samples, xb[:, 0], xb[:, 1], t)
    if which == "u0":
        return problem.initial(samples, xy[:, 0], xy[:, 1])
    if which == "exact":
        if problem.exact is None:
            raise ValueError("analytic bootstrap needs an exact solution")
        return problem.exact(samples, xy[:, 0], xy[:, 1], t)
    raise KeyError(which)


class _Forcing:
    """Per-member load vectors at a given time."""

    def __init__(self, problem, space, samples):
        self.problem, self.space, self.samples = problem, space, samples
        self.pts = space.quad_points(fem.LOAD_RULE)
        self.zero = bool(getattr(problem, "zero_forcing", False))

    def load(self, t):
        if self.zero:
            return np.zeros((self.space.n_dof, len(self.samples)))
        f = self.problem.forcing(self.samples, self.pts[:, 0], self.pts[:, 1], t)
        return fem.load_from_values(self.space, f)

    def l2_sq(self, t):
        if self.zero:
            return np.zeros(len(self.samples))
        f = self.problem.forcing(self.samples, self.pts[:, 0], self.pts[:, 1], t)
        w = (self.space.areas[:, None] * fem.LOAD_RULE.weights[None, :]).ravel()
        return w @ f ** 2


def initial_state(problem, space, samples):
    U0 = _data(problem, samples, space, 0.0, "u0")
    U0[space.boundary_dofs] = _data(problem, samples, space, 0.0, "bc")
    return U0


def _bdf2_rhs(M, Un, Unm1, dt, load):
    return M @ (4.0 * Un - Unm1) / (2.0 * dt) + load


def _check_steps(T, dt):
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-12 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def _record_times(n_steps, record_steps):
    steps = {0, n_steps} if record_steps is None else set(record_steps)
    bad = [s for s in steps if s < 0 or s > n_steps]
    if bad:
        raise ValueError(f"requested steps {bad} outside 0..{n_steps}")
    return steps


def run_group(group, space, dt, problem, options=None, record_steps=None,
              operators=None):
    """Advance every member of ``group`` from t=0 to ``problem.T``.

    Returns a :class:`GroupRun` with the state blocks at ``record_steps``
    (default: first and last step).
    """
    options = options or StepperOptions()
    if options.bootstrap not in BOOTSTRAP_MODES:
        raise ValueError(f"unknown bootstrap mode {options.bootstrap!r}")
    start = time.perf_counter()
    N = _check_steps(problem.T, dt)
    steps = _record_times(N, record_steps)
    ops = operators or GroupOperators(space, group, dt, options)
    samples = group.samples
    forcing = _Forcing(problem, space, samples)
    M, split = ops.M, ops.split

    U0 = initial_state(problem, space, samples)
    if options.bootstrap == "analytic":
        U1 = _data(problem, samples, space, dt, "exact")
    else:
        U1 = _backward_euler(ops, U0, forcing.load(dt),
                             _data(problem, samples, space, dt, "bc"))
    t_a = time.perf_counter()
    audit = _EnergyAudit(ops, forcing, U0, U1) if options.audit else None
    audit_time = time.perf_counter() - t_a
    snaps = {}
    for s, U in ((0, U0), (1, U1)):
        if s in steps:
            snaps[s] = U.copy()
    Unm1, Un = U0, U1
    for n in range(1, N):
        t_next = (n + 1) * dt
        g_next = _data(problem, samples, space, t_next, "bc")
        load = forcing.load(t_next)
        rhs = _bdf2_rhs(M, Un, Unm1, dt, load)
        if not ops.trivial_dev:
            rhs -= ops.deviation(2.0 * Un - Unm1)
        try:
            X = ops.solver.solve(split.lift(rhs, g_next))
        except SolverError as exc:
            raise SolverError(f"step {n + 1}, members {group.indices}: {exc}",
                              residual=exc.residual) from exc
        Unp1 = split.expand(X, g_next)
        if audit is not None:
            t_a = time.perf_counter()
            audit.add_step(n, Unm1, Un, Unp1, load)
            audit_time += time.perf_counter() - t_a
        if n + 1 in steps:
            snaps[n + 1] = Unp1.copy()
        Unm1, Un = Un, Unp1
    run = GroupRun(dt=dt, n_steps=N, snapshots=snaps,
                   iterations=ops.solver.iterations,
                   wall_time=time.perf_counter() - start - audit_time)
    if audit is not None:
        run.audit = audit.finish()
    return run


def _backward_euler(ops, U0, load, g1):
    """First step with the shared matrix ``M/dt + A(abar)``."""
    dt, M = ops.dt, ops.M
    split = fem.DirichletSplit.of(M / dt + ops.A_bar, ops.space)
    rhs = M @ U0 / dt + load
    if not ops.trivial_dev:
        rhs -= ops.deviation(U0)
    solver = LinearSolver(split.A_II, method=ops.options.solver, tol=ops.options.tol)
    return split.expand(solver.solve(split.lift(rhs, g1)), g1)


def bootstrap_first_step(group, space, dt, problem, mode="backward_euler_ensemble",
                         options=None):
    """State block at t = dt from the initial data."""
    options = options or StepperOptions(bootstrap=mode)
    samples = group.samples
    if mode == "analytic":
        return _data(problem, samples, space, dt, "exact")
    if mode != "backward_euler_ensemble":
        raise ValueError(f"unknown bootstrap mode {mode!r}")
    ops = GroupOperators(space, group, dt, options)
    forcing = _Forcing(problem, space, samples)
    U0 = initial_state(problem, space, samples)
    return _backward_euler(ops, U0, forcing.load(dt),
                           _data(problem, samples, space, dt, "bc"))


def step(ops, Un, Unm1, t_next, problem):
    """One ensemble BDF2 step for all members; returns the new state block."""
    samples = ops.group.samples
    space = ops.space
    g_next = _data(problem, samples, space, t_next, "bc")
    load = _Forcing(problem, space, samples).load(t_next)
    rhs = _bdf2_rhs(ops.M, Un, Unm1, ops.dt, load)
    if not ops.trivial_dev:
        rhs -= ops.deviation(2.0 * Un - Unm1)
    return ops.split.expand(ops.solver.solve(ops.split.lift(rhs, g_next)), g_next)


def run_independent(samples, space, dt, problem, options=None, record_steps=None):
    """Standard BDF2 per sample, each with its own factored matrix.

    Returns one :class:`GroupRun` whose snapshot columns follow ``samples``.
    """
    options = options or StepperOptions()
    start = time.perf_counter()
    N = _check_steps(problem.T, dt)
    steps = _record_times(N, record_steps)
    pts = space.quad_points(fem.ASSEMBLY_RULE)
    M = space.mass
    snaps = {s: np.empty((space.n_dof, len(samples))) for s in steps}
    iterations = 0
    for j, sample in enumerate(samples):
        vals = sample(pts[:, 0], pts[:, 1])
        A = space.matrix(fem.stiffness_data(space, vals))
        one = [sample]
        forcing = _Forcing(problem, space, one)
        U0 = initial_state(problem, space, one)
        if options.bootstrap == "analytic":
            U1 = _data(problem, one, space, dt, "exact")
        else:
            g1 = _data(problem, one, space, dt, "bc")
            split1 = fem.DirichletSplit.of(M / dt + A, space)
            rhs = M @ U0 / dt + forcing.load(dt)
            s1 = LinearSolver(split1.A_II, method=options.solver, tol=options.tol)
            U1 = split1.expand(s1.solve(split1.lift(rhs, g1)), g1)
        split = fem.DirichletSplit.of((1.5 / dt) * M + A, space)
        solver = LinearSolver(split.A_II, method=options.solver, tol=options.tol)
        for s, U in ((0, U0), (1, U1)):
            if s in steps:
                snaps[s][:, j] = U[:, 0]
        Unm1, Un = U0, U1
        for n in range(1, N):
            t_next = (n + 1) * dt
            g_next = _data(problem, one, space, t_next, "bc")
            rhs = _bdf2_rhs(M, Un, Unm1, dt, forcing.load(t_next))
            Unp1 = split.expand(solver.solve(split.lift(rhs, g_next)), g_next)
            if n + 1 in steps:
                snaps[n + 1][:, j] = Unp1[:, 0]
            Unm1, Un = Un, Unp1
        iterations += solver.iterations
    return GroupRun(dt=dt, n_steps=N, snapshots=snaps, iterations=iterations,
                    wall_time=time.perf_counter() - start)


class _EnergyAudit:
    """Accumulates both sides of the discrete energy inequality step by step.

    Boundary data are shifted out: with ``G^n`` the nodal boundary lift,
    ``w^n = u^n - G^n`` solves the same scheme with homogeneous boundary
    values and a forcing functional ``F^{n+1}`` on interior test functions.
    Its dual norm is evaluated exactly through the interior Laplacian,
    ``|F|_{-1,h}^2 = F^T K_II^{-1} F``. When the boundary data vanish the
    L2 norm of ``f`` is accumulated as well.
    """

    def __init__(self, ops, forcing, U0, U1):
        self.ops, self.forcing = ops, forcing
        space = ops.space
        self.I = space.interior_dofs
        self.K = space.laplace
        self._K_solver = factorize(fem.DirichletSplit.of(self.K, space).A_II)
        J = ops.group.size
        self.dual_sum = np.zeros(J)
        self.l2_sum = np.zeros(J)
        self.grad_sum = np.zeros(J)
        self.bc_zero = not (np.any(self._lift(U0)) or np.any(self._lift(U1)))
        theta, tplus = ops.group.theta_hat, ops.group.theta_plus_hat
        self.c = ops.dt / (2.0 * (theta - 3.0 * tplus))
        w0, w1 = U0 - self._lift(U0), U1 - self._lift(U1)
        M, K, dt = ops.M, self.K, ops.dt
        self.init = (0.25 * self._energy(M, w1) + 0.25 * self._energy(M, 2.0 * w1 - w0)
                     + 0.5 * theta * dt * self._energy(K, w1)
                     + theta / 6.0 * dt * self._energy(K, w0))
        self.history = []

    def _lift(self, U):
        G = np.zeros_like(U)
        B = self.ops.space.boundary_dofs
        G[B] = U[B]
        return G

    def _energy(self, A, W):
        return np.einsum("ij,ij->j", W, A @ W)

    def add_step(self, n, Unm1, Un, Unp1, load):
        """Account for the step producing ``u^{n+1}``."""
        ops, dt, I = self.ops, self.ops.dt, self.I
        Gm1, G0, G1 = self._lift(Unm1), self._lift(Un), self._lift(Unp1)
        if np.any(G1):
            self.bc_zero = False
        F = (load - ops.M @ (3.0 * G1 - 4.0 * G0 + Gm1) / (2.0 * dt)
             - ops.A_bar @ G1)
        if not ops.trivial_dev:
            F -= ops.deviation(2.0 * G0 - Gm1)
        F_I = F[I]
        self.dual_sum += np.einsum("ij,ij->j", F_I, self._K_solver.solve(F_I))
        if self.bc_zero:
            self.l2_sum += self.forcing.l2_sq((n + 1) * dt)
        self.grad_sum += self._energy(self.K, Un - G0)

        theta, tplus = ops.group.theta_hat, ops.group.theta_plus_hat
        w, wm = Unp1 - G1, Un - G0
        lhs = (0.25 * self._energy(ops.M, w) + 0.25 * self._energy(ops.M, 2.0 * w - wm)
               + 0.5 * theta * dt * self._energy(self.K, w)
               + (theta / 3.0 - tplus) * dt * self.grad_sum)
        rhs = self.c * self.dual_sum + self.init
        l2 = self.c * self.l2_sum + self.init if self.bc_zero else None
        self.history.append((n + 1, float(lhs.mean()), float(rhs.mean()),
                             float(l2.mean()) if l2 is not None else float("nan")))

    def finish(self):
        group = self.ops.group
        if self.history:
            step, lhs, rhs, l2 = self.history[-1]
        else:
            step, lhs, rhs, l2 = 1, float("nan"), float("nan"), float("nan")
        return {
            "theta_hat": group.theta_hat,
            "theta_plus_hat": group.theta_plus_hat,
            "members": group.size,
            "dt": self.ops.dt,
            "n_dof": self.ops.space.n_dof,
            "step": step,
            "lhs": lhs,
            "rhs": rhs,
            "rhs_l2_surrogate": l2,
            "holds": bool(lhs <= rhs * (1.0 + 1e-8)) if self.history else True,
            "history": list(self.history),
        }
