"""Lagrange P1/P2 finite elements on structured triangle meshes.

All bilinear forms are assembled on one shared sparsity pattern per space.
Stiffness entries are linear in the coefficient values sampled at the
quadrature nodes, which lets a whole batch of coefficients be assembled with
one sparse product and guarantees ``A(a) + A(b) == A(a + b)`` up to rounding.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import SIDES, locate_points
from .quadrature import DEGREE8

ASSEMBLY_RULE = DEGREE8
LOAD_RULE = DEGREE8
NORM_RULE = DEGREE8

_P2_EDGES = ((0, 1), (1, 2), (2, 0))


def basis_values(degree, bary):
    """Shape functions at barycentric points, shape (P, nloc)."""
    lam = np.asarray(bary, dtype=float)
    if degree == 1:
        return lam.copy()
    vals = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(3)]
    vals += [4.0 * lam[:, i] * lam[:, j] for i, j in _P2_EDGES]
    return np.column_stack(vals)


def basis_grad_coeffs(degree, bary):
    """Coefficients ``D`` with grad(phi_a) = sum_k D[p, a, k] grad(lambda_k)."""
    lam = np.asarray(bary, dtype=float)
    P = len(lam)
    if degree == 1:
        return np.broadcast_to(np.eye(3), (P, 3, 3)).copy()
    D = np.zeros((P, 6, 3))
    for i in range(3):
        D[:, i, i] = 4.0 * lam[:, i] - 1.0
    for a, (i, j) in enumerate(_P2_EDGES, start=3):
        D[:, a, i] = 4.0 * lam[:, j]
        D[:, a, j] = 4.0 * lam[:, i]
    return D


@dataclass(eq=False)
class FeSpace:
    """Continuous degree-``m`` Lagrange space on a :class:`TriMesh`."""

    mesh: object
    degree: int

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        mesh = self.mesh
        nv = mesh.n_vertices
        if self.degree == 1:
            self.elem_dofs = mesh.triangles.copy()
            self.dof_coords = mesh.vertices.copy()
        else:
            self.elem_dofs = np.hstack([mesh.triangles, nv + mesh.tri_edges])
            mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                         + mesh.vertices[mesh.edges[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mid])
        self.n_dof = len(self.dof_coords)

        self.boundary_tags = {}
        for side in SIDES:
            dofs = [mesh.boundary_tags[side]]
            if self.degree == 2:
                dofs.append(nv + mesh.boundary_edges(side))
            self.boundary_tags[side] = np.sort(np.concatenate(dofs))
        self.boundary_dofs = np.unique(np.concatenate(list(self.boundary_tags.values())))
        mask = np.ones(self.n_dof, dtype=bool)
        mask[self.boundary_dofs] = False
        self.interior_dofs = np.flatnonzero(mask)

        p = mesh.vertices[mesh.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.areas = 0.5 * det
        # rows of the inverse Jacobian give grad(lambda_1), grad(lambda_2)
        g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
        g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
        self.grad_lambda = np.stack([-g1 - g2, g1, g2], axis=1)  # (T, 3, 2)
        self._build_pattern()

    @property
    def n_local(self):
        return self.elem_dofs.shape[1]

    def _build_pattern(self):
        n, nloc = self.n_dof, self.n_local
        rows = np.repeat(self.elem_dofs, nloc, axis=1).ravel()
        cols = np.tile(self.elem_dofs, (1, nloc)).ravel()
        keys = rows * n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.concatenate(
            [[0], np.cumsum(np.bincount(uniq // n, minlength=n))]).astype(np.int32)
        self.nnz = len(uniq)
        ncoo = len(keys)
        self._scatter = sp.csr_matrix(
            (np.ones(ncoo), (inv, np.arange(ncoo))), shape=(self.nnz, ncoo))

    def matrix(self, data):
        """CSR matrix on the shared pattern from an (nnz,) data vector."""
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.n_dof, self.n_dof))

    def scatter(self, local):
        """Sum element matrices ``(T, nloc, nloc[, J])`` into pattern data."""
        flat = local.reshape(self.mesh.n_triangles * self.n_local ** 2, -1)
        out = self._scatter @ flat
        return out[:, 0] if local.ndim == 3 else out

    # quadrature caches ---------------------------------------------------
    def quad_points(self, rule=ASSEMBLY_RULE):
        """Physical quadrature nodes, shape (T * nq, 2), element-major."""
        p = self.mesh.vertices[self.mesh.triangles]  # (T, 3, 2)
        return np.einsum("qk,tkd->tqd", rule.points, p).reshape(-1, 2)

    def _basis_grads(self, rule):
        D = basis_grad_coeffs(self.degree, rule.points)  # (nq, nloc, 3)
        return np.einsum("qak,tkd->tqad", D, self.grad_lambda)

    @cached_property
    def _stiffness_kernel(self):
        rule = ASSEMBLY_RULE
        G = self._basis_grads(rule)
        wa = self.areas[:, None] * rule.weights[None, :]
        K = np.einsum("tq,tqad,tqbd->tqab", wa, G, G)
        K = 0.5 * (K + K.transpose(0, 1, 3, 2))  # exact symmetry
        T, nq, nloc = K.shape[:3]
        return K.reshape(T, nq, nloc * nloc)

    @cached_property
    def _load_operator(self):
        rule = LOAD_RULE
        phi = basis_values(self.degree, rule.points)  # (nq, nloc)
        T, nq = self.mesh.n_triangles, rule.n_points
        vals = (self.areas[:, None, None] * rule.weights[None, :, None]
                * phi[None, :, :])  # (T, nq, nloc)
        rows = np.broadcast_to(self.elem_dofs[:, None, :], vals.shape).ravel()
        cols = np.broadcast_to(
            np.arange(T * nq).reshape(T, nq, 1), vals.shape).ravel()
        return sp.csr_matrix((vals.ravel(), (rows, cols)),
                             shape=(self.n_dof, T * nq))

    @cached_property
    def laplace(self):
        """Unit-coefficient stiffness matrix."""
        return assemble_stiffness(self, 1.0)

    @cached_property
    def mass(self):
        return assemble_mass(self)


@dataclass
class NodalField:
    space: FeSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.space.n_dof:
            raise ValueError("field length does not match the space dimension")

    def __call__(self, pts):
        return evaluate(self.space, self.values, pts)


def coefficient_values(space, coeff, rule=ASSEMBLY_RULE):
    """Sample a coefficient at the quadrature nodes, shape (T * nq,)."""
    pts = space.quad_points(rule)
    if callable(coeff):
        return np.asarray(coeff(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(len(pts))
    return np.full(len(pts), float(coeff))


def stiffness_data(space, values):
    """Pattern data for coefficients given at assembly quadrature nodes.

    ``values`` has shape (T * nq,) or (T * nq, J); the result is (nnz,) or
    (nnz, J).
    """
    K = space._stiffness_kernel
    T, nq, nl2 = K.shape
    v = np.asarray(values, dtype=float)
    batched = v.ndim == 2
    v = v.reshape(T, nq, -1)
    local = np.einsum("tqk,tqj->tkj", K, v)
    out = space._scatter @ local.reshape(T * nl2, -1)
    return out if batched else out[:, 0]


def assemble_stiffness(space, coeff):
    """Matrix of ``(coeff grad u, grad v)``; ``coeff`` may be sign-indefinite."""
    return space.matrix(stiffness_data(space, coefficient_values(space, coeff)))


def assemble_mass(space):
    rule = ASSEMBLY_RULE
    phi = basis_values(space.degree, rule.points)
    ref = np.einsum("q,qa,qb->ab", rule.weights, phi, phi)
    ref = 0.5 * (ref + ref.T)
    local = space.areas[:, None, None] * ref[None]
    return space.matrix(space.scatter(local))


def load_from_values(space, values):
    """Load vector(s) from source values at the ``LOAD_RULE`` nodes."""
    return space._load_operator @ values


def assemble_load(space, f):
    return load_from_values(space, coefficient_values(space, f, LOAD_RULE))


def interpolate(space, func):
    """Nodal interpolant of ``func(x, y)``."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    return np.asarray(func(x, y), dtype=float) * np.ones(space.n_dof)


def evaluation_matrix(space, pts):
    """Sparse (P, n_dof) matrix mapping dof values to point values."""
    tri, bary = locate_points(space.mesh, pts)
    phi = basis_values(space.degree, bary)
    rows = np.repeat(np.arange(len(tri)), space.n_local)
    cols = space.elem_dofs[tri].ravel()
    return sp.csr_matrix((phi.ravel(), (rows, cols)),
                         shape=(len(tri), space.n_dof))


def evaluate(space, values, pts):
    return evaluation_matrix(space, pts) @ values


# boundary conditions -----------------------------------------------------
@dataclass
class DirichletSplit:
    """Interior/boundary partition of a system matrix."""

    A_II: sp.csr_matrix
    A_IB: sp.csr_matrix
    interior: np.ndarray
    boundary: np.ndarray

    @classmethod
    def of(cls, A, space):
        A = sp.csr_matrix(A)
        I, B = space.interior_dofs, space.boundary_dofs
        A_I = A[I]
        return cls(A_II=A_I[:, I].tocsr(), A_IB=A_I[:, B].tocsr(),
                   interior=I, boundary=B)

    def lift(self, rhs, g_B):
        """Interior right-hand side(s) after moving boundary values over."""
        return rhs[self.interior] - self.A_IB @ g_B

    def expand(self, x_I, g_B):
        n = len(self.interior) + len(self.boundary)
        shape = (n,) + x_I.shape[1:]
        u = np.empty(shape)
        u[self.interior] = x_I
        u[self.boundary] = g_B
        return u


def boundary_values(space, g, t=None):
    """Nodal values of boundary data ``g(x, y[, t])`` at boundary dofs."""
    xy = space.dof_coords[space.boundary_dofs]
    args = (xy[:, 0], xy[:, 1]) if t is None else (xy[:, 0], xy[:, 1], t)
    return np.asarray(g(*args), dtype=float) * np.ones(len(xy))


def apply_dirichlet(system, rhs, g, space, t=None):
    """Restrict ``system`` to the interior and lift boundary data into ``rhs``.

    Returns ``(A_II, rhs_I, g_B, split)``; ``rhs`` may hold several columns.
    """
    split = DirichletSplit.of(system, space)
    g_B = boundary_values(space, g, t)
    if np.ndim(rhs) == 2:
        rhs_I = split.lift(rhs, g_B[:, None] * np.ones((1, rhs.shape[1])))
    else:
        rhs_I = split.lift(rhs, g_B)
    return split.A_II, rhs_I, g_B, split


# norms -------------------------------------------------------------------
def _in_rule(space, values, rule):
    phi = basis_values(space.degree, rule.points)  # (nq, nloc)
    local = values[space.elem_dofs]  # (T, nloc[, J])
    return np.einsum("qa,ta...->tq...", phi, local)


def _grad_in_rule(space, values, rule):
    G = space._basis_grads(rule)  # (T, nq, nloc, 2)
    local = values[space.elem_dofs]
    return np.einsum("tqad,ta...->tqd...", G, local)


def _weights(space, rule):
    return space.areas[:, None] * rule.weights[None, :]


def norm_error_L2(field, exact=None, rule=NORM_RULE):
    """L2 norm of ``field - exact``; ``exact(x, y)`` may be omitted."""
    space, values = field.space, field.values
    uh = _in_rule(space, values, rule)
    if exact is not None:
        pts = space.quad_points(rule)
        ex = np.asarray(exact(pts[:, 0], pts[:, 1]), dtype=float)
        ex = ex * np.ones(len(pts))
        uh = uh - ex.reshape(uh.shape[:2] + (1,) * (uh.ndim - 2))
    w = _weights(space, rule)
    return np.sqrt(np.einsum("tq,tq...->...", w, uh ** 2))


def norm_error_H1semi(field, exact_grad=None, rule=NORM_RULE):
    """L2 norm of ``grad(field) - exact_grad``; ``exact_grad`` returns (gx, gy)."""
    space, values = field.space, field.values
    g = _grad_in_rule(space, values, rule)  # (T, nq, 2[, J])
    if exact_grad is not None:
        pts = space.quad_points(rule)
        gx, gy = exact_grad(pts[:, 0], pts[:, 1])
        ex = np.stack([np.asarray(gx) * np.ones(len(pts)),
                       np.asarray(gy) * np.ones(len(pts))], axis=-1)
        ex = ex.reshape(g.shape[:3] + (1,) * (g.ndim - 3))
        g = g - ex
    w = _weights(space, rule)
    return np.sqrt(np.einsum("tq,tqd...->...", w, g ** 2))


# inter-level transfer ----------------------------------------------------
def prolongation(coarse, fine):
    """Sparse matrix taking coarse dof values to fine dof values."""
    if coarse.degree > fine.degree or not fine.mesh.is_nested_in(coarse.mesh):
        raise ValueError(
            f"spaces are not nested: n_side {coarse.mesh.n_side} (P{coarse.degree})"
            f" -> {fine.mesh.n_side} (P{fine.degree})")
    P = evaluation_matrix(coarse, fine.dof_coords)
    P.data[np.abs(P.data) < 1e-15] = 0.0
    P.eliminate_zeros()
    return P


def interpolate_to(field, target):
    return NodalField(target, prolongation(field.space, target) @ field.values)


# file output -------------------------------------------------------------
def write_csv(path, field, name="value"):
    vals = np.asarray(field.values)
    with open(path, "w") as fh:
        fh.write(f"x,y,{name}\n")
        for (x, y), v in zip(field.space.dof_coords, vals):
            fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


def write_vtk(path, fields, title="emlmc field"):
    """Vertex values of one or more fields ``{name: NodalField}`` as VTK."""
    from .mesh import write_vtk as _mesh_vtk

    fields = dict(fields)
    mesh = next(iter(fields.values())).space.mesh
    data = {k: np.asarray(f.values)[: mesh.n_vertices] for k, f in fields.items()}
    _mesh_vtk(path, mesh, point_data=data, title=title)
