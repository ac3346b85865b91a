"""Structured triangulations of the unit square and their refinement hierarchy.

Every cell of an ``n x n`` grid is split along its bottom-left to top-right
diagonal, so a mesh with ``n`` cells per side has mesh size ``sqrt(2)/n`` and
uniform refinement doubles ``n``.
"""
from dataclasses import dataclass, field

import numpy as np

SIDES = ("left", "right", "bottom", "top")
_ROUND_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TriMesh:
    level: int
    n_side: int
    h: float
    vertices: np.ndarray  # (V, 2)
    triangles: np.ndarray  # (T, 3), counter-clockwise
    edges: np.ndarray  # (E, 2), sorted vertex pairs
    tri_edges: np.ndarray  # (T, 3), edges (v0,v1), (v1,v2), (v2,v0)
    boundary_tags: dict = field(repr=False)  # side -> vertex indices

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_edges(self, side):
        """Indices of edges lying on ``side``."""
        on = np.zeros(self.n_vertices, dtype=bool)
        on[self.boundary_tags[side]] = True
        return np.flatnonzero(on[self.edges[:, 0]] & on[self.edges[:, 1]])

    def is_nested_in(self, other):
        """True if every triangle of ``other`` is a union of triangles of self."""
        return self.n_side % other.n_side == 0


def admissible_n(h0):
    """Return n with ``h0 == sqrt(2)/n``; raise if no such integer exists."""
    if not h0 > 0:
        raise ValueError(f"mesh size must be positive, got {h0!r}")
    ratio = np.sqrt(2.0) / h0
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > _ROUND_TOL * max(ratio, 1.0):
        nearest = max(n, 1)
        raise ValueError(
            f"h0={h0!r} is not of the form sqrt(2)/n; nearest admissible "
            f"n={nearest} (h0={np.sqrt(2.0) / nearest!r})"
        )
    return n


def build_single(h0):
    return _structured(admissible_n(h0), 0, h0)


def build_hierarchy(h0, L):
    """Meshes for levels 0..L with ``h_l = 2**-l * h0``."""
    if L < 0:
        raise ValueError(f"L must be >= 0, got {L}")
    n0 = admissible_n(h0)
    return [_structured(n0 * 2 ** l, l, h0 / 2 ** l) for l in range(L + 1)]


def _structured(n, level, h):
    idx = np.arange(n + 1)
    X, Y = np.meshgrid(idx / n, idx / n, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (i + j * (n + 1)).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])

    local = tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)

    x, y = vertices[:, 0], vertices[:, 1]
    tags = {
        "left": np.flatnonzero(_close(x, 0.0)),
        "right": np.flatnonzero(_close(x, 1.0)),
        "bottom": np.flatnonzero(_close(y, 0.0)),
        "top": np.flatnonzero(_close(y, 1.0)),
    }
    return TriMesh(level=level, n_side=n, h=h, vertices=vertices,
                   triangles=tris, edges=edges, tri_edges=tri_edges,
                   boundary_tags=tags)


def _close(a, b):
    return np.abs(a - b) < 1e-14


def locate_points(mesh, pts):
    """Containing triangle and barycentric coordinates for an array of points.

    Points on shared edges are assigned to one of the adjacent triangles.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if np.any(pts < -1e-14) or np.any(pts > 1.0 + 1e-14):
        bad = pts[np.any((pts < -1e-14) | (pts > 1.0 + 1e-14), axis=1)][0]
        raise ValueError(f"point {tuple(bad)} lies outside the unit square")
    n = mesh.n_side
    sx, sy = pts[:, 0] * n, pts[:, 1] * n
    i = np.clip(np.floor(sx).astype(np.int64), 0, n - 1)
    j = np.clip(np.floor(sy).astype(np.int64), 0, n - 1)
    s, t = sx - i, sy - j
    lower = t <= s
    cell = i + j * n
    tri = 2 * cell + (~lower)
    bary = np.where(
        lower[:, None],
        np.column_stack([1.0 - s, s - t, t]),
        np.column_stack([1.0 - t, s, t - s]),
    )
    bary = np.clip(bary, 0.0, 1.0)
    bary /= bary.sum(axis=1, keepdims=True)
    return tri, bary


def locate_point(mesh, x):
    tri, bary = locate_points(mesh, np.asarray(x, dtype=float)[None, :])
    return int(tri[0]), bary[0]


def write_vtk(path, mesh, point_data=None, title="emlmc mesh"):
    """Legacy ASCII VTK unstructured grid with linear triangles (type 5).

    ``point_data`` maps names to per-vertex arrays.
    """
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices]
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(v)) for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
