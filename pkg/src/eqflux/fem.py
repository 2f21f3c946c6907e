"""P1 Lagrange discretization of the Poisson problems.

Covers data projection onto the discrete spaces, stiffness/load assembly,
the simplified-domain solve, the feature/extension solve with trace
coupling, and cross-mesh energy norms against reference solutions.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .geometry import DomainSpec, FeatureSpec, _point_on_segment, gauss_legendre
from .mesh import Mesh

# Degree-4 triangle rule (6 points, barycentric), weights normalized to 1.
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
TRI_QP = np.array(
    [
        [1 - 2 * _A1, _A1, _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [_A1, _A1, 1 - 2 * _A1],
        [1 - 2 * _A2, _A2, _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [_A2, _A2, 1 - 2 * _A2],
    ]
)
TRI_QW = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

# P1 mass on a triangle is area/12 * (1 + identity).
_M3 = (np.ones((3, 3)) + np.eye(3)) / 12.0
_M3_INV = 0.25 * (4.0 * np.eye(3) - np.ones((3, 3))) * 12.0
_GL4_X, _GL4_W = gauss_legendre(4)


class CouplingError(RuntimeError):
    """Feature mesh does not match the trace-source mesh on gamma0."""


class CoverageError(RuntimeError):
    """A quadrature point could not be located in the coarse field."""


@dataclass
class ScalarField:
    """P1 nodal field on a mesh (immutable once built)."""

    mesh: Mesh
    nodal_values: np.ndarray

    def __post_init__(self):
        self.nodal_values = np.asarray(self.nodal_values, dtype=float)
        if len(self.nodal_values) != self.mesh.n_vertices:
            raise ValueError("nodal value count does not match the mesh")
        self._grad = None

    def gradients(self) -> np.ndarray:
        """Elementwise constant gradient, shape (T, 2)."""
        if self._grad is None:
            vals = self.nodal_values[self.mesh.triangles]  # (T, 3)
            self._grad = np.einsum("tq,tqd->td", vals, self.mesh.lam_grads)
        return self._grad

    def eval(self, points, tris=None, bary=None):
        if tris is None:
            tris, bary = self.mesh.locate_points(points)
            if (tris < 0).any():
                raise CoverageError("point outside the field's mesh")
        vals = self.nodal_values[self.mesh.triangles[tris]]
        return np.einsum("nq,nq->n", vals, bary)


@dataclass
class CompositeField:
    """Piecewise field over several meshes (simplified domain + features)."""

    pieces: list

    def gradient_at(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full((len(pts), 2), np.nan)
        todo = np.arange(len(pts))
        for piece in self.pieces:
            if len(todo) == 0:
                break
            tris, _ = piece.mesh.locate_points(pts[todo])
            hit = tris >= 0
            if hit.any():
                g = piece.gradients()
                out[todo[hit]] = g[tris[hit]]
            todo = todo[~hit]
        if len(todo):
            raise CoverageError(
                f"{len(todo)} quadrature points not covered by the coarse field "
                f"(first: {pts[todo[0]]})"
            )
        return out


def _call_data(fn, x, y, nx=None, ny=None):
    """Evaluate a scalar data function; accepts (x, y) or (x, y, nx, ny)."""
    if np.isscalar(fn) or isinstance(fn, (int, float)):
        return float(fn)
    try:
        nargs = len(inspect.signature(fn).parameters)
    except (TypeError, ValueError):
        nargs = 2
    if nargs >= 4 and nx is not None:
        return fn(x, y, nx, ny)
    return fn(x, y)


@dataclass
class ProblemData:
    """Projected problem data tied to one mesh.

    f_proj holds the per-triangle P1 projection of the forcing in the
    barycentric basis; gn_proj the per-Neumann-edge P1 projection of the
    Neumann datum as endpoint values with respect to the global edge
    orientation.
    """

    mesh: Mesh
    f_proj: np.ndarray  # (T, 3)
    dirichlet_vertices: np.ndarray
    dirichlet_values: np.ndarray
    neumann_edges: np.ndarray
    gn_proj: np.ndarray  # (len(neumann_edges), 2)
    dirichlet_edges: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    def neumann_map(self) -> dict:
        if not hasattr(self, "_neumann_map"):
            self._neumann_map = {int(e): k for k, e in enumerate(self.neumann_edges)}
        return self._neumann_map

    def dirichlet_edge_set(self) -> set:
        if not hasattr(self, "_dirichlet_set"):
            self._dirichlet_set = set(int(e) for e in self.dirichlet_edges)
        return self._dirichlet_set


def quad_points(mesh: Mesh) -> np.ndarray:
    """Physical degree-4 quadrature points per triangle, shape (T, 6, 2)."""
    v = mesh.vertices[mesh.triangles]  # (T, 3, 2)
    return np.einsum("qk,tkd->tqd", TRI_QP, v)


def project_forcing(f, mesh: Mesh) -> np.ndarray:
    """Elementwise L2 projection of the forcing onto P1, degree-4 quadrature."""
    pts = quad_points(mesh)
    fx = _eval_on_points(f, pts.reshape(-1, 2)).reshape(mesh.n_triangles, len(TRI_QW))
    # moments m_q = area * sum_w w f(x_w) lam_q(x_w)
    m = np.einsum("tw,w,wq->tq", fx, TRI_QW, TRI_QP) * mesh.areas[:, None]
    return np.einsum("qk,tk->tq", _M3_INV, m) / mesh.areas[:, None]


def _eval_on_points(fn, pts):
    if np.isscalar(fn) or isinstance(fn, (int, float)):
        return np.full(len(pts), float(fn))
    x, y = pts[:, 0], pts[:, 1]
    try:
        out = np.asarray(fn(x, y), dtype=float)
        if out.shape == x.shape:
            return out
    except Exception:
        pass
    return np.array([float(fn(float(px), float(py))) for px, py in pts])


def _project_edge_datum(g, mesh: Mesh, e: int) -> np.ndarray:
    """P1 projection of g on edge e; returns endpoint values (s=0, s=1)."""
    i, j = mesh.edge_vertices[e]
    a, b = mesh.vertices[i], mesh.vertices[j]
    n_out = mesh.edge_outward_sign[e] * mesh.edge_normals[e]
    pts = a[None, :] + _GL4_X[:, None] * (b - a)[None, :]
    gv = np.array(
        [_call_data(g, p[0], p[1], n_out[0], n_out[1]) for p in pts], dtype=float
    )
    m0 = float(np.sum(_GL4_W * gv * (1.0 - _GL4_X)))
    m1 = float(np.sum(_GL4_W * gv * _GL4_X))
    return np.array([4.0 * m0 - 2.0 * m1, -2.0 * m0 + 4.0 * m1])


def _gamma0_footprints(domain: DomainSpec, include=None):
    """gamma0 polylines of excluded boundary/positive features with their g0."""
    from .geometry import NEGATIVE_INTERNAL, partition_feature_boundary

    out = []
    include = include if include is not None else [False] * len(domain.features)
    for feat, inc in zip(domain.features, include):
        if inc or feat.kind == NEGATIVE_INTERNAL:
            continue
        parts = partition_feature_boundary(feat, domain)
        if parts["gamma0"]:
            out.append((feat, parts["gamma0"]))
    return out


def project_data(domain: DomainSpec, mesh: Mesh, include=None) -> ProblemData:
    """Project forcing and boundary data for the (partially) defeatured solve.

    Boundary edges route to data by marker: Dirichlet edges take g_D,
    outer Neumann edges take g (or a feature's g0 on the gamma0 footprint of
    an excluded feature), and feature-marked edges take that feature's datum.
    """
    f_proj = project_forcing(domain.f, mesh)
    feat_by_id = {f.id: f for f in domain.features}
    footprints = _gamma0_footprints(domain, include)

    def g0_for(mid):
        for feat, lines in footprints:
            for line in lines:
                for k in range(len(line) - 1):
                    if _point_on_segment(mid, line[k], line[k + 1]):
                        return feat.neumann_g0
        return None

    dir_edges, neu_edges, gn = [], [], []
    for e in mesh.boundary_edge_ids:
        e = int(e)
        m = mesh.edge_markers[e]
        i, j = mesh.edge_vertices[e]
        mid = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
        if m is None:
            raise ValueError(f"unmarked boundary edge {e}")
        if m.kind == "dirichlet":
            dir_edges.append(e)
            continue
        if m.kind == "neumann":
            g = g0_for(mid)
            g = domain.g_neumann if g is None else g
        else:  # feature-marked
            feat = feat_by_id[m.feature_id]
            g = feat.neumann_g0 if m.part == "gamma0" else feat.neumann_g
        neu_edges.append(e)
        gn.append(_project_edge_datum(g, mesh, e))

    dir_vertices = sorted(
        {int(v) for e in dir_edges for v in mesh.edge_vertices[e]}
    )
    dv = np.asarray(dir_vertices, dtype=np.int64)
    vals = np.array(
        [
            _call_data(domain.g_dirichlet, mesh.vertices[v, 0], mesh.vertices[v, 1])
            for v in dv
        ],
        dtype=float,
    )
    return ProblemData(
        mesh=mesh,
        f_proj=f_proj,
        dirichlet_vertices=dv,
        dirichlet_values=vals,
        neumann_edges=np.asarray(neu_edges, dtype=np.int64),
        gn_proj=np.asarray(gn, dtype=float).reshape(-1, 2),
        dirichlet_edges=np.asarray(dir_edges, dtype=np.int64),
    )


def feature_problem_data(
    feature: FeatureSpec, trace_source: ScalarField, feature_mesh: Mesh, forcing=0.0
) -> ProblemData:
    """Problem data for the feature (extension) solve.

    gamma0 edges are Dirichlet with the trace of the simplified-domain
    solution (vertices must coincide within 1e-12); gammaS and gamma carry
    the feature's Neumann datum, gammaTilde the extension's.
    """
    mesh = feature_mesh
    f_proj = project_forcing(forcing, mesh)
    dir_edges, neu_edges, gn = [], [], []
    for e in mesh.boundary_edge_ids:
        e = int(e)
        m = mesh.edge_markers[e]
        if m is None or m.kind != "feature":
            raise ValueError(f"feature mesh boundary edge {e} lacks a feature marker")
        if m.part == "gamma0":
            dir_edges.append(e)
            continue
        if m.part == "gammaTilde":
            g = feature.extension.neumann_g_tilde
        else:  # gamma, gammaS, gammaR
            g = feature.neumann_g
        neu_edges.append(e)
        gn.append(_project_edge_datum(g, mesh, e))

    src = trace_source.mesh
    dir_vertices = sorted({int(v) for e in dir_edges for v in mesh.edge_vertices[e]})
    vals = []
    for v in dir_vertices:
        p = mesh.vertices[v]
        hit = src.locate_point(p)
        if hit is None:
            raise CouplingError(f"gamma0 vertex {p} outside the trace-source mesh")
        tri, _ = hit
        d = np.linalg.norm(src.vertices[src.triangles[tri]] - p[None, :], axis=1)
        k = int(np.argmin(d))
        if d[k] > 1e-12:
            raise CouplingError(
                f"gamma0 vertex {p} does not coincide with a trace-source vertex "
                f"(nearest at distance {d[k]:.3e})"
            )
        vals.append(trace_source.nodal_values[src.triangles[tri][k]])
    return ProblemData(
        mesh=mesh,
        f_proj=f_proj,
        dirichlet_vertices=np.asarray(dir_vertices, dtype=np.int64),
        dirichlet_values=np.asarray(vals, dtype=float),
        neumann_edges=np.asarray(neu_edges, dtype=np.int64),
        gn_proj=np.asarray(gn, dtype=float).reshape(-1, 2),
        dirichlet_edges=np.asarray(dir_edges, dtype=np.int64),
    )


def assemble_stiffness(mesh: Mesh) -> linalg.SparseMatrix:
    """Galerkin stiffness matrix with exact elementwise integration."""
    g = mesh.lam_grads  # (T, 3, 2)
    local = np.einsum("tid,tjd,t->tij", g, g, mesh.areas)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).reshape(-1)
    cols = np.tile(tri, (1, 3)).reshape(-1)
    vals = local.reshape(-1)
    return linalg.csr_from_triplets(
        mesh.n_vertices, mesh.n_vertices, (rows, cols, vals)
    )


def assemble_load(mesh: Mesh, data: ProblemData) -> np.ndarray:
    """Load vector from projected forcing and Neumann data (exact P1×P1)."""
    b = np.zeros(mesh.n_vertices)
    loc = np.einsum("tq,qk->tk", data.f_proj, _M3) * mesh.areas[:, None]
    np.add.at(b, mesh.triangles.reshape(-1), loc.reshape(-1))
    for k, e in enumerate(data.neumann_edges):
        i, j = mesh.edge_vertices[e]
        L = mesh.edge_lengths[e]
        c0, c1 = data.gn_proj[k]
        b[i] += L * (c0 / 3.0 + c1 / 6.0)
        b[j] += L * (c0 / 6.0 + c1 / 3.0)
    return b


def galerkin_residual(field: ScalarField, data: ProblemData) -> np.ndarray:
    """Residual of the discrete weak form against every hat function."""
    A = assemble_stiffness(field.mesh)
    b = assemble_load(field.mesh, data)
    return b - A.matvec(field.nodal_values)


def solve_poisson(
    mesh: Mesh, data: ProblemData, tol: float = 1e-12, gauge: str | None = None
) -> ScalarField:
    """Solve the discrete Poisson problem with symmetric Dirichlet condensation.

    Pure-Neumann problems need ``gauge='mean_zero'`` and compatible data.
    """
    A = assemble_stiffness(mesh)
    b = assemble_load(mesh, data)
    u = np.zeros(mesh.n_vertices)
    fixed = np.zeros(mesh.n_vertices, dtype=bool)
    if len(data.dirichlet_vertices):
        fixed[data.dirichlet_vertices] = True
        u[data.dirichlet_vertices] = data.dirichlet_values
    elif gauge is None:
        raise linalg.SolverError(
            "pure Neumann problem: pass gauge='mean_zero' for a gauged solve"
        )
    elif gauge == "mean_zero":
        fixed[0] = True
    else:
        raise ValueError(f"unknown gauge {gauge!r}")

    free = np.where(~fixed)[0]
    index_of = np.full(mesh.n_vertices, -1, dtype=np.int64)
    index_of[free] = np.arange(len(free))
    sp = A.to_scipy()
    bf = b[free] - sp[free][:, fixed] @ u[fixed]
    Aff = sp[free][:, free].tocoo()
    Ared = linalg.csr_from_triplets(
        len(free), len(free), (Aff.row, Aff.col, Aff.data)
    )
    u[free] = linalg.solve_spd(Ared, bf, tol=tol)

    res = b - sp @ u
    scale = np.linalg.norm(b) or 1.0
    if np.linalg.norm(res[free]) > 1e-10 * scale:
        raise linalg.SolverError(
            "Galerkin residual above tolerance",
            residual=float(np.linalg.norm(res[free]) / scale),
        )
    if not len(data.dirichlet_vertices):
        # Incompatible pure-Neumann data shows up in the pinned row.
        if abs(res[0]) > 1e-8 * scale:
            raise linalg.SolverError(
                "pure Neumann data incompatible", residual=float(abs(res[0]) / scale)
            )
        w = np.zeros(mesh.n_vertices)
        np.add.at(w, mesh.triangles.reshape(-1), np.repeat(mesh.areas / 3.0, 3))
        u -= np.dot(w, u) / w.sum()
    return ScalarField(mesh, u)


def solve_feature_problem(
    feature: FeatureSpec,
    trace_source: ScalarField,
    feature_mesh: Mesh,
    forcing=0.0,
    tol: float = 1e-12,
) -> ScalarField:
    """Solve the feature (extension) problem coupled through the gamma0 trace."""
    data = feature_problem_data(feature, trace_source, feature_mesh, forcing)
    return solve_poisson(feature_mesh, data, tol=tol)


def gradient_on_triangle(field: ScalarField, t: int) -> np.ndarray:
    vals = field.nodal_values[field.mesh.triangles[t]]
    return vals @ field.mesh.lam_grads[t]


def energy_norm(field: ScalarField) -> float:
    g = field.gradients()
    return float(np.sqrt(np.sum(field.mesh.areas * np.einsum("td,td->t", g, g))))


def energy_error_cross_mesh(coarse, reference: ScalarField, triangle_mask=None) -> float:
    """Energy norm of (reference − coarse) by quadrature on the fine mesh.

    ``coarse`` is a ScalarField or a CompositeField covering the fine mesh's
    domain; its gradient is looked up per quadrature point by point location.
    """
    if isinstance(coarse, ScalarField):
        coarse = CompositeField([coarse])
    fine = reference.mesh
    tris = np.arange(fine.n_triangles) if triangle_mask is None else np.where(triangle_mask)[0]
    pts = quad_points(fine)[tris]  # (T, 6, 2)
    gc = coarse.gradient_at(pts.reshape(-1, 2)).reshape(len(tris), len(TRI_QW), 2)
    gr = reference.gradients()[tris][:, None, :]
    diff = gr - gc
    err2 = np.einsum("t,q,tqd,tqd->", fine.areas[tris], TRI_QW, diff, diff)
    return float(np.sqrt(err2))


def prolong_uniform(field: ScalarField, fine: Mesh) -> ScalarField:
    """Inject a P1 field into the uniform refinement of its mesh."""
    parent = getattr(fine, "_refine_parent", None)
    if parent is not field.mesh:
        raise ValueError("fine mesh is not the uniform refinement of the field's mesh")
    coarse = field.mesh
    vals = np.empty(fine.n_vertices)
    vals[: coarse.n_vertices] = field.nodal_values
    ev = coarse.edge_vertices
    vals[coarse.n_vertices :] = 0.5 * (
        field.nodal_values[ev[:, 0]] + field.nodal_values[ev[:, 1]]
    )
    return ScalarField(fine, vals)


# -- export ------------------------------------------------------------------


def field_to_csv(field: ScalarField, path):
    with open(path, "w", newline="") as f:
        f.write("vertex_id,x,y,value\r\n")
        for k, (x, y) in enumerate(field.mesh.vertices):
            f.write(f"{k},{x:.17g},{y:.17g},{field.nodal_values[k]:.17g}\r\n")


def write_vtk(path, mesh: Mesh, point_data=None, cell_vectors=None, title="eqflux"):
    """Legacy ASCII VTK unstructured grid with optional point/cell data."""
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 2.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g} 0\n")
        T = mesh.n_triangles
        f.write(f"CELLS {T} {4 * T}\n")
        for a, b, c in mesh.triangles:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {T}\n")
        f.write("5\n" * T)
        if point_data:
            f.write(f"POINT_DATA {mesh.n_vertices}\n")
            for name, values in point_data.items():
                f.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
                for v in values:
                    f.write(f"{v:.17g}\n")
        if cell_vectors:
            f.write(f"CELL_DATA {T}\n")
            for name, vecs in cell_vectors.items():
                f.write(f"VECTORS {name} double\n")
                for vx, vy in vecs:
                    f.write(f"{vx:.17g} {vy:.17g} 0\n")
