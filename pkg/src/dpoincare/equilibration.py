"""Commuting H(div) projection by flux equilibration on vertex stars.

Given a conforming flux ``u``, the projection is assembled in three steps:

1. ``xi``: on every tetrahedron, the RT_p field closest to ``u`` whose
   divergence is the L2 projection of ``div u``;
2. for each vertex ``a``, a local RT_p field on the star of ``a`` with zero
   normal flux on the faces where the hat function ``psi_a`` vanishes, whose
   divergence is the L2 projection of ``psi_a div u + grad psi_a . xi`` and
   which is closest to the elementwise interpolant of ``psi_a xi``;
3. the sum of the star fields, each extended by zero.

Because the hat functions sum to one, the divergences of the star fields add
up to the projected divergence of ``u``, which gives the commuting property.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import polynomials as P
from .derham import assemble_diff, assemble_mass, local_mass
from .fespace import FIELD_DEGREE_MAX, SpaceHandle, build_space, reference_derivative_matrix
from .fields import BrokenField, hat_function
from .mesh import Mesh, extract_star, h_omega
from .poincare import ProjectionReport
from .solvers import SaddleSolver

Q_MAX = 3
COMPAT_TOL = 1e-9


class CompatibilityError(ValueError):
    def __init__(self, vertex: int, residual: float):
        self.vertex = vertex
        self.residual = residual
        super().__init__(
            f"star of vertex {vertex} is incompatible (residual {residual:.3e}); "
            "is the input flux H(div)-conforming?"
        )


def l2_project_broken(u: BrokenField, p: int, q_max: int = FIELD_DEGREE_MAX) -> BrokenField:
    """Elementwise L2 projection of every component onto polynomials of degree ``p``."""
    q = u.degree
    if q > q_max:
        raise ValueError(f"field degree {q} exceeds the maximum {q_max}")
    if q <= p:
        return u.with_degree(p)
    Gpp = P.gram(p, p)
    Gpq = P.gram(p, q)
    # the Jacobian factor is common to both sides of the normal equations
    coeffs = np.linalg.solve(Gpp, np.einsum("mn,tcn->mtc", Gpq, u.coeffs).reshape(len(Gpp), -1))
    coeffs = coeffs.reshape(len(Gpp), *u.coeffs.shape[:2]).transpose(1, 2, 0)
    return BrokenField(u.mesh, coeffs, u.level)


@dataclass
class ElementwiseProjection:
    space: SpaceHandle
    local_dofs: np.ndarray  # (T, nloc)
    field: BrokenField
    div_residual: float


def _local_load(space: SpaceHandle, u: BrokenField) -> np.ndarray:
    B = space.physical_basis()
    G = P.gram(space.ref.degree, u.degree)
    return np.einsum("ticm,mn,tcn->ti", B, G, u.coeffs) * np.abs(space.mesh.dets)[:, None]


def elementwise_constrained(u: BrokenField, p: int) -> ElementwiseProjection:
    """Per tet: ``argmin ||u - xi||`` over RT_p with ``div xi = Pi^3 div u``."""
    mesh = u.mesh
    s2 = build_space(mesh, 2, p)
    s3 = build_space(mesh, 3, p)
    Ml = local_mass(s2)
    b = _local_load(s2, u)
    g = u.div().local_dofs(s3)
    Dref = reference_derivative_matrix(2, p)
    x = np.zeros_like(b)
    worst = 0.0
    for t in range(mesh.nt):
        sol = SaddleSolver(Ml[t], Dref).solve(b[t], g[t])
        x[t] = sol.u
        worst = max(worst, float(np.abs(Dref @ sol.u - g[t]).max()))
    coeffs = np.einsum("tj,tjcm->tcm", x, s2.physical_basis())
    scale = max(float(np.abs(g).max()), 1e-300)
    return ElementwiseProjection(s2, x, BrokenField(mesh, coeffs, 2), worst / scale)


@dataclass
class StarResult:
    vertex: int
    interior: bool
    ntets: int
    dofs: np.ndarray  # star RT_p DOF vector (all star DOFs)
    parent_index: np.ndarray  # star DOF -> global DOF
    compatibility: float  # relative |integral of the divergence datum|
    div_residual: float
    euler_residual: float
    target_dofs: np.ndarray = field(repr=False, default=None)  # interpolant of psi_a xi
    space: SpaceHandle = field(repr=False, default=None)


def star_equilibrate(u: BrokenField, xi: BrokenField, vertex: int, p: int,
                     parent_space: SpaceHandle | None = None) -> StarResult:
    """Local flux on the star of ``vertex`` (see the module docstring)."""
    mesh = u.mesh
    a = int(vertex)
    star = extract_star(mesh, "vertex", a)
    sm, pt = star.submesh, star.parent_tets
    a_loc = int(np.flatnonzero(star.parent_vertices == a)[0])
    interior = not bool(mesh.boundary_vertex_flags[a])

    S2 = build_space(sm, 2, p)
    S3 = build_space(sm, 3, p)
    face_has_a = np.any(sm.faces == a_loc, axis=1)
    dim, ent = S2.dof_entity[:, 0], S2.dof_entity[:, 1]
    free = np.flatnonzero((dim == 3) | ((dim == 2) & face_has_a[np.where(dim == 2, ent, 0)]))

    hat = hat_function(sm, a_loc)
    u_s = BrokenField(sm, u.coeffs[pt], 2)
    xi_s = BrokenField(sm, xi.coeffs[pt], 2)
    part1 = u_s.div().times_scalar(hat)
    part2 = hat.grad().dot(xi_s)
    datum = part1 + part2
    g = datum.interpolate(S3)

    vol = float(np.abs(sm.dets).sum() / 6.0)
    scale = max(part1.norm(), part2.norm()) * np.sqrt(vol)
    compat = abs(float(datum.integral_per_tet().sum())) / max(scale, 1e-300)
    if interior and compat > COMPAT_TOL:
        raise CompatibilityError(a, compat)

    w = xi_s.times_scalar(hat).local_dofs(S2)  # elementwise canonical interpolant
    Ml = local_mass(S2)
    b = np.zeros(S2.global_dim)
    np.add.at(b, S2.cell_dofs.ravel(), np.einsum("tij,tj->ti", Ml, w).ravel())
    A = assemble_mass(S2, restrict=False).toarray()[np.ix_(free, free)]
    D = assemble_diff(S2, S3, restrict=False).toarray()[:, free]
    sol = SaddleSolver(A, D).solve(b[free], g, check=False)
    x = np.zeros(S2.global_dim)
    x[free] = sol.u
    div_res = float(np.abs(D @ sol.u - g).max() / max(np.abs(g).max(), 1e-300))
    euler = sol.residual_primal / max(np.linalg.norm(b[free]), 1e-300)

    if parent_space is None:
        parent_space = build_space(mesh, 2, p)
    parent_index = np.zeros(S2.global_dim, dtype=np.int64)
    parent_index[S2.cell_dofs.ravel()] = parent_space.cell_dofs[pt].ravel()
    return StarResult(a, interior, sm.nt, x, parent_index, compat, div_res, float(euler), w, S2)


def partition_of_unity_error(mesh: Mesh, degree: int = 4) -> float:
    """Max of ``|sum_a psi_a - 1|`` over quadrature points of every tet."""
    pts, _ = P.gauss_tet(degree)
    V = P.vandermonde(pts, 1)
    total = np.zeros((mesh.nt, len(pts)))
    for a in range(mesh.nv):
        total += (hat_function(mesh, a).coeffs[:, 0, :] @ V.T)
    return float(np.abs(total - 1.0).max())


def commuting_projection_hdiv(u: BrokenField, p: int, *, q_max: int = Q_MAX,
                              conformity_tol: float = 1e-10) -> tuple[np.ndarray, ProjectionReport]:
    """Equilibrated projection of a conforming flux ``u`` onto RT_p (global DOFs)."""
    mesh = u.mesh
    if u.ncomp != 3:
        raise ValueError("the input must be a vector field")
    if u.degree > q_max:
        raise ValueError(f"field degree {u.degree} exceeds the maximum {q_max}")
    unorm = u.norm()
    jump = u.interface_jump(2)
    if jump > conformity_tol * max(np.abs(u.coeffs).max(), 1e-300):
        raise ValueError("input flux is not H(div)-conforming")

    s2 = build_space(mesh, 2, p)
    s3 = build_space(mesh, 3, p)
    elem = elementwise_constrained(u, p)
    x = np.zeros(s2.global_dim)
    stars = []
    for a in range(mesh.nv):
        res = star_equilibrate(u, elem.field, a, p, s2)
        np.add.at(x, res.parent_index, res.dofs)
        stars.append(res)

    Pu = BrokenField.from_space(s2, x)
    D = assemble_diff(s2, s3, restrict=False)
    div_u = u.div()
    target = div_u.interpolate(s3)
    M3 = assemble_mass(s3, restrict=False).toarray()
    e = D @ x - target
    scale = max(div_u.norm(), unorm / h_omega(mesh), 1e-300)
    comm = float(np.sqrt(max(e @ M3 @ e, 0.0))) / scale
    proj = (Pu - u).norm() / max(unorm, 1e-300)
    rep = ProjectionReport(
        l=2,
        description=f"flux equilibration onto RT_{p}",
        commuting_residual=comm,
        projection_residual=proj,
        stability_ratio=Pu.norm() / max(unorm, 1e-300),
        norm_kind="L2",
        bound=None,
        extra={
            "conformity_jump": Pu.interface_jump(2),
            "max_compatibility": float(max((s.compatibility for s in stars if s.interior), default=0.0)),
            "max_star_div_residual": max(s.div_residual for s in stars),
            "elementwise_div_residual": elem.div_residual,
            "stars": len(stars),
        },
    )
    return x, rep


def random_conforming_flux(mesh: Mesh, degree: int, rng: np.random.Generator) -> BrokenField:
    """Random field of the conforming space RT_degree on ``mesh``."""
    s = build_space(mesh, 2, degree)
    return BrokenField.from_space(s, rng.standard_normal(s.global_dim))
