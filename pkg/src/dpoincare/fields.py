"""Elementwise polynomial fields (no continuity across faces).

A :class:`BrokenField` stores, for every tetrahedron, the physical components
of a scalar or vector field as polynomials in that tetrahedron's reference
coordinates ``xi`` (``x = J xi + x0``).  Affine maps keep polynomial degree,
so this representation is exact for piecewise polynomials of any degree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import polynomials as P
from .fespace import (
    SpaceHandle,
    grad_coeffs,
    local_dofs_of_values,
    scatter_local,
    trace_component,
    _face_sample,
)
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class BrokenField:
    mesh: Mesh
    coeffs: np.ndarray  # (T, ncomp, nmono)
    level: int | None = None

    @property
    def degree(self) -> int:
        return P.degree_of(self.coeffs.shape[-1])

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[1]

    # construction -----------------------------------------------------------

    @classmethod
    def from_space(cls, space: SpaceHandle, x: np.ndarray) -> "BrokenField":
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != space.global_dim:
            x = space.extend(x)
        coeffs = np.einsum("tj,tjcm->tcm", x[space.cell_dofs], space.physical_basis())
        return cls(space.mesh, coeffs, space.l)

    @classmethod
    def from_function(cls, mesh: Mesh, f, degree: int, ncomp: int, level=None) -> "BrokenField":
        """Exact representation of a global polynomial ``f(x) -> (npts, ncomp)``."""
        pts = P.lattice(degree)
        V = P.vandermonde(pts, degree)
        coeffs = np.zeros((mesh.nt, ncomp, P.nmono(degree)))
        for t in range(mesh.nt):
            J, b = mesh.affine_map(t)
            vals = np.asarray(f(pts @ J.T + b), dtype=float).reshape(len(pts), ncomp)
            coeffs[t] = np.linalg.solve(V, vals).T
        return cls(mesh, coeffs, level)

    def with_degree(self, k: int) -> "BrokenField":
        return BrokenField(self.mesh, P.pad(self.coeffs, k), self.level)

    # evaluation -------------------------------------------------------------

    def values_ref(self, t: int, xi: np.ndarray) -> np.ndarray:
        return self.coeffs[t] @ P.vandermonde(xi, self.degree).T

    def __call__(self, t: int, x: np.ndarray) -> np.ndarray:
        """Physical values (ncomp, npts) on tet ``t`` at physical points ``x``."""
        return self.values_ref(t, self.mesh.to_reference(t, x))

    # calculus ---------------------------------------------------------------

    def _physical_derivative(self, ref_grad: np.ndarray) -> np.ndarray:
        # d/dx_c = sum_k (J^{-1})_{kc} d/dxi_k
        Jinv = np.linalg.inv(self.mesh.jacobians)
        return np.einsum("tkc,t...km->t...cm", Jinv, ref_grad)

    def grad(self) -> "BrokenField":
        g = grad_coeffs(self.coeffs[:, 0, :])  # (T, 3, nmono), reference partials
        return BrokenField(self.mesh, self._physical_derivative(g), 1)

    def jacobian_coeffs(self) -> np.ndarray:
        """(T, ncomp, 3, nmono): physical partials d u_i / d x_c."""
        g = np.stack([grad_coeffs(self.coeffs[:, i, :]) for i in range(self.ncomp)], axis=1)
        return self._physical_derivative(g)

    def div(self) -> "BrokenField":
        Dj = self.jacobian_coeffs()
        d = Dj[:, 0, 0] + Dj[:, 1, 1] + Dj[:, 2, 2]
        return BrokenField(self.mesh, d[:, None, :], 3)

    def curl(self) -> "BrokenField":
        Dj = self.jacobian_coeffs()  # [t, i, c] = d u_i / d x_c
        c = np.stack(
            [Dj[:, 2, 1] - Dj[:, 1, 2], Dj[:, 0, 2] - Dj[:, 2, 0], Dj[:, 1, 0] - Dj[:, 0, 1]],
            axis=1,
        )
        return BrokenField(self.mesh, c, 2)

    def derivative(self) -> "BrokenField":
        if self.level == 0:
            return self.grad()
        if self.level == 1:
            return self.curl()
        if self.level == 2:
            return self.div()
        raise ValueError("field level must be 0, 1 or 2")

    # algebra ----------------------------------------------------------------

    def __add__(self, other: "BrokenField") -> "BrokenField":
        k = max(self.degree, other.degree)
        return BrokenField(self.mesh, P.pad(self.coeffs, k) + P.pad(other.coeffs, k), self.level)

    def __sub__(self, other: "BrokenField") -> "BrokenField":
        return self + other.scale(-1.0)

    def scale(self, s: float) -> "BrokenField":
        return BrokenField(self.mesh, s * self.coeffs, self.level)

    def times_scalar(self, s: "BrokenField") -> "BrokenField":
        """Pointwise product with a scalar broken field."""
        T = P.product_tensor(self.degree, s.degree)
        c = np.einsum("rij,tci,tj->tcr", T, self.coeffs, s.coeffs[:, 0, :])
        return BrokenField(self.mesh, c, self.level)

    def dot(self, w: "BrokenField") -> "BrokenField":
        T = P.product_tensor(self.degree, w.degree)
        c = np.einsum("rij,tci,tcj->tr", T, self.coeffs, w.coeffs)
        return BrokenField(self.mesh, c[:, None, :], None)

    # integrals --------------------------------------------------------------

    def inner_per_tet(self, other: "BrokenField") -> np.ndarray:
        G = P.gram(self.degree, other.degree)
        loc = np.einsum("tci,ij,tcj->t", self.coeffs, G, other.coeffs)
        return loc * np.abs(self.mesh.dets)

    def inner(self, other: "BrokenField") -> float:
        return float(self.inner_per_tet(other).sum())

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def integral_per_tet(self) -> np.ndarray:
        return (self.coeffs @ P.monomial_integrals(self.degree)) * np.abs(self.mesh.dets)[:, None]

    def load_vector(self, space: SpaceHandle) -> np.ndarray:
        """Global vector ``<self, phi_j>`` over the basis of ``space``."""
        B = space.physical_basis()
        G = P.gram(space.ref.degree, self.degree)
        loc = np.einsum("tjcm,mn,tcn->tj", B, G, self.coeffs) * np.abs(self.mesh.dets)[:, None]
        out = np.zeros(space.global_dim)
        np.add.at(out, space.cell_dofs.ravel(), loc.ravel())
        return out

    # projections ------------------------------------------------------------

    def local_dofs(self, space: SpaceHandle) -> np.ndarray:
        """Per-element canonical interpolation DOFs (T, nloc)."""
        if space.mesh is not self.mesh:
            raise ValueError("field and space live on different meshes")
        V = P.vandermonde(space.ref.points, self.degree)
        vals = np.einsum("tcm,pm->tcp", self.coeffs, V)
        return local_dofs_of_values(space, vals)

    def interpolate(self, space: SpaceHandle) -> np.ndarray:
        """Global canonical interpolant (shared DOFs averaged)."""
        return scatter_local(space, self.local_dofs(space))

    # transfer between nested meshes ----------------------------------------

    def transfer(self, fine: Mesh, parents: np.ndarray) -> "BrokenField":
        """Restrict to a nested fine mesh (``parents[t]`` contains fine tet ``t``)."""
        out = np.zeros((fine.nt, self.ncomp, self.coeffs.shape[-1]))
        for t in range(fine.nt):
            Jf, bf = fine.affine_map(t)
            Jc, bc = self.mesh.affine_map(parents[t])
            A = np.linalg.solve(Jc, Jf)
            b = np.linalg.solve(Jc, bf - bc)
            out[t] = P.compose_affine(self.coeffs[parents[t]], A, b)
        return BrokenField(fine, out, self.level)

    # conformity -------------------------------------------------------------

    def interface_jump(self, level: int | None = None) -> float:
        """Max jump of the conforming trace over interior faces (6 points each)."""
        level = self.level if level is None else level
        mesh = self.mesh
        worst = 0.0
        for f in np.flatnonzero(~mesh.boundary_face_flags):
            t1, t2 = mesh.face_tets[f]
            fx = mesh.vertices[mesh.faces[f]]
            n = np.cross(fx[1] - fx[0], fx[2] - fx[0])
            n /= np.linalg.norm(n)
            pts = _face_sample(fx)
            a = trace_component(level, self(t1, pts), n)
            b = trace_component(level, self(t2, pts), n)
            worst = max(worst, float(np.abs(a - b).max()))
        return worst


def hat_function(mesh: Mesh, vertex: int) -> BrokenField:
    """Piecewise affine hat function of ``vertex`` (value 1 there, 0 elsewhere)."""
    coeffs = np.zeros((mesh.nt, 1, 4))
    for t in mesh.vertex_tets()[vertex]:
        slot = int(np.flatnonzero(mesh.tets[t] == vertex)[0])
        coeffs[t, 0] = P.barycentric(slot)
    return BrokenField(mesh, coeffs, 0)


def format_broken_field(field: BrokenField) -> str:
    """Text form: header ``level=2 degree=q ntets=T`` then one block per tet.

    Each block holds ``ncomp`` rows of monomial coefficients in the tet's
    reference coordinates, monomials in graded order (see
    :func:`dpoincare.polynomials.exponents`).
    """
    lines = [f"level={field.level} degree={field.degree} ntets={field.mesh.nt}"]
    for t in range(field.mesh.nt):
        lines.append(f"# tet {t}")
        for row in field.coeffs[t]:
            lines.append(" ".join(repr(float(c)) for c in row))
    return "\n".join(lines) + "\n"


def parse_broken_field(text: str, mesh: Mesh) -> BrokenField:
    rows = [s.strip() for s in text.splitlines()]
    rows = [s for s in rows if s and not s.startswith("#")]
    head = dict(tok.split("=") for tok in rows[0].split())
    level, degree, nt = int(head["level"]), int(head["degree"]), int(head["ntets"])
    if nt != mesh.nt:
        raise ValueError(f"field has {nt} tets, mesh has {mesh.nt}")
    data = np.array([[float(c) for c in r.split()] for r in rows[1:]])
    if data.shape[1] != P.nmono(degree):
        raise ValueError("coefficient row length does not match degree")
    return BrokenField(mesh, data.reshape(nt, -1, P.nmono(degree)), level)
