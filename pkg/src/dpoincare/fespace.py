"""Finite element spaces of the discrete de Rham complex on tetrahedra.

Level 0 is Lagrange ``P_{p+1}``, level 1 first-kind Nedelec ``Ne_p``, level 2
Raviart-Thomas ``RT_p`` and level 3 discontinuous ``P_p``.

Every space is built once on the unit reference tetrahedron.  The degrees of
freedom are unscaled integral moments against barycentric monomials of the
entity's own parametrisation (anchored at its lowest-index vertex), and they
are invariant under the level-appropriate Piola map.  Two consequences drive
the rest of the package:

* the physical basis on a tetrahedron is the Piola push-forward of the
  reference basis, with no sign tables, because sorted tetrahedra inherit the
  global increasing-index orientation of their edges and faces;
* the matrices of grad/curl/div on DOF vectors depend only on connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import polynomials as P
from .mesh import LOCAL_EDGES, LOCAL_FACES, Mesh

FAMILIES = {0: "Lagrange", 1: "Nedelec", 2: "Raviart-Thomas", 3: "discontinuous"}
BCS = ("none", "homogeneous")

# moments are exact for fields up to this polynomial degree
FIELD_DEGREE_MAX = 7


class SpaceError(ValueError):
    pass


def local_dim(l: int, p: int) -> int:
    if l == 0:
        return (p + 2) * (p + 3) * (p + 4) // 6
    if l == 1:
        return (p + 1) * (p + 3) * (p + 4) // 2
    if l == 2:
        return (p + 1) * (p + 2) * (p + 4) // 2
    if l == 3:
        return (p + 1) * (p + 2) * (p + 3) // 6
    raise SpaceError(f"level {l} not in 0..3")


def ncomp(l: int) -> int:
    return 1 if l in (0, 3) else 3


def poly_degree(l: int, p: int) -> int:
    return p if l == 3 else p + 1


def _tri_count(m: int) -> int:
    return 0 if m < 0 else (m + 1) * (m + 2) // 2


def _tet_count(m: int) -> int:
    return P.nmono(m)


def entity_dofs(l: int, p: int) -> tuple[int, int, int, int]:
    """DOFs per (vertex, edge, face, cell)."""
    if l == 0:
        k = p + 1
        return 1, k - 1, _tri_count(k - 3), _tet_count(k - 4)
    if l == 1:
        return 0, p + 1, 2 * _tri_count(p - 1), 3 * _tet_count(p - 2)
    if l == 2:
        return 0, 0, _tri_count(p), 3 * _tet_count(p - 1)
    if l == 3:
        return 0, 0, 0, _tet_count(p)
    raise SpaceError(f"level {l} not in 0..3")


# -- symbolic-free differential operators on coefficient arrays ---------------


def grad_coeffs(c: np.ndarray) -> np.ndarray:
    """(..., nmono) scalar -> (..., 3, nmono) gradient in reference variables."""
    k = P.degree_of(c.shape[-1])
    return np.stack([c @ P.diff_matrix(k, a).T for a in range(3)], axis=-2)


def curl_coeffs(c: np.ndarray) -> np.ndarray:
    k = P.degree_of(c.shape[-1])
    d = [P.diff_matrix(k, a).T for a in range(3)]
    u = [c[..., i, :] for i in range(3)]
    return np.stack(
        [u[2] @ d[1] - u[1] @ d[2], u[0] @ d[2] - u[2] @ d[0], u[1] @ d[0] - u[0] @ d[1]],
        axis=-2,
    )


def div_coeffs(c: np.ndarray) -> np.ndarray:
    k = P.degree_of(c.shape[-1])
    return sum(c[..., a, :] @ P.diff_matrix(k, a).T for a in range(3))[..., None, :]


def ref_derivative(l: int, c: np.ndarray) -> np.ndarray:
    """Reference-variable d^l of coefficient arrays (..., ncomp, nmono)."""
    if l == 0:
        return grad_coeffs(c[..., 0, :])
    if l == 1:
        return curl_coeffs(c)
    if l == 2:
        return div_coeffs(c)
    raise SpaceError("d^3 is zero")


# -- Piola maps ----------------------------------------------------------------


def pullback_matrices(l: int, J: np.ndarray) -> np.ndarray:
    """Matrices ``Q`` with ``psi^l(v)(xi) = Q v(F xi)``; J is (..., 3, 3)."""
    J = np.asarray(J, dtype=float)
    det = np.linalg.det(J)
    if np.any(np.abs(det) < 1e-300):
        raise SpaceError("singular Jacobian")
    if l == 0:
        return np.ones(J.shape[:-2] + (1, 1))
    if l == 1:
        return np.swapaxes(J, -1, -2)
    if l == 2:
        return det[..., None, None] * np.linalg.inv(J)
    if l == 3:
        return det[..., None, None] * np.ones(J.shape[:-2] + (1, 1))
    raise SpaceError(f"level {l} not in 0..3")


def pushforward_matrices(l: int, J: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pullback_matrices`."""
    J = np.asarray(J, dtype=float)
    det = np.linalg.det(J)
    if np.any(np.abs(det) < 1e-300):
        raise SpaceError("singular Jacobian")
    if l == 0:
        return np.ones(J.shape[:-2] + (1, 1))
    if l == 1:
        return np.swapaxes(np.linalg.inv(J), -1, -2)
    if l == 2:
        return J / det[..., None, None]
    if l == 3:
        return (1.0 / det)[..., None, None] * np.ones(J.shape[:-2] + (1, 1))
    raise SpaceError(f"level {l} not in 0..3")


@dataclass(frozen=True)
class AffineMap:
    J: np.ndarray
    b: np.ndarray

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        return np.atleast_2d(xi) @ self.J.T + self.b

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.J, (np.atleast_2d(x) - self.b).T).T


def piola(l: int, F: AffineMap, v):
    """Pull a physical field ``v(x) -> (npts, ncomp)`` back through ``F``.

    ``psi^1 v = J^T (v o F)``, ``psi^2 v = det J J^{-1} (v o F)``,
    ``psi^3 v = det J (v o F)``.
    """
    if l not in (1, 2, 3):
        raise SpaceError("Piola maps are defined for l in {1, 2, 3}")
    Q = pullback_matrices(l, F.J)

    def pulled(xi):
        vals = np.asarray(v(F(xi)), dtype=float).reshape(len(np.atleast_2d(xi)), -1)
        return vals @ Q.T

    return pulled


def piola_inverse(l: int, F: AffineMap, vhat):
    """Push a reference field forward: inverse of :func:`piola`."""
    if l not in (1, 2, 3):
        raise SpaceError("Piola maps are defined for l in {1, 2, 3}")
    A = pushforward_matrices(l, F.J)

    def pushed(x):
        vals = np.asarray(vhat(F.inverse(x)), dtype=float).reshape(len(np.atleast_2d(x)), -1)
        return vals @ A.T

    return pushed


# -- reference elements --------------------------------------------------------


def _generating_set(l: int, p: int) -> np.ndarray:
    """Spanning set (ngen, ncomp, nmono) of the local polynomial space."""
    k = poly_degree(l, p)
    nm = P.nmono(k)
    if l in (0, 3):
        return np.eye(nm)[:, None, :]
    gens = []
    for c in range(3):
        for i in range(P.nmono(p)):
            g = np.zeros((3, nm))
            g[c, i] = 1.0
            gens.append(g)
    homog = range(P.nmono(p - 1), P.nmono(p))
    for i in homog:
        m = np.zeros(P.nmono(p))
        m[i] = 1.0
        xm = [P.shift_matrix(p, a) @ m for a in range(3)]  # xi_a * m
        if l == 1:
            for c in range(3):
                # xi x (e_c m)
                g = np.zeros((3, nm))
                e = np.zeros(3)
                e[c] = 1.0
                for r in range(3):
                    # (xi x e)_r = xi_{r+1} e_{r+2} - xi_{r+2} e_{r+1}
                    a1, a2 = (r + 1) % 3, (r + 2) % 3
                    g[r] += xm[a1] * e[a2] - xm[a2] * e[a1]
                gens.append(g)
        else:
            gens.append(np.stack(xm))
    return np.array(gens)


def polynomial_space_basis(l: int, p: int) -> np.ndarray:
    """Orthonormal (coefficient-space) basis of the local space; rank-revealing."""
    G = _generating_set(l, p)
    flat = G.reshape(len(G), -1)
    _, s, vt = np.linalg.svd(flat, full_matrices=False)
    r = int(np.sum(s > s[0] * 1e-12))
    return vt[:r].reshape((r,) + G.shape[1:])


def _edge_weights(m: int, s: np.ndarray) -> np.ndarray:
    return np.stack([s**i for i in range(m + 1)]) if m >= 0 else np.zeros((0, len(s)))


def _face_weights(m: int, st: np.ndarray) -> np.ndarray:
    if m < 0:
        return np.zeros((0, len(st)))
    rows = []
    for d in range(m + 1):
        for i in range(d, -1, -1):
            rows.append(st[:, 0] ** i * st[:, 1] ** (d - i))
    return np.array(rows)


@dataclass(frozen=True, eq=False)
class RefElement:
    """Reference element of level ``l`` and order ``p``.

    ``basis`` has shape (nloc, ncomp, nmono) and is dual to the functionals
    ``dofs(u) = einsum('ipc,cp->i', weights, u(points))``.
    """

    l: int
    p: int
    degree: int
    basis: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    counts: tuple[int, int, int, int]
    local_entity: np.ndarray  # (nloc, 2): (entity dim, local entity index)

    @property
    def nloc(self) -> int:
        return len(self.basis)

    @property
    def ncomp(self) -> int:
        return self.basis.shape[1]

    def apply_dofs(self, values: np.ndarray) -> np.ndarray:
        """DOFs from pulled-back values (..., ncomp, npts)."""
        return np.einsum("ipc,...cp->...i", self.weights, values)

    def dofs_of_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """DOFs of reference polynomials given as (..., ncomp, nmono)."""
        V = P.vandermonde(self.points, P.degree_of(coeffs.shape[-1]))
        return self.apply_dofs(coeffs @ V.T)


def _dof_functionals(l: int, p: int):
    qdeg = FIELD_DEGREE_MAX + p + 1
    kv, ke, kf, kc = entity_dofs(l, p)
    nc = ncomp(l)
    V = P.REF_VERTICES
    blocks = []  # (points, [weights (npts, nc)], dim, local index)

    if kv:
        for v in range(4):
            blocks.append((V[v : v + 1], [np.ones((1, nc))], 0, v))

    if ke:
        s, w = P.gauss_interval(qdeg)
        for e, (a, b) in enumerate(LOCAL_EDGES):
            pts = V[a] + s[:, None] * (V[b] - V[a])
            if l == 0:
                q = _edge_weights(ke - 1, s)
                ws = [(w * qi)[:, None] for qi in q]
            else:
                q = _edge_weights(ke - 1, s)
                t = V[b] - V[a]
                ws = [(w * qi)[:, None] * t[None, :] for qi in q]
            blocks.append((pts, ws, 1, e))

    if kf:
        st, w = P.gauss_triangle(qdeg)
        for f, (a, b, c) in enumerate(LOCAL_FACES):
            t1, t2 = V[b] - V[a], V[c] - V[a]
            pts = V[a] + st[:, :1] * t1 + st[:, 1:] * t2
            if l == 0:
                ws = [(w * qi)[:, None] for qi in _face_weights(_deg_from_tri(kf), st)]
            elif l == 1:
                ws = []
                for qi in _face_weights(_deg_from_tri(kf // 2), st):
                    ws.append((w * qi)[:, None] * t1[None, :])
                    ws.append((w * qi)[:, None] * t2[None, :])
            else:
                n = np.cross(t1, t2)
                ws = [(w * qi)[:, None] * n[None, :] for qi in _face_weights(_deg_from_tri(kf), st)]
            blocks.append((pts, ws, 2, f))

    if kc:
        pts, w = P.gauss_tet(qdeg)
        if nc == 1:
            m = P.degree_of(kc)
            Vq = P.vandermonde(pts, m)
            ws = [(w * Vq[:, i])[:, None] for i in range(kc)]
        else:
            m = P.degree_of(kc // 3)
            Vq = P.vandermonde(pts, m)
            ws = []
            for i in range(kc // 3):
                for c in range(3):
                    e = np.zeros(3)
                    e[c] = 1.0
                    ws.append((w * Vq[:, i])[:, None] * e[None, :])
        blocks.append((pts, ws, 3, 0))

    all_pts = np.vstack([b[0] for b in blocks])
    ndof = sum(len(b[1]) for b in blocks)
    W = np.zeros((ndof, len(all_pts), nc))
    ent = np.zeros((ndof, 2), dtype=np.int64)
    row = 0
    off = 0
    for pts, ws, dim, idx in blocks:
        for wv in ws:
            W[row, off : off + len(pts)] = wv
            ent[row] = (dim, idx)
            row += 1
        off += len(pts)
    return all_pts, W, ent


def _deg_from_tri(count: int) -> int:
    m = 0
    while _tri_count(m) < count:
        m += 1
    return m


@lru_cache(maxsize=None)
def reference_element(l: int, p: int) -> RefElement:
    if l not in (0, 1, 2, 3):
        raise SpaceError(f"level {l} not in 0..3")
    if p < 0 or p > 3:
        raise SpaceError(f"unsupported degree p={p} (0..3)")
    gen = polynomial_space_basis(l, p)
    if len(gen) != local_dim(l, p):
        raise SpaceError(f"generating set has rank {len(gen)}, expected {local_dim(l, p)}")
    pts, W, ent = _dof_functionals(l, p)
    deg = poly_degree(l, p)
    V = P.vandermonde(pts, deg)
    Phi = np.einsum("ipc,jcm,pm->ij", W, gen, V)
    C = np.linalg.solve(Phi, np.eye(len(Phi)))
    basis = np.einsum("mj,mcn->jcn", C, gen)
    for arr in (basis, pts, W, ent):
        arr.setflags(write=False)
    return RefElement(
        l=l,
        p=p,
        degree=deg,
        basis=basis,
        points=pts,
        weights=W,
        counts=entity_dofs(l, p),
        local_entity=ent,
    )


@lru_cache(maxsize=None)
def reference_derivative_matrix(l: int, p: int) -> np.ndarray:
    """Local matrix of d^l: DOFs^{l+1}(d^l phi_j) for the reference basis."""
    src = reference_element(l, p)
    dst = reference_element(l + 1, p)
    d = ref_derivative(l, src.basis)
    Dm = dst.dofs_of_coeffs(d).T
    # snap round-off so that integer incidence entries are exact
    snapped = np.round(Dm)
    Dm = np.where(np.abs(Dm - snapped) < 1e-11, snapped, Dm)
    Dm.setflags(write=False)
    return Dm


# -- global spaces ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpaceHandle:
    mesh: Mesh
    l: int
    p: int
    bc: str
    ref: RefElement
    cell_dofs: np.ndarray  # (T, nloc) global indices; all signs are +1
    global_dim: int
    dof_entity: np.ndarray  # (global_dim, 2): (dim, global entity)
    boundary_dofs: np.ndarray  # bool mask
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def family(self) -> str:
        return FAMILIES[self.l]

    @property
    def free_dof_mask(self) -> np.ndarray:
        if self.bc == "homogeneous" and self.l < 3:
            return ~self.boundary_dofs
        return np.ones(self.global_dim, dtype=bool)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.free_dof_mask)

    @property
    def dim(self) -> int:
        """Dimension after boundary-condition restriction."""
        return int(self.free_dof_mask.sum())

    @property
    def dof_map(self) -> tuple[np.ndarray, np.ndarray]:
        return self.cell_dofs, np.ones_like(self.cell_dofs)

    def pushforward(self) -> np.ndarray:
        """(T, ncomp, ncomp) Piola push-forward matrices."""
        if "A" not in self._cache:
            self._cache["A"] = pushforward_matrices(self.l, self.mesh.jacobians)
        return self._cache["A"]

    def pullback(self) -> np.ndarray:
        if "Q" not in self._cache:
            self._cache["Q"] = pullback_matrices(self.l, self.mesh.jacobians)
        return self._cache["Q"]

    def physical_basis(self) -> np.ndarray:
        """(T, nloc, ncomp, nmono) physical components as polynomials in xi."""
        if "basis" not in self._cache:
            self._cache["basis"] = np.einsum("tcd,jdm->tjcm", self.pushforward(), self.ref.basis)
        return self._cache["basis"]

    def restrict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.free]

    def extend(self, x_free: np.ndarray) -> np.ndarray:
        x_free = np.asarray(x_free)
        out = np.zeros(x_free.shape[:-1] + (self.global_dim,))
        out[..., self.free] = x_free
        return out


def build_space(mesh: Mesh, l: int, p: int, bc: str = "none") -> SpaceHandle:
    if bc not in BCS:
        raise SpaceError(f"bc must be one of {BCS}")
    if l not in (0, 1, 2, 3):
        raise SpaceError(f"unsupported (l, p) = ({l}, {p})")
    try:
        ref = reference_element(l, p)
    except SpaceError as exc:
        raise SpaceError(f"unsupported (l, p) = ({l}, {p}): {exc}") from None
    counts = ref.counts
    nents = (mesh.nv, mesh.ne, mesh.nf, mesh.nt)
    offsets = np.concatenate([[0], np.cumsum([c * n for c, n in zip(counts, nents)])])
    glob_ent = [mesh.tets, mesh.tet_edges, mesh.tet_faces, np.arange(mesh.nt)[:, None]]

    cell_dofs = np.zeros((mesh.nt, ref.nloc), dtype=np.int64)
    rank_in_entity = np.zeros(ref.nloc, dtype=np.int64)
    seen: dict[tuple[int, int], int] = {}
    for j, (d, e) in enumerate(ref.local_entity):
        key = (int(d), int(e))
        rank_in_entity[j] = seen.get(key, 0)
        seen[key] = rank_in_entity[j] + 1
    for j, (d, e) in enumerate(ref.local_entity):
        g = glob_ent[d][:, e]
        cell_dofs[:, j] = offsets[d] + g * counts[d] + rank_in_entity[j]

    total = int(offsets[-1])
    dof_entity = np.zeros((total, 2), dtype=np.int64)
    for d in range(4):
        for i in range(offsets[d], offsets[d + 1]):
            dof_entity[i] = (d, (i - offsets[d]) // counts[d])
    bflags = [
        mesh.boundary_vertex_flags,
        mesh.boundary_edge_flags,
        mesh.boundary_face_flags,
        np.zeros(mesh.nt, dtype=bool),
    ]
    boundary = np.array([bflags[d][e] for d, e in dof_entity], dtype=bool)
    cell_dofs.setflags(write=False)
    return SpaceHandle(
        mesh=mesh,
        l=l,
        p=p,
        bc=bc,
        ref=ref,
        cell_dofs=cell_dofs,
        global_dim=total,
        dof_entity=dof_entity,
        boundary_dofs=boundary,
    )


def eval_basis(space: SpaceHandle, tet: int, point) -> np.ndarray:
    """Physical values (nloc, ncomp) of the local basis at a physical point."""
    mesh = space.mesh
    lam = mesh.barycentric(tet, np.asarray(point, dtype=float))[0]
    if lam.min() < -1e-12:
        raise SpaceError("point outside element")
    xi = lam[1:][None, :]
    V = P.vandermonde(xi, space.ref.degree)
    return (space.physical_basis()[tet] @ V.T)[..., 0]


def local_dofs_of_values(space: SpaceHandle, values: np.ndarray) -> np.ndarray:
    """Apply DOFs to physical values (T, ncomp, npts) sampled at ``ref.points``."""
    pulled = np.einsum("tcd,tdp->tcp", space.pullback(), values)
    return space.ref.apply_dofs(pulled)


def scatter_local(space: SpaceHandle, local: np.ndarray) -> np.ndarray:
    """Average per-element DOF values into a global vector."""
    out = np.zeros(space.global_dim)
    cnt = np.zeros(space.global_dim)
    np.add.at(out, space.cell_dofs.ravel(), local.ravel())
    np.add.at(cnt, space.cell_dofs.ravel(), 1.0)
    return out / np.maximum(cnt, 1.0)


def gather_local(space: SpaceHandle, x: np.ndarray) -> np.ndarray:
    return np.asarray(x)[space.cell_dofs]


# -- conformity ------------------------------------------------------------------


def _face_sample(x: np.ndarray) -> np.ndarray:
    """Six interior sample points of a triangle with vertices ``x`` (3, 3)."""
    bary = np.array(
        [
            [0.6, 0.2, 0.2],
            [0.2, 0.6, 0.2],
            [0.2, 0.2, 0.6],
            [0.45, 0.45, 0.1],
            [0.1, 0.45, 0.45],
            [0.45, 0.1, 0.45],
        ]
    )
    return bary @ x


def trace_component(l: int, vals: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Trace relevant for conformity: values (..., ncomp, npts)."""
    if l == 0:
        return vals
    if l == 1:
        un = np.einsum("...cp,c->...p", vals, n)
        return vals - un[..., None, :] * n[:, None]
    if l == 2:
        return np.einsum("...cp,c->...p", vals, n)[..., None, :]
    raise SpaceError("no trace continuity at level 3")


def basis_interface_jumps(space: SpaceHandle) -> float:
    """Max relative jump of the conforming trace of every global basis function."""
    mesh = space.mesh
    B = space.physical_basis()
    scale = max(np.abs(B).max(), 1e-300)
    worst = 0.0
    for f in np.flatnonzero(~mesh.boundary_face_flags):
        t1, t2 = mesh.face_tets[f]
        fx = mesh.vertices[mesh.faces[f]]
        n = np.cross(fx[1] - fx[0], fx[2] - fx[0])
        n /= np.linalg.norm(n)
        pts = _face_sample(fx)
        jump: dict[int, np.ndarray] = {}
        for sign, t in ((1.0, t1), (-1.0, t2)):
            xi = mesh.to_reference(t, pts)
            vals = B[t] @ P.vandermonde(xi, space.ref.degree).T  # (nloc, nc, npts)
            tr = trace_component(space.l, vals, n)
            for j, g in enumerate(space.cell_dofs[t]):
                jump[g] = jump.get(g, 0.0) + sign * tr[j]
        worst = max(worst, max(float(np.abs(v).max()) for v in jump.values()))
    return worst / scale
