"""Assembly of the discrete de Rham complex and its exactness diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import polynomials as P
from .fespace import SpaceHandle, build_space, reference_derivative_matrix
from .mesh import Mesh
from .solvers import null_space, numerical_rank


@dataclass(frozen=True, eq=False)
class Operator:
    """Sparse matrix between DOF vectors with a tag ``diff(l)``, ``mass(l)`` or ``other``."""

    matrix: sp.csr_matrix
    tag: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def triplets(self):
        c = self.matrix.tocoo()
        return c.row, c.col, c.data

    def __matmul__(self, x):
        return self.matrix @ x

    def restrict(self, rows: np.ndarray, cols: np.ndarray) -> "Operator":
        return Operator(self.matrix[rows][:, cols].tocsr(), self.tag)


def local_mass(space: SpaceHandle) -> np.ndarray:
    """(T, nloc, nloc) element mass matrices."""
    B = space.physical_basis()
    G = P.gram(space.ref.degree, space.ref.degree)
    return np.einsum("ticm,mn,tjcn->tij", B, G, B) * np.abs(space.mesh.dets)[:, None, None]


def assemble_mass(space: SpaceHandle, restrict: bool = True) -> Operator:
    Ml = local_mass(space)
    nl = space.ref.nloc
    rows = np.repeat(space.cell_dofs, nl, axis=1).ravel()
    cols = np.tile(space.cell_dofs, (1, nl)).ravel()
    M = sp.coo_matrix((Ml.ravel(), (rows, cols)), shape=(space.global_dim,) * 2).tocsr()
    M = 0.5 * (M + M.T)
    op = Operator(M.tocsr(), f"mass({space.l})")
    if restrict:
        op = op.restrict(space.free, space.free)
    return op


def _check_pair(src: SpaceHandle, dst: SpaceHandle) -> None:
    if src.mesh is not dst.mesh:
        raise ValueError("spaces live on different meshes")
    if dst.l != src.l + 1 or dst.p != src.p:
        raise ValueError("spaces are not consecutive levels of one complex")
    if src.bc != dst.bc:
        raise ValueError("boundary conditions differ")


def assemble_diff(src: SpaceHandle, dst: SpaceHandle, restrict: bool = True) -> Operator:
    """Matrix of ``d^l`` on DOF vectors (entries set from the reference matrix)."""
    _check_pair(src, dst)
    Dref = reference_derivative_matrix(src.l, src.p)
    ni, nj = Dref.shape
    rows = np.repeat(dst.cell_dofs, nj, axis=1).ravel()
    cols = np.tile(src.cell_dofs, (1, ni)).ravel()
    vals = np.tile(Dref.ravel(), src.mesh.nt)
    keep = vals != 0.0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    key = rows * src.global_dim + cols
    _, first = np.unique(key, return_index=True)
    D = sp.coo_matrix(
        (vals[first], (rows[first], cols[first])), shape=(dst.global_dim, src.global_dim)
    ).tocsr()
    op = Operator(D, f"diff({src.l})")
    if restrict:
        op = op.restrict(dst.free, src.free)
    return op


def export_matrix_market(op: Operator, path) -> None:
    scipy.io.mmwrite(str(Path(path)), op.matrix, comment=op.tag)


@dataclass(frozen=True)
class ComplexReport:
    dims: tuple[int, ...]
    ranks: tuple[int, ...]  # rank of D^l for l = 0, 1, 2
    kernel_dims: tuple[int, ...]  # l = 0..3
    cohomology: tuple[int, ...]  # l = 0..3
    composition_residual: float
    p: int
    bc: str


def complex_spaces(mesh: Mesh, p: int, bc: str) -> list[SpaceHandle]:
    return [build_space(mesh, l, p, bc) for l in range(4)]


def complex_report(mesh: Mesh, p: int = 0, bc: str = "none") -> ComplexReport:
    """Dimensions, ranks, kernels and cohomology of the discrete complex.

    With ``bc="homogeneous"`` the last space is taken modulo constants, so the
    level-3 entry measures the failure of ``div`` to reach the mean-free
    functions.
    """
    spaces = complex_spaces(mesh, p, bc)
    D = [assemble_diff(spaces[l], spaces[l + 1]) for l in range(3)]
    dims = tuple(s.dim for s in spaces)
    ranks = tuple(numerical_rank(d.toarray()) for d in D)
    kernels = tuple(dims[l] - ranks[l] for l in range(3)) + (dims[3],)
    coh = [kernels[0]]
    for l in (1, 2):
        coh.append(kernels[l] - ranks[l - 1])
    top = dims[3] - (1 if bc == "homogeneous" else 0)
    coh.append(top - ranks[2])
    res = 0.0
    for l in range(2):
        prod = (D[l + 1].matrix @ D[l].matrix).toarray()
        if prod.size:
            res = max(res, float(np.abs(prod).max()))
    return ComplexReport(dims, ranks, kernels, tuple(coh), res, p, bc)


def kernel_orthogonal_projector(mass: Operator, diff: Operator) -> Operator:
    """``M``-orthogonal projector onto the complement of ``ker(diff)``."""
    M = mass.toarray()
    Z = null_space(diff.toarray())
    n = M.shape[0]
    if Z.shape[1] == 0:
        return Operator(sp.identity(n, format="csr"), "other")
    MZ = M @ Z
    Pk = Z @ np.linalg.solve(Z.T @ MZ, MZ.T)
    return Operator(sp.csr_matrix(np.eye(n) - Pk), "other")
