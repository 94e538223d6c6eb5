"""Best discrete Poincare constants and their equivalent characterizations.

For one level ``l`` of the complex the constant is

    C = sup_{u perp ker d} ||u|| / (h_omega ||d u||) = 1 / (h_omega sqrt(lambda)),

with ``lambda`` the smallest positive eigenvalue of ``D^T M_{l+1} D x =
lambda M_l x``.  The same number is recovered three more ways: the stability
of the minimum-norm preimage, an inf-sup constant over the range of ``D`` and
the operator norm of the minimal potential.  Each is computed along its own
code path so that agreement is a real check.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .derham import assemble_diff, assemble_mass
from .fespace import SpaceHandle, build_space, local_dim
from .fields import BrokenField
from .mesh import Mesh, h_omega, locate_parents
from .solvers import (
    SaddleSolver,
    SolverError,
    m_orthonormalize,
    null_space,
    range_basis,
    sym_gen_eig,
)

DEFAULT_CAP = 3000
KERNEL_RTOL = 1e-12


class CapExceeded(ValueError):
    pass


class EmptySpace(ValueError):
    pass


@dataclass
class ConstantReport:
    l: int
    p: int
    bc: str
    h_omega: float
    lambda_min_pos: float | None
    constant: float | None
    kernel_dim: int
    dim: int
    infsup: float | None = None
    potential_norm: float | None = None
    stability_ratio: float | None = None
    seed: int | None = None
    status: str = "ok"

    JSON_KEYS = (
        "l", "p", "bc", "h_omega", "lambda_min_pos", "constant",
        "kernel_dim", "dim", "infsup", "potential_norm", "seed",
    )

    def to_json_dict(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in self.JSON_KEYS}


@dataclass
class ProjectionReport:
    l: int
    description: str
    commuting_residual: float
    projection_residual: float | None
    stability_ratio: float
    norm_kind: str
    bound: float | None
    extra: dict = field(default_factory=dict)


class LevelProblem:
    """Matrices of one level ``l`` of the complex, restricted to free DOFs."""

    def __init__(self, mesh: Mesh, l: int, p: int, bc: str = "none", cap: int = DEFAULT_CAP):
        if l not in (0, 1, 2):
            raise ValueError("l must be 0, 1 or 2")
        self.mesh, self.l, self.p, self.bc = mesh, l, p, bc
        self.space = build_space(mesh, l, p, bc)
        self.target = build_space(mesh, l + 1, p, bc)
        size = max(self.space.dim, self.target.dim)
        if size > cap:
            raise CapExceeded(f"problem size {size} exceeds the cap {cap}")
        self.h = h_omega(mesh)

    @cached_property
    def M0(self) -> np.ndarray:
        return assemble_mass(self.space).toarray()

    @cached_property
    def M1(self) -> np.ndarray:
        return assemble_mass(self.target).toarray()

    @cached_property
    def D(self) -> np.ndarray:
        return assemble_diff(self.space, self.target).toarray()

    @property
    def dim(self) -> int:
        return self.space.dim

    @cached_property
    def eig(self):
        K = self.D.T @ self.M1 @ self.D
        return sym_gen_eig(K, self.M0)

    @cached_property
    def svd_kernel_dim(self) -> int:
        return null_space(self.D).shape[1]

    @cached_property
    def kernel_split(self) -> tuple[int, float]:
        """(kernel dim, lambda_min_pos) from the eigenvalue threshold."""
        lam = self.eig.eigenvalues
        if len(lam) == 0:
            return 0, float("nan")
        thr = max(lam.max(), 0.0) * len(lam) * KERNEL_RTOL
        k = int(np.sum(lam < thr))
        if k != self.svd_kernel_dim:
            raise SolverError(
                f"eigenvalue threshold finds kernel dim {k}, SVD finds {self.svd_kernel_dim}"
            )
        pos = float(lam[k]) if k < len(lam) else float("nan")
        return k, pos

    @cached_property
    def range_basis(self) -> np.ndarray:
        """``M_{l+1}``-orthonormal basis (columns) of ``range(D)``."""
        return m_orthonormalize(range_basis(self.D), self.M1)

    @cached_property
    def saddle(self) -> SaddleSolver:
        Q = self.range_basis
        return SaddleSolver(self.M0, Q.T @ self.M1 @ self.D)

    def require_range(self) -> None:
        if self.dim == 0 or self.range_basis.shape[1] == 0:
            raise EmptySpace("range of d is trivial")

    def norm0(self, x) -> np.ndarray:
        x = np.asarray(x)
        return np.sqrt(np.einsum("i...,ij,j...->...", x, self.M0, x))

    def norm1(self, r) -> np.ndarray:
        r = np.asarray(r)
        return np.sqrt(np.einsum("i...,ij,j...->...", r, self.M1, r))


def _problem(obj, l=None, p=None, bc="none", cap=DEFAULT_CAP) -> LevelProblem:
    if isinstance(obj, LevelProblem):
        return obj
    if isinstance(obj, SpaceHandle):
        return LevelProblem(obj.mesh, obj.l, obj.p, obj.bc, cap)
    return LevelProblem(obj, l, p, bc, cap)


# -- the constant ------------------------------------------------------------------


def constant(mesh, l=None, p=None, bc="none", *, cap=DEFAULT_CAP, cross_checks=False,
             seed: int | None = None) -> ConstantReport:
    """Best discrete constant from the generalized eigenproblem."""
    pb = _problem(mesh, l, p, bc, cap)
    if pb.dim == 0:
        return ConstantReport(pb.l, pb.p, pb.bc, pb.h, None, None, 0, 0, status="empty space")
    k, lam = pb.kernel_split
    if not np.isfinite(lam):
        return ConstantReport(pb.l, pb.p, pb.bc, pb.h, None, None, k, pb.dim, status="trivial range")
    C = float(1.0 / (pb.h * np.sqrt(lam)))
    rep = ConstantReport(pb.l, pb.p, pb.bc, pb.h, lam, C, k, pb.dim, seed=seed)
    if cross_checks:
        rep.infsup = inf_sup(pb)
        rep.potential_norm = potential_norm(pb)
        rep.stability_ratio = extremal_stability_ratio(pb)
    return rep


# -- constrained minimization --------------------------------------------------------


def constrained_min(problem, r_dofs) -> np.ndarray:
    """Minimum ``M_l``-norm ``u`` with ``D u = r`` (columns of ``r`` solved together)."""
    pb = _problem(problem)
    r = np.asarray(r_dofs, dtype=float)
    if pb.dim == 0:
        if np.linalg.norm(r) > 0:
            raise SolverError("incompatible constraint")
        return np.zeros((0,) + r.shape[1:])
    Q = pb.range_basis
    coef = Q.T @ pb.M1 @ r
    miss = pb.norm1(r - Q @ coef)
    if np.any(miss > 1e-7 * np.maximum(pb.norm1(r), 1e-300)):
        raise SolverError("incompatible constraint")
    f = np.zeros((pb.dim,) + r.shape[1:])
    return pb.saddle.solve(f, coef).u


def stability_sup(problem, n_samples: int, seed: int = 0, include_extremal: bool = False) -> float:
    """Sampled sup of ``||u*|| / (h_omega ||r||)`` over ``r = D v``, ``v`` random."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    pb = _problem(problem)
    pb.require_range()
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((pb.dim, n_samples))
    R = pb.D @ V
    if include_extremal:
        R = np.column_stack([R, pb.D @ _extremal(pb)])
    keep = pb.norm1(R) > 0
    R = R[:, keep]
    U = constrained_min(pb, R)
    return float(np.max(pb.norm0(U) / (pb.h * pb.norm1(R))))


def _extremal(pb: LevelProblem) -> np.ndarray:
    k, _ = pb.kernel_split
    return pb.eig.eigenvectors[:, k]


def extremal_stability_ratio(problem) -> float:
    """Stability ratio at ``r = D x`` with ``x`` the extremal eigenvector."""
    pb = _problem(problem)
    pb.require_range()
    r = pb.D @ _extremal(pb)
    u = constrained_min(pb, r)
    return float(pb.norm0(u) / (pb.h * pb.norm1(r)))


def inf_sup(problem) -> float:
    """``inf_t sup_u <D u, t> / (||u|| ||t||)`` over ``t`` in the range of ``D``."""
    pb = _problem(problem)
    pb.require_range()
    Q = pb.range_basis
    W = pb.D.T @ pb.M1 @ Q
    S = W.T @ np.linalg.solve(pb.M0, W)
    lam = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(np.sqrt(max(lam[0], 0.0)))


def potential_norm(problem) -> float:
    """Operator norm of the minimal potential ``r -> u*`` on ``range(D)``."""
    pb = _problem(problem)
    pb.require_range()
    U = constrained_min(pb, pb.range_basis)
    G = U.T @ pb.M0 @ U
    return float(np.sqrt(np.linalg.eigvalsh(0.5 * (G + G.T))[-1]))


# -- graph-stable minimizing projection -----------------------------------------------


def _level3_projection(field: BrokenField, space3: SpaceHandle) -> np.ndarray:
    # DOFs of the discontinuous space are moments, so interpolation is the L2 projection
    return field.interpolate(space3)


def _minimizing_dofs(mesh: Mesh, l: int, p: int, bc: str, u: BrokenField,
                     problems: dict) -> np.ndarray:
    """Full DOF vector (all global DOFs) of the projection at level ``l``."""
    if l == 3:
        return _level3_projection(u, build_space(mesh, 3, p, bc))
    if l not in problems:
        problems[l] = LevelProblem(mesh, l, p, bc, cap=10**9)
    pb = problems[l]
    t_full = _minimizing_dofs(mesh, l + 1, p, bc, u.derivative(), problems)
    t = pb.target.restrict(t_full)
    b = pb.space.restrict(u.load_vector(pb.space))
    Q = pb.range_basis
    coef = Q.T @ pb.M1 @ t
    x = pb.saddle.solve(b, coef).u
    return pb.space.extend(x)


def graph_norm(field: BrokenField, h: float) -> float:
    """``(||v||^2 + h^2 ||d v||^2)^(1/2)``."""
    return float(np.sqrt(field.norm() ** 2 + h**2 * field.derivative().norm() ** 2))


def minimizing_projection(mesh: Mesh, l: int, p: int, u_rich: BrokenField, bc: str = "none",
                          *, C: float | None = None) -> tuple[np.ndarray, ProjectionReport]:
    """Projection ``u -> argmin ||u - v||`` subject to ``d v = Pi^{l+1}(d u)``.

    ``Pi^3`` is the L2 projection and the higher levels are defined by the
    same minimization, so the projections commute with ``d`` by construction.
    """
    if u_rich.mesh is not mesh:
        raise ValueError("incompatible meshes: the field must live on the given mesh")
    problems: dict = {}
    x = _minimizing_dofs(mesh, l, p, bc, u_rich, problems)
    pb = problems[l]
    t_full = _minimizing_dofs(mesh, l + 1, p, bc, u_rich.derivative(), problems)
    Dfull = assemble_diff(pb.space, pb.target, restrict=False)
    comm = np.sqrt(_mass_norm2(pb.target, Dfull @ x - t_full))
    du = u_rich.derivative()
    comm /= max(du.norm(), 1e-300)
    Pu = BrokenField.from_space(pb.space, x)
    h = pb.h
    ratio = graph_norm(Pu, h) / max(graph_norm(u_rich, h), 1e-300)
    # projection residual: distance of the input to its projection when it is discrete
    proj = (Pu - u_rich).norm() / max(u_rich.norm(), 1e-300)
    if C is None:
        C = constant(pb).constant
    bound = float(np.sqrt(10.0 + 8.0 * C**2))
    rep = ProjectionReport(
        l=l,
        description=f"minimizing projection, level {l}, p={p}, bc={bc}",
        commuting_residual=float(comm),
        projection_residual=float(proj),
        stability_ratio=float(ratio),
        norm_kind="graph",
        bound=bound,
        extra={"constant": C},
    )
    return x, rep


def _mass_norm2(space: SpaceHandle, x: np.ndarray) -> float:
    M = assemble_mass(space, restrict=False).toarray()
    return float(max(x @ M @ x, 0.0))


# -- comparison with a richer oracle space -------------------------------------------


@dataclass
class OracleReport:
    l: int
    p: int
    bc: str
    oracle: str
    nested: bool
    ratios: np.ndarray
    seed: int

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    @property
    def min_ratio(self) -> float:
        return float(self.ratios.min())


def oracle_min_ratio(mesh: Mesh, l: int, p: int, bc: str = "none", *, oracle: str = "degree",
                     oracle_mesh: Mesh | None = None, n_samples: int = 16, seed: int = 0,
                     require_nested: bool = True) -> OracleReport:
    """Compare minimal preimages in the discrete space and in a richer oracle space.

    ``oracle="degree"`` uses order ``p + 2`` on the same mesh, ``oracle="mesh"``
    uses ``oracle_mesh`` (which must refine ``mesh``) at order ``p``.  When the
    spaces nest, the oracle minimizes over a superset, so every ratio
    ``||u*_coarse|| / ||u*_oracle||`` is at least one.
    """
    coarse = LevelProblem(mesh, l, p, bc, cap=10**9)
    coarse.require_range()
    if oracle == "degree":
        fine_mesh, q = mesh, p + 2
        nested = True
    elif oracle == "mesh":
        if oracle_mesh is None:
            raise ValueError("oracle='mesh' needs oracle_mesh")
        fine_mesh, q = oracle_mesh, p
        try:
            parents = locate_parents(fine_mesh, mesh)
            nested = True
        except ValueError:
            if require_nested:
                raise
            nested = False
    elif oracle == "same":
        fine_mesh, q, nested = mesh, p, True
    else:
        raise ValueError(f"unknown oracle {oracle!r}")
    fine = LevelProblem(fine_mesh, l, q, bc, cap=10**9)

    rng = np.random.default_rng(seed)
    V = rng.standard_normal((coarse.dim, n_samples))
    R = coarse.D @ V
    Uc = constrained_min(coarse, R)
    ratios = []
    for k in range(n_samples):
        v_field = BrokenField.from_space(coarse.space, V[:, k])
        if fine_mesh is not mesh:
            v_field = v_field.transfer(fine_mesh, parents)
        v_fine = fine.space.restrict(v_field.interpolate(fine.space))
        r_fine = fine.D @ v_fine
        u_o = constrained_min(fine, r_fine)
        ratios.append(coarse.norm0(Uc[:, k]) / fine.norm0(u_o))
    return OracleReport(l, p, bc, f"{oracle}:{'p+2' if oracle == 'degree' else q}", nested,
                        np.array(ratios), seed)


# -- piecewise Piola transport ---------------------------------------------------------


@dataclass
class TransportLevel:
    l: int
    commuting_residual: float
    transport_residual: float
    conformity_jump: float
    psi_norm: float  # ||psi^l||
    psi_inv_norm: float  # ||psi^{-l}||
    psi_next_norm: float  # ||psi^{l+1}||
    constant: float
    constant_ref: float
    lhs: float  # C h
    rhs: float  # ||psi^{-l}|| ||psi^{l+1}|| C_ref h_ref

    @property
    def bound_holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-10)


@dataclass
class TransportReport:
    mode: str
    levels: list


def companion_reference_mesh(mesh: Mesh, mode: str = "box") -> Mesh:
    """Same connectivity, coordinates recentred and normalized to unit scale.

    ``mode="box"`` scales each axis by its own extent (so the bounding box is
    the unit cube); ``mode="isotropic"`` divides by the domain diameter.
    """
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    centre = 0.5 * (lo + hi)
    if mode == "box":
        ext = np.where(hi - lo > 0, hi - lo, 1.0)
        A = np.diag(1.0 / ext)
    elif mode == "isotropic":
        A = np.eye(3) / h_omega(mesh)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return mesh.transformed(A, -A @ centre)


def _same_connectivity(a: Mesh, b: Mesh) -> bool:
    return (
        a.tets.shape == b.tets.shape
        and np.array_equal(a.tets, b.tets)
        and np.array_equal(a.edges, b.edges)
        and np.array_equal(a.faces, b.faces)
    )


def _transport_coeffs(space: SpaceHandle, ref_space: SpaceHandle, x: np.ndarray) -> BrokenField:
    """Pull back the field with DOFs ``x`` through the global affine map, elementwise."""
    field = BrokenField.from_space(space, x)
    # physical components -> reference components on each tet, then push forward on ref mesh
    Q = space.pullback()
    A = ref_space.pushforward()
    coeffs = np.einsum("tab,tbc,tcm->tam", A, Q, field.coeffs)
    return BrokenField(ref_space.mesh, coeffs, space.l)


def _gen_norm(Mnum: np.ndarray, Mden: np.ndarray) -> float:
    """sup_x sqrt(x^T Mnum x / x^T Mden x)."""
    if Mnum.shape[0] == 0:
        return 0.0
    return float(np.sqrt(sym_gen_eig(Mnum, Mden).eigenvalues[-1]))


def piola_transport(mesh: Mesh, reference: Mesh | None = None, *, p: int = 0,
                     mode: str = "box", levels=(0, 1, 2)) -> TransportReport:
    """Compare constants on ``mesh`` with those on a same-connectivity reference mesh.

    Checks that the piecewise Piola pull-back maps conforming spaces to
    conforming spaces, commutes with ``d`` on DOF vectors and transports the
    constant with the measured operator norms:
    ``C h <= ||psi^{-l}|| ||psi^{l+1}|| C_ref h_ref``.
    """
    ref = companion_reference_mesh(mesh, mode) if reference is None else reference
    if not _same_connectivity(mesh, ref):
        raise ValueError("connectivity mismatch")
    out = []
    rng = np.random.default_rng(0)
    mass = {}

    def masses(l):
        if l not in mass:
            s, sr = build_space(mesh, l, p), build_space(ref, l, p)
            mass[l] = (s, sr, assemble_mass(s).toarray(), assemble_mass(sr).toarray())
        return mass[l]

    for l in levels:
        s0, r0, M0, R0 = masses(l)
        s1, r1, M1, R1 = masses(l + 1)
        x = rng.standard_normal(s0.global_dim)
        # transport and re-interpolate; with moment DOFs this is the identity on DOF vectors
        moved = _transport_coeffs(s0, r0, x)
        xr = moved.interpolate(r0)
        t_res = float(np.abs(xr - x).max() / max(np.abs(x).max(), 1e-300))
        jump = moved.interface_jump(l) if l < 3 else 0.0
        D = assemble_diff(s0, s1).toarray()
        Dr = assemble_diff(r0, r1).toarray()
        moved_d = _transport_coeffs(s1, r1, D @ x).interpolate(r1)
        c_res = float(np.abs(moved_d - Dr @ xr).max() / max(np.abs(D @ x).max(), 1e-300))
        psi = _gen_norm(R0, M0)
        psi_inv = _gen_norm(M0, R0)
        psi_next = _gen_norm(R1, M1)
        C = constant(mesh, l, p).constant
        Cr = constant(ref, l, p).constant
        lhs = C * h_omega(mesh)
        rhs = psi_inv * psi_next * Cr * h_omega(ref)
        out.append(TransportLevel(l, c_res, t_res, jump, psi, psi_inv, psi_next, C, Cr, lhs, rhs))
    return TransportReport(mode, out)


def level_dims(l: int, p: int) -> int:
    return local_dim(l, p)
