"""Dense linear algebra kernels: generalized symmetric eigenproblems,
saddle-point systems and numerical rank."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class SolverError(ValueError):
    pass


RANK_RTOL = 1e-12


def _dense(A) -> np.ndarray:
    if hasattr(A, "toarray"):
        return A.toarray()
    return np.asarray(A, dtype=float)


def numerical_rank(A, rtol: float = RANK_RTOL) -> int:
    """Rank with threshold ``sigma_max * max(rows, cols) * rtol``."""
    A = _dense(A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > s[0] * max(A.shape) * rtol))


def null_space(A, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal kernel basis (columns) from a full SVD."""
    A = _dense(A)
    n = A.shape[1]
    if A.shape[0] == 0 or n == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    r = int(np.sum(s > s[0] * max(A.shape) * rtol)) if s[0] > 0 else 0
    return vt[r:].T.copy()


def range_basis(A, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal (Euclidean) basis of the column space of ``A``."""
    A = _dense(A)
    if A.size == 0:
        return np.zeros((A.shape[0], 0))
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > s[0] * max(A.shape) * rtol)) if s[0] > 0 else 0
    return u[:, :r].copy()


def m_orthonormalize(R: np.ndarray, M) -> np.ndarray:
    """Columns spanning ``range(R)`` that are orthonormal in the ``M`` inner product."""
    M = _dense(M)
    if R.shape[1] == 0:
        return R
    G = R.T @ M @ R
    L = np.linalg.cholesky(0.5 * (G + G.T))
    return sla.solve_triangular(L, R.T, lower=True).T


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray

    def __len__(self) -> int:
        return len(self.eigenvalues)


def sym_gen_eig(K, M) -> EigenResult:
    """All eigenpairs of ``K x = lambda M x`` for symmetric ``K`` and SPD ``M``.

    Reduces with the Cholesky factor ``M = L L^T`` and diagonalizes
    ``L^{-1} K L^{-T}`` with LAPACK's symmetric solver.
    """
    K = _dense(K)
    M = _dense(M)
    if K.shape != M.shape or K.shape[0] != K.shape[1]:
        raise SolverError("K and M must be square and of equal size")
    n = K.shape[0]
    if n == 0:
        return EigenResult(np.zeros(0), np.zeros((0, 0)), np.zeros(0))
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SolverError("mass matrix is not symmetric positive definite") from None
    C = sla.solve_triangular(L, K, lower=True)
    C = sla.solve_triangular(L, C.T, lower=True)
    lam, Y = np.linalg.eigh(0.5 * (C + C.T))
    X = sla.solve_triangular(L.T, Y, lower=False)
    res = np.linalg.norm(K @ X - (M @ X) * lam, axis=0)
    return EigenResult(lam, X, res)


@dataclass(frozen=True)
class SaddleSolution:
    u: np.ndarray
    s: np.ndarray
    residual_primal: float
    residual_constraint: float


class SaddleSolver:
    """Null-space solver for ``[A B^T; B 0][u; s] = [f; g]``.

    ``B`` may be rank deficient; the multiplier is then sought in the range of
    ``B`` and ``g`` must lie in that range.  The factorization is built once
    and reused for any number of right-hand sides.
    """

    def __init__(self, A, B, rtol: float = RANK_RTOL):
        A = _dense(A)
        B = _dense(B)
        n = A.shape[0]
        if A.shape != (n, n):
            raise SolverError("A must be square")
        if B.size == 0:
            B = np.zeros((B.shape[0] if B.ndim == 2 else 0, n))
        if B.shape[1] != n:
            raise SolverError("B has the wrong number of columns")
        self.A, self.B = A, B
        if B.shape[0] == 0:
            r = 0
            U = np.zeros((0, 0))
            s = np.zeros(0)
            V = np.eye(n)
        else:
            U, s, vt = np.linalg.svd(B, full_matrices=True)
            r = int(np.sum(s > s[0] * max(B.shape) * rtol)) if s[0] > 0 else 0
            V = vt.T
        self.rank = r
        self._Ur, self._sr = U[:, :r], s[:r]
        self._Y, self._Z = V[:, :r], V[:, r:]
        Az = self._Z.T @ A @ self._Z
        try:
            self._cho = sla.cho_factor(0.5 * (Az + Az.T)) if Az.size else None
        except np.linalg.LinAlgError:
            raise SolverError("A is not positive definite on ker(B)") from None

    def solve(self, f, g=None, check: bool = True) -> SaddleSolution:
        A, B = self.A, self.B
        f = np.asarray(f, dtype=float)
        vec = f.ndim == 1
        F = f[:, None] if vec else f
        if g is None:
            G = np.zeros((B.shape[0], F.shape[1]))
        else:
            g = np.asarray(g, dtype=float)
            G = g[:, None] if g.ndim == 1 else g
        uy = self._Y @ ((self._Ur.T @ G) / self._sr[:, None]) if self.rank else np.zeros_like(F)
        if check and B.shape[0]:
            cres = np.linalg.norm(B @ uy - G, axis=0)
            scale = np.maximum(np.linalg.norm(G, axis=0), 1e-300)
            if np.any(cres > 1e-7 * scale) and np.any(cres > 1e-300):
                raise SolverError("incompatible constraint")
        rhs = self._Z.T @ (F - A @ uy)
        uz = sla.cho_solve(self._cho, rhs) if self._cho is not None else np.zeros((0, F.shape[1]))
        U = uy + self._Z @ uz
        R = F - A @ U
        S = self._Ur @ ((self._Y.T @ R) / self._sr[:, None]) if self.rank else np.zeros((B.shape[0], F.shape[1]))
        r1 = np.linalg.norm(A @ U + B.T @ S - F)
        r2 = np.linalg.norm(B @ U - G)
        if vec:
            U, S = U[:, 0], S[:, 0]
        return SaddleSolution(U, S, float(r1), float(r2))


def solve_saddle(A, B, f, g) -> SaddleSolution:
    return SaddleSolver(A, B).solve(f, g)
