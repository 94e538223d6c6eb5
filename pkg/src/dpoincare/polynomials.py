"""Dense trivariate polynomials on the unit reference tetrahedron.

Polynomials are stored as coefficient vectors over the graded monomial list
returned by :func:`exponents`.  Because the ordering is graded, the
coefficients of a degree-``k`` polynomial are a prefix of its degree-``k+1``
representation, so raising the degree is zero padding.

The reference tetrahedron has vertices ``0, e1, e2, e3``.  Integrals of
monomials over it have the closed form ``a! b! c! / (a + b + c + 3)!``.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

REF_VERTICES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)


@lru_cache(maxsize=None)
def exponents(k: int) -> np.ndarray:
    """Graded list of exponent triples of total degree <= ``k``."""
    out = []
    for d in range(k + 1):
        for a in range(d, -1, -1):
            for b in range(d - a, -1, -1):
                out.append((a, b, d - a - b))
    arr = np.array(out, dtype=np.int64).reshape(-1, 3)
    arr.setflags(write=False)
    return arr


def nmono(k: int) -> int:
    if k < 0:
        return 0
    return (k + 1) * (k + 2) * (k + 3) // 6


@lru_cache(maxsize=None)
def _index(k: int) -> dict:
    return {tuple(e): i for i, e in enumerate(exponents(k))}


def vandermonde(points: np.ndarray, k: int) -> np.ndarray:
    """Matrix ``V[q, i] = points[q] ** exponents(k)[i]``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ex = exponents(k)
    return np.prod(pts[:, None, :] ** ex[None, :, :], axis=2)


def evaluate(coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate coefficient arrays ``(..., nmono)`` at ``points`` -> ``(..., npts)``."""
    coeffs = np.asarray(coeffs)
    k = degree_of(coeffs.shape[-1])
    return coeffs @ vandermonde(points, k).T


def degree_of(n: int) -> int:
    k = 0
    while nmono(k) < n:
        k += 1
    if nmono(k) != n:
        raise ValueError(f"{n} is not a monomial count")
    return k


def pad(coeffs: np.ndarray, k: int) -> np.ndarray:
    """Raise the storage degree of ``coeffs`` to ``k`` (zero padding)."""
    coeffs = np.asarray(coeffs)
    n = nmono(k)
    if coeffs.shape[-1] > n:
        raise ValueError("cannot pad to a lower degree")
    out = np.zeros(coeffs.shape[:-1] + (n,))
    out[..., : coeffs.shape[-1]] = coeffs
    return out


@lru_cache(maxsize=None)
def diff_matrix(k: int, axis: int) -> np.ndarray:
    """Matrix of d/d(xi_axis) acting on degree-``k`` coefficient vectors."""
    ex = exponents(k)
    idx = _index(k)
    D = np.zeros((len(ex), len(ex)))
    for j, e in enumerate(ex):
        if e[axis] == 0:
            continue
        t = list(e)
        t[axis] -= 1
        D[idx[tuple(t)], j] = e[axis]
    D.setflags(write=False)
    return D


@lru_cache(maxsize=None)
def shift_matrix(k: int, axis: int) -> np.ndarray:
    """Multiplication by ``xi_axis``: degree ``k`` -> degree ``k + 1``."""
    ex = exponents(k)
    idx = _index(k + 1)
    S = np.zeros((nmono(k + 1), len(ex)))
    for j, e in enumerate(ex):
        t = list(e)
        t[axis] += 1
        S[idx[tuple(t)], j] = 1.0
    S.setflags(write=False)
    return S


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two scalar polynomials given by coefficient vectors."""
    ka = degree_of(len(a))
    kb = degree_of(len(b))
    ea, eb = exponents(ka), exponents(kb)
    idx = _index(ka + kb)
    out = np.zeros(nmono(ka + kb))
    for i, e in enumerate(ea):
        if a[i] == 0.0:
            continue
        for j, f in enumerate(eb):
            out[idx[(e[0] + f[0], e[1] + f[1], e[2] + f[2])]] += a[i] * b[j]
    return out


@lru_cache(maxsize=None)
def product_tensor(ka: int, kb: int) -> np.ndarray:
    """Tensor ``P[r, i, j]`` with ``(a * b)[r] = sum_ij P[r, i, j] a[i] b[j]``."""
    ea, eb = exponents(ka), exponents(kb)
    idx = _index(ka + kb)
    P = np.zeros((nmono(ka + kb), len(ea), len(eb)))
    for i, e in enumerate(ea):
        for j, f in enumerate(eb):
            P[idx[(e[0] + f[0], e[1] + f[1], e[2] + f[2])], i, j] = 1.0
    P.setflags(write=False)
    return P


def barycentric(i: int) -> np.ndarray:
    """Degree-1 coefficients of the reference barycentric coordinate ``i``."""
    c = np.zeros(4)
    if i == 0:
        c[:] = [1.0, -1.0, -1.0, -1.0]
    else:
        c[i] = 1.0
    return c


@lru_cache(maxsize=None)
def monomial_integrals(k: int) -> np.ndarray:
    """Exact integrals of the degree-``k`` monomials over the reference tetrahedron."""
    ex = exponents(k)
    vals = np.array(
        [
            factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
            for a, b, c in ex
        ]
    )
    vals.setflags(write=False)
    return vals


@lru_cache(maxsize=None)
def gram(k1: int, k2: int) -> np.ndarray:
    """``G[i, j]`` = integral over the reference tet of ``m_i * m_j``."""
    e1, e2 = exponents(k1), exponents(k2)
    s = e1[:, None, :] + e2[None, :, :]
    fa = np.vectorize(factorial)
    G = fa(s).prod(axis=2) / fa(s.sum(axis=2) + 3)
    G = G.astype(float)
    G.setflags(write=False)
    return G


@lru_cache(maxsize=None)
def lattice(k: int) -> np.ndarray:
    """Principal lattice of order ``max(k, 1)``; unisolvent for P_k."""
    m = max(k, 1)
    pts = [
        (a / m, b / m, c / m)
        for a in range(m + 1)
        for b in range(m + 1 - a)
        for c in range(m + 1 - a - b)
    ]
    pts = np.array(pts)
    if k == 0:
        pts = pts[:1] + 0.25
    return pts


def compose_affine(coeffs: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficients of ``xi -> p(A xi + b)`` for arrays ``(..., nmono)``."""
    coeffs = np.asarray(coeffs)
    k = degree_of(coeffs.shape[-1])
    pts = lattice(k)
    V = vandermonde(pts, k)
    vals = evaluate(coeffs, pts @ np.asarray(A).T + np.asarray(b))
    return np.linalg.solve(V, vals.reshape(-1, len(pts)).T).T.reshape(coeffs.shape)


# -- quadrature -------------------------------------------------------------


@lru_cache(maxsize=None)
def gauss_interval(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of ``degree``."""
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_triangle(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle (area 1/2)."""
    x, w = gauss_interval(degree + 1)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    s1 = u.ravel()
    s2 = ((1.0 - u) * v).ravel()
    ww = (wu * wv * (1.0 - u)).ravel()
    return np.column_stack([s1, s2]), ww


@lru_cache(maxsize=None)
def gauss_tet(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference tetrahedron (volume 1/6)."""
    x, w = gauss_interval(degree + 2)
    u, v, t = np.meshgrid(x, x, x, indexing="ij")
    wu, wv, wt = np.meshgrid(w, w, w, indexing="ij")
    s1 = u
    s2 = (1.0 - u) * v
    s3 = (1.0 - u) * (1.0 - v) * t
    ww = wu * wv * wt * (1.0 - u) ** 2 * (1.0 - v)
    return np.column_stack([s1.ravel(), s2.ravel(), s3.ravel()]), ww.ravel()
