import numpy as np
import pytest
import sympy as sp

from dpoincare import polynomials as P
from dpoincare.fespace import (
    AffineMap,
    SpaceError,
    basis_interface_jumps,
    build_space,
    eval_basis,
    local_dim,
    piola,
    piola_inverse,
    polynomial_space_basis,
    pullback_matrices,
    pushforward_matrices,
    reference_element,
)
from dpoincare.mesh import cube_freudenthal, reference_tet, vertex_star_synthetic

MESHES = {
    "ref": reference_tet,
    "cube1": lambda: cube_freudenthal(1),
    "cube2": lambda: cube_freudenthal(2),
    "star8": lambda: vertex_star_synthetic(8),
}


@pytest.mark.parametrize("l", range(4))
@pytest.mark.parametrize("p", range(3))
def test_local_dimensions_match_generating_set_rank(l, p):
    # brute-force rank of the spanning set {u + x x v} / {u + x m}
    assert len(polynomial_space_basis(l, p)) == local_dim(l, p)
    assert reference_element(l, p).nloc == local_dim(l, p)


def test_local_dimension_formulas():
    assert [local_dim(l, 0) for l in range(4)] == [4, 6, 4, 1]
    assert [local_dim(l, 1) for l in range(4)] == [10, 20, 15, 4]


@pytest.mark.parametrize("l", range(4))
@pytest.mark.parametrize("p", range(3))
def test_reference_duality(l, p):
    ref = reference_element(l, p)
    assert np.allclose(ref.dofs_of_coeffs(ref.basis), np.eye(ref.nloc), atol=1e-12)


@pytest.mark.parametrize("mesh", ["cube1", "cube2", "star8"])
@pytest.mark.parametrize("l", range(4))
@pytest.mark.parametrize("p", [0, 1])
def test_physical_duality_every_tet(mesh, l, p):
    m = MESHES[mesh]()
    s = build_space(m, l, p)
    V = P.vandermonde(s.ref.points, s.ref.degree)
    vals = np.einsum("tjcm,pm->tjcp", s.physical_basis(), V)
    pulled = np.einsum("tcd,tjdp->tjcp", s.pullback(), vals)
    dual = np.einsum("ipc,tjcp->tij", s.ref.weights, pulled)
    assert np.abs(dual - np.eye(s.ref.nloc)).max() < 1e-12


def test_global_dims_p0():
    m = cube_freudenthal(1)
    assert [build_space(m, l, 0).global_dim for l in range(4)] == [m.nv, m.ne, m.nf, m.nt]
    assert build_space(m, 2, 0).global_dim == 18
    assert build_space(m, 1, 0, "homogeneous").dim == 1
    assert build_space(reference_tet(), 1, 1).global_dim == 20


def test_homogeneous_dims_count_interior_entities():
    m = cube_freudenthal(2)
    nv_in = int((~m.boundary_vertex_flags).sum())
    ne_in = int((~m.boundary_edge_flags).sum())
    nf_in = int((~m.boundary_face_flags).sum())
    assert build_space(m, 0, 0, "homogeneous").dim == nv_in
    assert build_space(m, 1, 0, "homogeneous").dim == ne_in
    assert build_space(m, 2, 0, "homogeneous").dim == nf_in
    assert build_space(m, 3, 0, "homogeneous").dim == m.nt
    assert build_space(m, 0, 1, "homogeneous").dim == nv_in + ne_in


@pytest.mark.parametrize("mesh", ["cube1", "cube2", "star8"])
@pytest.mark.parametrize("l", range(3))
@pytest.mark.parametrize("p", [0, 1])
def test_conformity_of_global_basis(mesh, l, p):
    assert basis_interface_jumps(build_space(MESHES[mesh](), l, p)) < 1e-11


def test_eval_basis_lagrange_property():
    m = cube_freudenthal(1)
    s = build_space(m, 0, 0)
    t = 3
    for k, v in enumerate(m.tets[t]):
        vals = eval_basis(s, t, m.vertices[v])[:, 0]
        assert vals[k] == pytest.approx(1.0)
        assert np.allclose(np.delete(vals, k), 0.0, atol=1e-13)


def test_eval_basis_outside():
    s = build_space(reference_tet(), 0, 0)
    with pytest.raises(SpaceError, match="point outside element"):
        eval_basis(s, 0, [1.0, 1.0, 1.0])


def _edge_moment(s, t, e_local, j):
    m = s.mesh
    a, b = m.tets[t][list([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)][e_local])]
    xs, ws = P.gauss_interval(6)
    tv = m.vertices[b] - m.vertices[a]
    return sum(w * eval_basis(s, t, m.vertices[a] + x * tv)[j] @ tv for x, w in zip(xs, ws))


def test_edge_basis_duality_by_quadrature():
    m = cube_freudenthal(1)
    s = build_space(m, 1, 0)
    t = 2
    for j in range(6):
        moments = [_edge_moment(s, t, e, j) for e in range(6)]
        assert np.allclose(moments, np.eye(6)[j], atol=1e-12)


def test_face_basis_flux_duality():
    m = cube_freudenthal(1)
    s = build_space(m, 2, 0)
    t = 4
    st, w = P.gauss_triangle(4)
    for j in range(4):
        fluxes = []
        for a, b, c in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]:
            x = m.vertices[m.tets[t][[a, b, c]]]
            n = np.cross(x[1] - x[0], x[2] - x[0])  # area-weighted, increasing-index orientation
            pts = x[0] + st[:, :1] * (x[1] - x[0]) + st[:, 1:] * (x[2] - x[0])
            fluxes.append(sum(wk * eval_basis(s, t, pk)[j] @ n for pk, wk in zip(pts, w)))
        assert np.allclose(fluxes, np.eye(4)[j], atol=1e-12)


def test_piola_identity_and_scaling():
    F = AffineMap(np.eye(3), np.zeros(3))
    v = lambda x: np.column_stack([x[:, 0], x[:, 1] ** 2, np.ones(len(x))])
    xi = np.random.default_rng(0).random((4, 3))
    for l in (1, 2):
        assert np.allclose(piola(l, F, v)(xi), v(xi))
    s = 0.7
    Fs = AffineMap(s * np.eye(3), np.zeros(3))
    assert np.allclose(piola(2, Fs, v)(xi), s**2 * v(s * xi))
    with pytest.raises(SpaceError):
        piola(0, F, v)
    with pytest.raises(SpaceError):
        pullback_matrices(2, np.zeros((3, 3)))


def test_piola_round_trip():
    rng = np.random.default_rng(3)
    J = rng.standard_normal((3, 3))
    F = AffineMap(J, rng.standard_normal(3))
    v = lambda x: np.column_stack([np.sin(x[:, 0]), x[:, 1] * x[:, 2], np.exp(x[:, 2])])
    x = rng.random((10, 3))
    for l in (1, 2):
        back = piola_inverse(l, F, piola(l, F, v))
        assert np.allclose(back(x), v(x), atol=1e-13)
    for l in range(4):
        assert np.allclose(pullback_matrices(l, J) @ pushforward_matrices(l, J), np.eye(3 if l in (1, 2) else 1))


def test_piola_commutes_with_div_symbolic():
    """psi^3(div v) == div(psi^2 v), checked against sympy derivatives."""
    rng = np.random.default_rng(11)
    J = rng.standard_normal((3, 3))
    b = rng.standard_normal(3)
    x = sp.symbols("x0:3")
    xi = sp.symbols("s0:3")
    coeffs = rng.integers(-3, 4, size=(3, 10))
    mons = [sp.Integer(1), *x, x[0] * x[1], x[1] * x[2], x[0] * x[2], x[0] ** 2, x[1] ** 2, x[2] ** 2]
    v = [sum(int(c) * m for c, m in zip(coeffs[i], mons)) for i in range(3)]
    divv = sum(sp.diff(v[i], x[i]) for i in range(3))
    Fx = [sum(sp.Float(J[i, j]) * xi[j] for j in range(3)) + sp.Float(b[i]) for i in range(3)]
    sub = dict(zip(x, Fx))
    det = float(np.linalg.det(J))
    Jinv = np.linalg.inv(J)
    psi2 = [det * sum(sp.Float(Jinv[i, j]) * v[j].subs(sub) for j in range(3)) for i in range(3)]
    lhs = sp.lambdify(xi, det * divv.subs(sub))
    rhs = sp.lambdify(xi, sum(sp.diff(psi2[i], xi[i]) for i in range(3)))
    pts = rng.random((10, 3))
    for q in pts:
        assert lhs(*q) == pytest.approx(rhs(*q), rel=1e-11, abs=1e-11)
    # and the numeric Piola helper agrees with the symbolic pullback
    F = AffineMap(J, b)
    vnum = sp.lambdify(x, v)
    vfun = lambda X: np.array([vnum(*r) for r in X], dtype=float)
    got = piola(2, F, vfun)(pts)
    want = np.array([[float(c.subs(dict(zip(xi, q)))) for c in psi2] for q in pts])
    assert np.allclose(got, want, rtol=1e-11, atol=1e-11)


def test_unsupported_combinations():
    with pytest.raises(SpaceError):
        build_space(reference_tet(), 4, 0)
    with pytest.raises(SpaceError):
        build_space(reference_tet(), 1, 9)
    with pytest.raises(SpaceError):
        build_space(reference_tet(), 1, 0, "dirichlet")
