import itertools

import numpy as np
import pytest

from dpoincare.mesh import (
    MeshError,
    MeshFormatError,
    betti_numbers,
    build_mesh,
    cube_freudenthal,
    extract_star,
    format_mesh,
    generate,
    geometry,
    h_omega,
    locate_parents,
    parse_mesh,
    reference_tet,
    stretched_cube,
    vertex_star_synthetic,
)


def brute_force_entities(tets):
    edges, faces = set(), set()
    for t in tets:
        t = sorted(t)
        edges.update(itertools.combinations(t, 2))
        faces.update(itertools.combinations(t, 3))
    return sorted(edges), sorted(faces)


def test_reference_tet_counts():
    m = reference_tet()
    assert m.counts() == (4, 6, 4, 1)
    assert m.euler_characteristic() == 1
    assert m.boundary_face_flags.all()


def test_cube1_counts_against_enumeration():
    m = cube_freudenthal(1)
    edges, faces = brute_force_entities(m.tets.tolist())
    assert [tuple(e) for e in m.edges] == edges
    assert [tuple(f) for f in m.faces] == faces
    assert m.counts() == (8, 19, 18, 6)
    assert m.boundary_face_flags.sum() == 12
    assert (~m.boundary_face_flags).sum() == 6
    assert (~m.boundary_edge_flags).sum() == 1


def test_connectivity_round_trip():
    m = cube_freudenthal(2)
    for t in range(m.nt):
        assert set(map(tuple, m.jev[m.tet_edges[t]])) == set(itertools.combinations(m.jcv[t], 2))
        assert set(map(tuple, m.jfv[m.tet_faces[t]])) == set(itertools.combinations(m.jcv[t], 3))
    again = build_mesh(m.vertices, m.tets)
    for name in ("edges", "faces", "tet_edges", "tet_faces", "face_tets"):
        assert np.array_equal(getattr(m, name), getattr(again, name))


def test_unsorted_input_is_sorted():
    m = build_mesh(reference_tet().vertices, [[3, 1, 0, 2]])
    assert m.tets.tolist() == [[0, 1, 2, 3]]


@pytest.mark.parametrize(
    "tets, msg",
    [([[0, 1, 1, 2]], "degenerate element"), ([[0, 1, 2, 3], [0, 1, 2, 3]], "duplicate element")],
)
def test_build_errors(tets, msg):
    with pytest.raises(MeshError, match=msg):
        build_mesh(reference_tet().vertices, tets)


def test_flat_tet_is_degenerate():
    with pytest.raises(MeshError, match="degenerate element"):
        build_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2, 3]])


def test_non_manifold():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1], [1, 1, 1]]
    with pytest.raises(MeshError, match="non-manifold"):
        build_mesh(v, [[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]])


def test_regular_tet_rho():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    g = geometry(build_mesh(v, [[0, 1, 2, 3]]))
    assert g.rho == pytest.approx(np.sqrt(6), abs=1e-12)


def test_geometry_invariants():
    m = cube_freudenthal(2)
    g = geometry(m)
    assert g.h_omega == pytest.approx(np.sqrt(3))
    assert g.h_min <= g.h_max <= g.h_omega
    assert g.rho >= np.sqrt(6) - 1e-12
    gs = geometry(m.scaled(0.3))
    assert gs.rho == pytest.approx(g.rho, rel=1e-12)
    assert gs.h_omega == pytest.approx(0.3 * g.h_omega)


def test_stretched_rho_grows():
    assert geometry(stretched_cube(1, 10)).rho > 3 * geometry(stretched_cube(1, 1)).rho


def test_cube_sizes_and_nesting():
    for n in (1, 2, 3):
        m = cube_freudenthal(n)
        assert m.nt == 6 * n**3 and m.nv == (n + 1) ** 3
        assert m.euler_characteristic() == 1
    coarse, fine = cube_freudenthal(1), cube_freudenthal(2)
    parents = locate_parents(fine, coarse)
    assert np.all(np.bincount(parents) == 8)
    vol = np.bincount(parents, weights=fine.volumes)
    assert np.allclose(vol, coarse.volumes, rtol=1e-12)
    fine_pts = {tuple(np.round(v, 12)) for v in fine.vertices}
    assert all(tuple(np.round(v, 12)) in fine_pts for v in coarse.vertices)


def test_non_nested_rejected():
    with pytest.raises(MeshError):
        locate_parents(cube_freudenthal(1).transformed(np.eye(3), [0.3, 0, 0]), cube_freudenthal(1))


def test_vertex_stars():
    m = cube_freudenthal(2)
    centre = int(np.flatnonzero(np.all(np.isclose(m.vertices, 0.5), axis=1))[0])
    s = extract_star(m, "vertex", centre)
    assert s.submesh.nt == 24
    assert set(s.parent_tets) == {t for t in range(m.nt) if centre in m.jcv[t]}

    c1 = cube_freudenthal(1)
    for v in range(c1.nv):
        star = extract_star(c1, "vertex", v)
        assert star.submesh.nt == sum(v in t for t in c1.tets.tolist())
    diag = [v for v in range(8) if np.allclose(c1.vertices[v], 0) or np.allclose(c1.vertices[v], 1)]
    assert all(extract_star(c1, "vertex", v).submesh.nt == 6 for v in diag)


def test_twice_extended_and_other_stars():
    m = reference_tet()
    assert extract_star(m, "twice_extended_element", 0).submesh.nt == 1
    c = cube_freudenthal(1)
    assert extract_star(c, "face", 0).submesh.nt in (1, 2)
    inner = int(np.flatnonzero(~c.boundary_edge_flags)[0])
    assert extract_star(c, "edge", inner).submesh.nt == 6
    with pytest.raises(IndexError):
        extract_star(c, "vertex", 99)
    with pytest.raises(ValueError):
        extract_star(c, "cell", 0)


@pytest.mark.parametrize("k", [4, 6, 8, 10])
def test_synthetic_star(k):
    m = vertex_star_synthetic(k)
    assert m.nt == k
    assert all(0 in t for t in m.tets.tolist())
    assert not m.boundary_vertex_flags[0]
    assert m.euler_characteristic() == 1


def test_synthetic_star_rejects_odd():
    with pytest.raises(ValueError):
        vertex_star_synthetic(5)


def test_generate_dispatch():
    assert generate("reference_tet").nt == 1
    assert generate("cube_freudenthal", 2).nt == 48
    with pytest.raises(ValueError):
        generate("cube_freudenthal", 0)
    with pytest.raises(ValueError):
        generate("stretched_cube", 1, aspect=0)


def solid_torus():
    """3 x 3 x 3 cube block with the centre column of cubes removed."""
    cubes = cube_freudenthal(3)
    xy = cubes.vertices[cubes.tets][:, :, :2]
    centre = np.all((xy >= 1 / 3 - 1e-12) & (xy <= 2 / 3 + 1e-12), axis=(1, 2))
    return build_mesh(cubes.vertices, cubes.tets[~centre])


def test_betti_numbers():
    assert betti_numbers(cube_freudenthal(2)) == (1, 0, 0, 0)
    assert betti_numbers(solid_torus()) == (1, 1, 0, 0)


def test_text_format_round_trip():
    m = cube_freudenthal(2)
    m2 = parse_mesh("# a comment\n" + format_mesh(m))
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.faces, m2.faces)


@pytest.mark.parametrize(
    "text, line",
    [
        ("4 1\n0 0 0\n1 0 0\n0 1\n0 0 1\n0 1 2 3\n", 4),
        ("x y\n", 1),
        ("4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2\n", 6),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(MeshFormatError) as exc:
        parse_mesh(text)
    assert exc.value.line == line


def test_h_omega_cached():
    m = cube_freudenthal(1)
    assert h_omega(m) == pytest.approx(np.sqrt(3))
