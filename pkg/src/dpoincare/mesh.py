"""Tetrahedral meshes with oriented connectivity arrays.

Every entity is oriented by increasing global vertex index.  Tetrahedra are
stored with sorted vertex tuples, edges and faces are derived and sorted
lexicographically.  The connectivity arrays ``jev``, ``jfv`` and ``jcv`` map
``(entity, local slot)`` to a global vertex index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# local sub-entities of a sorted tetrahedron, in increasing order
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
LOCAL_FACES = np.array([(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    tets: np.ndarray
    edges: np.ndarray
    faces: np.ndarray
    tet_edges: np.ndarray
    tet_faces: np.ndarray
    face_tets: np.ndarray  # (F, 2), second slot -1 on the boundary
    boundary_face_flags: np.ndarray
    boundary_edge_flags: np.ndarray
    boundary_vertex_flags: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # connectivity arrays under their conventional names
    @property
    def jev(self) -> np.ndarray:
        return self.edges

    @property
    def jfv(self) -> np.ndarray:
        return self.faces

    @property
    def jcv(self) -> np.ndarray:
        return self.tets

    @property
    def nv(self) -> int:
        return len(self.vertices)

    @property
    def ne(self) -> int:
        return len(self.edges)

    @property
    def nf(self) -> int:
        return len(self.faces)

    @property
    def nt(self) -> int:
        return len(self.tets)

    def counts(self) -> tuple[int, int, int, int]:
        return self.nv, self.ne, self.nf, self.nt

    def euler_characteristic(self) -> int:
        return self.nv - self.ne + self.nf - self.nt

    @property
    def jacobians(self) -> np.ndarray:
        """(T, 3, 3) Jacobians of the maps from the reference tetrahedron."""
        if "J" not in self._cache:
            x = self.vertices[self.tets]
            self._cache["J"] = np.stack(
                [x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2
            )
        return self._cache["J"]

    @property
    def dets(self) -> np.ndarray:
        if "det" not in self._cache:
            self._cache["det"] = np.linalg.det(self.jacobians)
        return self._cache["det"]

    @property
    def volumes(self) -> np.ndarray:
        return np.abs(self.dets) / 6.0

    def affine_map(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """``(J, b)`` with ``x = J xi + b`` mapping the reference tet onto tet ``t``."""
        return self.jacobians[t], self.vertices[self.tets[t, 0]]

    def to_reference(self, t: int, x: np.ndarray) -> np.ndarray:
        J, b = self.affine_map(t)
        return np.linalg.solve(J, (np.atleast_2d(x) - b).T).T

    def barycentric(self, t: int, x: np.ndarray) -> np.ndarray:
        xi = self.to_reference(t, x)
        return np.column_stack([1.0 - xi.sum(axis=1), xi])

    def transformed(self, A: np.ndarray, b: np.ndarray | None = None) -> "Mesh":
        """Same connectivity, vertices mapped by ``x -> A x + b``."""
        A = np.asarray(A, dtype=float)
        if A.ndim == 0:
            A = A * np.eye(3)
        b = np.zeros(3) if b is None else np.asarray(b, dtype=float)
        return build_mesh(self.vertices @ A.T + b, self.tets)

    def scaled(self, s: float) -> "Mesh":
        return self.transformed(float(s) * np.eye(3))

    def vertex_tets(self) -> list[np.ndarray]:
        if "vt" not in self._cache:
            buckets: list[list[int]] = [[] for _ in range(self.nv)]
            for t, tet in enumerate(self.tets):
                for v in tet:
                    buckets[v].append(t)
            self._cache["vt"] = [np.array(b, dtype=np.int64) for b in buckets]
        return self._cache["vt"]


def _sorted_unique_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


def build_mesh(vertices, tets, *, volume_tol: float = 1e-14) -> Mesh:
    """Build a mesh from vertex coordinates and tetrahedron index tuples.

    Tuples are sorted on input. Raises :class:`MeshError` with message
    ``"degenerate element"`` for zero-volume tetrahedra (including repeated
    vertices) and ``"non-manifold"`` if a face has more than two tetrahedra.
    """
    verts = np.array(vertices, dtype=float).reshape(-1, 3)
    tt = np.array(tets, dtype=np.int64).reshape(-1, 4)
    if len(tt) == 0:
        raise MeshError("mesh has no elements")
    if tt.min() < 0 or tt.max() >= len(verts):
        raise MeshError("element references a vertex out of range")
    tt = np.sort(tt, axis=1)
    if np.any(np.diff(tt, axis=1) == 0):
        raise MeshError("degenerate element")
    if len(np.unique(tt, axis=0)) != len(tt):
        raise MeshError("duplicate element")

    x = verts[tt]
    J = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2)
    det = np.linalg.det(J)
    scale = np.max(np.linalg.norm(J, axis=1), axis=1) ** 3
    if np.any(np.abs(det) <= volume_tol * scale):
        raise MeshError("degenerate element")

    all_edges = tt[:, LOCAL_EDGES].reshape(-1, 2)
    edges, e_inv = _sorted_unique_rows(all_edges)
    tet_edges = e_inv.reshape(-1, 6)
    all_faces = tt[:, LOCAL_FACES].reshape(-1, 3)
    faces, f_inv = _sorted_unique_rows(all_faces)
    tet_faces = f_inv.reshape(-1, 4)

    nf = len(faces)
    count = np.bincount(f_inv, minlength=nf)
    if np.any(count > 2):
        raise MeshError("non-manifold")
    face_tets = -np.ones((nf, 2), dtype=np.int64)
    owner = np.repeat(np.arange(len(tt)), 4)
    for f, t in zip(f_inv, owner):
        slot = 0 if face_tets[f, 0] < 0 else 1
        face_tets[f, slot] = t

    bface = count == 1
    bedge = np.zeros(len(edges), dtype=bool)
    bvert = np.zeros(len(verts), dtype=bool)
    if bface.any():
        bf = faces[bface]
        bvert[bf.ravel()] = True
        fe = bf[:, [[0, 1], [0, 2], [1, 2]]].reshape(-1, 2)
        lookup = {tuple(e): i for i, e in enumerate(edges)}
        for e in fe:
            bedge[lookup[tuple(e)]] = True

    for arr in (verts, tt, edges, faces, tet_edges, tet_faces, face_tets, bface, bedge, bvert):
        arr.setflags(write=False)
    return Mesh(
        vertices=verts,
        tets=tt,
        edges=edges,
        faces=faces,
        tet_edges=tet_edges,
        tet_faces=tet_faces,
        face_tets=face_tets,
        boundary_face_flags=bface,
        boundary_edge_flags=bedge,
        boundary_vertex_flags=bvert,
    )


# -- geometry ---------------------------------------------------------------


@dataclass(frozen=True)
class GeometryReport:
    h_omega: float
    h_tau: np.ndarray
    iota_tau: np.ndarray
    rho: float
    h_max: float
    h_min: float


def _face_areas(x: np.ndarray) -> np.ndarray:
    """Areas of the 4 faces of each tet in ``x`` (T, 4, 3)."""
    out = []
    for a, b, c in LOCAL_FACES:
        out.append(0.5 * np.linalg.norm(np.cross(x[:, b] - x[:, a], x[:, c] - x[:, a]), axis=1))
    return np.stack(out, axis=1)


def domain_diameter(vertices: np.ndarray) -> float:
    """Largest pairwise vertex distance (the domain is a polyhedron)."""
    v = np.asarray(vertices, dtype=float)
    best = 0.0
    for start in range(0, len(v), 512):
        blk = v[start : start + 512]
        d = np.linalg.norm(blk[:, None, :] - v[None, :, :], axis=2)
        best = max(best, float(d.max()))
    return best


def geometry(mesh: Mesh) -> GeometryReport:
    x = mesh.vertices[mesh.tets]
    h_tau = np.max(
        np.linalg.norm(x[:, LOCAL_EDGES[:, 0]] - x[:, LOCAL_EDGES[:, 1]], axis=2), axis=1
    )
    surface = _face_areas(x).sum(axis=1)
    iota = 2.0 * 3.0 * mesh.volumes / surface
    return GeometryReport(
        h_omega=domain_diameter(mesh.vertices),
        h_tau=h_tau,
        iota_tau=iota,
        rho=float(np.max(h_tau / iota)),
        h_max=float(h_tau.max()),
        h_min=float(h_tau.min()),
    )


def h_omega(mesh: Mesh) -> float:
    if "h_omega" not in mesh._cache:
        mesh._cache["h_omega"] = domain_diameter(mesh.vertices)
    return mesh._cache["h_omega"]


# -- stars ------------------------------------------------------------------


@dataclass(frozen=True)
class StarSpec:
    kind: str
    seed: int
    submesh: Mesh
    parent_vertices: np.ndarray
    parent_tets: np.ndarray

    @property
    def parent_map(self) -> dict[str, np.ndarray]:
        return {"vertices": self.parent_vertices, "tets": self.parent_tets}


def submesh(mesh: Mesh, tet_ids) -> tuple[Mesh, np.ndarray, np.ndarray]:
    """Submesh on a tet subset.  Vertex renumbering preserves relative order."""
    tet_ids = np.unique(np.asarray(tet_ids, dtype=np.int64))
    used = np.unique(mesh.tets[tet_ids].ravel())
    renum = -np.ones(mesh.nv, dtype=np.int64)
    renum[used] = np.arange(len(used))
    sub = build_mesh(mesh.vertices[used], renum[mesh.tets[tet_ids]])
    return sub, used, tet_ids


def extract_star(mesh: Mesh, kind: str, seed: int) -> StarSpec:
    seed = int(seed)
    vt = mesh.vertex_tets()
    if kind == "vertex":
        if not 0 <= seed < mesh.nv:
            raise IndexError(f"vertex {seed} out of range")
        tets = vt[seed]
    elif kind == "edge":
        if not 0 <= seed < mesh.ne:
            raise IndexError(f"edge {seed} out of range")
        a, b = mesh.edges[seed]
        tets = np.intersect1d(vt[a], vt[b])
    elif kind == "face":
        if not 0 <= seed < mesh.nf:
            raise IndexError(f"face {seed} out of range")
        tets = mesh.face_tets[seed]
        tets = tets[tets >= 0]
    elif kind == "twice_extended_element":
        if not 0 <= seed < mesh.nt:
            raise IndexError(f"element {seed} out of range")
        layer = {seed}
        for _ in range(2):
            grown = set(layer)
            for t in layer:
                for v in mesh.tets[t]:
                    grown.update(vt[v].tolist())
            layer = grown
        tets = np.array(sorted(layer))
    else:
        raise ValueError(f"unknown star kind {kind!r}")
    sub, pv, pt = submesh(mesh, tets)
    return StarSpec(kind=kind, seed=seed, submesh=sub, parent_vertices=pv, parent_tets=pt)


# -- generators -------------------------------------------------------------


def reference_tet() -> Mesh:
    return build_mesh(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        [[0, 1, 2, 3]],
    )


def cube_freudenthal(n: int, lengths=(1.0, 1.0, 1.0)) -> Mesh:
    """Kuhn/Freudenthal split of ``[0,1]^3`` into ``6 n^3`` tetrahedra."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()]) * np.asarray(lengths, float)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    tets = []
    for i, j, k in itertools.product(range(n), repeat=3):
        for perm in itertools.permutations(range(3)):
            cur = [i, j, k]
            path = [vid(*cur)]
            for ax in perm:
                cur[ax] += 1
                path.append(vid(*cur))
            tets.append(path)
    return build_mesh(verts, tets)


def stretched_cube(n: int, aspect: float) -> Mesh:
    if aspect <= 0:
        raise ValueError("aspect must be > 0")
    return cube_freudenthal(n, lengths=(1.0, 1.0, float(aspect)))


def vertex_star_synthetic(k: int) -> Mesh:
    """Star of ``k`` tetrahedra around the interior vertex 0.

    ``k = 4`` splits a regular tetrahedron at its centroid; even ``k >= 6``
    splits a bipyramid over a ``k/2``-gon.  Closed vertex stars always have an
    even number of tetrahedra, so odd ``k`` is rejected.
    """
    k = int(k)
    if k < 4 or k % 2:
        raise ValueError("k must be an even integer >= 4")
    if k == 4:
        outer = np.array(
            [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
        )
        verts = np.vstack([np.zeros(3), outer])
        tets = [[0, *f] for f in itertools.combinations(range(1, 5), 3)]
        return build_mesh(verts, tets)
    m = k // 2
    ang = 2.0 * np.pi * np.arange(m) / m
    ring = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(m)])
    verts = np.vstack([np.zeros(3), [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]], ring])
    tets = []
    for i in range(m):
        a, b = 3 + i, 3 + (i + 1) % m
        tets.append([0, 1, a, b])
        tets.append([0, 2, a, b])
    return build_mesh(verts, tets)


def generate(shape: str, n: int = 1, *, aspect: float = 1.0, k: int = 8) -> Mesh:
    if shape == "reference_tet":
        return reference_tet()
    if shape in ("cube", "cube_freudenthal"):
        return cube_freudenthal(n)
    if shape == "stretched_cube":
        return stretched_cube(n, aspect)
    if shape == "vertex_star_synthetic":
        return vertex_star_synthetic(k)
    raise ValueError(f"unknown shape {shape!r}")


def locate_parents(fine: Mesh, coarse: Mesh, tol: float = 1e-10) -> np.ndarray:
    """Index of the coarse tet containing each fine tet (nested meshes)."""
    cent = fine.vertices[fine.tets].mean(axis=1)
    Jinv = np.linalg.inv(coarse.jacobians)
    base = coarse.vertices[coarse.tets[:, 0]]
    parents = -np.ones(fine.nt, dtype=np.int64)
    for t, c in enumerate(cent):
        xi = np.einsum("tij,tj->ti", Jinv, c - base)
        lam = np.column_stack([1.0 - xi.sum(axis=1), xi])
        hit = np.flatnonzero(lam.min(axis=1) >= -tol)
        if len(hit) != 1:
            raise MeshError("meshes are not nested")
        parents[t] = hit[0]
    # every fine vertex must sit in its parent's closure
    for t in range(fine.nt):
        lam = coarse.barycentric(parents[t], fine.vertices[fine.tets[t]])
        if lam.min() < -tol:
            raise MeshError("meshes are not nested")
    return parents


# -- homology ---------------------------------------------------------------


def boundary_matrices(mesh: Mesh) -> list[np.ndarray]:
    """Dense simplicial boundary matrices d1 (V x E), d2 (E x F), d3 (F x T)."""
    d1 = np.zeros((mesh.nv, mesh.ne))
    d1[mesh.edges[:, 0], np.arange(mesh.ne)] = -1.0
    d1[mesh.edges[:, 1], np.arange(mesh.ne)] = 1.0
    elookup = {tuple(e): i for i, e in enumerate(mesh.edges)}
    d2 = np.zeros((mesh.ne, mesh.nf))
    for f, (a, b, c) in enumerate(mesh.faces):
        d2[elookup[(b, c)], f] = 1.0
        d2[elookup[(a, c)], f] = -1.0
        d2[elookup[(a, b)], f] = 1.0
    flookup = {tuple(f): i for i, f in enumerate(mesh.faces)}
    d3 = np.zeros((mesh.nf, mesh.nt))
    for t, (a, b, c, d) in enumerate(mesh.tets):
        d3[flookup[(b, c, d)], t] = 1.0
        d3[flookup[(a, c, d)], t] = -1.0
        d3[flookup[(a, b, d)], t] = 1.0
        d3[flookup[(a, b, c)], t] = -1.0
    return [d1, d2, d3]


def betti_numbers(mesh: Mesh) -> tuple[int, int, int, int]:
    d = boundary_matrices(mesh)
    ranks = [0] + [int(np.linalg.matrix_rank(m)) for m in d] + [0]
    dims = [mesh.nv, mesh.ne, mesh.nf, mesh.nt]
    return tuple(dims[k] - ranks[k] - ranks[k + 1] for k in range(4))


# -- text format ------------------------------------------------------------


def _content_lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        yield no, s


def parse_mesh(text: str) -> Mesh:
    lines = list(_content_lines(text))
    if not lines:
        raise MeshFormatError("empty mesh file")
    no, head = lines[0]
    try:
        nv, nt = (int(t) for t in head.split())
    except ValueError:
        raise MeshFormatError("header must be 'nv nt'", no) from None
    if len(lines) < 1 + nv + nt:
        raise MeshFormatError(f"expected {nv} vertices and {nt} elements", lines[-1][0])
    verts = []
    for no, s in lines[1 : 1 + nv]:
        parts = s.split()
        if len(parts) != 3:
            raise MeshFormatError("vertex line needs 3 coordinates", no)
        try:
            verts.append([float(t) for t in parts])
        except ValueError:
            raise MeshFormatError("bad coordinate", no) from None
    tets = []
    for no, s in lines[1 + nv : 1 + nv + nt]:
        parts = s.split()
        if len(parts) != 4:
            raise MeshFormatError("element line needs 4 vertex indices", no)
        try:
            tets.append([int(t) for t in parts])
        except ValueError:
            raise MeshFormatError("bad vertex index", no) from None
    if len(lines) > 1 + nv + nt:
        raise MeshFormatError("trailing content", lines[1 + nv + nt][0])
    return build_mesh(verts, tets)


def read_mesh(path) -> Mesh:
    return parse_mesh(Path(path).read_text(encoding="utf-8"))


def format_mesh(mesh: Mesh) -> str:
    out = [f"{mesh.nv} {mesh.nt}"]
    out += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    out += [" ".join(str(int(i)) for i in t) for t in mesh.tets]
    return "\n".join(out) + "\n"


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(format_mesh(mesh), encoding="utf-8")
