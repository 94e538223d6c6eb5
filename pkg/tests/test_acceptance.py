"""Acceptance suite: one test per criterion, each prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py``; the summary of all criteria is
printed at the end of the session.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from dpoincare.derham import assemble_diff, complex_report, complex_spaces
from dpoincare.equilibration import (
    commuting_projection_hdiv,
    partition_of_unity_error,
    random_conforming_flux,
)
from dpoincare.fespace import build_space
from dpoincare.fields import BrokenField
from dpoincare.mesh import cube_freudenthal, stretched_cube, vertex_star_synthetic
from dpoincare.poincare import (
    LevelProblem,
    constant,
    extremal_stability_ratio,
    inf_sup,
    minimizing_projection,
    potential_norm,
    piola_transport,
)

BOTH_BC = ("none", "homogeneous")


def test_complex_exactness(record):
    start = time.perf_counter()
    worst, integer_ok = 0.0, True
    for n in (1, 2):
        mesh = cube_freudenthal(n)
        for p in (0, 1):
            for bc in BOTH_BC:
                s = complex_spaces(mesh, p, bc)
                D = [assemble_diff(s[l], s[l + 1]).toarray() for l in range(3)]
                for l in range(2):
                    worst = max(worst, float(np.abs(D[l + 1] @ D[l]).max(initial=0.0)))
                    if p == 0:
                        Di = [d.astype(np.int64) for d in D]
                        integer_ok &= bool(np.all(Di[l] == D[l]) and not (Di[l + 1] @ Di[l]).any())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and integer_ok and elapsed < 10
    record(1, ok, f"max|DD|={worst:.2e} integer_exact={integer_ok} time={elapsed:.1f}s")
    assert ok


def test_cohomology(record):
    start = time.perf_counter()
    ok = True
    notes = []
    for n in (1, 2):
        for p in (0, 1):
            r = complex_report(cube_freudenthal(n), p, "none")
            ok &= r.cohomology[:3] == (1, 0, 0)
            notes.append(r.cohomology[:3])
    r = complex_report(cube_freudenthal(1), 0, "none")
    s = complex_spaces(cube_freudenthal(1), 0, "none")
    # independent oracle: numpy's SVD rank on the dense incidence matrices
    oracle_ranks = [int(np.linalg.matrix_rank(assemble_diff(s[l], s[l + 1]).toarray())) for l in range(3)]
    oracle_kernels = tuple(s[l].dim - oracle_ranks[l] for l in range(3))
    ok &= r.kernel_dims[:3] == (1, 7, 12) == oracle_kernels
    ok &= r.ranks[2] == 6 == oracle_ranks[2]
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    record(2, ok, f"cohomology={notes} kernels={r.kernel_dims[:3]} oracle={oracle_kernels} "
                  f"rank(div)={r.ranks[2]} time={elapsed:.1f}s")
    assert ok


def test_four_way_equivalence(record):
    start = time.perf_counter()
    meshes = {"cube1": cube_freudenthal(1), "cube2": cube_freudenthal(2),
              "star8": vertex_star_synthetic(8)}
    worst = 0.0
    cases = 0
    for mesh in meshes.values():
        for l in (1, 2):
            for p in (0, 1):
                for bc in BOTH_BC:
                    pb = LevelProblem(mesh, l, p, bc)
                    if pb.dim == 0:
                        continue
                    C = constant(pb).constant
                    Ch = C * pb.h
                    worst = max(worst,
                                abs(inf_sup(pb) * Ch - 1.0),
                                abs(potential_norm(pb) / Ch - 1.0),
                                abs(extremal_stability_ratio(pb) - C))
                    cases += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 180
    record(3, ok, f"{cases} cases, worst deviation={worst:.2e} time={elapsed:.1f}s")
    assert ok


def test_convex_bound(record):
    C = {(n, p): constant(cube_freudenthal(n), 0, p).constant for p in (0, 1) for n in range(1, 5)}
    bound = 1.0 / np.pi + 1e-9
    below = all(c <= bound for c in C.values())
    mono_n = all(C[n + 1, p] >= C[n, p] - 1e-10 for p in (0, 1) for n in range(1, 4))
    mono_p = all(C[n, 1] >= C[n, 0] - 1e-10 for n in range(1, 5))
    ok = below and mono_n and mono_p
    record(4, ok, f"max C={max(C.values()):.6f} <= 1/pi={1 / np.pi:.6f}: {below}, "
                  f"nondecreasing in n: {mono_n}, in p: {mono_p}")
    assert ok


def test_divergence_constant_convergence(record):
    start = time.perf_counter()
    C = [constant(cube_freudenthal(n), 2, 0).constant for n in range(1, 5)]
    target = 1.0 / (3.0 * np.pi)
    mono = all(b >= a for a, b in zip(C, C[1:]))
    rel = abs(C[-1] - target) / target
    elapsed = time.perf_counter() - start
    ok = mono and rel <= 0.05 and elapsed < 120
    record(5, ok, f"C={[round(c, 6) for c in C]} rel.err at n=4={rel:.2%} time={elapsed:.1f}s")
    assert ok


def test_flux_equilibration(record):
    start = time.perf_counter()
    comm = proj = compat = 0.0
    for n in (1, 2):
        mesh = cube_freudenthal(n)
        pou = partition_of_unity_error(mesh)
        for p in (0, 1):
            s2 = build_space(mesh, 2, p)
            for seed in range(10):
                rng = np.random.default_rng(seed)
                u = random_conforming_flux(mesh, p + 1, rng)
                _, rep = commuting_projection_hdiv(u, p)
                comm = max(comm, rep.commuting_residual)
                compat = max(compat, rep.extra["max_compatibility"])
                # projection property: a field already in RT_p is reproduced
                v = BrokenField.from_space(s2, rng.standard_normal(s2.global_dim))
                x, _ = commuting_projection_hdiv(v, p)
                err = np.abs(x - v.interpolate(s2)).max() / np.abs(v.interpolate(s2)).max()
                proj = max(proj, err)
    elapsed = time.perf_counter() - start
    ok = comm <= 1e-9 and proj <= 1e-10 and pou <= 1e-13 and compat <= 1e-9 and elapsed < 120
    record(6, ok, f"commuting={comm:.2e} projection={proj:.2e} partition={pou:.2e} "
                  f"compatibility={compat:.2e} time={elapsed:.1f}s")
    assert ok


def test_graph_stable_projection(record):
    mesh = cube_freudenthal(1)
    worst_margin = -np.inf
    ratios = {}
    for l in (1, 2):
        C = constant(mesh, l, 0).constant
        bound = np.sqrt(10.0 + 8.0 * C**2)
        rich = build_space(mesh, l, 1)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            u = BrokenField.from_space(rich, rng.standard_normal(rich.global_dim))
            _, rep = minimizing_projection(mesh, l, 0, u, C=C)
            ratios.setdefault(l, []).append(rep.stability_ratio)
            worst_margin = max(worst_margin, rep.stability_ratio - (bound + 1e-6))
    ok = worst_margin <= 0
    record(7, ok, "max graph ratio " + ", ".join(f"l={l}: {max(r):.4f}" for l, r in ratios.items())
                  + f" (bounds about {np.sqrt(10 + 8 * constant(mesh, 1, 0).constant ** 2):.3f})")
    assert ok


def test_piola_transport(record):
    rep = piola_transport(stretched_cube(1, 4))
    comm = max(lv.commuting_residual for lv in rep.levels)
    trans = max(lv.transport_residual for lv in rep.levels)
    jump = max(lv.conformity_jump for lv in rep.levels)
    bound = all(lv.bound_holds for lv in rep.levels)
    s = 0.5
    m = cube_freudenthal(1)
    scaled = piola_transport(m.scaled(s), m, levels=(2,)).levels[0]
    scale_err = abs(scaled.psi_norm - np.sqrt(s))
    ok = comm <= 1e-10 and trans <= 1e-10 and jump <= 1e-10 and bound and scale_err <= 1e-9
    record(8, ok, f"commuting={comm:.2e} transport={trans:.2e} conformity={jump:.2e} "
                  f"bound holds={bound} |psi2|-sqrt(s)={scale_err:.2e}")
    assert ok


def test_study_determinism(record, tmp_path):
    argv = [sys.executable, "-m", "dpoincare", "study", "--n", "1..3", "--l", "0,1,2", "--p", "0",
            "--bc", "none,homogeneous"]
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.csv"
        res = subprocess.run([*argv, "--out", str(path)], capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs.append(path.read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    record(9, ok, f"two study runs byte-identical: {ok} ({len(outs[0])} bytes)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
