"""Command line interface.

Exit codes: 0 all checks passed, 1 a checked identity failed, 2 usage error or
size cap exceeded, 3 input/output error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .equilibration import CompatibilityError, commuting_projection_hdiv, random_conforming_flux
from .fespace import SpaceError, build_space
from .fields import BrokenField
from .mesh import (
    MeshError,
    cube_freudenthal,
    format_mesh,
    generate,
    geometry,
    read_mesh,
    reference_tet,
    stretched_cube,
    vertex_star_synthetic,
)
from .poincare import (
    DEFAULT_CAP,
    CapExceeded,
    EmptySpace,
    LevelProblem,
    constant,
    minimizing_projection,
    piola_transport,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
EQUIV_TOL = 1e-8

CSV_COLUMNS = [
    "shape", "n", "|T|", "rho", "l", "p", "bc", "dim",
    "constant", "infsup", "potential_norm", "kernel_dim",
]


class UsageError(ValueError):
    pass


# -- mesh names -----------------------------------------------------------------


def resolve_mesh(spec: str):
    """Mesh from a name (``cube2``, ``ref``, ``star8``, ``stretched1x4``) or a file path."""
    m = re.fullmatch(r"cube(\d+)", spec)
    if m:
        return cube_freudenthal(int(m.group(1)))
    if spec in ("ref", "reference_tet"):
        return reference_tet()
    m = re.fullmatch(r"star(\d+)", spec)
    if m:
        return vertex_star_synthetic(int(m.group(1)))
    m = re.fullmatch(r"stretched(\d+)x([0-9.]+)", spec)
    if m:
        return stretched_cube(int(m.group(1)), float(m.group(2)))
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"no such mesh file or name: {spec}")
    return read_mesh(path)


def parse_range(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise UsageError(f"empty range {text!r}")
    return sorted(set(out))


def parse_list(text: str, allowed=None) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if allowed is not None:
        bad = [t for t in items if t not in allowed]
        if bad:
            raise UsageError(f"invalid value(s) {bad}; choose from {sorted(allowed)}")
    return items


# -- output ---------------------------------------------------------------------


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def input_hash(payload: dict) -> str:
    blob = json.dumps(_clean(payload), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def envelope(command: str, inputs: dict, seed: int, report) -> dict:
    return {
        "tool_version": __version__,
        "command": command,
        "input_hash": input_hash({"command": command, **inputs}),
        "seed": seed,
        "report": _clean(report),
    }


def emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def emit_json(args, obj) -> None:
    emit(args, json.dumps(obj, indent=2) + "\n")


def _mesh_inputs(spec: str, mesh) -> dict:
    return {"mesh": spec, "mesh_sha256": hashlib.sha256(format_mesh(mesh).encode()).hexdigest()}


# -- commands -------------------------------------------------------------------


def cmd_mesh(args) -> int:
    if args.action == "gen":
        if args.shape is None:
            raise UsageError("mesh gen needs --shape")
        shape = {"cube": "cube_freudenthal", "ref": "reference_tet", "stretched": "stretched_cube",
                 "star": "vertex_star_synthetic"}.get(args.shape, args.shape)
        mesh = generate(shape, args.n, aspect=args.aspect, k=args.k)
        emit(args, format_mesh(mesh))
        return EXIT_OK
    if args.target is None:
        raise UsageError("mesh info needs a mesh file or name")
    mesh = resolve_mesh(args.target)
    g = geometry(mesh)
    info = {
        "V": mesh.nv, "E": mesh.ne, "F": mesh.nf, "T": mesh.nt,
        "rho": g.rho, "h_omega": g.h_omega, "h_max": g.h_max, "h_min": g.h_min,
        "euler": mesh.euler_characteristic(),
        "boundary_faces": int(mesh.boundary_face_flags.sum()),
    }
    if args.format == "json":
        emit_json(args, envelope("mesh info", _mesh_inputs(args.target, mesh), args.seed, info))
    else:
        emit(args, "".join(f"{k} {v}\n" for k, v in info.items()))
    return EXIT_OK


def _level(l: int) -> int:
    if l not in (0, 1, 2):
        raise UsageError(f"level l={l} must be 0, 1 or 2")
    return l


def cmd_constants(args) -> int:
    mesh = resolve_mesh(args.mesh)
    rep = constant(mesh, _level(args.l), args.p, args.bc, cap=args.cap,
                   cross_checks=args.l > 0 or args.cross_checks, seed=args.seed)
    inputs = {**_mesh_inputs(args.mesh, mesh), "l": args.l, "p": args.p, "bc": args.bc}
    body = rep.to_json_dict()
    if rep.status != "ok":
        body["status"] = rep.status
    emit_json(args, envelope("constants", inputs, args.seed, body))
    return EXIT_OK


def equivalence_checks(mesh, l: int, p: int, bc: str, cap: int) -> dict:
    rep = constant(mesh, l, p, bc, cap=cap, cross_checks=True)
    if rep.constant is None:
        return {"status": rep.status, "pass": True}
    Ch = rep.constant * rep.h_omega
    checks = {
        "infsup_times_Ch": rep.infsup * Ch,
        "potential_over_Ch": rep.potential_norm / Ch,
        "stability_minus_C": rep.stability_ratio - rep.constant,
    }
    ok = (
        abs(checks["infsup_times_Ch"] - 1.0) <= EQUIV_TOL
        and abs(checks["potential_over_Ch"] - 1.0) <= EQUIV_TOL
        and abs(checks["stability_minus_C"]) <= EQUIV_TOL
    )
    return {**rep.to_json_dict(), "stability_ratio": rep.stability_ratio, **checks, "pass": ok}


def cmd_equivalence(args) -> int:
    mesh = resolve_mesh(args.mesh)
    results = []
    for l in parse_range(args.l):
        _level(l)
        for p in parse_range(args.p):
            for bc in parse_list(args.bc, {"none", "homogeneous"}):
                results.append(equivalence_checks(mesh, l, p, bc, args.cap))
    ok = all(r["pass"] for r in results)
    if args.format == "json":
        inputs = {**_mesh_inputs(args.mesh, mesh), "l": args.l, "p": args.p, "bc": args.bc}
        emit_json(args, envelope("equivalence", inputs, args.seed, {"pass": ok, "cases": results}))
    else:
        lines = []
        for r in results:
            if "infsup_times_Ch" not in r:
                lines.append(f"skip   {r['status']}\n")
                continue
            lines.append(
                f"{'PASS' if r['pass'] else 'FAIL'}   l={r['l']} p={r['p']} bc={r['bc']} "
                f"C={r['constant']:.12g} infsup*C*h={r['infsup_times_Ch']:.12g} "
                f"potential/(C*h)={r['potential_over_Ch']:.12g} "
                f"stability={r['stability_ratio']:.12g}\n"
            )
        emit(args, "".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_project(args) -> int:
    mesh = resolve_mesh(args.mesh)
    rng = np.random.default_rng(args.seed)
    reports = []
    ok = True
    for k in range(args.samples):
        if args.kind == "equilibration":
            u = random_conforming_flux(mesh, args.p + 1, rng)
            _, rep = commuting_projection_hdiv(u, args.p)
            passed = rep.commuting_residual <= 1e-9
        else:
            l = _level(args.l)
            if l == 0:
                raise UsageError("the minimizing projection needs l in {1, 2}")
            space = build_space(mesh, l, args.p + 1)
            u = BrokenField.from_space(space, rng.standard_normal(space.global_dim))
            _, rep = minimizing_projection(mesh, l, args.p, u)
            passed = rep.commuting_residual <= 1e-9 and rep.stability_ratio <= rep.bound + 1e-6
        ok &= passed
        reports.append({**rep.__dict__, "pass": passed, "sample": k})
    inputs = {**_mesh_inputs(args.mesh, mesh), "kind": args.kind, "l": args.l, "p": args.p,
              "samples": args.samples}
    emit_json(args, envelope("project", inputs, args.seed, {"pass": ok, "samples": reports}))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_piola(args) -> int:
    mesh = resolve_mesh(args.mesh)
    reference = resolve_mesh(args.reference) if args.reference else None
    if args.scale is not None:
        reference, mesh = mesh, mesh.scaled(args.scale)
    rep = piola_transport(mesh, reference, p=args.p, mode=args.mode)
    levels = []
    ok = True
    for L in rep.levels:
        passed = (
            L.commuting_residual <= 1e-10
            and L.transport_residual <= 1e-10
            and L.conformity_jump <= 1e-10
            and L.bound_holds
        )
        ok &= passed
        levels.append({**L.__dict__, "pass": passed})
    inputs = {**_mesh_inputs(args.mesh, mesh), "reference": args.reference, "scale": args.scale,
              "mode": args.mode, "p": args.p}
    emit_json(args, envelope("piola", inputs, args.seed, {"pass": ok, "mode": rep.mode,
                                                          "levels": levels}))
    return EXIT_OK if ok else EXIT_FAIL


def _study_mesh(shape: str, n: int, aspect: float):
    if shape == "cube":
        return cube_freudenthal(n)
    if shape == "stretched":
        return stretched_cube(n, aspect)
    raise UsageError(f"study supports shapes cube and stretched, not {shape!r}")


def study_cell(cell: tuple) -> dict:
    shape, n, aspect, l, p, bc, cap = cell
    mesh = _study_mesh(shape, n, aspect)
    rep = constant(mesh, l, p, bc, cap=cap, cross_checks=True)
    return {
        "shape": shape, "n": n, "|T|": mesh.nt, "rho": geometry(mesh).rho,
        "l": l, "p": p, "bc": bc, "dim": rep.dim, "constant": rep.constant,
        "infsup": rep.infsup, "potential_norm": rep.potential_norm, "kernel_dim": rep.kernel_dim,
    }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def cmd_study(args) -> int:
    ns = parse_range(args.n)
    ls = [_level(l) for l in parse_range(args.l)]
    ps = parse_range(args.p)
    bcs = parse_list(args.bc, {"none", "homogeneous"})
    cells = [(args.shape, n, args.aspect, l, p, bc, args.cap)
             for l in ls for p in ps for n in ns for bc in bcs]
    for shape, n, aspect, l, p, bc, cap in cells:
        # fail fast on the cap before any work is scheduled
        LevelProblem(_study_mesh(shape, n, aspect), l, p, bc, cap)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(study_cell, cells))
    else:
        rows = [study_cell(c) for c in cells]
    rows.sort(key=lambda r: (r["l"], r["p"], r["n"], r["bc"]))
    inputs = {"shape": args.shape, "n": ns, "aspect": args.aspect, "l": ls, "p": ps, "bc": bcs,
              "cap": args.cap}
    if args.format == "json":
        emit_json(args, envelope("study", inputs, args.seed, {"rows": rows}))
    else:
        buf = io.StringIO()
        buf.write(f"# tool_version={__version__} input_hash={input_hash(inputs)} seed={args.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        emit(args, buf.getvalue())
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--cap", type=int, default=argparse.SUPPRESS)
    common.add_argument("--format", choices=("json", "csv", "text"), default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="dpoincare", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--cap", type=int, default=DEFAULT_CAP)
    parser.add_argument("--format", choices=("json", "csv", "text"), default=None)
    parser.add_argument("--out", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mesh", parents=[common], help="generate or inspect meshes")
    m.add_argument("action", choices=("gen", "info"))
    m.add_argument("target", nargs="?", help="mesh file or name (info)")
    m.add_argument("--shape", help="cube, ref, stretched or star")
    m.add_argument("--n", type=int, default=1)
    m.add_argument("--aspect", type=float, default=1.0)
    m.add_argument("--k", type=int, default=8)
    m.set_defaults(func=cmd_mesh)

    c = sub.add_parser("constants", parents=[common], help="discrete Poincare constant")
    c.add_argument("--mesh", required=True)
    c.add_argument("--l", type=int, required=True)
    c.add_argument("--p", type=int, default=0)
    c.add_argument("--bc", choices=("none", "homogeneous"), default="none")
    c.add_argument("--cross-checks", action="store_true")
    c.set_defaults(func=cmd_constants)

    e = sub.add_parser("equivalence", parents=[common], help="check the four equivalent forms")
    e.add_argument("--mesh", required=True)
    e.add_argument("--l", default="1,2")
    e.add_argument("--p", default="0")
    e.add_argument("--bc", default="none,homogeneous")
    e.set_defaults(func=cmd_equivalence)

    pj = sub.add_parser("project", parents=[common], help="commuting projection checks")
    pj.add_argument("--mesh", required=True)
    pj.add_argument("--kind", choices=("equilibration", "minimizing"), default="equilibration")
    pj.add_argument("--l", type=int, default=2)
    pj.add_argument("--p", type=int, default=0)
    pj.add_argument("--samples", type=int, default=10)
    pj.set_defaults(func=cmd_project)

    s = sub.add_parser("study", parents=[common], help="constants over a parameter grid")
    s.add_argument("--shape", default="cube")
    s.add_argument("--n", default="1..4")
    s.add_argument("--aspect", type=float, default=1.0)
    s.add_argument("--l", default="0")
    s.add_argument("--p", default="0")
    s.add_argument("--bc", default="none")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_study)

    pi = sub.add_parser("piola", parents=[common], help="transport constants to a reference mesh")
    pi.add_argument("--mesh", required=True)
    pi.add_argument("--reference", help="reference mesh with the same connectivity")
    pi.add_argument("--scale", type=float, help="compare the mesh scaled by this factor with itself")
    pi.add_argument("--mode", choices=("box", "isotropic"), default="box")
    pi.add_argument("--p", type=int, default=0)
    pi.set_defaults(func=cmd_piola)
    return parser


_DEFAULT_FORMAT = {"study": "csv", "mesh": "text", "equivalence": "text"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.format is None:
        args.format = _DEFAULT_FORMAT.get(args.command, "json")
    try:
        return args.func(args)
    except (UsageError, CapExceeded, SpaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EmptySpace, CompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
