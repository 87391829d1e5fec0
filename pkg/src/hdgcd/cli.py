"""Command-line entry point: ``hdgcd <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (RunConfig, config_dict, run_checks, run_conditioning, run_convergence, run_fields,
                          timed, write_manifest)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _strs(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration; flags override its fields")
    p.add_argument("--problem", help="smooth | rotating | interior_layer | boundary_layer")
    p.add_argument("--epsilon", type=_floats, help="comma-separated diffusion values")
    p.add_argument("--k", type=_ints, help="comma-separated polynomial degrees")
    p.add_argument("--levels", type=_ints, help="comma-separated subdivisions per side (h = 1/n)")
    p.add_argument("--method", type=_strs, help="comma-separated subset of HDG1,HDG2,HDG3")
    p.add_argument("--scaling", choices=["unscaled", "scaled", "both"])
    p.add_argument("--beta", type=_floats, help="constant velocity override 'bx,by' (smooth problem)")
    p.add_argument("--reduced", action="store_true", help="measure errors on [0,0.9]^2 only")
    p.add_argument("--postprocess", action="store_true", help="also report/write the postprocessed u*")
    p.add_argument("--streamline-h", type=float, help="use a streamline-aligned mesh of this size")
    p.add_argument("--out", type=Path, help="output directory")


def _load_config(args) -> RunConfig:
    data = json.loads(args.config.read_text()) if args.config else {}
    for key in ("problem", "epsilon", "k", "levels", "method", "scaling", "beta"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.reduced:
        data["subdomain"] = "reduced"
    if args.postprocess:
        data["postprocess"] = True
    if args.streamline_h is not None:
        data["streamline_h"] = args.streamline_h
    if args.out is not None:
        data["out"] = str(args.out)
    return RunConfig.from_dict(data)


def cmd_convergence(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tables, dt = timed(run_convergence, cfg)
    paths = [t.write(out) for t in tables]
    write_manifest(out, "convergence", config_dict(cfg), dt, paths)
    for t in tables:
        print(t.name)
        for row in t.rows:
            print("  " + "  ".join(str(v) if not isinstance(v, float) else f"{v:.3e}" for v in row))
    return 0


def cmd_conditioning(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tables, dt = timed(run_conditioning, cfg)
    paths = [t.write(out) for t in tables]
    write_manifest(out, "conditioning", config_dict(cfg), dt, paths)
    for t in tables:
        print(t.name)
        for row in t.rows:
            print("  " + "  ".join(str(v) if not isinstance(v, float) else f"{v:.3e}" for v in row))
    return 0


def cmd_fields(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths, dt = timed(run_fields, cfg, out)
    write_manifest(out, "fields", config_dict(cfg), dt, paths)
    for p in paths:
        print(p)
    return 0


def cmd_checks(args) -> int:
    results, dt = timed(run_checks, args.n)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / "checks.json"
        path.write_text(json.dumps([r.__dict__ for r in results], indent=2) + "\n")
        write_manifest(args.out, "checks", {"n": args.n}, dt, [path])
    return 0 if all(r.passed for r in results) else 1


def cmd_mesh(args) -> int:
    from .mesh import check_mesh_assumption, structured_unit_square, uniform_refine
    from .mesh_io import read_mesh, write_mesh, write_vtk
    from .problems import VelocityField
    from .streamline import MeshRepairError, streamline_mesh

    if args.action == "validate":
        mesh = read_mesh(args.file)
        mesh.validate()
        print(f"ok: {mesh.n_vertices} vertices, {mesh.n_elements} elements, {mesh.n_faces} faces "
              f"({mesh.n_interior_faces} interior)")
        if args.beta:
            rep = check_mesh_assumption(mesh, VelocityField.constant(*args.beta), args.C)
            print(f"special-mesh condition (C={args.C}): {'pass' if rep.passed else 'fail'}, "
                  f"{len(rep.violations)} violations")
            return 0 if rep.passed else 1
        return 0
    if args.streamline_h is not None:
        beta = VelocityField.constant(*(args.beta or [1.0, 1.0]))
        try:
            mesh = streamline_mesh(beta, args.streamline_h, C=args.C).mesh
        except MeshRepairError as exc:
            print(f"error: {exc}", file=sys.stderr)
            for e, j, v in exc.report.violations:
                print(f"  element {e} face {j}: max(sup beta.n, 0) = {v:.3e}", file=sys.stderr)
            return 1
    else:
        mesh = structured_unit_square(args.n, args.diagonal)
        for _ in range(args.refine):
            mesh = uniform_refine(mesh)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, args.out)
    if args.vtk:
        import numpy as np

        write_vtk(args.vtk, mesh.vertices, mesh.elements, {"vertex_id": np.arange(mesh.n_vertices)})
    print(f"wrote {args.out}: {mesh.n_elements} elements")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdgcd", description="HDG solver for convection-diffusion problems")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="error tables on refined meshes")
    _add_run_options(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("conditioning", help="condition numbers of the trace matrix")
    _add_run_options(p)
    p.set_defaults(func=cmd_conditioning)

    p = sub.add_parser("fields", help="write u_h as legacy VTK")
    _add_run_options(p)
    p.set_defaults(func=cmd_fields)

    p = sub.add_parser("checks", help="equivalence, mesh and identity checks")
    p.add_argument("--n", type=int, default=2, help="structured mesh size for the checks")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_checks)

    p = sub.add_parser("mesh", help="generate or validate meshes")
    p.add_argument("action", choices=["generate", "validate"])
    p.add_argument("--file", type=Path, help="mesh file to validate")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--diagonal", choices=["NE", "NW"], default="NE")
    p.add_argument("--refine", type=int, default=0)
    p.add_argument("--streamline-h", type=float)
    p.add_argument("--beta", type=_floats)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--out", type=Path, default=Path("mesh.txt"))
    p.add_argument("--vtk", type=Path)
    p.set_defaults(func=cmd_mesh)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "mesh" and args.action == "validate" and args.file is None:
        parser.error("mesh validate needs --file")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
