"""Experiment drivers: convergence tables, conditioning tables, field output, check suites."""
from __future__ import annotations

import csv
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .hdg import METHODS, get_method, solve_hdg, trace_matrix
from .linalg import cond2
from .mesh import check_mesh_assumption, structured_unit_square
from .mesh_io import sample_field, write_vtk
from .mhdg import mhdg_equivalence_check
from .postprocess import (REDUCED_BOX, convergence_orders, identity_residuals, l2_error, postprocess,
                          solution_error)
from .problems import (ProblemSpec, StabilizationSpec, VelocityField, builtin_problem, problem_from_config,
                       validate_tau)
from .streamline import streamline_mesh


@dataclass
class RunConfig:
    problem: str | dict = "smooth"
    epsilon: list[float] = field(default_factory=lambda: [1.0])
    k: list[int] = field(default_factory=lambda: [1])
    levels: list[int] = field(default_factory=lambda: [5, 10, 20, 40])
    method: list[str] = field(default_factory=lambda: ["HDG1"])
    scaling: str = "unscaled"  # unscaled | scaled | both (conditioning)
    beta: list[float] | None = None  # velocity override for the smooth problem
    subdomain: str = "full"  # full | reduced
    postprocess: bool = False
    streamline_h: float | None = None  # use a streamline mesh instead of levels
    vtk_level: int | None = None  # default: k
    out: str = "results"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        for key in ("epsilon", "k", "levels", "method"):
            if key in d and not isinstance(d[key], list):
                d[key] = [d[key]]
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for m in self.method:
            get_method(m)
        if self.scaling not in ("unscaled", "scaled", "both"):
            raise ValueError("scaling must be unscaled, scaled or both")
        if self.subdomain not in ("full", "reduced"):
            raise ValueError("subdomain must be full or reduced")
        if any(e <= 0 for e in self.epsilon):
            raise ValueError("epsilon must be positive")
        if any(k < 0 for k in self.k):
            raise ValueError("k must be nonnegative")
        if any(n < 1 for n in self.levels):
            raise ValueError("mesh levels must be >= 1")

    def make_problem(self, eps: float) -> ProblemSpec:
        if isinstance(self.problem, dict):
            return problem_from_config({**self.problem, "epsilon": eps})
        beta = tuple(self.beta) if self.beta is not None else None
        return builtin_problem(self.problem, eps, beta)

    def problem_name(self) -> str:
        return self.problem.get("name", "custom") if isinstance(self.problem, dict) else self.problem


@dataclass
class TableArtifact:
    name: str
    header: list[str]
    rows: list[list] = field(default_factory=list)

    def write(self, directory) -> Path:
        path = Path(directory) / f"{self.name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header)
            w.writerows([_fmt(v) for v in row] for row in self.rows)
        return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return f"{v:.6e}"
    return str(v)


def _tag(eps: float) -> str:
    return f"{eps:g}".replace("+", "")


def _meshes(cfg: RunConfig, problem: ProblemSpec):
    if cfg.streamline_h is not None:
        sm = streamline_mesh(problem.beta, cfg.streamline_h)
        return [(sm.mesh, sm.mesh.h)]
    return [(structured_unit_square(n), 1.0 / n) for n in cfg.levels]


# --- convergence ----------------------------------------------------------------

def run_convergence(cfg: RunConfig) -> list[TableArtifact]:
    """One table per (method, eps): rows k, 1/h, error, order (and u* columns)."""
    tables = []
    box = REDUCED_BOX if cfg.subdomain == "reduced" else None
    for method in cfg.method:
        for eps in cfg.epsilon:
            problem = cfg.make_problem(eps)
            if problem.exact is None:
                raise ValueError(f"problem {cfg.problem_name()!r} has no exact solution")
            header = ["k", "inv_h", "error", "order"]
            if cfg.postprocess:
                header += ["error_ustar", "order_ustar"]
            header.append("status")
            t = TableArtifact(f"convergence_{cfg.problem_name()}_{method}_eps{_tag(eps)}", header)
            for k in cfg.k:
                hs, errs, perrs, status = [], [], [], []
                for mesh, h in _meshes(cfg, problem):
                    try:
                        sol = solve_hdg(mesh, problem, k=k, method=method, scaling="unscaled"
                                        if cfg.scaling == "both" else cfg.scaling)
                        errs.append(solution_error(sol, box))
                        if cfg.postprocess:
                            pp = postprocess(sol)
                            perrs.append(l2_error(pp.coeffs, pp.k, problem.exact.u, sol.mesh, box))
                        status.append("ok")
                    except (np.linalg.LinAlgError, ValueError) as exc:
                        errs.append(float("nan"))
                        perrs.append(float("nan"))
                        status.append(f"failed: {exc}")
                    hs.append(h)
                    if status[-1] != "ok":
                        break  # the rest of this column is aborted
                orders = [float("nan")] + convergence_orders(errs, hs)
                porders = [float("nan")] + convergence_orders(perrs, hs) if cfg.postprocess else []
                for i, h in enumerate(hs):
                    row = [k, int(round(1 / h)), errs[i], orders[i]]
                    if cfg.postprocess:
                        row += [perrs[i], porders[i]]
                    row.append(status[i])
                    t.rows.append(row)
            tables.append(t)
    return tables


# --- conditioning --------------------------------------------------------------

def run_conditioning(cfg: RunConfig) -> list[TableArtifact]:
    """kappa of the trace matrix per (eps, k, n), unscaled and/or scaled."""
    modes = ["unscaled", "scaled"] if cfg.scaling == "both" else [cfg.scaling]
    tables = []
    for method in cfg.method:
        header = ["epsilon", "inv_h", "k"]
        for m in modes:
            header += [f"kappa_{m}", f"accurate_{m}"]
        t = TableArtifact(f"conditioning_{cfg.problem_name()}_{method}", header)
        for eps in cfg.epsilon:
            problem = cfg.make_problem(eps)
            for n in cfg.levels:
                mesh = structured_unit_square(n)
                for k in cfg.k:
                    row = [eps, n, k]
                    for m in modes:
                        est = cond2(trace_matrix(mesh, problem, k, method, m).matrix)
                        row += [est.kappa, est.accurate]
                    t.rows.append(row)
        tables.append(t)
    return tables


# --- fields -----------------------------------------------------------------

def run_fields(cfg: RunConfig, out_dir) -> list[Path]:
    """VTK files of u_h (and u*_h) for every (method, eps, k, mesh)."""
    out = Path(out_dir)
    paths = []
    for method in cfg.method:
        for eps in cfg.epsilon:
            problem = cfg.make_problem(eps)
            for k in cfg.k:
                level = cfg.vtk_level if cfg.vtk_level is not None else k
                for mesh, h in _meshes(cfg, problem):
                    sol = solve_hdg(mesh, problem, k=k, method=method)
                    pts, tris, vals = sample_field(sol.mesh, sol.u, k, level)
                    data = {"u_h": vals}
                    if cfg.postprocess:
                        pp = postprocess(sol)
                        data["u_star"] = sample_field(sol.mesh, pp.coeffs, pp.k, level)[2]
                    name = f"field_{cfg.problem_name()}_{method}_eps{_tag(eps)}_k{k}_n{int(round(1 / h))}.vtk"
                    write_vtk(out / name, pts, tris, data, title=f"{cfg.problem_name()} {method} k={k}")
                    paths.append(out / name)
    return paths


# --- checks -------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def run_checks(n: int = 2) -> list[CheckResult]:
    """MH-DG equivalence, special-mesh checker, tau validation and identity residuals."""
    results = []
    zero = lambda x, y: 0.0 * x  # noqa: E731
    mesh = structured_unit_square(n)
    p12 = ProblemSpec(1.0, VelocityField.constant(1.0, 2.0), zero, zero, name="zero-data")
    for k in (0, 1, 2):
        rep = mhdg_equivalence_check(mesh, p12, k)
        results.append(CheckResult(f"mhdg_equivalence_rt_k{k}", rep.equivalent, f"max rel diff {rep.max_rel_diff:.2e}"))
    rep = mhdg_equivalence_check(mesh, p12, 1, hdg_space="pk")
    results.append(CheckResult("mhdg_discriminates_pk", not rep.equivalent,
                               f"P_k space max rel diff {rep.max_rel_diff:.2e} (expected non-equivalent)"))
    b11 = VelocityField.constant(1.0, 1.0)
    rep = check_mesh_assumption(structured_unit_square(max(n, 4)), b11, 0.0)
    results.append(CheckResult("mesh_assumption_beta11", rep.passed, f"{len(rep.violations)} violations"))
    rep = check_mesh_assumption(structured_unit_square(20), p12.beta, 1.0)
    results.append(CheckResult("mesh_assumption_beta12_fails", not rep.passed,
                               f"{len(rep.violations)} violations (expected > 0)"))
    trep = validate_tau(mesh, StabilizationSpec("constant", c=0.0), p12.beta)
    results.append(CheckResult("tau_constant_zero_rejected", not trep.passed,
                               f"{len(trep.no_strict_face)} elements without a strict face"))
    for name, eps in (("smooth", 1.0), ("smooth", 1e-3), ("rotating", 1e-6), ("boundary_layer", 1e-2)):
        problem = builtin_problem(name, eps)
        for method in METHODS:
            sol = solve_hdg(structured_unit_square(max(n, 2)), problem, k=1, method=method)
            res = identity_residuals(sol)
            ok = res.conservation_residual <= 1e-10 and res.boundary_residual <= 1e-12
            if res.energy_residual is not None:
                ok = ok and res.energy_residual <= 1e-10
            results.append(CheckResult(f"identities_{name}_{method}", ok,
                                       f"conservation {res.conservation_residual:.1e}, "
                                       f"boundary {res.boundary_residual:.1e}, energy {res.energy_residual}"))
    return results


# --- manifest -----------------------------------------------------------------

def write_manifest(out_dir, command: str, config: dict, wall_time: float, outputs: list) -> Path:
    import scipy
    import sympy

    manifest = {
        "command": command,
        "config": config,
        "versions": {"hdgcd": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "sympy": sympy.__version__},
        "wall_time_s": round(wall_time, 3),
        "outputs": [str(Path(p).name) for p in outputs],
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
