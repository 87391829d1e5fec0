"""Model problems, velocity fields and stabilization functions.

Problems solve  -eps Lap u + beta . grad u = f  in the unit square with
Dirichlet data g.  Flux variable q = -eps grad u.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from .mesh import Mesh, face_sample_params

Array = np.ndarray
ScalarFn = Callable[[Array, Array], Array]


@dataclass(frozen=True)
class VelocityField:
    """beta(x, y) returning an array of shape (2, ...) and its divergence."""

    fn: Callable[[Array, Array], Array]
    div_fn: ScalarFn
    is_piecewise_constant: bool = False
    name: str = ""

    def __call__(self, x, y) -> Array:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        b = np.asarray(self.fn(x, y), float)
        return np.broadcast_to(b, (2,) + x.shape)

    def div(self, x, y) -> Array:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.broadcast_to(np.asarray(self.div_fn(x, y), float), x.shape)

    @classmethod
    def constant(cls, bx: float, by: float) -> "VelocityField":
        b = np.array([bx, by], float)
        return cls(lambda x, y: b.reshape((2,) + (1,) * np.ndim(x)),
                   lambda x, y: 0.0, True, f"({bx:g}, {by:g})")

    def check(self, npts: int = 41) -> list[str]:
        """Sampled checks: nonvanishing field and -div beta >= 0."""
        s = np.linspace(0.0, 1.0, npts)
        X, Y = np.meshgrid(s, s)
        b = self(X, Y)
        problems = []
        if np.min(np.hypot(b[0], b[1])) <= 0.0:
            problems.append("beta vanishes at a sample point")
        if np.max(self.div(X, Y)) > 1e-12:
            problems.append("-div beta is negative at a sample point")
        return problems


@dataclass(frozen=True)
class ExactSolution:
    u: ScalarFn
    grad: Callable[[Array, Array], Array]  # returns (2, ...)

    def q(self, x, y, epsilon):
        return -epsilon * np.asarray(self.grad(x, y))


@dataclass(frozen=True)
class ProblemSpec:
    epsilon: float
    beta: VelocityField
    f: ScalarFn
    g: ScalarFn
    exact: ExactSolution | None = None
    slit: tuple[tuple[float, float], tuple[float, float]] | None = None
    slit_data: ScalarFn | None = None
    name: str = "custom"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


# --- built-in problems ------------------------------------------------------

def _smooth(eps: float) -> ProblemSpec:
    tp = 2 * np.pi

    def u(x, y):
        return np.sin(tp * x) * np.sin(tp * y)

    def grad(x, y):
        return np.stack([tp * np.cos(tp * x) * np.sin(tp * y), tp * np.sin(tp * x) * np.cos(tp * y)])

    def f(x, y):
        return (8 * np.pi**2 * eps * np.sin(tp * x) * np.sin(tp * y)
                + tp * np.cos(tp * x) * np.sin(tp * y)
                + 2 * tp * np.sin(tp * x) * np.cos(tp * y))

    return ProblemSpec(eps, VelocityField.constant(1.0, 2.0), f, u, ExactSolution(u, grad), name="smooth")


def _rotating(eps: float) -> ProblemSpec:
    beta = VelocityField(lambda x, y: np.stack([y - 0.5, 0.5 - x]), lambda x, y: 0.0, False, "rotating")

    def zero(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def slit_data(x, y):
        return np.sin(2 * np.pi * y) ** 2

    return ProblemSpec(eps, beta, zero, zero, None, ((0.5, 0.0), (0.5, 0.5)), slit_data, "rotating")


def _interior_layer(eps: float) -> ProblemSpec:
    def zero(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def g(x, y):
        x, y = np.broadcast_arrays(x, y)
        tol = 1e-12
        one = (np.abs(y) < tol) | ((np.abs(x) < tol) & (y <= 0.2 + tol))
        return np.where(one, 1.0, 0.0)

    beta = VelocityField.constant(0.5, np.sqrt(3) / 2)
    return ProblemSpec(eps, beta, zero, g, None, name="interior_layer")


def _boundary_layer(eps: float) -> ProblemSpec:
    hp = np.pi / 2
    tail = np.exp(-1.0 / eps)
    D = -np.expm1(-1.0 / eps)  # 1 - e^{-1/eps}

    def layer(x, y):
        with np.errstate(under="ignore"):
            return np.exp(-(1 - x) * (1 - y) / eps)

    def u(x, y):
        sx, sy = np.sin(hp * x), np.sin(hp * y)
        return sx + sy * (1 - sx) + (tail - layer(x, y)) / D

    def grad(x, y):
        sx, sy = np.sin(hp * x), np.sin(hp * y)
        cx, cy = hp * np.cos(hp * x), hp * np.cos(hp * y)
        E = layer(x, y)
        return np.stack([cx * (1 - sy) - E * (1 - y) / (eps * D),
                         cy * (1 - sx) - E * (1 - x) / (eps * D)])

    def f(x, y):
        sx, sy = np.sin(hp * x), np.sin(hp * y)
        cx, cy = hp * np.cos(hp * x), hp * np.cos(hp * y)
        E = layer(x, y)
        lap_smooth = -hp**2 * (sx * (1 - sy) + sy * (1 - sx))
        conv_smooth = cx * (1 - sy) + cy * (1 - sx)
        a, b = 1 - x, 1 - y
        # layer part v = -E/D: -eps Lap v + (1,1).grad v
        with np.errstate(under="ignore"):
            layer_part = E / (eps * D) * (a * a + b * b - (a + b))
        return -eps * lap_smooth + conv_smooth + layer_part

    return ProblemSpec(eps, VelocityField.constant(1.0, 1.0), f, u, ExactSolution(u, grad),
                       name="boundary_layer")


BUILTIN = {
    "smooth": _smooth,
    "rotating": _rotating,
    "interior_layer": _interior_layer,
    "boundary_layer": _boundary_layer,
}


def builtin_problem(name: str, epsilon: float, beta: tuple[float, float] | None = None) -> ProblemSpec:
    """One of the four catalogue problems.

    ``beta`` overrides the velocity of the ``smooth`` problem (the
    manufactured source is rebuilt for it), which is how the conditioning
    study switches between beta = (1, 2) and (1, 1).
    """
    if name not in BUILTIN:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(BUILTIN)}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if beta is not None:
        if name != "smooth":
            raise ValueError("beta override is only supported for the smooth problem")
        x, y = sp.symbols("x y")
        s = sp.sin(2 * sp.pi * x) * sp.sin(2 * sp.pi * y)
        return manufactured_problem(s, (sp.Float(beta[0]), sp.Float(beta[1])), epsilon, name="smooth")
    return BUILTIN[name](epsilon)


# --- expression-defined problems ---------------------------------------------

_X, _Y = sp.symbols("x y")


def _lambdify(expr) -> ScalarFn:
    fn = sp.lambdify((_X, _Y), expr, "numpy")

    def wrapped(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.broadcast_to(np.asarray(fn(x, y), float), x.shape).copy()

    return wrapped


def parse_expr(text: str):
    """Parse an arithmetic expression in x, y (sympy syntax, pi/exp/sin/... allowed)."""
    expr = sp.sympify(text, locals={"x": _X, "y": _Y})
    extra = expr.free_symbols - {_X, _Y}
    if extra:
        raise ValueError(f"unknown symbols in {text!r}: {sorted(map(str, extra))}")
    return expr


def velocity_from_exprs(bx, by) -> VelocityField:
    bx, by = sp.sympify(bx), sp.sympify(by)
    div = sp.diff(bx, _X) + sp.diff(by, _Y)
    fx, fy = _lambdify(bx), _lambdify(by)
    const = not ((bx.free_symbols | by.free_symbols) & {_X, _Y})
    return VelocityField(lambda x, y: np.stack([fx(x, y), fy(x, y)]), _lambdify(div), const, f"({bx}, {by})")


def manufactured_problem(u_expr, beta_exprs, epsilon: float, name: str = "custom") -> ProblemSpec:
    """Problem whose source and boundary data come from an exact solution expression."""
    u_expr = sp.sympify(u_expr)
    bx, by = (sp.sympify(b) for b in beta_exprs)
    ux, uy = sp.diff(u_expr, _X), sp.diff(u_expr, _Y)
    f_expr = -epsilon * (sp.diff(ux, _X) + sp.diff(uy, _Y)) + bx * ux + by * uy
    u = _lambdify(u_expr)
    gx, gy = _lambdify(ux), _lambdify(uy)
    exact = ExactSolution(u, lambda x, y: np.stack([gx(x, y), gy(x, y)]))
    return ProblemSpec(epsilon, velocity_from_exprs(bx, by), _lambdify(f_expr), u, exact, name=name)


def problem_from_config(cfg: dict) -> ProblemSpec:
    """Custom problem from a config mapping.

    Keys: ``epsilon``, ``beta`` (two expressions) and either ``exact`` (u
    expression, f and g derived) or ``f`` and ``g`` expressions.
    """
    eps = float(cfg["epsilon"])
    bx, by = (parse_expr(str(b)) for b in cfg["beta"])
    if "exact" in cfg:
        return manufactured_problem(parse_expr(str(cfg["exact"])), (bx, by), eps, cfg.get("name", "custom"))
    f = _lambdify(parse_expr(str(cfg.get("f", "0"))))
    g = _lambdify(parse_expr(str(cfg.get("g", "0"))))
    return ProblemSpec(eps, velocity_from_exprs(bx, by), f, g, name=cfg.get("name", "custom"))


# --- stabilization -----------------------------------------------------------

@dataclass(frozen=True)
class StabilizationSpec:
    """Rule for the per-(element, face) constant tau.

    kind: ``tau1`` upwind max(sup beta.n, 0); ``tau2`` adds min(rho0 eps/h, 1)
    with h = h_F or h_K; ``abs`` uses sup |beta.n| in place of the upwind
    part; ``constant`` is tau = c.
    """

    kind: str = "tau1"
    rho0: float = 0.1
    length_scale: str = "h_F"
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("tau1", "tau2", "abs", "constant"):
            raise ValueError(f"unknown stabilization kind {self.kind!r}")
        if self.length_scale not in ("h_F", "h_K"):
            raise ValueError("length_scale must be 'h_F' or 'h_K'")


TAU1 = StabilizationSpec("tau1")
TAU2 = StabilizationSpec("tau2", rho0=0.1, length_scale="h_K")


def tau_values(spec: StabilizationSpec, sup_bn: Array, sup_abs_bn: Array, h_face: Array, h_elem: Array,
               epsilon: float) -> Array:
    """tau from sampled sup beta.n, sup |beta.n| and length scales (broadcast)."""
    if spec.kind == "constant":
        tau = np.full(np.broadcast(sup_bn, h_face).shape, float(spec.c))
    else:
        base = np.maximum(sup_bn, 0.0) if spec.kind != "abs" else sup_abs_bn
        tau = np.array(base, float)
        if spec.kind == "tau2":
            h = h_face if spec.length_scale == "h_F" else h_elem
            tau = tau + np.minimum(spec.rho0 * epsilon / h, 1.0)
    if np.any(tau < 0):
        raise RuntimeError("negative stabilization value")
    return tau


def mesh_tau(mesh: Mesh, spec: StabilizationSpec, beta: VelocityField, epsilon: float) -> Array:
    """tau for every (element, local face), shape (nE, 3)."""
    bn = sample_outward_bn(mesh, beta)
    h_face = mesh.face_lengths[mesh.elem_faces]
    h_elem = mesh.h_elem[:, None]
    return tau_values(spec, bn.max(axis=2), np.abs(bn).max(axis=2), h_face, h_elem, epsilon)


def sample_outward_bn(mesh: Mesh, beta: VelocityField) -> Array:
    t = face_sample_params()
    pts = mesh.face_points(t)
    b = beta(pts[..., 0], pts[..., 1])
    n = mesh.face_normals
    bn = b[0] * n[:, None, 0] + b[1] * n[:, None, 1]
    return bn[mesh.elem_faces] * mesh.elem_face_sign[..., None]


def tau_eval(spec: StabilizationSpec, vertices, local_face: int, beta: VelocityField, epsilon: float) -> float:
    """tau on one face of a single triangle given by its three vertices."""
    v = np.asarray(vertices, float)
    a, b = v[local_face], v[(local_face + 1) % 3]
    d = b - a
    cross = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0])
    n = np.array([d[1], -d[0]]) / np.hypot(*d) * np.sign(cross)
    t = face_sample_params()
    pts = a + t[:, None] * d
    bv = beta(pts[:, 0], pts[:, 1])
    bn = bv[0] * n[0] + bv[1] * n[1]
    return float(tau_values(spec, bn.max(), np.abs(bn).max(), np.hypot(*d), np.sqrt(abs(cross) / 2), epsilon))


@dataclass
class TauReport:
    passed: bool
    violations: list[tuple[int, int, float]] = field(default_factory=list)  # (elem, face, inf(tau - bn/2))
    no_strict_face: list[int] = field(default_factory=list)


def validate_tau(mesh: Mesh, spec: StabilizationSpec, beta: VelocityField, epsilon: float = 1.0,
                 tol: float = 1e-12) -> TauReport:
    """Check inf_F (tau - beta.n/2) >= 0 everywhere and > 0 on at least one face per element."""
    bn = sample_outward_bn(mesh, beta)
    tau = mesh_tau(mesh, spec, beta, epsilon)
    margin = (tau[..., None] - 0.5 * bn).min(axis=2)
    neg = margin < -tol
    viol = [(int(e), int(j), float(margin[e, j])) for e, j in zip(*np.nonzero(neg))]
    strict = np.any(margin > tol, axis=1)
    none = [int(e) for e in np.flatnonzero(~strict)]
    return TauReport(not viol and not none, viol, none)
