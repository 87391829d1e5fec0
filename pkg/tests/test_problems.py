import numpy as np
import pytest

from hdgcd.mesh import structured_unit_square
from hdgcd.problems import (TAU1, TAU2, StabilizationSpec, VelocityField, builtin_problem, manufactured_problem,
                            mesh_tau, problem_from_config, tau_eval, validate_tau)

RNG = np.random.default_rng(7)
PTS = RNG.uniform(0.05, 0.95, (100, 2))


def fd_residual(p, h=1e-3):
    """-eps Lap u + beta . grad u - f with 4th-order central differences."""
    x, y = PTS.T
    u = p.exact.u

    def d1(ax):
        e = np.array([h, 0.0]) if ax == 0 else np.array([0.0, h])
        return (-u(x + 2 * e[0], y + 2 * e[1]) + 8 * u(x + e[0], y + e[1])
                - 8 * u(x - e[0], y - e[1]) + u(x - 2 * e[0], y - 2 * e[1])) / (12 * h)

    def d2(ax):
        e = np.array([h, 0.0]) if ax == 0 else np.array([0.0, h])
        return (-u(x + 2 * e[0], y + 2 * e[1]) + 16 * u(x + e[0], y + e[1]) - 30 * u(x, y)
                + 16 * u(x - e[0], y - e[1]) - u(x - 2 * e[0], y - 2 * e[1])) / (12 * h * h)

    b = p.beta(x, y)
    return -p.epsilon * (d2(0) + d2(1)) + b[0] * d1(0) + b[1] * d1(1) - p.f(x, y)


@pytest.mark.parametrize("eps", [1.0, 1e-3, 1e-9])
def test_smooth_manufactured_source(eps):
    p = builtin_problem("smooth", eps)
    scale = np.abs(p.f(*PTS.T)).max()
    assert np.abs(fd_residual(p)).max() <= 1e-6 * scale


def test_smooth_source_closed_form():
    p = builtin_problem("smooth", 1.0)
    x, y = PTS.T
    tp = 2 * np.pi
    f = (8 * np.pi**2 * np.sin(tp * x) * np.sin(tp * y) + tp * np.cos(tp * x) * np.sin(tp * y)
         + 2 * tp * np.sin(tp * x) * np.cos(tp * y))
    assert np.allclose(p.f(x, y), f, rtol=1e-13, atol=1e-12)
    assert np.allclose(p.beta(x, y), [[1.0], [2.0]])


def test_boundary_layer_manufactured_source():
    p = builtin_problem("boundary_layer", 1e-2)
    # the layer width is 1e-2; use a step well below it
    scale = np.abs(p.f(*PTS.T)).max()
    assert np.abs(fd_residual(p, h=1e-4)).max() <= 1e-5 * scale


def test_boundary_layer_origin_value():
    p = builtin_problem("boundary_layer", 1e-2)
    assert abs(float(p.exact.u(0.0, 0.0))) < 1e-14
    small = builtin_problem("boundary_layer", 1e-6)
    assert np.all(np.isfinite(small.exact.u(PTS[:, 0], PTS[:, 1])))


def test_rotating_problem():
    p = builtin_problem("rotating", 1e-6)
    x, y = PTS.T
    b = p.beta(x, y)
    assert np.allclose(b[0], y - 0.5) and np.allclose(b[1], 0.5 - x)
    assert np.allclose(p.beta.div(x, y), 0.0)
    assert np.allclose(p.f(x, y), 0.0)
    assert np.allclose(p.slit_data(0.5, y), np.sin(2 * np.pi * y) ** 2)
    assert p.slit == ((0.5, 0.0), (0.5, 0.5))


def test_interior_layer_data():
    p = builtin_problem("interior_layer", 1e-3)
    assert np.allclose(p.f(*PTS.T), 0.0)
    assert p.exact is None


def test_unknown_problem():
    with pytest.raises(KeyError):
        builtin_problem("nope", 1.0)


def test_nonpositive_eps():
    with pytest.raises(ValueError):
        builtin_problem("smooth", 0.0)


def test_velocity_checks():
    assert VelocityField.constant(1.0, 2.0).check() == []
    bad = VelocityField(lambda x, y: np.stack([x, y]), lambda x, y: 2.0 + 0 * x)
    assert bad.check()


def test_manufactured_problem_matches_fd():
    p = manufactured_problem("exp(x)*sin(y) + x**2", ("1 - 0.5*x", "0.3"), 0.1)
    scale = np.abs(p.f(*PTS.T)).max()
    assert np.abs(fd_residual(p)).max() <= 1e-6 * scale


def test_problem_from_config_expressions():
    p = problem_from_config({"epsilon": 0.5, "beta": ["1", "y"], "f": "x*y", "g": "1"})
    assert p.epsilon == 0.5
    assert np.allclose(p.f(np.array([2.0]), np.array([3.0])), 6.0)
    assert np.allclose(p.beta.div(0.2, 0.3), 1.0)
    with pytest.raises(ValueError):
        problem_from_config({"epsilon": 1, "beta": ["1", "z"]})


# --- stabilization ---------------------------------------------------------------

TRI_UP = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])  # faces: n=(0,-1), (1,1)/sqrt2, (-1,0)


def test_tau1_examples():
    b = VelocityField.constant(1.0, 2.0)
    tri = np.array([[0.0, 1.0], [0.0, 0.0], [1.0, 1.0]])  # face 2: (1,1)->(0,1), n = (0,1)
    assert tau_eval(TAU1, tri, 2, b, 1.0) == pytest.approx(2.0)
    assert tau_eval(TAU1, TRI_UP, 0, b, 1.0) == 0.0  # n = (0,-1)


def test_tau2_example_h_face():
    spec = StabilizationSpec("tau2", rho0=0.1, length_scale="h_F")
    b = VelocityField.constant(1.0, 2.0)
    # face with n = (1,0) and length 0.1
    tri = np.array([[0.0, 0.0], [0.1, 0.0], [0.1, 0.1]])
    assert tau_eval(spec, tri, 1, b, 1e-3) == pytest.approx(1.0 + 1e-3)


def test_tau2_h_elem_and_abs_and_constant():
    b = VelocityField.constant(1.0, 2.0)
    tri = np.array([[0.0, 0.0], [0.1, 0.0], [0.1, 0.1]])
    hk = np.sqrt(0.005)
    assert tau_eval(TAU2, tri, 1, b, 1e-3) == pytest.approx(1.0 + 0.1 * 1e-3 / hk)
    assert tau_eval(StabilizationSpec("abs"), tri, 0, b, 1.0) == pytest.approx(2.0)
    assert tau_eval(StabilizationSpec("constant", c=3.0), tri, 0, b, 1.0) == 3.0


def test_unknown_kind():
    with pytest.raises(ValueError):
        StabilizationSpec("tau9")


@pytest.mark.parametrize("eps", [1.0, 1e-3, 1e-9])
def test_tau1_below_tau2(eps):
    m = structured_unit_square(6)
    b = VelocityField(lambda x, y: np.stack([y - 0.5, 0.5 - x]), lambda x, y: 0 * x)
    t1 = mesh_tau(m, TAU1, b, eps)
    for spec in (TAU2, StabilizationSpec("tau2", length_scale="h_F")):
        assert np.all(t1 <= mesh_tau(m, spec, b, eps))
    assert np.all(t1 >= 0)


def test_tau1_sides_of_interior_face():
    m = structured_unit_square(5)
    b = VelocityField.constant(1.0, 2.0)
    tau = mesh_tau(m, TAU1, b, 1.0)
    for f in np.flatnonzero(m.face_kind == 0):
        (l, r) = m.face_elems[f]
        tl = tau[l, list(m.elem_faces[l]).index(f)]
        tr = tau[r, list(m.elem_faces[r]).index(f)]
        bn = m.face_normals[f] @ [1.0, 2.0]
        assert tl == pytest.approx(max(bn, 0)) and tr == pytest.approx(max(-bn, 0))
        assert min(tl, tr) == 0.0


def test_validate_tau_examples():
    m = structured_unit_square(5)
    b = VelocityField.constant(1.0, 2.0)
    assert validate_tau(m, TAU1, b).passed
    rep = validate_tau(m, StabilizationSpec("constant", c=0.0), b)
    assert not rep.passed and rep.violations
    for rho in (1e-3, 0.1, 5.0):
        assert validate_tau(m, StabilizationSpec("tau2", rho0=rho), b, 1e-9).passed
