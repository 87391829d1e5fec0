"""Orthonormal polynomial bases on the reference triangle and on faces.

Scalar basis functions are obtained by Gram-Schmidt on monomials centred at
the reference barycentre; face functions are normalised Legendre polynomials
in the arclength parameter.  Both are L2-orthonormal on their reference
domain, so physical element mass matrices are ``2|K| * I`` and physical face
mass matrices are the identity.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import eval_legendre, legendre

from .quadrature import gauss_line, triangle_quadrature

CENTRE = np.array([1.0 / 3.0, 1.0 / 3.0])


def monomial_exponents(degree: int, homogeneous: bool = False) -> list[tuple[int, int]]:
    """Exponents (a, b) of x^a y^b ordered by total degree."""
    degrees = [degree] if homogeneous else range(degree + 1)
    return [(d - b, b) for d in degrees for b in range(d + 1)]


def scalar_dim(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def _monomials(points, exps):
    x = points[..., 0] - CENTRE[0]
    y = points[..., 1] - CENTRE[1]
    return np.stack([x**a * y**b for a, b in exps], axis=-1)


def _monomial_grads(points, exps):
    x = points[..., 0] - CENTRE[0]
    y = points[..., 1] - CENTRE[1]
    gx = [a * x ** max(a - 1, 0) * y**b for a, b in exps]
    gy = [b * x**a * y ** max(b - 1, 0) for a, b in exps]
    return np.stack([np.stack(gx, axis=-1), np.stack(gy, axis=-1)], axis=-1)


class ScalarBasis:
    """L2-orthonormal basis of P_k on the reference triangle."""

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("degree must be nonnegative")
        self.k = k
        self.exponents = monomial_exponents(k)
        self.dim = len(self.exponents)
        rule = triangle_quadrature(min(2 * k, 12))
        V = _monomials(rule.points, self.exponents)
        C = np.eye(self.dim)
        # two Cholesky passes: the second one mops up the rounding of the first
        for _ in range(2):
            P = V @ C
            G = P.T @ (rule.weights[:, None] * P)
            L = np.linalg.cholesky(G)
            C = C @ np.linalg.inv(L).T
        self.coeffs = C

    def values(self, points: np.ndarray) -> np.ndarray:
        """Values at reference points, shape (..., dim)."""
        return _monomials(np.asarray(points, float), self.exponents) @ self.coeffs

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Reference gradients, shape (..., dim, 2)."""
        g = _monomial_grads(np.asarray(points, float), self.exponents)
        return np.einsum("...ma,mi->...ia", g, self.coeffs)


@lru_cache(maxsize=None)
def scalar_basis(k: int) -> ScalarBasis:
    return ScalarBasis(k)


class FaceBasis:
    """Legendre polynomials orthonormal on [0, 1].

    On a physical face of length L the functions are ``values(t) / sqrt(L)``,
    which makes the face mass matrix the identity for every L.
    """

    def __init__(self, k: int):
        self.k = k
        self.dim = k + 1
        self._scale = np.sqrt(2.0 * np.arange(k + 1) + 1.0)

    def values(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, float)
        return np.stack([eval_legendre(j, 2.0 * t - 1.0) for j in range(self.dim)], axis=-1) * self._scale

    def derivatives(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, float)
        cols = [2.0 * legendre(j).deriv()(2.0 * t - 1.0) if j else np.zeros_like(t) for j in range(self.dim)]
        return np.stack(cols, axis=-1) * self._scale


@lru_cache(maxsize=None)
def face_basis(k: int) -> FaceBasis:
    return FaceBasis(k)


def enrichment_monomials(k: int):
    """Homogeneous degree-k monomials (in centred reference coordinates).

    Multiplied by the position vector they complete (P_k)^2 to
    (P_k)^2 + x P_k.
    """
    exps = monomial_exponents(k, homogeneous=True)

    def values(points):
        return _monomials(np.asarray(points, float), exps)

    def gradients(points):
        return _monomial_grads(np.asarray(points, float), exps)

    return exps, values, gradients


def vector_dim(k: int, space: str = "pk") -> int:
    if space == "pk":
        return (k + 1) * (k + 2)
    if space == "rt":
        return (k + 1) * (k + 3)
    raise ValueError(f"unknown vector space {space!r}")


def reference_vector_gram(k: int, space: str = "pk") -> np.ndarray:
    """Gram matrix of the vector basis on the reference triangle."""
    rule = triangle_quadrature(min(2 * k + 2, 12))
    vals = reference_vector_values(k, space, rule.points)
    return np.einsum("q,qia,qja->ij", rule.weights, vals, vals)


def reference_vector_values(k: int, space: str, points: np.ndarray) -> np.ndarray:
    """Vector basis on the reference element itself (identity map), (nq, dim, 2)."""
    phi = scalar_basis(k).values(points)
    nq, nw = phi.shape
    out = np.zeros((nq, vector_dim(k, space), 2))
    out[:, :nw, 0] = phi
    out[:, nw:2 * nw, 1] = phi
    if space == "rt":
        _, mvals, _ = enrichment_monomials(k)
        m = mvals(points)
        out[:, 2 * nw:, :] = m[:, :, None] * (points - CENTRE)[:, None, :]
    return out


def face_points_on_reference(local_face: int, t: np.ndarray) -> np.ndarray:
    """Points on local face j = (v_j, v_{j+1}) of the reference triangle."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a = verts[local_face]
    b = verts[(local_face + 1) % 3]
    t = np.asarray(t, float).reshape(-1)
    return a[None, :] + t[:, None] * (b - a)[None, :]


def line_rule(npoints: int):
    rule = gauss_line(npoints)
    return rule.points[:, 0], rule.weights
