"""Gauss rules on the reference triangle and on the unit interval.

The reference triangle is (0,0)-(1,0)-(0,1).  Triangle rules are collapsed
(Duffy) products of a Gauss-Legendre rule and a Gauss-Jacobi(1,0) rule, so an
m x m rule is exact for total degree 2m-1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_TRIANGLE_DEGREE = 12


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, dim)
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree <= ``degree``."""
    if not 0 <= degree <= MAX_TRIANGLE_DEGREE:
        raise ValueError(
            f"triangle quadrature degree must be in [0, {MAX_TRIANGLE_DEGREE}], got {degree}")
    m = max(1, (degree + 2) // 2)
    t, wt = roots_legendre(m)
    s, ws = roots_jacobi(m, 1.0, 0.0)
    xi = (t + 1.0) / 2.0
    eta = (s + 1.0) / 2.0
    # x = xi (1 - eta), y = eta, dx dy = (1 - eta) dxi deta
    x = np.outer(1.0 - eta, xi).ravel()
    y = np.outer(eta, np.ones_like(xi)).ravel()
    w = np.outer(ws / 4.0, wt / 2.0).ravel()
    pts = np.column_stack([x, y])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


@lru_cache(maxsize=None)
def gauss_line(npoints: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]; exact for degree 2*npoints - 1."""
    if npoints < 1:
        raise ValueError("need at least one Gauss point")
    t, w = roots_legendre(npoints)
    pts = ((t + 1.0) / 2.0)[:, None]
    w = w / 2.0
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, 2 * npoints - 1)
