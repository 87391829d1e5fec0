"""Linear solves and 2-norm condition numbers for the trace system."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

DENSE_COND_LIMIT = 2000


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class LUFactors:
    """LU factors of a square dense or sparse matrix.

    Dense matrices use partial pivoting (LAPACK getrf); sparse ones SuperLU
    with a COLAMD (approximate minimum degree) column ordering.
    """

    def __init__(self, A, pivot_tol: float = 1e-14):
        self.shape = A.shape
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.sparse = sps.issparse(A)
        if self.sparse:
            A = sps.csc_matrix(A)
            norm = spla.norm(A, 1) if A.nnz else 0.0
            try:
                self._lu = spla.splu(A, permc_spec="COLAMD")
            except RuntimeError as exc:  # "Factor is exactly singular"
                raise SingularMatrixError(str(exc)) from exc
            piv = np.abs(self._lu.U.diagonal())
        else:
            A = np.asarray(A, float)
            norm = np.linalg.norm(A, 1)
            with warnings.catch_warnings():  # singularity is reported below
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self._lu = sla.lu_factor(A, check_finite=True)
            piv = np.abs(np.diag(self._lu[0]))
        if A.shape[0] and (norm == 0.0 or piv.min() <= pivot_tol * norm):
            raise SingularMatrixError(
                f"zero pivot: min |u_ii| = {piv.min() if piv.size else 0:.3e}, |A|_1 = {norm:.3e}")

    def solve(self, b, trans: bool = False):
        if self.sparse:
            return self._lu.solve(np.asarray(b, float), trans="T" if trans else "N")
        return sla.lu_solve(self._lu, b, trans=1 if trans else 0)


def lu_solve(A, b):
    """Solve A x = b by LU factorization (dense or sparse)."""
    return LUFactors(A).solve(b)


@dataclass
class ConditionEstimate:
    kappa: float
    sigma_max: float
    sigma_min: float
    method: str
    accurate: bool

    def __float__(self):
        return self.kappa


def cond2(A, method: str = "auto", tol: float = 1e-6, maxiter: int = 5000, seed: int = 0) -> ConditionEstimate:
    """sigma_max / sigma_min of a square matrix.

    ``auto`` uses a dense SVD up to ``DENSE_COND_LIMIT`` rows and an
    iterative estimate above it: Lanczos (ARPACK) on A^T A for sigma_max and
    on (A^T A)^{-1}, applied through the LU factors, for sigma_min.
    ``power`` runs plain power / inverse power iteration instead.
    Singular matrices give kappa = inf.
    """
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if n == 0:
        raise ValueError("empty matrix")
    if method == "auto":
        method = "svd" if n <= DENSE_COND_LIMIT else "lanczos"
    if method == "svd":
        dense = A.toarray() if sps.issparse(A) else np.asarray(A, float)
        s = np.linalg.svd(dense, compute_uv=False)
        smin = s[-1]
        kappa = np.inf if smin <= s[0] * np.finfo(float).eps else s[0] / smin
        return ConditionEstimate(float(kappa), float(s[0]), float(smin), "svd", True)

    try:
        lu = LUFactors(A if sps.issparse(A) else np.asarray(A, float), pivot_tol=0.0)
    except SingularMatrixError:
        return ConditionEstimate(np.inf, np.nan, 0.0, method, False)
    At = A.T
    if method == "lanczos":
        return _cond_lanczos(A, At, lu, n, tol, maxiter, seed)
    if method == "power":
        return _cond_power(A, At, lu, n, tol, maxiter, seed)
    raise ValueError(f"unknown method {method!r}")


def _cond_lanczos(A, At, lu, n, tol, maxiter, seed):
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    AtA = spla.LinearOperator((n, n), matvec=lambda x: At @ (A @ x), dtype=float)
    inv = spla.LinearOperator((n, n), matvec=lambda x: lu.solve(lu.solve(x, trans=True)), dtype=float)
    accurate = True
    try:
        lmax = spla.eigsh(AtA, k=1, which="LA", tol=tol, maxiter=maxiter, v0=v0, return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence as exc:
        accurate = False
        lmax = exc.eigenvalues.max() if len(exc.eigenvalues) else np.nan
    try:
        linv = spla.eigsh(inv, k=1, which="LA", tol=tol, maxiter=maxiter, v0=v0, return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence as exc:
        accurate = False
        linv = exc.eigenvalues.max() if len(exc.eigenvalues) else np.nan
    smax = float(np.sqrt(lmax))
    smin = float(1.0 / np.sqrt(linv))
    return ConditionEstimate(smax / smin, smax, smin, "lanczos", accurate)


def _power(op, n, tol, maxiter, rng):
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(maxiter):
        y = op(x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0, True
        x = y / new
        if abs(new - lam) <= tol * new:
            return new, True
        lam = new
    return lam, False


def _cond_power(A, At, lu, n, tol, maxiter, seed):
    rng = np.random.default_rng(seed)
    lmax, ok1 = _power(lambda x: At @ (A @ x), n, tol, maxiter, rng)
    linv, ok2 = _power(lambda x: lu.solve(lu.solve(x, trans=True)), n, tol, maxiter, rng)
    smax = float(np.sqrt(lmax))
    smin = float(1.0 / np.sqrt(linv))
    return ConditionEstimate(smax / smin, smax, smin, "power", ok1 and ok2)
