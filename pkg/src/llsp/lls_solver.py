"""Linear least squares solvers.

Three ways of solving ``min_x ||A x - y||^2``:

  * normal equations with a Cholesky factorization of ``A^T A`` (full rank only),
  * pivoted QR (full rank only, better conditioned),
  * SVD minimum-norm pseudoinverse solution (any rank).

:func:`solve` routes a design matrix to one of them based on its declared
rank class and its condition number. Each direct solver raises on a rank
failure; only :func:`solve` falls back, logs the fallback at INFO and
records the method that ran in :attr:`LlsSolution.method`.

A design matrix may mark its leading ``base_columns`` as a model of their
own (the carrier block of a shifted wave). Its fit is then never worse than
that leading block fitted alone.
"""
import logging
from enum import Enum
from typing import Optional, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import RankDeficiencyError

_logger = logging.getLogger(__name__)

#: Full-rank systems at or below this condition number use normal equations.
#: Their forward error grows as cond**2 * eps, about 2e-8 here.
NORMAL_EQUATIONS_MAX_CONDITION = 1e4

#: Smallest singular value considered nonzero by estimate_condition.
CONDITION_FLOOR = np.finfo(float).tiny


class RankClass(str, Enum):
    full_rank = "full-rank"
    possibly_deficient = "possibly-deficient"


class SolveMethod(str, Enum):
    normal_equations = "normal-equations"
    orthogonal = "orthogonal"
    svd_min_norm = "svd-min-norm"


class DesignMatrix(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data:         np.ndarray
    rank_class:   RankClass = RankClass.full_rank
    base_columns: Optional[int] = None

    @field_validator("data")
    @classmethod
    def _finite_matrix(cls, v):
        v = np.asarray(v, dtype=float)
        if v.ndim != 2:
            raise ValueError("design matrix must be 2-D, got shape {}".format(v.shape))
        if not np.all(np.isfinite(v)):
            raise ValueError("design matrix has non-finite entries")
        return v

    @model_validator(mode="after")
    def _base_inside(self):
        k = self.base_columns
        if k is not None and not 0 < k < self.data.shape[1]:
            raise ValueError("base_columns {} outside 1..{}".format(k, self.data.shape[1] - 1))
        return self

    @property
    def shape(self):
        return self.data.shape


class LlsSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x:              np.ndarray
    residual_ssq:   float
    effective_rank: int
    method:         SolveMethod


MatrixLike = Union[DesignMatrix, np.ndarray]


def _as_design(A : MatrixLike) -> DesignMatrix:
    if isinstance(A, DesignMatrix):
        return A
    return DesignMatrix(data=np.atleast_2d(np.asarray(A, dtype=float)))


def _check_rhs(M : np.ndarray, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != M.shape[0]:
        raise ValueError(
            "right-hand side has {} entries, design matrix has {} rows".format(y.shape[0], M.shape[0])
        )
    return y


def _residual_ssq(M, x, y) -> float:
    r = M @ x - y
    return float(r @ r)


def default_rank_tol(shape) -> float:
    return max(shape) * np.finfo(float).eps


def solve_normal_equations(A : MatrixLike, y) -> LlsSolution:
    """Solve ``(A^T A) x = A^T y`` by Cholesky factorization.

    Raises:
        RankDeficiencyError: the design matrix is not declared full rank,
            or its Gram matrix is numerically singular.
    """
    A = _as_design(A)
    if A.rank_class != RankClass.full_rank:
        raise RankDeficiencyError(
            "normal equations need a full-rank design matrix, got {}".format(A.rank_class.value),
            method=SolveMethod.normal_equations)
    M = A.data
    y = _check_rhs(M, y)
    n, p = M.shape
    if n < p:
        raise RankDeficiencyError(
            "{} rows cannot determine {} parameters by normal equations".format(n, p),
            method=SolveMethod.normal_equations)

    gram = M.T @ M
    try:
        factor = scipy.linalg.cho_factor(gram, lower=False, check_finite=False)
    except np.linalg.LinAlgError as err:
        raise RankDeficiencyError(
            "Gram matrix is not positive definite: {}".format(err),
            method=SolveMethod.normal_equations) from err

    # Cholesky pivots of A^T A are the R diagonal of a QR of A.
    pivots = np.abs(np.diag(factor[0]))
    if pivots.min() <= np.sqrt(default_rank_tol(M.shape)) * pivots.max():
        raise RankDeficiencyError(
            "Gram matrix is numerically singular (pivot ratio {:.3g})".format(
                pivots.min() / pivots.max()),
            method=SolveMethod.normal_equations)

    x = scipy.linalg.cho_solve(factor, M.T @ y, check_finite=False)
    return LlsSolution(x=x, residual_ssq=_residual_ssq(M, x, y),
                       effective_rank=p, method=SolveMethod.normal_equations)


def solve_orthogonal(A : MatrixLike, y) -> LlsSolution:
    """Least squares by column-pivoted QR triangularization.

    Raises:
        RankDeficiencyError: a diagonal entry of R falls below
            ``max(N, p) * eps * |R_00|``.
    """
    A = _as_design(A)
    M = A.data
    y = _check_rhs(M, y)
    n, p = M.shape
    if n < p:
        raise RankDeficiencyError(
            "{} rows cannot determine {} parameters".format(n, p),
            method=SolveMethod.orthogonal)

    Q, R, perm = scipy.linalg.qr(M, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0 or diag.min() <= default_rank_tol(M.shape) * diag[0]:
        rank = int(np.count_nonzero(diag > default_rank_tol(M.shape) * (diag[0] if diag.size else 0)))
        raise RankDeficiencyError(
            "QR detected numerical rank {} < {} columns".format(rank, p),
            method=SolveMethod.orthogonal)

    z = scipy.linalg.solve_triangular(R, Q.T @ y, lower=False, check_finite=False)
    x = np.empty(p)
    x[perm] = z
    return LlsSolution(x=x, residual_ssq=_residual_ssq(M, x, y),
                       effective_rank=p, method=SolveMethod.orthogonal)


def solve_svd_min_norm(A : MatrixLike, y, rank_tol : Optional[float] = None) -> LlsSolution:
    """Minimum-norm least squares solution through the SVD.

    Singular values below ``rank_tol * sigma_max`` are treated as zero.
    ``rank_tol`` defaults to ``max(N, p) * eps``. An all-zero matrix yields
    ``x = 0`` and the residual ``||y||^2``.
    """
    A = _as_design(A)
    M = A.data
    y = _check_rhs(M, y)
    if rank_tol is None:
        rank_tol = default_rank_tol(M.shape)
    if not rank_tol > 0:
        raise ValueError("rank_tol must be positive, got {}".format(rank_tol))

    p = M.shape[1]
    U, s, Vh = scipy.linalg.svd(M, full_matrices=False, check_finite=False)
    if s.size == 0 or s[0] == 0.0:
        x = np.zeros(p)
        return LlsSolution(x=x, residual_ssq=float(y @ y), effective_rank=0,
                           method=SolveMethod.svd_min_norm)

    keep = s >= rank_tol * s[0]
    rank = int(np.count_nonzero(keep))
    x = Vh[:rank].T @ ((U[:, :rank].T @ y) / s[:rank])
    return LlsSolution(x=x, residual_ssq=_residual_ssq(M, x, y),
                       effective_rank=rank, method=SolveMethod.svd_min_norm)


def estimate_condition(A : MatrixLike) -> float:
    """Ratio of largest to smallest singular value, ``inf`` when singular."""
    M = _as_design(A).data
    if M.size == 0:
        raise ValueError("cannot estimate the condition of an empty matrix")
    s = scipy.linalg.svdvals(M, check_finite=False)
    if s.size < M.shape[1] or s[-1] < CONDITION_FLOOR:
        return float("inf")
    return float(s[0] / s[-1])


def _route(A : DesignMatrix, y, rank_tol : Optional[float]) -> LlsSolution:
    if A.rank_class == RankClass.possibly_deficient:
        return solve_svd_min_norm(A, y, rank_tol)

    tol = rank_tol if rank_tol is not None else default_rank_tol(A.shape)
    cond = estimate_condition(A)
    if cond * tol >= 1.0:
        _logger.debug("condition %.3g is numerically singular at tolerance %.3g, using SVD", cond, tol)
        return solve_svd_min_norm(A, y, rank_tol)
    if cond <= NORMAL_EQUATIONS_MAX_CONDITION:
        try:
            return solve_normal_equations(A, y)
        except RankDeficiencyError as err:
            _logger.info("normal equations rejected (%s), using QR", err)
    try:
        return solve_orthogonal(A, y)
    except RankDeficiencyError as err:
        _logger.info("orthogonal solve failed (%s), using SVD", err)
        return solve_svd_min_norm(A, y, rank_tol)


def _route_scaled(A : DesignMatrix, y, rank_tol : Optional[float]) -> LlsSolution:
    # Solve for D x with unit-norm columns, then undo D.
    norms = np.linalg.norm(A.data, axis=0)
    norms[norms == 0.0] = 1.0
    scaled = DesignMatrix(data=A.data / norms, rank_class=A.rank_class)
    sol = _route(scaled, y, rank_tol)
    x = sol.x / norms
    return LlsSolution(x=x, residual_ssq=_residual_ssq(A.data, x, _check_rhs(A.data, y)),
                       effective_rank=sol.effective_rank, method=sol.method)


def _solve_block(A : DesignMatrix, y, rank_tol, scale_columns) -> LlsSolution:
    if scale_columns:
        return _route_scaled(A, y, rank_tol)
    return _route(A, y, rank_tol)


def solve(A : MatrixLike, y, rank_tol : Optional[float] = None,
          scale_columns : bool = False) -> LlsSolution:
    """Solve with the method suited to the matrix.

    Possibly-deficient matrices always go through the SVD. Full-rank ones go
    through the SVD once ``cond * rank_tol >= 1``, use normal equations while
    the condition number is at most ``NORMAL_EQUATIONS_MAX_CONDITION`` and
    pivoted QR beyond that. A rejected direct solve falls back to the next
    one and is logged at INFO.

    With ``scale_columns`` the columns are equilibrated to unit norm before
    routing, so ``rank_tol`` applies to the scaled matrix.

    When ``A.base_columns`` is set, the leading block is also fitted on its
    own and wins whenever its residual is smaller, the trailing coefficients
    then being zero. A model extended by extra columns therefore never fits
    worse than the model it extends, even under SVD truncation.
    """
    A = _as_design(A)
    joint = _solve_block(A, y, rank_tol, scale_columns)
    k = A.base_columns
    if k is None:
        return joint

    leading = DesignMatrix(data=np.ascontiguousarray(A.data[:, :k]), rank_class=A.rank_class)
    base = _solve_block(leading, y, rank_tol, scale_columns)
    if base.residual_ssq < joint.residual_ssq:
        _logger.debug("leading %d columns fit better alone (%.6g < %.6g)",
                      k, base.residual_ssq, joint.residual_ssq)
        x = np.concatenate([base.x, np.zeros(A.shape[1] - k)])
        return LlsSolution(x=x, residual_ssq=base.residual_ssq,
                           effective_rank=base.effective_rank, method=base.method)
    return joint
