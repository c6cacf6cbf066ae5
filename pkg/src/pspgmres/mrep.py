"""
Multi-regressor estimation of a banded preconditioner from probe history.

Each row ``i`` of the unknown operator is modelled as a linear regression of
``P_y[i, :]`` on the neighbouring rows ``P_x[i-d : i+d+1, :]`` plus an
intercept. The fitted slopes become row ``i`` of a banded matrix ``N`` with
``P_y ~ N P_x``. The first and last ``d`` rows only get a one-regressor fit
that fills the diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.linalg

from .core import BandedMatrix, ContractError, ProbeHistory

__all__ = [
    'InsufficientSamplesError',
    'ZeroVarianceError',
    'RankDeficiencyError',
    'RegressionDesign',
    'RowDiagnostic',
    'PreconditionerEstimate',
    'COND_LIMIT',
    'RIDGE_SCALE',
    'DIAG_RTOL',
    'simple_linear_fit',
    'multi_regress',
    'mrep',
]

COND_LIMIT = 1e12
RIDGE_SCALE = 1e-10
DIAG_RTOL = 1e-12

BOUNDARY = 'boundary-simple'
INTERIOR = 'interior-multi'
FALLBACK = 'fallback-identity'


class InsufficientSamplesError(ValueError):
    """Fewer probe pairs than regression unknowns."""


class ZeroVarianceError(ArithmeticError):
    """The single regressor of a boundary fit is constant."""


class RankDeficiencyError(ArithmeticError):
    """Normal equations stay singular even after ridge regularization."""


@dataclass
class RegressionDesign:
    """Design block for one interior row.

    ``rows`` is ``2(d+1) x m``: a row of ones followed by probe rows
    ``i-d .. i+d``. ``response`` is probe output row ``i``.
    """
    rows: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.response = np.asarray(self.response, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[0] % 2 or self.rows.shape[0] < 2:
            raise ContractError(f'design must have an even number (>= 2) of rows, got {self.rows.shape}')
        if self.response.shape != (self.rows.shape[1],):
            raise ContractError('response length must equal the number of design columns')

    @property
    def d(self):
        return self.rows.shape[0] // 2 - 1

    @property
    def m(self):
        return self.rows.shape[1]

    @classmethod
    def for_row(cls, Px, Py, i, d):
        m = Px.shape[1]
        rows = np.vstack([np.ones((1, m)), Px[i - d:i + d + 1, :]])
        return cls(rows, Py[i, :])


@dataclass
class RowDiagnostic:
    kind: str
    ridge_used: bool = False
    residual_norm: float = 0.0


@dataclass
class PreconditionerEstimate:
    N: BandedMatrix
    diagnostics: List[RowDiagnostic] = field(default_factory=list)
    intercepts: np.ndarray = None

    @property
    def n_fallback(self):
        return sum(1 for r in self.diagnostics if r.kind == FALLBACK)

    @property
    def n_ridge(self):
        return sum(1 for r in self.diagnostics if r.ridge_used)


def simple_linear_fit(xs, ys):
    """Ordinary least squares of ``ys`` on ``xs`` with intercept.

    Returns
    -------
    (intercept, slope)

    Raises
    ------
    ZeroVarianceError
        If ``xs`` has (numerically) zero variance.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ContractError('xs and ys must be 1-D of equal length')
    if xs.size < 2:
        raise InsufficientSamplesError('a linear fit needs at least two samples')
    xm, ym = xs.mean(), ys.mean()
    dx = xs - xm
    var = np.dot(dx, dx)
    if not var >= 1e-300:
        raise ZeroVarianceError('regressor has zero variance')
    slope = np.dot(dx, ys - ym) / var
    return float(ym - slope * xm), float(slope)


def _cholesky_solve(G, rhs):
    try:
        c = scipy.linalg.cho_factor(G, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        return None
    return scipy.linalg.cho_solve(c, rhs)


def multi_regress(design: RegressionDesign, ridge: float = 0.0, return_info: bool = False):
    """Solve the normal equations ``(X X^T + ridge I) beta = X y``.

    ``X`` is ``design.rows`` and ``y`` is ``design.response``. The unridged
    system is tried first (when ``ridge == 0``); if its Cholesky factorization
    fails or its condition number exceeds ``COND_LIMIT``, it is retried with
    ``ridge = RIDGE_SCALE * trace(X X^T) / (2(d+1))``.

    Returns the coefficient vector (intercept first). With
    ``return_info=True`` returns ``(beta, ridge_used)``.
    """
    if ridge < 0:
        raise ContractError('ridge must be non-negative')
    X, y = design.rows, design.response
    p = X.shape[0]
    gram = X @ X.T
    rhs = X @ y
    beta = None
    ridge_used = False
    if ridge == 0.0:
        if design.m >= p and np.linalg.cond(gram) <= COND_LIMIT:
            beta = _cholesky_solve(gram, rhs)
        if beta is None:
            ridge = RIDGE_SCALE * np.trace(gram) / p
    if beta is None:
        ridge_used = True
        if ridge > 0:
            beta = _cholesky_solve(gram + ridge * np.eye(p), rhs)
        if beta is None or not np.all(np.isfinite(beta)):
            raise RankDeficiencyError('normal equations are singular even with ridge')
    return (beta, ridge_used) if return_info else beta


def mrep(history, d: int = 1) -> PreconditionerEstimate:
    """Fit a banded matrix of half-bandwidth ``d`` to recorded probe pairs.

    Parameters
    ----------
    history : ProbeHistory or tuple of (Px, Py)
        Probe inputs/outputs, one pair per column.
    d : int
        Half-bandwidth; ``d=1`` gives a tridiagonal estimate.

    Returns
    -------
    PreconditionerEstimate
        The matrix, per-row diagnostics and the (uninstalled) intercepts.

    Raises
    ------
    InsufficientSamplesError
        If there are fewer than ``2(d+1)`` pairs.
    """
    if isinstance(history, ProbeHistory):
        Px, Py = history.Px, history.Py
    else:
        Px, Py = (np.asarray(a, dtype=np.float64) for a in history)
    if Px.shape != Py.shape or Px.ndim != 2:
        raise ContractError('Px and Py must be 2-D arrays of equal shape')
    n, m = Px.shape
    if d < 1:
        raise ContractError('d must be >= 1')
    if n < 2 * d + 1:
        raise ContractError(f'dimension {n} too small for half-bandwidth {d}')
    if m < 2 * (d + 1):
        raise InsufficientSamplesError(f'{m} probe pairs, need at least {2 * (d + 1)}')

    N = BandedMatrix(n, d)
    diagnostics = [None] * n
    intercepts = np.zeros(n)

    def boundary(i):
        try:
            b0, b1 = simple_linear_fit(Px[i], Py[i])
        except ZeroVarianceError:
            N.set_row_identity(i)
            diagnostics[i] = RowDiagnostic(FALLBACK)
            return
        N[i, i] = b1
        intercepts[i] = b0
        diagnostics[i] = RowDiagnostic(BOUNDARY, residual_norm=float(np.linalg.norm(Py[i] - b0 - b1 * Px[i])))

    for i in range(d):
        boundary(i)
    for i in range(d, n - d):
        design = RegressionDesign.for_row(Px, Py, i, d)
        if not (np.all(np.isfinite(design.rows)) and np.all(np.isfinite(design.response))):
            N.set_row_identity(i)
            diagnostics[i] = RowDiagnostic(FALLBACK)
            continue
        try:
            beta, ridged = multi_regress(design, return_info=True)
        except RankDeficiencyError:
            N.set_row_identity(i)
            diagnostics[i] = RowDiagnostic(FALLBACK, ridge_used=True)
            continue
        intercepts[i] = beta[0]
        # coefficient j (1..2d+1) multiplies P_x[i - d + j - 1] -> column i - d + j - 1
        N.bands[:, i] = beta[1:]
        res = float(np.linalg.norm(design.response - beta @ design.rows))
        diagnostics[i] = RowDiagnostic(INTERIOR, ridge_used=ridged, residual_norm=res)
    for i in range(n - d, n):
        boundary(i)

    diag = N.bands[d]
    finite = np.all(np.isfinite(N.bands), axis=0)
    scale = np.max(np.abs(diag[finite])) if finite.any() else 0.0
    for i in range(n):
        if not finite[i] or not abs(diag[i]) >= DIAG_RTOL * scale or diag[i] == 0.0:
            N.set_row_identity(i)
            ridged = diagnostics[i].ridge_used if diagnostics[i] else False
            diagnostics[i] = RowDiagnostic(FALLBACK, ridge_used=ridged)
    return PreconditionerEstimate(N, diagnostics, intercepts)
