"""
Restarted, right-preconditioned GMRES that records every matrix-vector
product it performs.

The recorded pairs ``(x, A x)`` are the raw material for
:func:`pspgmres.mrep.mrep`, which fits a banded preconditioner to them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .banded import SingularMatrixError, factorize
from .core import (BandedMatrix, ContractError, LinearOperator, ProbeHistory, as_vector,
                   aslinearoperator)

__all__ = [
    'GmresConfig',
    'GmresWorkspace',
    'SolveReport',
    'Preconditioner',
    'PreconditionerError',
    'DivergenceError',
    'SingularProjectionError',
    'BREAKDOWN_RTOL',
    'arnoldi_step',
    'givens_update',
    'form_solution',
    'psp_gmres',
]

BREAKDOWN_RTOL = 1e-14


class PreconditionerError(ArithmeticError):
    """The banded preconditioner could not be factorized."""


class SingularProjectionError(ArithmeticError):
    """Zero pivot in the projected triangular system."""


class DivergenceError(ArithmeticError):
    """A non-finite value appeared during the solve.

    ``report`` holds the partial :class:`SolveReport`, ``x`` the last finite
    iterate.
    """

    def __init__(self, message, report=None, x=None):
        super().__init__(message)
        self.report = report
        self.x = x


@dataclass
class GmresConfig:
    """Solver limits.

    ``epsilon`` is an absolute bound on the residual norm unless ``relative``
    is set, in which case it is scaled by ``||b||``.
    """
    epsilon: float = 1e-8
    max_inner: int = 30
    max_restarts: int = 200
    relative: bool = False
    reorthogonalize: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ContractError('epsilon must be positive')
        if self.max_inner < 1:
            raise ContractError('max_inner must be >= 1')
        if self.max_restarts < 1:
            raise ContractError('max_restarts must be >= 1')


@dataclass
class SolveReport:
    converged: bool = False
    iterations_total: int = 0
    restarts_used: int = 0
    cycles: int = 0
    residual_history: List[float] = field(default_factory=list)
    matvec_count: int = 0
    precond_apply_count: int = 0
    final_residual: float = math.inf
    initial_residual: float = math.inf
    breakdowns: int = 0


class GmresWorkspace:
    """Arrays for one restart cycle.

    ``V`` holds the Krylov basis as columns, ``H`` the Hessenberg matrix
    (rotated in place to upper triangular), ``G`` the rotated residual
    vector and ``C``/``S`` the Givens coefficients.
    """

    def __init__(self, n, max_inner):
        self.n = n
        self.max_inner = max_inner
        self.V = np.zeros((n, max_inner + 1))
        self.H = np.zeros((max_inner + 1, max_inner))
        self.G = np.zeros(max_inner + 1)
        self.C = np.zeros(max_inner)
        self.S = np.zeros(max_inner)
        self.Q = np.zeros(max_inner)
        self.Z = np.zeros(n)
        self.U = np.zeros(n)
        self.Y = np.zeros(n)
        self.finish_flag = False

    def start(self, residual, beta):
        self.V[:, 0] = residual / beta
        self.G[0] = beta

    def clean(self):
        self.V[:] = 0.0
        self.H[:] = 0.0
        self.G[:] = 0.0
        self.C[:] = 0.0
        self.S[:] = 0.0
        self.Q[:] = 0.0
        self.Z[:] = 0.0
        self.U[:] = 0.0
        self.Y[:] = 0.0
        self.finish_flag = False


class Preconditioner:
    """Applies ``N^{-1}`` through a factorization computed once.

    ``N=None`` or an identity matrix skips all work and returns the input.
    """

    def __init__(self, N: Optional[BandedMatrix] = None):
        self.N = N
        self.count = 0
        if N is None or N.is_identity():
            self._fact = None
        else:
            try:
                self._fact = factorize(N)
            except SingularMatrixError as exc:
                raise PreconditionerError(str(exc)) from exc

    @property
    def is_identity(self):
        return self._fact is None

    def solve(self, v, count=True):
        if self._fact is None:
            return np.array(v, dtype=np.float64)
        if count:
            self.count += 1
        try:
            return self._fact.solve(v)
        except SingularMatrixError as exc:
            raise PreconditionerError(str(exc)) from exc

    __call__ = solve


class _Checked:
    def __init__(self, fn):
        self.solve = fn


def _as_preconditioner(N):
    if N is None or isinstance(N, BandedMatrix):
        return Preconditioner(N)
    return N


def arnoldi_step(A, N, ws: GmresWorkspace, k: int, history: Optional[ProbeHistory] = None,
                 reorthogonalize: bool = False) -> bool:
    """Extend the Krylov basis by one vector (column ``k``, zero-based).

    Applies the preconditioner to ``V[:, k]``, records the probe pair, then
    orthogonalizes with modified Gram-Schmidt, storing coefficients in
    ``H[:k+2, k]``.

    Returns ``True`` on a lucky breakdown, i.e. when the new direction is
    numerically contained in the existing basis. ``V[:, k+1]`` is left at
    zero in that case.
    """
    A = aslinearoperator(A)
    M = _as_preconditioner(N)
    ws.Y[:] = M.solve(ws.V[:, k])
    Ay = A.apply(ws.Y)
    if history is not None:
        history.record(ws.Y, Ay)
    U = ws.U
    U[:] = Ay
    col_norm = np.linalg.norm(U)
    for j in range(k + 1):
        h = np.dot(ws.V[:, j], U)
        ws.H[j, k] = h
        U -= h * ws.V[:, j]
    if reorthogonalize:
        for j in range(k + 1):
            h = np.dot(ws.V[:, j], U)
            ws.H[j, k] += h
            U -= h * ws.V[:, j]
    h_next = np.linalg.norm(U)
    ws.H[k + 1, k] = h_next
    if h_next <= BREAKDOWN_RTOL * col_norm:
        ws.V[:, k + 1] = 0.0
        return True
    ws.V[:, k + 1] = U / h_next
    return False


def givens_update(ws: GmresWorkspace, k: int) -> float:
    """Rotate column ``k`` of ``H`` and the residual vector ``G``.

    Prior rotations ``0..k-1`` are applied to the column, then a new rotation
    annihilating ``H[k+1, k]`` is formed and applied. Returns ``|G[k+1]|``,
    the residual norm of the projected least-squares problem.

    Raises
    ------
    SingularProjectionError
        If ``H[k, k]`` and ``H[k+1, k]`` are both zero after the prior
        rotations (no new rotation can be formed).
    """
    H, C, S, G = ws.H, ws.C, ws.S, ws.G
    for j in range(k):
        delta = H[j, k]
        H[j, k] = C[j] * delta + S[j] * H[j + 1, k]
        H[j + 1, k] = -S[j] * delta + C[j] * H[j + 1, k]
    gamma = math.hypot(H[k, k], H[k + 1, k])
    if gamma == 0.0:
        raise SingularProjectionError(f'degenerate Hessenberg column {k}')
    C[k] = H[k, k] / gamma
    S[k] = H[k + 1, k] / gamma
    H[k, k] = gamma
    H[k + 1, k] = 0.0
    delta = G[k]
    G[k] = C[k] * delta + S[k] * G[k + 1]
    G[k + 1] = -S[k] * delta + C[k] * G[k + 1]
    return abs(G[k + 1])


def _back_substitute(H, G, k):
    q = np.zeros(k)
    for i in range(k - 1, -1, -1):
        piv = H[i, i]
        if piv == 0.0:
            raise SingularProjectionError(f'zero pivot at projected row {i}')
        q[i] = (G[i] - np.dot(H[i, i + 1:k], q[i + 1:k])) / piv
    return q


def form_solution(ws: GmresWorkspace, x0, N, k: int):
    """Return ``x0 + N^{-1} V[:, :k] H[:k, :k]^{-1} G[:k]``.

    ``k`` is the number of basis columns in use. Fills ``ws.Q`` and ``ws.Z``.
    """
    x0 = as_vector(x0, ws.n, name='x0')
    if k == 0:
        return x0.copy()
    M = _as_preconditioner(N)
    ws.Q[:] = 0.0
    ws.Q[:k] = _back_substitute(ws.H, ws.G, k)
    ws.Z[:] = ws.V[:, :k] @ ws.Q[:k]
    return x0 + M.solve(ws.Z)


def _finite(v):
    return bool(np.all(np.isfinite(v)))


def psp_gmres(A, b, x0=None, N: Optional[BandedMatrix] = None, cfg: Optional[GmresConfig] = None,
              history: Optional[ProbeHistory] = None,
              callback: Optional[Callable[[np.ndarray], None]] = None):
    """Solve ``A x = b`` by restarted GMRES, right-preconditioned with ``N``.

    Every product with ``A`` is appended to ``history``: the pair
    ``(x_start, A x_start)`` at the start of each cycle and
    ``(N^{-1} v_k, A N^{-1} v_k)`` for each inner iteration. The start-of-cycle
    product doubles as the explicit residual check of the previous cycle, so
    convergence is only reported once ``||b - A x||`` itself is below the
    tolerance.

    Parameters
    ----------
    A : LinearOperator, CSRMatrix, BandedMatrix or ndarray
        System operator; only its ``apply`` is used.
    b : array_like
        Right-hand side.
    x0 : array_like, optional
        Initial guess, zero by default.
    N : BandedMatrix, optional
        Preconditioner; ``None`` or an identity matrix means no preconditioning.
    cfg : GmresConfig, optional
    history : ProbeHistory, optional
        Extended in place; a fresh unbounded history is created if omitted.
    callback : callable, optional
        Called with the current iterate after every inner iteration.

    Returns
    -------
    x : ndarray
    report : SolveReport
    history : ProbeHistory

    Raises
    ------
    PreconditionerError
        ``N`` cannot be factorized without pivoting.
    DivergenceError
        A non-finite value was produced.
    """
    cfg = cfg or GmresConfig()
    A = aslinearoperator(A)
    n = A.n
    b = as_vector(b, n, name='b')
    x = np.zeros(n) if x0 is None else as_vector(x0, n, name='x0').copy()
    if N is not None and N.n != n:
        raise ContractError(f'preconditioner has dimension {N.n}, expected {n}')
    if history is None:
        history = ProbeHistory(n)
    elif history.n != n:
        raise ContractError(f'history has dimension {history.n}, expected {n}')
    M = _as_preconditioner(N)
    tol = cfg.epsilon * np.linalg.norm(b) if cfg.relative else cfg.epsilon

    report = SolveReport()
    ws = GmresWorkspace(n, cfg.max_inner)

    def matvec(v):
        y = A.apply(v)
        report.matvec_count += 1
        history.record(v, y)
        if not _finite(y):
            report.precond_apply_count = M.count
            raise DivergenceError('non-finite operator output', report=report, x=x)
        return y

    def precond(v):
        y = M.solve(v)
        if not _finite(y):
            report.precond_apply_count = M.count
            raise DivergenceError('non-finite preconditioner output', report=report, x=x)
        return y

    op = LinearOperator(n, matvec)
    pc = _Checked(precond)

    if not _finite(x) or not _finite(b):
        raise DivergenceError('non-finite input', report=report, x=x)

    r = b - matvec(x)
    beta = np.linalg.norm(r)
    report.initial_residual = beta

    while True:
        if beta <= tol:
            report.converged = True
            break
        if report.cycles == cfg.max_restarts:
            break
        report.cycles += 1
        ws.start(r, beta)
        k_used = 0
        for k in range(cfg.max_inner):
            ws.G[k + 1] = 0.0
            lucky = arnoldi_step(op, pc, ws, k, reorthogonalize=cfg.reorthogonalize)

            try:
                res = givens_update(ws, k)
            except SingularProjectionError:
                report.breakdowns += 1
                break
            k_used = k + 1
            report.iterations_total += 1
            report.residual_history.append(float(res))
            if not math.isfinite(res):
                report.precond_apply_count = M.count
                raise DivergenceError('non-finite residual estimate', report=report, x=x)
            if callback is not None:
                q = _back_substitute(ws.H, ws.G, k_used)
                callback(x + M.solve(ws.V[:, :k_used] @ q, count=False))
            if lucky:
                report.breakdowns += 1
                ws.finish_flag = True
                break
            if res <= tol:
                ws.finish_flag = True
                break

        if k_used == 0:
            # degenerate first column; nothing to add
            break
        ws.Q[:k_used] = _back_substitute(ws.H, ws.G, k_used)
        ws.Z[:] = ws.V[:, :k_used] @ ws.Q[:k_used]
        x = x + precond(ws.Z)
        ws.clean()

        r = b - matvec(x)
        beta = np.linalg.norm(r)

    report.restarts_used = max(report.cycles - 1, 0)
    report.final_residual = float(beta)
    report.precond_apply_count = M.count
    return x, report, history
