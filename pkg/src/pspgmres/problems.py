"""
Test problems and the time-stepping driver.

* :func:`gen_seven_diagonal` -- seeded, diagonally dominant random matrices
  with seven diagonals and right-hand side ``[1, ..., n]``.
* :func:`stencil_operator` / :func:`heat1d_operator` -- the backward-Euler
  system matrix ``I - dt L`` for a 1-D finite-difference operator ``L``,
  matrix-free with an optional explicit CSR twin.
* :func:`time_step_driver` -- repeated solves where every solve after the
  first is preconditioned with a banded matrix fitted to the probes of the
  earlier ones.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .core import BandedMatrix, ContractError, CSRMatrix, LinearOperator, ProbeHistory, aslinearoperator
from .gmres import GmresConfig, PreconditionerError, SolveReport, psp_gmres
from .mrep import InsufficientSamplesError, PreconditionerEstimate, mrep

__all__ = [
    'ConfigError',
    'GeneratorConfig',
    'StencilSpec',
    'TimeStepPlan',
    'StepRecord',
    'DriverResult',
    'DriverError',
    'gen_seven_diagonal',
    'stencil_operator',
    'heat1d_operator',
    'time_step_driver',
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid problem or plan configuration."""


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    seed: int = 0
    offsets: Tuple[int, ...] = (-3, -2, -1, 0, 1, 2, 3)
    dominance_margin: float = 1.0

    def __post_init__(self):
        if self.n < 7:
            raise ConfigError(f'n must be >= 7, got {self.n}')
        if not self.dominance_margin > 0:
            raise ConfigError('dominance_margin must be positive')
        if 0 not in self.offsets:
            raise ConfigError('offsets must include the main diagonal')


def gen_seven_diagonal(cfg: GeneratorConfig):
    """Random banded matrix with a dominant diagonal, and ``b = [1, ..., n]``.

    Off-diagonal entries are drawn uniformly from ``[-1, 1]``, diagonal by
    diagonal in ascending offset order; the diagonal entry of each row is the
    absolute sum of that row's off-diagonals plus ``dominance_margin``.

    Returns
    -------
    A : CSRMatrix
    b : ndarray
    """
    n = cfg.n
    rng = np.random.default_rng(cfg.seed)
    rows, cols, vals = [], [], []
    offdiag_sum = np.zeros(n)
    for k in sorted(set(cfg.offsets)):
        if k == 0:
            continue
        i = np.arange(max(0, -k), min(n, n - k))
        v = rng.uniform(-1.0, 1.0, size=i.size)
        rows.append(i)
        cols.append(i + k)
        vals.append(v)
        np.add.at(offdiag_sum, i, np.abs(v))
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(offdiag_sum + cfg.dominance_margin)
    A = CSRMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n))
    b = np.arange(1, n + 1, dtype=np.float64)
    return A, b


# ---------------------------------------------------------------------------
# Finite-difference operators
# ---------------------------------------------------------------------------

# central-difference weights for offsets (-1, 0, +1), to be divided by h**k
_STENCILS = {
    1: (-0.5, 0.0, 0.5),
    2: (1.0, -2.0, 1.0),
}


@dataclass
class StencilSpec:
    """Linear operator ``L u = sum_k alpha_k d^k u / dx^k`` on a uniform 1-D grid.

    ``coefficients`` maps ``(order, axis)`` to ``alpha``. Only axis 0 and
    orders 1 and 2 are supported.
    """
    coefficients: Dict[Tuple[int, int], float]
    shape: Tuple[int, ...]
    spacing: Tuple[float, ...]

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.spacing = tuple(float(h) for h in self.spacing)
        if len(self.shape) != 1 or len(self.spacing) != 1:
            raise ConfigError('only one-dimensional grids are supported')
        if self.shape[0] < 3:
            raise ConfigError('need at least 3 grid points')
        if not self.spacing[0] > 0:
            raise ConfigError('grid spacing must be positive')
        for (order, axis) in self.coefficients:
            if order not in _STENCILS:
                raise ConfigError(f'derivative order {order} has no stencil')
            if axis != 0:
                raise ConfigError(f'axis {axis} out of range for a 1-D grid')

    def weights(self):
        """Combined weights for offsets (-1, 0, +1)."""
        h = self.spacing[0]
        w = np.zeros(3)
        for (order, _), alpha in self.coefficients.items():
            w += alpha * np.asarray(_STENCILS[order]) / h ** order
        return w


def stencil_operator(spec: StencilSpec, dt: float, with_matrix: bool = False):
    """Backward-Euler operator ``A = I - dt L`` with Dirichlet identity boundary rows.

    Returns the matrix-free :class:`LinearOperator`, or ``(operator, CSRMatrix)``
    when ``with_matrix`` is set.
    """
    if dt < 0:
        raise ConfigError('dt must be non-negative')
    n = spec.shape[0]
    wl, wc, wr = dt * spec.weights()

    def apply(v):
        out = v.copy()
        out[1:-1] -= wl * v[:-2] + wc * v[1:-1] + wr * v[2:]
        return out

    op = LinearOperator(n, apply)
    if not with_matrix:
        return op
    i = np.arange(1, n - 1)
    rows = np.concatenate([[0, n - 1], i, i, i])
    cols = np.concatenate([[0, n - 1], i - 1, i, i + 1])
    vals = np.concatenate([[1.0, 1.0], np.full(n - 2, -wl), np.full(n - 2, 1.0 - wc), np.full(n - 2, -wr)])
    return op, CSRMatrix.from_coo(rows, cols, vals, (n, n))


def heat1d_operator(nx: int, dx: float, dt: float, alpha: float = 1.0, with_matrix: bool = False):
    """Implicit-Euler heat operator ``v - dt*alpha/dx**2 * (v[i-1] - 2 v[i] + v[i+1])``.

    Boundary rows are the identity (homogeneous Dirichlet values carried in
    the state vector).
    """
    if not dx > 0:
        raise ConfigError('dx must be positive')
    if not alpha > 0:
        raise ConfigError('alpha must be positive')
    spec = StencilSpec({(2, 0): alpha}, (nx,), (dx,))
    return stencil_operator(spec, dt, with_matrix=with_matrix)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class TimeStepPlan:
    """How the driver advances.

    ``propagate_state`` feeds each solution back as the next right-hand side
    (implicit time stepping); otherwise every step re-solves with the initial
    right-hand side. ``history_cap`` bounds the probe history; ``reset_history``
    discards it after each refit.
    """
    dt: float = 1.0
    steps: int = 2
    reestimate_every: int = 1
    d: int = 1
    history_cap: Optional[int] = None
    reset_history: bool = False
    propagate_state: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError('dt must be positive')
        if self.steps < 1:
            raise ConfigError('steps must be >= 1')
        if self.reestimate_every < 1:
            raise ConfigError('reestimate_every must be >= 1')
        if self.d < 1:
            raise ConfigError('d must be >= 1')


@dataclass
class StepRecord:
    step: int
    report: SolveReport
    preconditioned: bool
    fallback: Optional[str] = None
    estimate: Optional[PreconditionerEstimate] = None


@dataclass
class DriverResult:
    steps: List[StepRecord] = field(default_factory=list)
    state: Optional[np.ndarray] = None
    history: Optional[ProbeHistory] = None
    N: Optional[BandedMatrix] = None

    @property
    def reports(self):
        return [s.report for s in self.steps]

    @property
    def iterations(self):
        return [s.report.iterations_total for s in self.steps]


class DriverError(RuntimeError):
    """A step failed; ``step`` is its 1-based index and ``result`` the partial run."""

    def __init__(self, message, step, result):
        super().__init__(f'step {step}: {message}')
        self.step = step
        self.result = result


OperatorProvider = Union[LinearOperator, CSRMatrix, Callable[[int], LinearOperator]]


def _operator_for(provider, step):
    if isinstance(provider, (LinearOperator, CSRMatrix, BandedMatrix, np.ndarray)):
        return aslinearoperator(provider)
    return aslinearoperator(provider(step))


def time_step_driver(provider: OperatorProvider, b0, plan: TimeStepPlan, cfg: Optional[GmresConfig] = None,
                     N0: Optional[BandedMatrix] = None, on_step=None) -> DriverResult:
    """Run ``plan.steps`` solves, refitting the preconditioner from probe history.

    Parameters
    ----------
    provider : operator or callable
        Either a fixed operator or ``provider(step) -> operator`` (1-based step).
    b0 : array_like
        Initial state / right-hand side.
    plan : TimeStepPlan
    cfg : GmresConfig, optional
    N0 : BandedMatrix, optional
        Preconditioner for the first step; identity when omitted.
    on_step : callable, optional
        Called with each :class:`StepRecord` as soon as it completes.

    Each solve starts from a zero initial guess. After every
    ``plan.reestimate_every`` solves the probe history accumulated so far is
    passed to :func:`pspgmres.mrep.mrep`. If the fit or its factorization
    fails, the step runs with the identity instead and the event is noted in
    ``StepRecord.fallback``.
    """
    cfg = cfg or GmresConfig()
    state = np.array(b0, dtype=np.float64)
    n = state.size
    history = ProbeHistory(n, capacity=plan.history_cap)
    result = DriverResult(state=state, history=history)
    N = N0
    estimate = None
    rhs0 = state.copy()

    for step in range(1, plan.steps + 1):
        A = _operator_for(provider, step)
        if A.n != n:
            raise DriverError(f'operator dimension {A.n} != state length {n}', step, result)
        rhs = state if plan.propagate_state else rhs0
        fallback = None
        try:
            x, report, _ = psp_gmres(A, rhs, None, N, cfg, history)
        except PreconditionerError as exc:
            log.warning('step %d: preconditioner failed (%s); using identity', step, exc)
            fallback = f'factorization: {exc}'
            try:
                x, report, _ = psp_gmres(A, rhs, None, None, cfg, history)
            except ArithmeticError as exc2:
                raise DriverError(str(exc2), step, result) from exc2
        except ArithmeticError as exc:
            raise DriverError(str(exc), step, result) from exc

        rec = StepRecord(step, report, preconditioned=N is not None and fallback is None,
                         fallback=fallback, estimate=estimate)
        result.steps.append(rec)
        if on_step is not None:
            on_step(rec)
        state = x
        result.state = state

        if step < plan.steps and step % plan.reestimate_every == 0:
            try:
                estimate = mrep(history, plan.d)
                N = estimate.N
            except (InsufficientSamplesError, ArithmeticError) as exc:
                log.warning('step %d: preconditioner fit failed (%s); keeping previous', step, exc)
            if plan.reset_history:
                history.clear()

    result.N = N
    return result
