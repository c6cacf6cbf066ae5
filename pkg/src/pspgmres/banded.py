"""
Direct solvers for banded systems without pivoting.

``thomas_solve`` handles the tridiagonal case in O(n); ``banded_lu_factor`` /
``banded_lu_solve`` handle any half-bandwidth in O(n d^2) / O(n d). Both rely
on diagonal dominance instead of pivoting.
"""
from __future__ import annotations

import numpy as np

from .core import BandedMatrix, ContractError, as_vector

__all__ = [
    'SingularMatrixError',
    'PIVOT_TINY',
    'GROWTH_LIMIT',
    'BandedFactorization',
    'OpCounter',
    'thomas_solve',
    'banded_lu_factor',
    'banded_lu_solve',
    'factorize',
]

PIVOT_TINY = 1e-300
GROWTH_LIMIT = 1e100


class SingularMatrixError(ArithmeticError):
    """Zero pivot or numerical blow-up during an unpivoted factorization."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class OpCounter:
    """Counts floating-point operations performed by :func:`thomas_solve`."""

    def __init__(self):
        self.flops = 0

    def reset(self):
        self.flops = 0


def _check_pivot(p, row):
    if not abs(p) >= PIVOT_TINY:  # also catches NaN
        raise SingularMatrixError(f'zero pivot at row {row}', row=row)


def _check_growth(v, row):
    if not abs(v) <= GROWTH_LIMIT:
        raise SingularMatrixError(f'growth beyond {GROWTH_LIMIT:g} at row {row}', row=row)


def thomas_solve(N: BandedMatrix, rhs, counter: OpCounter = None):
    """Solve the tridiagonal system ``N x = rhs`` with the Thomas algorithm.

    Parameters
    ----------
    N : BandedMatrix
        Tridiagonal matrix (``d == 1``).
    rhs : array_like
        Right-hand side of length ``N.n``.
    counter : OpCounter, optional
        Incremented by the number of floating-point operations executed.

    Returns
    -------
    x : ndarray
        Solution vector.

    Raises
    ------
    SingularMatrixError
        On a pivot smaller than ``PIVOT_TINY`` in magnitude or intermediate
        growth beyond ``GROWTH_LIMIT``.
    """
    if N.d != 1:
        raise ContractError(f'thomas_solve needs a tridiagonal matrix, got d={N.d}')
    n = N.n
    rhs = as_vector(rhs, n, name='rhs')
    a = N.bands[0].tolist()   # a[i] = N[i, i-1]
    b = N.bands[1].tolist()
    c = N.bands[2].tolist()   # c[i] = N[i, i+1]
    r = rhs.tolist()

    cp = [0.0] * n
    dp = [0.0] * n
    ops = 0

    _check_pivot(b[0], 0)
    cp[0] = c[0] / b[0]
    dp[0] = r[0] / b[0]
    _check_growth(dp[0], 0)
    ops += 2
    for i in range(1, n):
        denom = b[i] - a[i] * cp[i - 1]
        _check_pivot(denom, i)
        cp[i] = c[i] / denom
        dp[i] = (r[i] - a[i] * dp[i - 1]) / denom
        _check_growth(cp[i], i)
        _check_growth(dp[i], i)
        ops += 6

    x = [0.0] * n
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
        ops += 2

    if counter is not None:
        counter.flops += ops
    return np.array(x)


class BandedFactorization:
    """In-band LU factors of a banded matrix (unit lower ``L``, upper ``U``).

    Storage mirrors :class:`BandedMatrix`: ``_lu[d + k][i]`` holds
    ``L[i, i + k]`` for ``k < 0`` and ``U[i, i + k]`` for ``k >= 0``. Immutable once built; any number of right-hand sides
    may be solved against it.
    """

    def __init__(self, n, d, lu, singular=False, failed_row=None):
        self.n = n
        self.d = d
        self._lu = lu
        self.singular = singular
        self.failed_row = failed_row
        # row lists for the solve loops
        self._rows = [[lu[d + k][i] for k in range(-d, d + 1)] for i in range(n)] if not singular else None

    def solve(self, rhs):
        return banded_lu_solve(self, rhs)

    def __repr__(self):
        return f'BandedFactorization(n={self.n}, d={self.d}, singular={self.singular})'


def banded_lu_factor(N: BandedMatrix, raise_on_singular=True) -> BandedFactorization:
    """Doolittle LU of a banded matrix, no pivoting.

    With ``raise_on_singular=False`` a failed factorization is returned with
    ``singular`` set instead of raising.
    """
    if N.d < 1:
        raise ContractError('banded_lu_factor needs d >= 1')
    n, d = N.n, N.d
    lu = [row.tolist() for row in N.bands]  # lu[d + k][i] = entry (i, i + k)
    try:
        for p in range(n):
            piv = lu[d][p]
            _check_pivot(piv, p)
            for i in range(p + 1, min(n, p + d + 1)):
                # entry (i, p) sits at offset p - i
                li = lu[d + p - i][i] / piv
                _check_growth(li, i)
                lu[d + p - i][i] = li
                if li != 0.0:
                    for j in range(p + 1, min(n, p + d + 1)):
                        lu[d + j - i][i] -= li * lu[d + j - p][p]
    except SingularMatrixError as exc:
        if raise_on_singular:
            raise
        return BandedFactorization(n, d, lu, singular=True, failed_row=exc.row)
    return BandedFactorization(n, d, lu)


def banded_lu_solve(f: BandedFactorization, rhs):
    """Solve ``N x = rhs`` using the factors from :func:`banded_lu_factor`."""
    if f.singular:
        raise SingularMatrixError('factorization is singular', row=f.failed_row)
    n, d = f.n, f.d
    rhs = as_vector(rhs, n, name='rhs')
    rows = f._rows
    y = rhs.tolist()
    for i in range(n):
        s = y[i]
        row = rows[i]
        for k in range(max(-d, -i), 0):
            s -= row[d + k] * y[i + k]
        y[i] = s
    for i in range(n - 1, -1, -1):
        s = y[i]
        row = rows[i]
        for k in range(1, min(d, n - 1 - i) + 1):
            s -= row[d + k] * y[i + k]
        y[i] = s / row[d]
        _check_growth(y[i], i)
    return np.array(y)


class _ThomasFactorization:
    """Precomputed Thomas sweep coefficients for repeated tridiagonal solves."""

    def __init__(self, N: BandedMatrix):
        n = N.n
        self.n = n
        self.d = 1
        a = N.bands[0].tolist()
        b = N.bands[1].tolist()
        c = N.bands[2].tolist()
        cp = [0.0] * n
        inv = [0.0] * n
        _check_pivot(b[0], 0)
        inv[0] = 1.0 / b[0]
        cp[0] = c[0] * inv[0]
        for i in range(1, n):
            denom = b[i] - a[i] * cp[i - 1]
            _check_pivot(denom, i)
            inv[i] = 1.0 / denom
            cp[i] = c[i] * inv[i]
            _check_growth(cp[i], i)
        self._a, self._cp, self._inv = a, cp, inv

    def solve(self, rhs):
        n = self.n
        a, cp, inv = self._a, self._cp, self._inv
        r = as_vector(rhs, n, name='rhs').tolist()
        dp = [0.0] * n
        dp[0] = r[0] * inv[0]
        _check_growth(dp[0], 0)
        for i in range(1, n):
            dp[i] = (r[i] - a[i] * dp[i - 1]) * inv[i]
            _check_growth(dp[i], i)
        for i in range(n - 2, -1, -1):
            dp[i] -= cp[i] * dp[i + 1]
        return np.array(dp)


def factorize(N: BandedMatrix):
    """Factor ``N`` once for repeated solves; Thomas sweep when ``d == 1``.

    The returned object exposes ``solve(rhs)``. Raises
    :class:`SingularMatrixError` if the unpivoted factorization fails.
    """
    if N.d == 0:
        diag = N.bands[0]
        bad = np.flatnonzero(~(np.abs(diag) >= PIVOT_TINY))
        if bad.size:
            raise SingularMatrixError(f'zero pivot at row {bad[0]}', row=int(bad[0]))
        inv = 1.0 / diag
        return _DiagonalFactorization(inv)
    if N.d == 1:
        return _ThomasFactorization(N)
    return banded_lu_factor(N)


class _DiagonalFactorization:
    def __init__(self, inv):
        self.n = inv.size
        self.d = 0
        self._inv = inv

    def solve(self, rhs):
        return as_vector(rhs, self.n, name='rhs') * self._inv
