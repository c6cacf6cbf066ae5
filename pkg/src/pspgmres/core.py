"""
Vectors, CSR and banded storage, the linear-operator wrapper and the probe
recorder shared by the solvers.

All arithmetic is float64. Vectors are plain 1-D ``numpy.ndarray`` objects.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    'ContractError',
    'CSRMatrix',
    'BandedMatrix',
    'LinearOperator',
    'ProbeHistory',
    'as_vector',
    'aslinearoperator',
    'csr_matvec',
    'banded_matvec',
    'dot',
    'norm2',
    'axpy',
    'probe_record',
]


class ContractError(ValueError):
    """Raised when arguments violate a dimension or structure contract."""


def as_vector(x, n=None, name='x'):
    """Return ``x`` as a contiguous 1-D float64 array, optionally checking its length."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f'{name} must be one-dimensional, got shape {v.shape}')
    if n is not None and v.shape[0] != n:
        raise ContractError(f'{name} has length {v.shape[0]}, expected {n}')
    return v


def _same_length(x, y):
    x = as_vector(x)
    y = as_vector(y, name='y')
    if x.shape != y.shape:
        raise ContractError(f'length mismatch: {x.shape[0]} vs {y.shape[0]}')
    return x, y


def dot(x, y) -> float:
    x, y = _same_length(x, y)
    return float(np.dot(x, y))


def norm2(x) -> float:
    return float(np.linalg.norm(as_vector(x)))


def axpy(a, x, y):
    """Return ``a*x + y`` as a new vector."""
    x, y = _same_length(x, y)
    return a * x + y


# ---------------------------------------------------------------------------
# Sparse storage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CSRMatrix:
    """Compressed sparse row matrix.

    Column indices are strictly increasing within each row. Construct through
    :meth:`from_coo` or :meth:`from_dense` unless the arrays are already
    canonical; the constructor validates but never reorders.
    """
    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, 'indptr', indptr)
        object.__setattr__(self, 'indices', indices)
        object.__setattr__(self, 'data', data)

        if indptr.shape != (self.n_rows + 1,):
            raise ContractError('indptr must have length n_rows + 1')
        if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise ContractError('indptr must start at 0 and be non-decreasing')
        if indptr[-1] != indices.size or indices.size != data.size:
            raise ContractError('indptr[-1], len(indices) and len(data) disagree')
        if indices.size:
            if indices.min() < 0 or indices.max() >= self.n_cols:
                raise ContractError('column index out of range')
            # strictly increasing inside a row <=> every step not at a row start is positive
            steps = np.diff(indices)
            row_start = np.zeros(indices.size, dtype=bool)
            row_start[indptr[:-1][indptr[:-1] < indices.size]] = True
            if np.any(steps[~row_start[1:]] <= 0):
                raise ContractError('column indices must be strictly increasing within a row')
        # row id of every stored entry; used by the matvec
        object.__setattr__(self, '_rows', np.repeat(np.arange(self.n_rows), np.diff(indptr)))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.data.size)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        """Build from coordinate triplets; duplicate entries are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        n_rows, n_cols = shape
        if not (rows.shape == cols.shape == vals.shape):
            raise ContractError('rows, cols and vals must have equal length')
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows
                          or cols.min() < 0 or cols.max() >= n_cols):
            raise ContractError('coordinate out of range')
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(new) - 1
            summed = np.zeros(group[-1] + 1)
            np.add.at(summed, group, vals)
            rows, cols, vals = rows[new], cols[new], summed
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls(n_rows, n_cols, np.cumsum(indptr), cols, vals)

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls.from_coo(rows, cols, a[rows, cols], a.shape)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    def to_dense(self):
        a = np.zeros(self.shape)
        a[self._rows, self.indices] = self.data
        return a

    def to_coo(self):
        return self._rows.copy(), self.indices.copy(), self.data.copy()

    def matvec(self, x):
        return csr_matvec(self, x)

    def __matmul__(self, x):
        return csr_matvec(self, x)


def csr_matvec(A: CSRMatrix, x):
    """Return ``A @ x``; each row is accumulated in ascending column order."""
    x = as_vector(x, A.n_cols)
    # bincount accumulates sequentially in storage order
    return np.bincount(A._rows, weights=A.data * x[A.indices], minlength=A.n_rows)


# ---------------------------------------------------------------------------
# Banded storage
# ---------------------------------------------------------------------------

class BandedMatrix:
    """Square matrix with half-bandwidth ``d``.

    Diagonals are stored row-aligned in ``bands`` of shape ``(2d+1, n)``:
    ``bands[d + k, i]`` holds entry ``(i, i + k)`` for ``k`` in ``[-d, d]``.
    Slots that fall outside the matrix are kept at zero.
    """

    def __init__(self, n, d, bands=None):
        n, d = int(n), int(d)
        if n < 1 or d < 0:
            raise ContractError(f'invalid banded shape n={n}, d={d}')
        self.n = n
        self.d = d
        if bands is None:
            self.bands = np.zeros((2 * d + 1, n))
        else:
            bands = np.array(bands, dtype=np.float64)
            if bands.shape != (2 * d + 1, n):
                raise ContractError(f'bands must have shape {(2 * d + 1, n)}, got {bands.shape}')
            self.bands = bands
            self._zero_outside()

    def _zero_outside(self):
        for k in range(-self.d, self.d + 1):
            if k < 0:
                self.bands[self.d + k, :min(-k, self.n)] = 0.0
            elif k > 0:
                self.bands[self.d + k, max(self.n - k, 0):] = 0.0

    @classmethod
    def identity(cls, n, d=1):
        m = cls(n, d)
        m.bands[d, :] = 1.0
        return m

    @classmethod
    def from_diagonals(cls, diagonals):
        """Build from a mapping ``offset -> values`` where values are row-aligned (length n)."""
        d = max(abs(k) for k in diagonals)
        n = len(next(iter(diagonals.values())))
        m = cls(n, d)
        for k, vals in diagonals.items():
            m.bands[d + k, :] = vals
        m._zero_outside()
        return m

    @classmethod
    def from_dense(cls, a, d):
        """Copy the in-band part of a dense matrix; entries outside the band are dropped."""
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ContractError('dense input must be square')
        m = cls(n, d)
        for k in range(-d, d + 1):
            i = np.arange(max(0, -k), min(n, n - k))
            m.bands[d + k, i] = a[i, i + k]
        return m

    @classmethod
    def from_csr(cls, A: CSRMatrix, d):
        if A.n_rows != A.n_cols:
            raise ContractError('matrix must be square')
        m = cls(A.n_rows, d)
        rows, cols, vals = A.to_coo()
        off = cols - rows
        keep = np.abs(off) <= d
        m.bands[d + off[keep], rows[keep]] = vals[keep]
        return m

    def __getitem__(self, ij):
        i, j = ij
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError((i, j))
        k = j - i
        if abs(k) > self.d:
            return 0.0
        return float(self.bands[self.d + k, i])

    def __setitem__(self, ij, value):
        i, j = ij
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError((i, j))
        k = j - i
        if abs(k) > self.d:
            raise ContractError(f'entry ({i}, {j}) lies outside half-bandwidth {self.d}')
        self.bands[self.d + k, i] = value

    def diagonal(self, k=0):
        """Row-aligned copy of diagonal ``k`` (length ``n``, zero outside the matrix)."""
        return self.bands[self.d + k].copy()

    def row(self, i):
        """Dense copy of row ``i``."""
        r = np.zeros(self.n)
        for k in range(-self.d, self.d + 1):
            if 0 <= i + k < self.n:
                r[i + k] = self.bands[self.d + k, i]
        return r

    def set_row_identity(self, i):
        self.bands[:, i] = 0.0
        self.bands[self.d, i] = 1.0

    def is_identity(self):
        return (np.all(self.bands[self.d] == 1.0)
                and not np.any(np.delete(self.bands, self.d, axis=0)))

    def copy(self):
        return BandedMatrix(self.n, self.d, self.bands)

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        for k in range(-self.d, self.d + 1):
            i = np.arange(max(0, -k), min(self.n, self.n - k))
            a[i, i + k] = self.bands[self.d + k, i]
        return a

    def to_csr(self):
        """Equivalent CSR matrix keeping every in-matrix band slot, zeros included."""
        rows, cols, vals = [], [], []
        for k in range(-self.d, self.d + 1):
            i = np.arange(max(0, -k), min(self.n, self.n - k))
            rows.append(i)
            cols.append(i + k)
            vals.append(self.bands[self.d + k, i])
        return CSRMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                                  np.concatenate(vals), (self.n, self.n))

    def matvec(self, x):
        return banded_matvec(self, x)

    def __matmul__(self, x):
        return banded_matvec(self, x)

    def __repr__(self):
        return f'BandedMatrix(n={self.n}, d={self.d})'


def banded_matvec(N: BandedMatrix, x):
    """Return ``N @ x``; each row is accumulated in ascending column order."""
    x = as_vector(x, N.n)
    n, d = N.n, N.d
    y = np.zeros(n)
    for k in range(-d, d + 1):
        lo, hi = max(0, -k), min(n, n - k)
        if lo < hi:
            y[lo:hi] += N.bands[d + k, lo:hi] * x[lo + k:hi + k]
    return y


# ---------------------------------------------------------------------------
# Operators and probes
# ---------------------------------------------------------------------------

class LinearOperator:
    """A square operator known only through ``apply``.

    Parameters
    ----------
    n : int
        Dimension.
    apply : callable
        Maps a length-``n`` float64 vector to a length-``n`` float64 vector.
        Must be deterministic and linear.
    """

    def __init__(self, n: int, apply: Callable[[np.ndarray], np.ndarray]):
        self.n = int(n)
        self._apply = apply

    @property
    def shape(self):
        return (self.n, self.n)

    def apply(self, x):
        y = np.asarray(self._apply(as_vector(x, self.n)), dtype=np.float64)
        if y.shape != (self.n,):
            raise ContractError(f'operator returned shape {y.shape}, expected ({self.n},)')
        return y

    __call__ = apply

    def __matmul__(self, x):
        return self.apply(x)


def aslinearoperator(A) -> LinearOperator:
    """Wrap a CSR matrix, banded matrix, dense array or operator as a :class:`LinearOperator`."""
    if isinstance(A, LinearOperator):
        return A
    if isinstance(A, CSRMatrix):
        if A.n_rows != A.n_cols:
            raise ContractError('operator must be square')
        return LinearOperator(A.n_rows, A.matvec)
    if isinstance(A, BandedMatrix):
        return LinearOperator(A.n, A.matvec)
    if isinstance(A, np.ndarray):
        a = np.asarray(A, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ContractError('dense operator must be a square 2-D array')
        return LinearOperator(a.shape[0], a.__matmul__)
    raise TypeError(f'cannot interpret {type(A).__name__} as a linear operator')


class ProbeHistory:
    """Paired columns ``(x, A x)`` harvested from matrix-vector products.

    Parameters
    ----------
    n : int
        Vector length.
    capacity : int, optional
        Maximum number of pairs kept; the oldest are evicted first.
        Unbounded by default.
    verify : callable, optional
        Operator used to check ``y == verify(x)`` at record time. Meant for
        tests; costs one extra product per record.
    """

    def __init__(self, n: int, capacity: Optional[int] = None, verify=None, verify_rtol=1e-12):
        if capacity is not None and capacity < 1:
            raise ContractError('capacity must be positive')
        self.n = int(n)
        self.capacity = capacity
        self.verify = verify
        self.verify_rtol = verify_rtol
        self._pairs = deque(maxlen=capacity)
        self.recorded = 0

    @property
    def m(self):
        return len(self._pairs)

    def __len__(self):
        return len(self._pairs)

    @property
    def evicted(self):
        return self.recorded - len(self._pairs)

    def record(self, x, y):
        x = as_vector(x, self.n).copy()
        y = as_vector(y, self.n, name='y').copy()
        if self.verify is not None:
            expect = np.asarray(self.verify(x))
            scale = max(np.linalg.norm(expect), np.finfo(float).tiny)
            if np.linalg.norm(expect - y) > self.verify_rtol * scale:
                raise ContractError('probe pair does not satisfy y = A x')
        self._pairs.append((x, y))
        self.recorded += 1
        return self

    def pairs(self):
        return list(self._pairs)

    @property
    def Px(self):
        """Probe inputs as an ``n x m`` array (one column per pair)."""
        if not self._pairs:
            return np.zeros((self.n, 0))
        return np.column_stack([p[0] for p in self._pairs])

    @property
    def Py(self):
        """Probe outputs as an ``n x m`` array."""
        if not self._pairs:
            return np.zeros((self.n, 0))
        return np.column_stack([p[1] for p in self._pairs])

    def clear(self):
        self._pairs.clear()

    def __repr__(self):
        return f'ProbeHistory(n={self.n}, m={self.m}, capacity={self.capacity})'


def probe_record(h: ProbeHistory, x, y) -> ProbeHistory:
    return h.record(x, y)
