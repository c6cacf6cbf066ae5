import numpy as np
import pytest

from pspgmres import BandedMatrix, CSRMatrix

ACCEPTANCE_LINES = []


def record_acceptance(name, passed, detail=''):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}" + (f' -- {detail}' if detail else '')
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section('acceptance criteria')
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# --- independent oracles -------------------------------------------------

def dense_matvec(a, x):
    """Row-by-row summation in plain Python."""
    n, m = a.shape
    return np.array([sum(a[i, j] * x[j] for j in range(m)) for i in range(n)])


def dense_gauss_solve(a, b):
    """Gaussian elimination with partial pivoting, plain loops."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for p in range(n):
        q = p + int(np.argmax(np.abs(a[p:, p])))
        a[[p, q]] = a[[q, p]]
        b[[p, q]] = b[[q, p]]
        for i in range(p + 1, n):
            f = a[i, p] / a[p, p]
            a[i, p:] -= f * a[p, p:]
            b[i] -= f * b[p]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - a[i, i + 1:] @ x[i + 1:]) / a[i, i]
    return x


def random_dd_banded(n, d, rng, margin=1.0):
    """Diagonally dominant banded matrix with uniform [-1, 1] off-diagonals."""
    N = BandedMatrix(n, d)
    N.bands[:] = rng.uniform(-1, 1, size=N.bands.shape)
    N._zero_outside()
    N.bands[d] = 0.0
    N.bands[d] = np.abs(N.bands).sum(axis=0) + margin
    return N


def random_dd_dense(n, rng, offsets=(-3, -2, -1, 1, 2, 3)):
    a = np.zeros((n, n))
    for k in offsets:
        i = np.arange(max(0, -k), min(n, n - k))
        a[i, i + k] = rng.uniform(-1, 1, size=i.size)
    a[np.arange(n), np.arange(n)] = np.abs(a).sum(axis=1) + 1.0
    return a


def reference_gmres(a, b, x0, restart, tol, max_cycles):
    """Unpreconditioned restarted GMRES solving each projected problem with lstsq.

    Returns the iterate after every inner iteration.
    """
    n = len(b)
    x = np.array(x0, dtype=float)
    iterates = []
    for _ in range(max_cycles):
        r = b - a @ x
        beta = np.linalg.norm(r)
        if beta <= tol:
            break
        V = np.zeros((n, restart + 1))
        H = np.zeros((restart + 1, restart))
        V[:, 0] = r / beta
        xk = x
        for k in range(restart):
            w = a @ V[:, k]
            for j in range(k + 1):
                H[j, k] = V[:, j] @ w
                w = w - H[j, k] * V[:, j]
            H[k + 1, k] = np.linalg.norm(w)
            e1 = np.zeros(k + 2)
            e1[0] = beta
            y = np.linalg.lstsq(H[:k + 2, :k + 1], e1, rcond=None)[0]
            xk = x + V[:, :k + 1] @ y
            iterates.append(xk)
            if np.linalg.norm(e1 - H[:k + 2, :k + 1] @ y) <= tol:
                break
            V[:, k + 1] = w / H[k + 1, k]
        x = xk
    return iterates


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def seven_diag_20(rng):
    a = random_dd_dense(20, rng)
    return a, CSRMatrix.from_dense(a)
