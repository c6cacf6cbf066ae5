"""
File formats: Matrix Market coordinate matrices, residual CSVs, sparsity
patterns (text grid and PBM) and SVG convergence plots.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .core import BandedMatrix, CSRMatrix

__all__ = [
    'MatrixMarketError',
    'UnsupportedFormatError',
    'read_matrix_market',
    'write_matrix_market',
    'read_vector',
    'write_vector',
    'write_csv',
    'write_report_csv',
    'write_summary_csv',
    'pattern_grid',
    'emit_pattern',
    'emit_plot',
    'fmt',
]

HEADER = '%%MatrixMarket matrix coordinate real general'


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; ``line`` is the 1-based line number."""

    def __init__(self, message, line=None):
        where = f'line {line}: ' if line is not None else ''
        super().__init__(where + message)
        self.line = line


class UnsupportedFormatError(MatrixMarketError):
    pass


def fmt(v):
    """Shortest round-tripping text for a float."""
    return repr(float(v))


def read_matrix_market(path) -> CSRMatrix:
    """Read a real ``coordinate`` Matrix Market file (general or symmetric).

    Duplicate entries are summed. Symmetric files are expanded.
    """
    with open(path, 'r') as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError('empty file', line=1)
    tokens = lines[0].split()
    if len(tokens) != 5 or tokens[0] != '%%MatrixMarket':
        raise MatrixMarketError('missing %%MatrixMarket banner', line=1)
    obj, layout, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != 'matrix':
        raise UnsupportedFormatError(f'object "{obj}" is not supported', line=1)
    if layout != 'coordinate':
        raise UnsupportedFormatError(f'format "{layout}" is not supported', line=1)
    if field not in ('real', 'integer', 'double'):
        raise UnsupportedFormatError(f'field "{field}" is not supported', line=1)
    if symmetry not in ('general', 'symmetric'):
        raise UnsupportedFormatError(f'symmetry "{symmetry}" is not supported', line=1)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        s = lines[lineno - 1].strip()
        if s and not s.startswith('%'):
            size = s.split()
            break
    if size is None:
        raise MatrixMarketError('missing size line', line=lineno)
    try:
        n_rows, n_cols, nnz = (int(t) for t in size)
    except ValueError:
        raise MatrixMarketError('size line must hold three integers', line=lineno) from None
    if n_rows < 0 or n_cols < 0 or nnz < 0:
        raise MatrixMarketError('negative size', line=lineno)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    k = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        s = lines[lineno - 1].strip()
        if not s or s.startswith('%'):
            continue
        if k == nnz:
            raise MatrixMarketError(f'more than {nnz} entries', line=lineno)
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError(f'expected "row col value", got {len(parts)} fields', line=lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f'cannot parse entry "{s}"', line=lineno) from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise MatrixMarketError(f'index ({i}, {j}) outside {n_rows}x{n_cols}', line=lineno)
        if symmetry == 'symmetric' and j > i:
            raise MatrixMarketError('symmetric file has an upper-triangle entry', line=lineno)
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise MatrixMarketError(f'expected {nnz} entries, found {k}', line=len(lines))

    if symmetry == 'symmetric':
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return CSRMatrix.from_coo(rows, cols, vals, (n_rows, n_cols))


def write_matrix_market(path, A: CSRMatrix):
    rows, cols, vals = A.to_coo()
    with open(path, 'w') as fh:
        fh.write(HEADER + '\n')
        fh.write(f'{A.n_rows} {A.n_cols} {A.nnz}\n')
        for i, j, v in zip(rows, cols, vals):
            fh.write(f'{i + 1} {j + 1} {fmt(v)}\n')


def read_vector(path):
    """Read whitespace-separated floats (comment lines starting with ``%`` or ``#`` skipped)."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s[0] in '%#':
                continue
            for tok in s.split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise MatrixMarketError(f'cannot parse value "{tok}"', line=lineno) from None
    return np.array(values)


def write_vector(path, x):
    with open(path, 'w') as fh:
        for v in x:
            fh.write(fmt(v) + '\n')


def write_csv(path, residual_history):
    """Write ``iter,residual_norm`` rows, iterations counted from 1."""
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['iter', 'residual_norm'])
        for k, r in enumerate(residual_history, 1):
            w.writerow([k, fmt(r)])


REPORT_FIELDS = ['step', 'converged', 'iterations_total', 'restarts_used', 'matvec_count',
                 'precond_apply_count', 'final_residual', 'preconditioned', 'fallback']


def write_report_csv(path, records):
    """One row per driver step."""
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(REPORT_FIELDS)
        for rec in records:
            r = rec.report
            w.writerow([rec.step, int(r.converged), r.iterations_total, r.restarts_used, r.matvec_count,
                        r.precond_apply_count, fmt(r.final_residual), int(rec.preconditioned),
                        rec.fallback or ''])


SUMMARY_FIELDS = ['n', 'iters_plain', 'iters_psp', 'ratio', 'converged_plain', 'converged_psp',
                  'fallback_rows']


def write_summary_csv(path, rows):
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(SUMMARY_FIELDS)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in (row[f] for f in SUMMARY_FIELDS)])


def _nonzero_mask(A):
    if isinstance(A, CSRMatrix):
        mask = np.zeros(A.shape, dtype=bool)
        rows, cols, vals = A.to_coo()
        mask[rows[vals != 0], cols[vals != 0]] = True
        return mask
    if isinstance(A, BandedMatrix):
        return A.to_dense() != 0
    return np.asarray(A) != 0


def pattern_grid(A, mark='X', blank='.'):
    """Sparsity pattern as text, one line per row."""
    mask = _nonzero_mask(A)
    return '\n'.join(''.join(mark if v else blank for v in row) for row in mask) + '\n'


def emit_pattern(A, path):
    """Write the sparsity pattern; ``.pbm`` gets a plain PBM bitmap, anything else a text grid."""
    path = Path(path)
    mask = _nonzero_mask(A)
    if path.suffix == '.pbm':
        with open(path, 'w') as fh:
            fh.write(f'P1\n{mask.shape[1]} {mask.shape[0]}\n')
            for row in mask:
                fh.write(' '.join('1' if v else '0' for v in row) + '\n')
    else:
        path.write_text(pattern_grid(mask))
    return path


_COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd']


def emit_plot(histories, path, title=''):
    """SVG 1.1 plot of log10(residual) against iteration.

    ``histories`` maps a label to a residual sequence.
    """
    W, H, pad = 480, 320, 50
    series = {k: [r for r in v if r > 0 and math.isfinite(r)] for k, v in histories.items()}
    all_r = [r for v in series.values() for r in v] or [1.0]
    lo, hi = math.floor(math.log10(min(all_r))), math.ceil(math.log10(max(all_r)))
    if hi == lo:
        hi = lo + 1
    kmax = max([len(v) for v in series.values()] + [1])

    def px(k):
        return pad + (W - 2 * pad) * (k - 1) / max(kmax - 1, 1)

    def py(r):
        return H - pad - (H - 2 * pad) * (math.log10(r) - lo) / (hi - lo)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
        f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">iteration</text>',
        f'<text x="14" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2:.1f})">residual norm</text>',
    ]
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="13">{title}</text>')
    for e in range(lo, hi + 1):
        y = py(10.0 ** e)
        out.append(f'<text x="{pad - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="10">1e{e}</text>')
        out.append(f'<line x1="{pad}" y1="{y:.1f}" x2="{W - pad}" y2="{y:.1f}" stroke="#dddddd"/>')
    for idx, (label, vals) in enumerate(series.items()):
        color = _COLORS[idx % len(_COLORS)]
        pts = ' '.join(f'{px(k):.2f},{py(r):.2f}' for k, r in enumerate(vals, 1))
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{W - pad}" y="{pad + 14 * idx}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{label}</text>')
    out.append('</svg>')
    Path(path).write_text('\n'.join(out) + '\n')
    return Path(path)
