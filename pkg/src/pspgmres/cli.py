"""
Command-line entry point.

``pspgmres benchmark`` reproduces the plain-vs-preconditioned comparison on
the random seven-diagonal family; ``pspgmres solve`` runs the driver on a
Matrix Market file. Exit codes: 0 success, 2 usage/config, 3 input parse,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .core import ContractError
from .gmres import GmresConfig
from .mmio import (MatrixMarketError, emit_pattern, emit_plot, read_matrix_market, read_vector,
                   write_csv, write_report_csv, write_summary_csv, write_vector)
from .problems import ConfigError, DriverError, GeneratorConfig, TimeStepPlan, gen_seven_diagonal, time_step_driver

log = logging.getLogger('pspgmres')

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4

PATTERN_MAX_N = 200


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    sizes: List[int] = field(default_factory=list)
    seed: int = 0
    d: int = 1
    epsilon: float = 1e-8
    n_A: int = 10
    n_r: int = 100
    steps: int = 2
    input_path: Optional[str] = None
    rhs_path: Optional[str] = None
    output_dir: str = 'out'
    emit_plot: bool = False
    history_cap: Optional[int] = None
    reset_history: bool = False

    def validate(self):
        if self.subcommand == 'benchmark':
            if not self.sizes:
                raise UsageError('--sizes must list at least one size')
            if any(n < 7 for n in self.sizes):
                raise UsageError('every size must be >= 7')
            if self.steps < 2:
                raise UsageError('benchmark needs --steps >= 2')
        elif self.subcommand == 'solve':
            if not self.input_path:
                raise UsageError('--matrix is required')
        else:
            raise UsageError(f'unknown subcommand {self.subcommand!r}')
        if self.d < 1:
            raise UsageError('--band-d must be >= 1')
        if not self.epsilon > 0:
            raise UsageError('--epsilon must be positive')
        if self.n_A < 1 or self.n_r < 1 or self.steps < 1:
            raise UsageError('--max-inner, --restarts and --steps must be positive')
        if self.history_cap is not None and self.history_cap < 1:
            raise UsageError('--history-cap must be positive')

    def gmres_config(self):
        return GmresConfig(epsilon=self.epsilon, max_inner=self.n_A, max_restarts=self.n_r)

    def plan(self, propagate_state=False):
        return TimeStepPlan(steps=self.steps, d=self.d, history_cap=self.history_cap,
                            reset_history=self.reset_history, propagate_state=propagate_state)

    def write(self, out):
        (out / 'manifest.json').write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + '\n')

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text()))


def _write_error(out: Path, message):
    (out / 'ERROR').write_text(message + '\n')


def cmd_benchmark(m: RunManifest) -> int:
    out = Path(m.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    m.write(out)
    cfg = m.gmres_config()
    summary = []
    for n in m.sizes:
        A, b = gen_seven_diagonal(GeneratorConfig(n, m.seed))
        try:
            res = time_step_driver(A, b, m.plan(propagate_state=False), cfg)
        except DriverError as exc:
            _write_error(out, f'n={n}: {exc}')
            write_summary_csv(out / 'summary.csv', summary)
            log.error('n=%d: %s', n, exc)
            return EXIT_NUMERIC
        plain, psp = res.steps[0], res.steps[1]
        write_csv(out / f'n{n}_plain.csv', plain.report.residual_history)
        write_csv(out / f'n{n}_psp.csv', psp.report.residual_history)
        for rec in res.steps[2:]:
            write_csv(out / f'n{n}_psp_step{rec.step}.csv', rec.report.residual_history)
        est = psp.estimate
        if n <= PATTERN_MAX_N:
            emit_pattern(A, out / f'n{n}_pattern_A.txt')
            emit_pattern(A, out / f'n{n}_pattern_A.pbm')
            if est is not None:
                emit_pattern(est.N, out / f'n{n}_pattern_N.txt')
                emit_pattern(est.N, out / f'n{n}_pattern_N.pbm')
        if m.emit_plot:
            emit_plot({'GMRES': plain.report.residual_history, 'PSP-GMRES': psp.report.residual_history},
                      out / f'n{n}_convergence.svg', title=f'n = {n}')
        ip, iq = plain.report.iterations_total, psp.report.iterations_total
        summary.append({
            'n': n, 'iters_plain': ip, 'iters_psp': iq, 'ratio': iq / ip if ip else float('nan'),
            'converged_plain': int(plain.report.converged), 'converged_psp': int(psp.report.converged),
            'fallback_rows': est.n_fallback if est is not None else 0,
        })
        log.info('n=%d plain=%d psp=%d ratio=%.3f', n, ip, iq, summary[-1]['ratio'])
    write_summary_csv(out / 'summary.csv', summary)
    return EXIT_OK


def cmd_solve(m: RunManifest) -> int:
    out = Path(m.output_dir)
    A = b = None
    for path in (m.input_path, m.rhs_path):
        if path is None:
            continue
        try:
            if A is None:
                A = read_matrix_market(path)
            else:
                b = read_vector(path)
        except MatrixMarketError as exc:
            print(f'error: {path}: {exc}', file=sys.stderr)
            return EXIT_PARSE
        except OSError as exc:
            print(f'error: {exc}', file=sys.stderr)
            return EXIT_USAGE
    if A.n_rows != A.n_cols:
        print(f'error: matrix is {A.n_rows}x{A.n_cols}, must be square', file=sys.stderr)
        return EXIT_USAGE
    n = A.n_rows
    if b is None:
        b = np.arange(1, n + 1, dtype=np.float64)
    elif b.size != n:
        print(f'error: right-hand side has {b.size} entries, matrix has {n} rows', file=sys.stderr)
        return EXIT_USAGE
    if m.d >= 1 and n < 2 * m.d + 1 and m.steps > 1:
        print(f'error: n={n} too small for --band-d {m.d}', file=sys.stderr)
        return EXIT_USAGE

    out.mkdir(parents=True, exist_ok=True)
    m.write(out)
    try:
        res = time_step_driver(A, b, m.plan(propagate_state=False), m.gmres_config())
    except DriverError as exc:
        _write_error(out, str(exc))
        log.error('%s', exc)
        return EXIT_NUMERIC
    write_vector(out / 'solution.txt', res.state)
    write_report_csv(out / 'report.csv', res.steps)
    if len(res.steps) == 1:
        write_csv(out / 'residuals.csv', res.steps[0].report.residual_history)
    else:
        for rec in res.steps:
            write_csv(out / f'residuals_step{rec.step}.csv', rec.report.residual_history)
    if m.emit_plot:
        emit_plot({f'step {r.step}': r.report.residual_history for r in res.steps}, out / 'convergence.svg')
    return EXIT_OK if all(r.report.converged for r in res.steps) else EXIT_NUMERIC


def _sizes(text):
    try:
        return [int(t) for t in text.replace(' ', '').split(',') if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid size list {text!r}') from None


def build_parser():
    p = argparse.ArgumentParser(prog='pspgmres', description=__doc__.strip().splitlines()[0])
    p.add_argument('-v', '--verbose', action='store_true')
    sub = p.add_subparsers(dest='subcommand', required=True)

    def common(sp, steps_default):
        sp.add_argument('--band-d', type=int, default=1, dest='d', help='preconditioner half-bandwidth')
        sp.add_argument('--epsilon', type=float, default=1e-8, help='absolute residual tolerance')
        sp.add_argument('--max-inner', type=int, default=10, dest='n_A', help='inner iterations per cycle')
        sp.add_argument('--restarts', type=int, default=100, dest='n_r', help='maximum restart cycles')
        sp.add_argument('--steps', type=int, default=steps_default, help='number of solves')
        sp.add_argument('--out', default='out', dest='output_dir')
        sp.add_argument('--emit-plot', action='store_true')
        sp.add_argument('--history-cap', type=int, default=None)
        sp.add_argument('--reset-history', action='store_true')

    bench = sub.add_parser('benchmark', help='plain vs fitted-preconditioner runs on random systems')
    bench.add_argument('--sizes', type=_sizes, default=[20, 80, 150, 350, 700])
    bench.add_argument('--seed', type=int, default=0)
    common(bench, 2)

    solve = sub.add_parser('solve', help='solve a Matrix Market system')
    solve.add_argument('--matrix', dest='input_path', required=True)
    solve.add_argument('--rhs', dest='rhs_path', default=None, help='whitespace-separated values; default 1..n')
    common(solve, 1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    fields = {k: v for k, v in vars(args).items() if k != 'verbose'}
    m = RunManifest(**fields)
    try:
        m.validate()
    except UsageError as exc:
        print(f'pspgmres: error: {exc}', file=sys.stderr)
        return EXIT_USAGE
    try:
        if m.subcommand == 'benchmark':
            return cmd_benchmark(m)
        return cmd_solve(m)
    except (ConfigError, ContractError) as exc:
        print(f'pspgmres: error: {exc}', file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
