import numpy as np
import pytest

from pspgmres import (BandedMatrix, CSRMatrix, DivergenceError, GmresConfig, GmresWorkspace, PreconditionerError,
                      ProbeHistory, arnoldi_step, form_solution, givens_update, mrep, psp_gmres)
from pspgmres.core import ContractError, LinearOperator
from pspgmres.gmres import SingularProjectionError

from conftest import random_dd_dense, reference_gmres


def test_identity_system():
    I = CSRMatrix.identity(3)
    x, rep, h = psp_gmres(I, [1, 2, 3], None, None, GmresConfig())
    assert rep.converged and rep.iterations_total == 1
    np.testing.assert_allclose(x, [1, 2, 3], rtol=0, atol=1e-14)
    assert rep.final_residual <= 1e-14
    assert rep.breakdowns == 1
    assert h.m == rep.matvec_count == 3


def test_three_eigenvalues_three_iterations():
    n = 30
    diag = np.tile([1.0, 2.0, 3.0], n // 3)
    A = CSRMatrix.from_dense(np.diag(diag))
    b = np.linspace(1, 2, n)
    x, rep, _ = psp_gmres(A, b, None, None, GmresConfig(epsilon=1e-10, max_inner=10))
    assert rep.converged and rep.iterations_total <= 3
    np.testing.assert_allclose(x, np.linalg.solve(np.diag(diag), b), atol=1e-10)


def test_iterates_match_reference(rng):
    a = random_dd_dense(50, rng)
    b = np.arange(1.0, 51.0)
    cfg = GmresConfig(epsilon=1e-8, max_inner=7, max_restarts=50)
    seen = []
    x, rep, _ = psp_gmres(CSRMatrix.from_dense(a), b, None, None, cfg, callback=lambda v: seen.append(v.copy()))
    ref = reference_gmres(a, b, np.zeros(50), 7, 1e-8, 50)
    assert rep.restarts_used > 0
    assert len(seen) == len(ref) == rep.iterations_total
    for mine, theirs in zip(seen, ref):
        assert np.linalg.norm(mine - theirs) <= 1e-12 * np.linalg.norm(theirs)


class TestArnoldi:
    def test_identity_breakdown(self):
        ws = GmresWorkspace(4, 3)
        ws.start(np.array([1.0, 0, 0, 0]), 1.0)
        lucky = arnoldi_step(CSRMatrix.identity(4), None, ws, 0)
        assert lucky
        assert ws.H[0, 0] == 1.0 and ws.H[1, 0] == 0.0

    def test_orthonormal_basis(self, rng):
        m = rng.standard_normal((10, 10))
        spd = m @ m.T + 10 * np.eye(10)
        ws = GmresWorkspace(10, 3)
        r = rng.standard_normal(10)
        ws.start(r, np.linalg.norm(r))
        h = ProbeHistory(10)
        for k in range(3):
            assert not arnoldi_step(spd, None, ws, k, h)
        V = ws.V[:, :4]
        np.testing.assert_allclose(V.T @ V, np.eye(4), atol=1e-10)
        assert h.m == 3

    def test_scaled_identity_preconditioner(self, rng):
        ws = GmresWorkspace(6, 2)
        r = rng.standard_normal(6)
        ws.start(r, np.linalg.norm(r))
        N = BandedMatrix.identity(6, 1)
        N.bands *= 2.0
        arnoldi_step(random_dd_dense(6, rng, offsets=(-1, 1)), N, ws, 0)
        np.testing.assert_allclose(ws.Y, 0.5 * ws.V[:, 0], rtol=1e-15)

    def test_reorthogonalize_keeps_h_consistent(self, rng):
        a = random_dd_dense(30, rng)
        ws = GmresWorkspace(30, 5)
        r = rng.standard_normal(30)
        ws.start(r, np.linalg.norm(r))
        for k in range(5):
            arnoldi_step(a, None, ws, k, reorthogonalize=True)
        # Arnoldi relation A V_k = V_{k+1} H_k
        np.testing.assert_allclose(a @ ws.V[:, :5], ws.V[:, :6] @ ws.H[:6, :5], atol=1e-12)


class TestGivens:
    def test_three_four_five(self):
        ws = GmresWorkspace(2, 1)
        ws.H[0, 0], ws.H[1, 0] = 3.0, 4.0
        ws.G[0] = 1.0
        givens_update(ws, 0)
        assert ws.H[0, 0] == 5.0 and ws.H[1, 0] == 0.0
        assert ws.C[0] == 0.6 and ws.S[0] == 0.8

    def test_no_op_rotation(self):
        ws = GmresWorkspace(2, 1)
        ws.H[0, 0] = 1.0
        ws.G[:] = [2.0, 0.0]
        assert givens_update(ws, 0) == 0.0
        assert ws.C[0] == 1.0 and ws.S[0] == 0.0
        np.testing.assert_array_equal(ws.G, [2.0, 0.0])

    def test_degenerate_column(self):
        ws = GmresWorkspace(2, 1)
        with pytest.raises(SingularProjectionError):
            givens_update(ws, 0)

    @pytest.mark.parametrize('k', [1, 4, 12, 20])
    def test_matches_dense_qr(self, k, rng):
        H = np.triu(rng.standard_normal((k + 1, k)), -1)
        beta = 3.7
        ws = GmresWorkspace(1, k)
        ws.H[:] = H
        ws.G[0] = beta
        for j in range(k):
            res = givens_update(ws, j)
        rhs = np.zeros(k + 1)
        rhs[0] = beta
        Q, R = np.linalg.qr(H, mode='complete')
        oracle = abs((Q.T @ rhs)[k])
        assert abs(res - oracle) <= 1e-12 * max(oracle, 1e-300)
        assert np.allclose(np.tril(ws.H[:k, :k], -1), 0) and np.all(ws.H[k, :k] == 0)


class TestFormSolution:
    def test_one_by_one(self):
        ws = GmresWorkspace(3, 2)
        ws.H[0, 0] = 5.0
        ws.G[0] = 5.0
        ws.V[:, 0] = [1, 0, 0]
        np.testing.assert_array_equal(form_solution(ws, np.zeros(3), None, 1), [1, 0, 0])

    def test_zero_pivot(self):
        ws = GmresWorkspace(2, 1)
        ws.G[0] = 1.0
        with pytest.raises(SingularProjectionError):
            form_solution(ws, np.zeros(2), None, 1)

    def test_residual_matches_estimate(self, rng):
        a = random_dd_dense(60, rng)
        b = rng.standard_normal(60)
        cfg = GmresConfig(epsilon=1e-4, relative=True, max_inner=40)
        A = CSRMatrix.from_dense(a)
        x, rep, _ = psp_gmres(A, b, None, None, cfg)
        assert rep.converged
        true = np.linalg.norm(b - a @ x)
        assert abs(true - rep.residual_history[-1]) <= 1e-8 * true

    def test_already_converged(self, rng):
        a = random_dd_dense(15, rng)
        x0 = rng.standard_normal(15)
        A = CSRMatrix.from_dense(a)
        x, rep, h = psp_gmres(A, A.matvec(x0), x0, None, GmresConfig())
        assert rep.converged and rep.iterations_total == 0 and rep.matvec_count == 1
        np.testing.assert_array_equal(x, x0)
        assert rep.residual_history == []


def _system(rng, n=80):
    a = random_dd_dense(n, rng)
    return a, CSRMatrix.from_dense(a), np.arange(1.0, n + 1)


def test_true_residual_tracks_estimate(rng):
    a, A, b = _system(rng, 100)
    cfg = GmresConfig(epsilon=1e-10, max_inner=15)
    its = []
    psp_gmres(A, b, None, None, cfg, callback=lambda v: its.append(np.linalg.norm(b - a @ v)))
    x, rep, _ = psp_gmres(A, b, None, None, cfg)
    for true, est in zip(its, rep.residual_history):
        if est > 1e-6 * np.linalg.norm(b):
            assert abs(true - est) <= 1e-6 * true


def test_monotone_within_cycle(rng):
    a, A, b = _system(rng)
    cfg = GmresConfig(max_inner=9)
    _, rep, _ = psp_gmres(A, b, None, None, cfg)
    r = rep.residual_history
    for k in range(len(r) - 1):
        if (k + 1) % 9:
            assert r[k + 1] <= r[k] + 1e-12


def test_probe_accounting(rng):
    a, A, b = _system(rng)
    h = ProbeHistory(80)
    h.record(np.ones(80), A.matvec(np.ones(80)))
    _, rep, _ = psp_gmres(A, b, None, None, GmresConfig(max_inner=6), h)
    assert h.m - 1 == rep.matvec_count == rep.iterations_total + rep.cycles + 1
    for x, y in h.pairs():
        np.testing.assert_array_equal(y, A.matvec(x))


def test_restarting_reaches_tolerance(rng):
    a, A, b = _system(rng, 50)
    x1, r1, _ = psp_gmres(A, b, None, None, GmresConfig(max_inner=5, max_restarts=20))
    x2, r2, _ = psp_gmres(A, b, None, None, GmresConfig(max_inner=100, max_restarts=1))
    for x, r in ((x1, r1), (x2, r2)):
        assert r.converged and np.linalg.norm(b - a @ x) <= 1e-8
    assert r1.iterations_total >= r2.iterations_total


def test_cycles_are_independent(rng):
    """Restarting equals chaining single-cycle solves: nothing leaks between cycles."""
    a, A, b = _system(rng, 40)
    cfg = GmresConfig(max_inner=4, max_restarts=3)
    x, rep, _ = psp_gmres(A, b, None, None, cfg)
    assert rep.cycles == 3 and not rep.converged
    y = np.zeros(40)
    for _ in range(3):
        y, _, _ = psp_gmres(A, b, y, None, GmresConfig(max_inner=4, max_restarts=1))
    np.testing.assert_array_equal(x, y)


def test_preconditioned_solve_with_fitted_band(rng):
    a, A, b = _system(rng)
    _, r1, h = psp_gmres(A, b, None, None, GmresConfig(max_inner=10))
    N = mrep(h, 1).N
    x, r2, _ = psp_gmres(A, b, None, N, GmresConfig(max_inner=10))
    assert r2.converged and np.linalg.norm(b - a @ x) <= 1e-8
    assert r2.precond_apply_count == r2.iterations_total + r2.cycles


def test_identity_band_skips_solves(rng):
    a, A, b = _system(rng, 30)
    x1, r1, _ = psp_gmres(A, b, None, BandedMatrix.identity(30, 1))
    x2, r2, _ = psp_gmres(A, b, None, None)
    assert r1.precond_apply_count == 0
    np.testing.assert_array_equal(x1, x2)


def test_singular_preconditioner(rng):
    a, A, b = _system(rng, 30)
    N = BandedMatrix.identity(30, 1)
    N.bands[:, 5] = 0.0
    with pytest.raises(PreconditionerError):
        psp_gmres(A, b, None, N)


def test_divergence_carries_report():
    calls = []

    def apply(v):
        calls.append(1)
        return v * (np.nan if len(calls) > 2 else 2.0)

    with pytest.raises(DivergenceError) as err:
        psp_gmres(LinearOperator(5, apply), np.ones(5))
    assert err.value.report.matvec_count == 3
    assert err.value.report.iterations_total == 1
    assert np.all(np.isfinite(err.value.x))


def test_relative_tolerance(rng):
    a, A, b = _system(rng, 40)
    b = b * 1e6
    x, rep, _ = psp_gmres(A, b, None, None, GmresConfig(epsilon=1e-10, relative=True))
    assert rep.converged and rep.final_residual <= 1e-10 * np.linalg.norm(b)


def test_not_converged_report(rng):
    a, A, b = _system(rng, 40)
    x, rep, _ = psp_gmres(A, b, None, None, GmresConfig(epsilon=1e-30, max_inner=3, max_restarts=2))
    assert not rep.converged
    assert rep.final_residual > 1e-30
    assert rep.restarts_used == 1 and rep.iterations_total == 6


def test_config_validation():
    with pytest.raises(ContractError):
        GmresConfig(epsilon=0)
    with pytest.raises(ContractError):
        GmresConfig(max_inner=0)
    with pytest.raises(ContractError):
        GmresConfig(max_restarts=0)


def test_dimension_checks(rng):
    a, A, b = _system(rng, 10)
    with pytest.raises(ContractError):
        psp_gmres(A, np.ones(9))
    with pytest.raises(ContractError):
        psp_gmres(A, b, None, BandedMatrix.identity(9))
    with pytest.raises(ContractError):
        psp_gmres(A, b, None, None, None, ProbeHistory(9))


def test_workspace_clean():
    ws = GmresWorkspace(3, 2)
    ws.V[:] = 1.0
    ws.H[:] = 1.0
    ws.finish_flag = True
    ws.clean()
    assert not ws.V.any() and not ws.H.any() and not ws.finish_flag
