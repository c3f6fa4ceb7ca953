import numpy as np
import pytest

from helmpoisson.discretization import assemble_laplacian
from helmpoisson.iteration import IterationConfig, run
from helmpoisson.spectral import (apply_G, arnoldi_spectral_radius, condition_estimates, crossing,
                                  dense_G, dense_spectral_radius, geometric_sum_check,
                                  iteration_operator, spectral_radius, spectral_radius_sweep,
                                  sweep_csv)


def test_apply_matches_dense(ssh_grid):
    G = dense_G(ssh_grid, 0.8)
    op = iteration_operator(ssh_grid, 0.8)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
    np.testing.assert_allclose(apply_G(op, apply_G(op, u)), G @ G @ u, atol=1e-10)
    assert np.all(apply_G(op, np.zeros(op.dim)) == 0)


def test_k0_is_zero(ssh_grid):
    op = iteration_operator(ssh_grid, 0.0)
    u = np.ones(op.dim)
    assert np.all(apply_G(op, u) == 0)
    rep = geometric_sum_check(ssh_grid, 0.0)
    assert rep.series_vs_direct <= 1e-12 * max(rep.u0_norm, 1)


@pytest.mark.parametrize("k", [0.5, 1.0, 1.3])
def test_power_vs_dense(ssh_grid, k):
    rho = spectral_radius(iteration_operator(ssh_grid, k)).rho
    assert rho == pytest.approx(dense_spectral_radius(ssh_grid, k), abs=1e-6)


def test_arnoldi(ssh_grid):
    assert arnoldi_spectral_radius(ssh_grid, 0.5) == pytest.approx(
        dense_spectral_radius(ssh_grid, 0.5), rel=1e-8)


def test_A_is_indefinite(ssh_grid):
    A = assemble_laplacian(ssh_grid).matrix.toarray()
    ev = np.linalg.eigvals(A).real
    assert ev.max() > 0 and ev.min() < 0


def test_verdict_coherence(ssh_grid):
    pts = spectral_radius_sweep(ssh_grid, [0.5, 1.6], conditions=False)
    assert pts[0].rho < 1 < pts[1].rho
    assert run(ssh_grid, IterationConfig("annular", 0.5, N=60)).verdict.converges
    assert not run(ssh_grid, IterationConfig("annular", 1.6, N=60)).verdict.converges
    assert 0.5 < crossing(pts) < 1.6
    assert sweep_csv(pts).splitlines()[0] == "k,rho,converged_flag,cond_A,cond_IminusG"


def test_condition_estimates(ssh_grid):
    op = iteration_operator(ssh_grid, 0.5)
    c = condition_estimates(op)
    A = op.A.toarray()
    assert c["cond_A"] == pytest.approx(np.linalg.cond(A), rel=1e-3)
    G = dense_G(ssh_grid, 0.5)
    assert c["cond_IminusG"] == pytest.approx(np.linalg.cond(np.eye(op.dim) - G), rel=1e-3)
