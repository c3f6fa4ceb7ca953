import numpy as np
import pytest

from helmpoisson.discretization import build_grid
from helmpoisson.geometry import make_shape
from helmpoisson.iteration import (DegenerateNormalDerivative, InfeasibleMode, IterationConfig,
                                   Scheme, Verdict, classify, fitted_ratio, reconstruct,
                                   reference_solution, run, run_annular, run_cavity)
from helmpoisson.spectral import geometric_sum_check


@pytest.fixture(scope="module")
def cavity_grid():
    return build_grid(make_shape("cavity"), 0.05)


def test_zero_data(cavity_grid):
    tr = run_cavity(cavity_grid, IterationConfig("cavity", 1.0, N=5))
    assert max(tr.sup_v) == 0 and max(tr.sup_w) == 0
    assert np.all(reconstruct(tr) == 0)


def test_cavity_decoupled_imaginary_chain(cavity_grid):
    cfg = IterationConfig("cavity", 1.0, N=10, f_re=lambda xy: np.sin(np.pi * xy[:, 0]))
    tr = run_cavity(cavity_grid, cfg)
    assert max(tr.sup_w) == 0 and tr.sup_v[0] > 0


def test_cavity_matches_direct_solve(cavity_grid):
    cfg = IterationConfig("cavity", 2.0, p=1.0, N=200, f_re=lambda xy: xy[:, 0] * (1 - xy[:, 1]),
                          g_im=lambda xy: np.ones(len(xy)))
    ref = reference_solution(cavity_grid, cfg)
    tr = run_cavity(cavity_grid, cfg, reference=ref)
    assert tr.verdict is Verdict.CONVERGED
    assert np.abs(reconstruct(tr) - ref).max() < 1e-8 * np.abs(ref).max()


def test_annular_k0_single_term(shape1_coarse):
    tr = run_annular(shape1_coarse, IterationConfig("annular", 0.0, N=5))
    assert tr.sup_v[0] <= 1 + 1e-12
    assert all(s == 0 for s in tr.sup_v[1:] + tr.sup_w)
    np.testing.assert_array_equal(reconstruct(tr), tr.iterates_v[0])
    ref = reference_solution(shape1_coarse, IterationConfig("annular", 0.0))
    assert np.abs(reconstruct(tr) - ref).max() < 1e-12


def test_resummation_invariant(shape1_coarse):
    """Partial sums of the iteration equal the geometric series of G."""
    tr = run(shape1_coarse, IterationConfig("annular", 1.0, N=8))
    s = sum(v + 1j * w for v, w in zip(tr.iterates_v, tr.iterates_w))
    np.testing.assert_allclose(reconstruct(tr), s, atol=1e-13)
    rep = geometric_sum_check(shape1_coarse, 1.0, N=7)
    assert rep.terms_used == 7


def test_annular_verdicts(shape1_coarse):
    good = run(shape1_coarse, IterationConfig("annular", 1.5))
    bad = run(shape1_coarse, IterationConfig("annular", 2.9))
    assert good.verdict.converges and not bad.verdict.converges


def test_alternative_bounded_start(shape1_coarse):
    tr = run(shape1_coarse, IterationConfig("alternative", 1.0, N=3))
    assert tr.sup_v[0] <= 1 + 1e-12
    with pytest.raises(DegenerateNormalDerivative):
        run(shape1_coarse, IterationConfig("alternative", 0.0))


def test_waveguide_mode_checks():
    g = build_grid(make_shape("waveguide", L_wid=0.5), 0.05)
    with pytest.raises(InfeasibleMode):
        run(g, IterationConfig("waveguide", 6.0, m=1))
    tr = run(g, IterationConfig("waveguide", 6.5, m=1, N=3))
    assert tr.sup_v[0] == 0 and tr.sup_w[0] > 0


def test_config_validation():
    with pytest.raises(ValueError):
        IterationConfig("annular", -1.0)
    with pytest.raises(ValueError):
        IterationConfig("annular", 1.0, alpha=0.5)
    with pytest.raises(ValueError):
        IterationConfig("annular", 1.0, p=1.0)
    with pytest.raises(ValueError):
        IterationConfig("annular", 1.0, N=0)
    assert IterationConfig("annular", 2.0).alpha == 4.0
    assert IterationConfig("cavity", 1.0).scheme is Scheme.CAVITY


def test_classify():
    s = 0.5 ** np.arange(30)
    assert classify(s, 1e-12, 1e6)[0] is Verdict.DECAYING
    assert fitted_ratio(s) == pytest.approx(0.5)
    assert classify(s, 1e-6, 1e6)[0] is Verdict.CONVERGED
    assert classify(1.1 ** np.arange(30), 1e-12, 1e6)[0] is Verdict.DIVERGED
    assert classify(10.0 ** np.arange(30), 1e-12, 1e6)[0] is Verdict.DIVERGED


def test_trace_csv(shape1_coarse):
    tr = run(shape1_coarse, IterationConfig("annular", 1.0, N=4))
    lines = tr.to_csv().splitlines()
    assert lines[0].startswith("n,sup_v,sup_w") and len(lines) == 1 + 5  # terms n = 0..N
