import numpy as np
import pytest
import scipy.sparse as sp

from helmpoisson.discretization import (GridError, NodeClass, assemble_exit_time, assemble_helmholtz,
                                        assemble_laplacian, assemble_local_time,
                                        assemble_modified_poisson, build_grid)
from helmpoisson.geometry import BoundaryKind, make_shape, square
from helmpoisson.linear_solver import factorize, solve
from helmpoisson.thresholds import exit_time_field, local_time_field


def test_waveguide_lattice():
    g = build_grid(make_shape("waveguide", L_wid=0.5), 0.25)
    assert g.n_nodes == 15
    j = g.ij[:, 1]
    i = g.ij[:, 0]
    assert np.all(g.cls[(j == 0) | (j == 2)] == NodeClass.DIRICHLET)
    side = (j == 1) & ((i == 0) | (i == 4))
    assert np.all(g.cls[side] == NodeClass.REFLECTING)
    assert np.all(g.cls[(j == 1) & ~side] == NodeClass.INTERIOR)
    # interior rows first, then reflecting rows
    assert g.n_unknowns == 5
    assert list(g.row_is_reflecting) == [False, False, False, True, True]


def test_square_square_hole_lattice(ssh_grid):
    g = ssh_grid
    assert g.n_nodes == 120  # 11 x 11 minus the node strictly inside the snapped hole
    d = g.xy[g.cls == NodeClass.DIRICHLET]
    assert len(d) == 8 and np.all(np.abs(d) <= 0.1 + 1e-12)
    r = g.xy[g.cls == NodeClass.REFLECTING]
    assert np.all(np.isclose(np.abs(r).max(axis=1), 0.5))


def test_shape1_node_count():
    h = 0.01
    g = build_grid(make_shape("shape1"), h)
    n = np.arange(-30, 31)
    X, Y = np.meshgrid(n * h, n * h)
    strictly_inside_hole = np.hypot(X, Y) < 0.15 - 1e-12
    # the outside-snapped ring of hole nodes is kept as the absorbing boundary
    assert g.n_nodes < X.size
    assert g.n_nodes > X.size - strictly_inside_hole.sum()
    assert np.all(np.hypot(*g.xy[g.cls == NodeClass.DIRICHLET].T) <= 0.15 + 1e-12)


def test_k0_helmholtz_is_laplacian(ssh_grid):
    op, b = assemble_helmholtz(ssh_grid, 0.0)
    A = assemble_laplacian(ssh_grid)
    assert abs(op.matrix - A.matrix.astype(complex)).max() == 0
    assert np.all(b == 0)


@pytest.mark.parametrize("k", [0.3, 1.1, 2.5])
def test_helmholtz_structure(ssh_grid, k):
    B0, _ = assemble_helmholtz(ssh_grid, 0.0)
    Bk, _ = assemble_helmholtz(ssh_grid, k)
    diff = (Bk.matrix - B0.matrix).toarray()
    assert np.allclose(diff - np.diag(np.diag(diff)), 0)
    d = np.diag(diff)
    refl = ssh_grid.row_is_reflecting
    np.testing.assert_allclose(d[~refl], k * k)
    np.testing.assert_allclose(d[refl], 1j * k * ssh_grid.robin_coefficient()[refl])


def test_modified_poisson_shift(ssh_grid):
    k = 0.7
    A0 = assemble_modified_poisson(ssh_grid, k * k, k).matrix
    A1 = assemble_modified_poisson(ssh_grid, k * k + 1, k).matrix
    d = (A1 - A0).diagonal()
    refl = ssh_grid.row_is_reflecting
    np.testing.assert_allclose(d[~refl], -1.0)
    np.testing.assert_allclose(d[refl], 0.0)
    with pytest.raises(ValueError):
        assemble_modified_poisson(ssh_grid, 0.1, 1.0)


def test_dirichlet_square_negative_definite():
    g = build_grid(square(1.0), 1 / 16)
    A = assemble_modified_poisson(g, 2.0, 1.0).matrix.toarray()
    assert A.shape[0] <= 400
    np.testing.assert_allclose(A, A.T)
    assert np.linalg.eigvalsh(A).max() < 0


def test_disk_exit_time():
    g = build_grid(make_shape("disk"), 0.02)
    E = exit_time_field(g)
    centre = np.argmin(np.hypot(*g.xy.T))
    assert E[centre] == pytest.approx(0.25, rel=0.02)
    np.testing.assert_array_equal(local_time_field(g), 0.0)


def test_exit_time_scaling():
    e1 = exit_time_field(build_grid(square(1.0), 0.05)).max()
    e2 = exit_time_field(build_grid(square(2.0), 0.1)).max()
    assert e2 / e1 == pytest.approx(4.0, rel=1e-9)


def test_exit_and_local_time_systems(ssh_grid):
    op, b = assemble_exit_time(ssh_grid)
    refl = ssh_grid.row_is_reflecting
    assert np.all(b[~refl] == -1) and np.all(b[refl] == 0)
    op, b = assemble_local_time(ssh_grid)
    assert np.all(b[~refl] == 0) and np.all(b[refl] == 1)


def test_no_absorbing_boundary():
    g = build_grid(square(1.0, kind=BoundaryKind.NEUMANN), 0.1)
    with pytest.raises(GridError):
        assemble_exit_time(g)


def test_scattering_residual_second_order():
    """Smooth plane wave restricted to the square hole problem: truncation error shrinks ~h^2."""
    k = 0.5
    errs = []
    for h in (0.1, 0.05):
        g = build_grid(make_shape("square_square_hole"), h)
        interior = ~g.row_is_reflecting
        u = np.exp(1j * k * g.xy[:, 0])  # exact solution of Laplacian u + k^2 u = 0
        op, _ = assemble_helmholtz(g, k)
        r = op.matrix @ u[g.unknowns] + op.coupling @ u[g.dirichlet]
        errs.append(np.abs(r[interior]).max())
    # the 5-point stencil is exact up to O(k^4 h^2)
    assert errs[1] < errs[0] / 3


def test_exports(ssh_grid):
    op = assemble_laplacian(ssh_grid)
    lines = op.to_coo_text().splitlines()
    assert len(lines) == op.matrix.nnz
    r, c, re, im = lines[0].split()
    M = sp.coo_matrix(op.matrix)
    assert (int(r), int(c)) == (M.row[0], M.col[0])
    csv = ssh_grid.to_csv().splitlines()
    assert csv[0] == "x,y,class,row_index" and len(csv) == ssh_grid.n_nodes + 1


def test_reflecting_rows_one_sided(ssh_grid):
    """Reflecting rows reproduce du/dn for linear fields."""
    g = ssh_grid
    A = assemble_laplacian(g)
    u = 2.0 + 0.5 * g.xy[:, 0] - 0.25 * g.xy[:, 1]
    r = A.matrix @ u[g.unknowns] + A.coupling @ u[g.dirichlet]
    refl_nodes = g.unknowns[g.row_is_reflecting]
    expected = g.normal[refl_nodes] @ np.array([0.5, -0.25])
    np.testing.assert_allclose(r[g.row_is_reflecting], expected, atol=1e-12)


def test_solve_real_rhs_real_field(ssh_grid):
    op, b = assemble_exit_time(ssh_grid)
    x = solve(factorize(op), b)
    assert not np.iscomplexobj(x)
