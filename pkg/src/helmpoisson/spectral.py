"""Iteration matrix G = A^-1 D(k): spectral radius, condition estimates, geometric series."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Grid, assemble_helmholtz, assemble_modified_poisson
from .iteration import IterationConfig, Scheme, initial_data
from .linear_solver import Factorization, NoConvergence, factorize, power_iteration, solve


class DivergentSeries(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class IterationOperator:
    A: sp.csr_matrix
    A_fact: Factorization
    diag: np.ndarray  # complex, -alpha on interior rows, -i c k on reflecting rows
    dim: int
    reflecting_rows: np.ndarray

    def apply(self, u: np.ndarray) -> np.ndarray:
        return apply_G(self, u)


def iteration_operator(grid: Grid, k: float, alpha: float | None = None) -> IterationOperator:
    alpha = k * k if alpha is None else alpha
    A = assemble_modified_poisson(grid, alpha, k).matrix
    refl = grid.row_is_reflecting
    diag = np.where(refl, -1j * grid.robin_coefficient() * k, -alpha + 0j)
    return IterationOperator(A, factorize(A), diag, grid.n_unknowns, refl)


def apply_G(op: IterationOperator, u: np.ndarray) -> np.ndarray:
    """A^-1 (D u) as two real solves."""
    y = op.diag * np.asarray(u)
    return solve(op.A_fact, y)


def apply_G_adjoint(op: IterationOperator, u: np.ndarray) -> np.ndarray:
    """G^H u = conj(D) A^-T u."""
    z = op.A_fact.lu.solve(np.ascontiguousarray(np.real(u)), trans="T") + \
        1j * op.A_fact.lu.solve(np.ascontiguousarray(np.imag(u)), trans="T")
    return np.conj(op.diag) * z


def spectral_radius(op: IterationOperator, *, tol: float = 1e-10, max_iter: int = 20000,
                    seed: int = 0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergence)
        return power_iteration(op.apply, op.dim, tol=tol, max_iter=max_iter, seed=seed)


def _norm2_estimate(matvec, rmatvec, dim, seed, max_iter=300, tol=1e-8) -> tuple[float, int]:
    """Largest singular value by power iteration on M^H M."""
    res = power_iteration(lambda x: rmatvec(matvec(x)), dim, tol=tol, max_iter=max_iter, seed=seed)
    return math.sqrt(res.rho), res.iterations


def condition_estimates(op: IterationOperator, *, seed: int = 0) -> dict:
    """2-norm condition estimates of A and I - G (power iteration on M^H M and its inverse)."""
    A, lu, n = op.A, op.A_fact.lu, op.dim

    def a_inv_h(x):
        x = np.asarray(x, dtype=complex)
        return lu.solve(np.ascontiguousarray(x.real), trans="T") + \
            1j * lu.solve(np.ascontiguousarray(x.imag), trans="T")

    FM = factorize((A - sp.diags(op.diag)).tocsc())  # (I - G)^-1 = (A - D)^-1 A
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergence)
        sA, itA = _norm2_estimate(lambda x: A @ x, lambda x: A.T @ x, n, seed)
        sAi, itAi = _norm2_estimate(lambda x: solve(op.A_fact, x), a_inv_h, n, seed)
        sIG, itIG = _norm2_estimate(lambda x: x - apply_G(op, x),
                                    lambda x: x - apply_G_adjoint(op, x), n, seed)
        sIGi, itIGi = _norm2_estimate(lambda x: FM.solve(A @ x),
                                      lambda x: A.T @ FM.lu.solve(np.asarray(x, dtype=complex), trans="H"),
                                      n, seed)
    return {"cond_A": sA * sAi, "cond_IminusG": sIG * sIGi, "iterations": itA + itAi + itIG + itIGi}


@dataclass(frozen=True)
class SweepPoint:
    k: float
    rho: float
    converged: bool
    iterations: int
    cond_A: float
    cond_IminusG: float


def spectral_radius_sweep(grid: Grid, k_values, *, conditions: bool = True, seed: int = 0,
                          tol: float = 1e-10, max_iter: int = 20000) -> list[SweepPoint]:
    out = []
    for k in k_values:
        op = iteration_operator(grid, float(k))
        res = spectral_radius(op, tol=tol, max_iter=max_iter, seed=seed)
        cA = cIG = math.nan
        if conditions:
            c = condition_estimates(op, seed=seed)
            cA, cIG = c["cond_A"], c["cond_IminusG"]
        out.append(SweepPoint(float(k), res.rho, res.converged, res.iterations, cA, cIG))
    return out


def crossing(points: list[SweepPoint]) -> float:
    """Linearly interpolated first k where rho crosses 1 (nan if it never does)."""
    for a, b in zip(points, points[1:]):
        if a.rho < 1 <= b.rho:
            return a.k + (1 - a.rho) * (b.k - a.k) / (b.rho - a.rho)
    return math.nan


def find_crossing(grid: Grid, lo: float, hi: float, *, tol: float = 1e-3, seed: int = 0) -> float:
    """Bisection for rho(G(k)) = 1 on [lo, hi]."""
    def rho(k):
        return spectral_radius(iteration_operator(grid, k), seed=seed).rho
    if not (rho(lo) < 1 <= rho(hi)):
        return math.nan
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rho(mid) < 1:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sweep_csv(points: list[SweepPoint]) -> str:
    lines = ["k,rho,converged_flag,cond_A,cond_IminusG"]
    for p in points:
        lines.append(f"{p.k:.6g},{p.rho:.10g},{int(p.converged)},{p.cond_A:.6e},{p.cond_IminusG:.6e}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GeometricSumReport:
    k: float
    N: int
    terms_used: int
    u0_norm: float
    series_vs_direct: float  # sup |S_N - (I - G)^-1 u0|
    helmholtz_residual: float  # sup |B S_N - b|
    b_norm: float


def geometric_sum_check(grid: Grid, k: float, N: int | None = None, *, tol: float = 1e-14) -> GeometricSumReport:
    """Compare the partial geometric series with (I - G)^-1 u0 and the Helmholtz system.

    ``u0 = v0 + i w0`` is the first iterate of the annular scheme. With
    ``N=None`` terms are added until they drop below ``tol * |u0|``.
    """
    cfg = IterationConfig(Scheme.ANNULAR, k, N=1)
    A_op = assemble_modified_poisson(grid, k * k, k)
    op = iteration_operator(grid, k)
    gD, row_data = initial_data(grid, cfg)
    b_iter = A_op.rhs(row_data, gD)
    u0 = solve(op.A_fact, b_iter)
    u0n = float(np.max(np.abs(u0))) if len(u0) else 0.0

    S = u0.copy()
    term = u0.copy()
    growth = 0
    prev = np.max(np.abs(term))
    used = 0
    limit = N if N is not None else 100000
    for n in range(1, limit + 1):
        if u0n == 0 or np.max(np.abs(term)) == 0:
            break
        term = apply_G(op, term)
        S += term
        used = n
        t = np.max(np.abs(term))
        growth = growth + 1 if t > prev else 0
        if growth >= 10:
            raise DivergentSeries(f"terms grew for 10 consecutive steps at k={k}")
        prev = t
        if N is None and t <= tol * u0n:
            break

    M = (op.A - sp.diags(op.diag)).tocsc()
    direct = factorize(M).solve(A_op.matrix @ u0) if u0n else np.zeros_like(u0)
    B, b = assemble_helmholtz(grid, k, {"plane-wave": lambda xy: -np.exp(-1j * k * xy[:, 0])})
    res = B.matrix @ S - b
    return GeometricSumReport(k, N if N is not None else used, used, u0n,
                              float(np.max(np.abs(S - direct))) if len(S) else 0.0,
                              float(np.max(np.abs(res))) if len(res) else 0.0,
                              float(np.max(np.abs(b))) if len(b) else 0.0)


def dense_G(grid: Grid, k: float, alpha: float | None = None) -> np.ndarray:
    """Dense G for oracle checks on small grids."""
    op = iteration_operator(grid, k, alpha)
    return np.linalg.solve(op.A.toarray(), np.diag(op.diag))


def dense_spectral_radius(grid: Grid, k: float) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(dense_G(grid, k)))))


def arnoldi_spectral_radius(grid: Grid, k: float) -> float:
    op = iteration_operator(grid, k)
    lin = spla.LinearOperator((op.dim, op.dim), matvec=op.apply, dtype=complex)
    vals = spla.eigs(lin, k=4, which="LM", return_eigenvectors=False)
    return float(np.max(np.abs(vals)))
