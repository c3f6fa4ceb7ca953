"""Sparse LU factorisation and power iteration."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrix(RuntimeError):
    """Raised when a factorisation meets a (numerically) zero pivot."""


class NoConvergence(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class Factorization:
    lu: spla.SuperLU
    is_complex: bool
    shape: tuple[int, int]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return solve(self, b)


def factorize(M, *, pivot_tol: float = 1e-14) -> Factorization:
    """LU-factorise a square sparse matrix (or an object with a ``matrix`` attribute)."""
    A = getattr(M, "matrix", M)
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    is_complex = np.iscomplexobj(A.data)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sp.SparseEfficiencyWarning)
            lu = spla.splu(A)
    except RuntimeError as exc:  # SuperLU: "Factor is exactly singular"
        raise SingularMatrix(str(exc)) from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() <= pivot_tol * piv.max():
        raise SingularMatrix(f"pivot ratio {piv.min() / piv.max():.3e} below {pivot_tol:g}")
    return Factorization(lu, is_complex, A.shape)


def solve(F: Factorization, b: np.ndarray) -> np.ndarray:
    """Solve with a factorisation. Real factors take real and imaginary parts separately."""
    b = np.asarray(b)
    if F.is_complex:
        return F.lu.solve(b.astype(complex))
    if np.iscomplexobj(b):
        return F.lu.solve(np.ascontiguousarray(b.real)) + 1j * F.lu.solve(np.ascontiguousarray(b.imag))
    return F.lu.solve(b.astype(float))


@dataclass(frozen=True)
class PowerResult:
    rho: float
    iterations: int
    converged: bool


def power_iteration(apply: Callable[[np.ndarray], np.ndarray], dim: int, *, tol: float = 1e-10,
                    max_iter: int = 5000, seed: int = 0, min_iter: int = 10) -> PowerResult:
    """Spectral radius of a linear operator by normalised power iteration.

    The estimate is ``|x^H A x|`` for the unit iterate ``x``; convergence is
    declared when two successive estimates agree to ``tol`` (relative). A
    non-converged run warns with :class:`NoConvergence` and returns the
    norm-growth estimate of the last iterations.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    prev = np.inf
    growth = []
    for it in range(1, max_iter + 1):
        y = np.asarray(apply(x), dtype=complex)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return PowerResult(0.0, it, True)
        est = abs(np.vdot(x, y))
        growth.append(ny)
        x = y / ny
        if it >= min_iter and abs(est - prev) <= tol * max(est, 1e-300):
            return PowerResult(float(est), it, True)
        prev = est
    tail = np.asarray(growth[-min(len(growth), 50):])
    rho = float(np.exp(np.mean(np.log(tail))))
    warnings.warn(f"power iteration did not converge in {max_iter} steps", NoConvergence, stacklevel=2)
    return PowerResult(rho, max_iter, False)
