"""Nested Poisson iterations for Helmholtz problems.

Every scheme solves, at each step n, two real problems with the same
modified-Poisson operator ``Laplacian - (alpha - k^2)``; only the right-hand
sides change, so a single factorisation serves the whole run. Writing
``u_n = v_n + i w_n``, the recursion is ``A u_n = D u_{n-1}`` with the
diagonal ``D`` equal to ``-(alpha + i p)`` on interior rows and ``-i c k`` on
reflecting rows (``c`` the Robin coefficient of the segment). The real and
imaginary parts are kept as separate real vectors throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .discretization import (Grid, NodeClass, assemble_helmholtz, assemble_modified_poisson,
                             boundary_vectors, normal_derivative)
from .geometry import PLANE_WAVE
from .linear_solver import factorize, solve


class Scheme(str, enum.Enum):
    CAVITY = "cavity"
    ANNULAR = "annular"
    WAVEGUIDE = "waveguide"
    ALTERNATIVE = "alternative"


class Verdict(str, enum.Enum):
    CONVERGED = "converged"  # terms fell below the relative tolerance
    DECAYING = "decaying"  # N steps done, fitted ratio < 1
    DIVERGED = "diverged"  # blow-up, or fitted ratio >= 1

    @property
    def converges(self) -> bool:
        return self is not Verdict.DIVERGED


class InfeasibleMode(ValueError):
    """Waveguide mode is evanescent: k^2 <= (m pi / L_wid)^2."""


class DegenerateNormalDerivative(ValueError):
    pass


@dataclass
class IterationConfig:
    scheme: Scheme
    k: float
    alpha: float | None = None  # defaults to k^2
    p: float = 0.0
    N: int = 30
    m: int = 1
    tol: float = 1e-10  # relative; also clears the round-off floor of the solves
    blowup: float = 1e6
    f_re: Callable | None = None
    f_im: Callable | None = None
    g_re: Callable | None = None
    g_im: Callable | None = None
    store_iterates: bool = True

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if self.alpha is None:
            self.alpha = self.k * self.k
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.alpha < self.k * self.k - 1e-12 * max(1.0, self.k ** 2):
            raise ValueError("alpha must be >= k^2")
        if self.p < 0:
            raise ValueError("p must be >= 0")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.p and self.scheme is not Scheme.CAVITY:
            raise ValueError("damping p only applies to the cavity scheme")


@dataclass
class IterationTrace:
    grid: Grid = field(repr=False)
    config: IterationConfig
    sup_v: list[float] = field(default_factory=list)
    sup_w: list[float] = field(default_factory=list)
    sum_v: np.ndarray | None = field(default=None, repr=False)  # nodal partial sums
    sum_w: np.ndarray | None = field(default=None, repr=False)
    iterates_v: list[np.ndarray] = field(default_factory=list, repr=False)
    iterates_w: list[np.ndarray] = field(default_factory=list, repr=False)
    error_re: list[float] = field(default_factory=list)
    error_im: list[float] = field(default_factory=list)
    verdict: Verdict | None = None
    ratio: float = math.nan

    @property
    def sup_sum(self) -> np.ndarray:
        return np.asarray(self.sup_v) + np.asarray(self.sup_w)

    @property
    def n_terms(self) -> int:
        return len(self.sup_v)

    def to_csv(self) -> str:
        lines = ["n,sup_v,sup_w,sup_sum,error_vs_reference,error_im_vs_reference"]
        for n in range(self.n_terms):
            er = self.error_re[n] if self.error_re else math.nan
            ei = self.error_im[n] if self.error_im else math.nan
            lines.append(f"{n},{self.sup_v[n]:.10e},{self.sup_w[n]:.10e},"
                         f"{self.sup_v[n] + self.sup_w[n]:.10e},{er:.10e},{ei:.10e}")
        return "\n".join(lines) + "\n"


def fitted_ratio(sup_sum) -> float:
    """Geometric ratio from a log-linear fit over the second half of the sequence."""
    s = np.asarray(sup_sum, dtype=float)
    n = np.arange(len(s))
    start = max(1, len(s) // 2)
    sel = (n >= start) & (s > 0)
    if sel.sum() < 2:
        return 0.0 if len(s) > 1 and s[-1] == 0 else math.nan
    slope = np.polyfit(n[sel], np.log(s[sel]), 1)[0]
    return float(np.exp(slope))


def classify(sup_sum, tol: float, blowup: float) -> tuple[Verdict, float]:
    s = np.asarray(sup_sum, dtype=float)
    s0 = s[0] if s[0] > 0 else 1.0
    if np.any(~np.isfinite(s)) or np.any(s > blowup * s0):
        return Verdict.DIVERGED, math.inf
    if len(s) > 1 and s[-1] <= tol * s0:
        return Verdict.CONVERGED, fitted_ratio(s[s > 0]) if np.any(s[1:] > 0) else 0.0
    r = fitted_ratio(s)
    if math.isnan(r) or r >= 1.0:
        return Verdict.DIVERGED, r
    return Verdict.DECAYING, r


# ---------------------------------------------------------------------------
# boundary data tables


def annular_data(k: float):
    """Scattered plane wave: u = -exp(-i k x1) on the scatterer."""
    return {PLANE_WAVE: lambda xy: -np.exp(-1j * k * xy[:, 0])}


def waveguide_data(k: float, L_wid: float, m: int):
    alpha_m = m * math.pi / L_wid
    if k * k <= alpha_m ** 2:
        raise InfeasibleMode(f"k^2 = {k * k:.6g} <= alpha_m^2 = {alpha_m ** 2:.6g}")
    beta = math.sqrt(k * k - alpha_m ** 2)
    return {"waveguide-inlet": lambda xy: 2j * beta * np.sin(alpha_m * xy[:, 1])}


def _diagonal(grid: Grid, cfg: IterationConfig) -> np.ndarray:
    refl = grid.row_is_reflecting
    c = grid.robin_coefficient()
    return np.where(refl, -1j * c * cfg.k, -(cfg.alpha + 1j * cfg.p))


def initial_data(grid: Grid, cfg: IterationConfig):
    """Per-node Dirichlet values and per-row data for (v_0, w_0)."""
    if cfg.scheme is Scheme.CAVITY:
        zero = lambda xy: np.zeros(len(xy))  # noqa: E731
        f = lambda xy: (cfg.f_re or zero)(xy) + 1j * (cfg.f_im or zero)(xy)  # noqa: E731
        g = lambda xy: (cfg.g_re or zero)(xy) + 1j * (cfg.g_im or zero)(xy)  # noqa: E731
        labels = {s.data_label for s in grid.domain.segments if not s.kind.reflecting}
        return boundary_vectors(grid, {label: g for label in labels}, f)
    if cfg.scheme is Scheme.WAVEGUIDE:
        x0, y0, x1, y1 = grid.domain.bounding_box
        return boundary_vectors(grid, waveguide_data(cfg.k, y1 - y0, cfg.m))
    return boundary_vectors(grid, annular_data(cfg.k))


def _sup(x) -> float:
    return float(np.max(np.abs(x))) if len(x) else 0.0


def _run_linear(grid: Grid, cfg: IterationConfig, reference: np.ndarray | None) -> IterationTrace:
    op = assemble_modified_poisson(grid, cfg.alpha, cfg.k)
    F = factorize(op)
    d = _diagonal(grid, cfg)
    gD, row_data = initial_data(grid, cfg)
    b0 = op.rhs(row_data, gD)
    v = grid.to_full(solve(F, b0.real), gD.real)
    w = grid.to_full(solve(F, b0.imag), gD.imag)

    def step(v, w):
        vu, wu = v[grid.unknowns], w[grid.unknowns]
        rv = d.real * vu - d.imag * wu
        rw = d.real * wu + d.imag * vu
        return grid.to_full(solve(F, rv)), grid.to_full(solve(F, rw))

    return _accumulate(grid, cfg, v, w, step, reference)


def _accumulate(grid, cfg, v, w, step, reference) -> IterationTrace:
    tr = IterationTrace(grid, cfg)
    tr.sum_v = v.copy()
    tr.sum_w = w.copy()
    s0 = None
    for n in range(cfg.N + 1):
        if n > 0:
            v, w = step(v, w)
            tr.sum_v += v
            tr.sum_w += w
        tr.sup_v.append(_sup(v))
        tr.sup_w.append(_sup(w))
        if cfg.store_iterates:
            tr.iterates_v.append(v)
            tr.iterates_w.append(w)
        if reference is not None:
            tr.error_re.append(_sup(tr.sum_v - reference.real))
            tr.error_im.append(_sup(tr.sum_w - reference.imag))
        s = tr.sup_v[-1] + tr.sup_w[-1]
        s0 = s if s0 is None else s0
        if n > 0 and (not math.isfinite(s) or s > cfg.blowup * max(s0, 1e-300)):
            break
        if n > 0 and s <= cfg.tol * s0:
            break
        if s0 == 0.0:
            break
    tr.verdict, tr.ratio = classify(tr.sup_sum, cfg.tol, cfg.blowup)
    if s0 == 0.0:
        tr.verdict, tr.ratio = Verdict.CONVERGED, 0.0
    return tr


def run_cavity(grid: Grid, config: IterationConfig, reference=None) -> IterationTrace:
    if config.scheme is not Scheme.CAVITY:
        raise ValueError("run_cavity needs scheme=cavity")
    _require_absorbing(grid)
    return _run_linear(grid, config, reference)


def run_annular(grid: Grid, config: IterationConfig, reference=None) -> IterationTrace:
    if config.scheme is not Scheme.ANNULAR:
        raise ValueError("run_annular needs scheme=annular")
    _require_absorbing(grid)
    if not np.any(grid.cls == NodeClass.REFLECTING):
        raise ValueError("annular iteration needs a reflecting boundary")
    return _run_linear(grid, config, reference)


def run_waveguide(grid: Grid, config: IterationConfig, reference=None) -> IterationTrace:
    if config.scheme is not Scheme.WAVEGUIDE:
        raise ValueError("run_waveguide needs scheme=waveguide")
    _require_absorbing(grid)
    return _run_linear(grid, config, reference)


def run_alternative(grid: Grid, config: IterationConfig, reference=None) -> IterationTrace:
    """Variant with absorbing v-chain on the reflecting boundary.

    v_n is prescribed on the reflecting boundary as ``-(1/k) dw_{n-1}/dn``
    (discrete normal derivative with the assembly stencil), while w_n keeps
    the Neumann data ``k v_{n-1}``. The two chains use different operators.
    """
    if config.scheme is not Scheme.ALTERNATIVE:
        raise ValueError("run_alternative needs scheme=alternative")
    if config.k == 0:
        raise DegenerateNormalDerivative("k = 0: the v-chain boundary data divides by k")
    _require_absorbing(grid)
    k, alpha = config.k, config.alpha
    op_w = assemble_modified_poisson(grid, alpha, k)
    op_v = assemble_modified_poisson(grid, alpha, k, reflecting_as_dirichlet=True)
    Fw, Fv = factorize(op_w), factorize(op_v)
    refl_rows = grid.row_is_reflecting
    refl_nodes = grid.unknowns[refl_rows]
    assert np.array_equal(refl_nodes, grid.reflecting)

    gD, _ = boundary_vectors(grid, annular_data(k))
    zero_rows = np.zeros(grid.n_unknowns)
    v = grid.to_full(solve(Fv, op_v.rhs(zero_rows, gD.real)), gD.real)
    w = grid.to_full(solve(Fw, op_w.rhs(zero_rows, gD.imag)), gD.imag)

    def step(v, w):
        rv = np.where(refl_rows, 0.0, -alpha * v[grid.unknowns])
        rv[refl_rows] = -normal_derivative(grid, w) / k
        rw = np.where(refl_rows, k * v[grid.unknowns], -alpha * w[grid.unknowns])
        return grid.to_full(solve(Fv, rv)), grid.to_full(solve(Fw, rw))

    return _accumulate(grid, config, v, w, step, reference)


def run(grid: Grid, config: IterationConfig, reference=None) -> IterationTrace:
    runner = {Scheme.CAVITY: run_cavity, Scheme.ANNULAR: run_annular,
              Scheme.WAVEGUIDE: run_waveguide, Scheme.ALTERNATIVE: run_alternative}[config.scheme]
    return runner(grid, config, reference)


def _require_absorbing(grid: Grid):
    if not np.any(grid.cls == NodeClass.DIRICHLET):
        raise ValueError("the iteration needs a nonempty absorbing boundary")


def reconstruct(trace: IterationTrace) -> np.ndarray:
    """Complex nodal field sum(v_n) + i sum(w_n), Dirichlet values included."""
    return trace.sum_v + 1j * trace.sum_w


def reference_solution(grid: Grid, config: IterationConfig) -> np.ndarray:
    """Direct solve of the complex problem the iteration targets, on the same grid."""
    k = config.k
    gD, row_data = initial_data(grid, config)
    if config.scheme is Scheme.CAVITY:
        # Laplacian + (k^2 + i p) with homogeneous Neumann rows
        op = assemble_modified_poisson(grid, 0.0, 0.0)
        shift = np.where(grid.row_is_reflecting, 0.0, k * k + 1j * config.p)
        M = (op.matrix.astype(complex) + sp.diags(shift)).tocsr()
        b = op.rhs(row_data, gD)
        u = factorize(M).solve(b)
    else:
        op, _ = assemble_helmholtz(grid, k)
        b = op.rhs(row_data, gD)
        u = solve(factorize(op), b)
    return grid.to_full(u, gD)
