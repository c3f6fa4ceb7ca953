"""Mean exit time, boundary local time and the convergence thresholds built on them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .discretization import Grid, NodeClass, assemble_exit_time, assemble_local_time
from .linear_solver import factorize, solve


class NoPositiveThreshold(ValueError):
    """Damping alone exhausts the contraction budget: 1/max E - p <= 0."""


def exit_time_field(grid: Grid) -> np.ndarray:
    """Nodal E[tau]: Laplacian E = -1, E = 0 on the absorbing part, dE/dn = 0 elsewhere."""
    op, b = assemble_exit_time(grid)
    E = solve(factorize(op), b)
    return grid.to_full(E)


def local_time_field(grid: Grid) -> np.ndarray:
    """Nodal E[xi]: harmonic, zero on the absorbing part, unit flux on the reflecting part."""
    if not np.any(grid.cls == NodeClass.REFLECTING):
        return np.zeros(grid.n_nodes)
    op, b = assemble_local_time(grid)
    L = solve(factorize(op), b)
    return grid.to_full(L)


def k_star_cavity(E_field, p: float = 0.0) -> float:
    if p < 0:
        raise ValueError("damping must be non-negative")
    budget = 1.0 / float(np.max(E_field)) - p
    if budget <= 0:
        raise NoPositiveThreshold(f"1/max(E) - p = {budget:.6g} <= 0")
    return math.sqrt(budget)


def khat(E, L) -> np.ndarray:
    """Largest k with k^2 E + k L = 1 (positive root), evaluated pointwise."""
    E = np.asarray(E, dtype=float)
    L = np.asarray(L, dtype=float)
    # rationalised form of (-L + sqrt(L^2 + 4E)) / 2E, stable for small E
    return 2.0 / (L + np.sqrt(L * L + 4.0 * E))


def k_star_annular(E_field, L_field, mask=None) -> tuple[float, np.ndarray]:
    """Threshold k*: minimum over nodes of the pointwise root.

    ``mask`` restricts the minimum (e.g. to non-Dirichlet nodes where E > 0).
    """
    E = np.asarray(E_field, dtype=float)
    L = np.asarray(L_field, dtype=float)
    if mask is None:
        mask = E > 0
    if not np.any(mask):
        raise ValueError("E must be positive somewhere")
    kh = np.full(E.shape, np.inf)
    kh[mask] = khat(E[mask], L[mask])
    return float(kh[mask].min()), kh


def sufficiency_margin(E_field, L_field, k: float, alpha: float | None = None, *,
                       p: float | None = None) -> float:
    """max over nodes of alpha E + k L (annular), or (alpha + p) max E when ``p`` is given."""
    alpha = k * k if alpha is None else alpha
    if alpha < k * k - 1e-14:
        raise ValueError("alpha must be >= k^2")
    E = np.asarray(E_field, dtype=float)
    if p is not None:
        return float((alpha + p) * E.max())
    L = np.asarray(L_field, dtype=float)
    return float(np.max(alpha * E + k * L))


@dataclass(frozen=True)
class WaveguideCertificate:
    feasible: bool | None  # None: the bound alone does not decide
    m: int
    L_wid: float
    exit_time_bound: float  # lower bound on sup E[tau]: L_wid^2 / 16
    product_bound: float  # lower bound on k^2 sup E[tau]: m^2 pi^2 / 16
    product_bound_over_pi2: Fraction  # exact m^2/16
    reason: str


def waveguide_feasibility(L_wid: float, m: int) -> WaveguideCertificate:
    """Analytic check of the sufficient condition for the waveguide iteration.

    The inscribed disc of radius L_wid/2 gives sup E[tau] > L_wid^2/16 and the
    propagating mode needs k^2 > (m pi / L_wid)^2, so alpha sup E[tau] exceeds
    m^2 pi^2 / 16, which is above one for every m >= 2.
    """
    if not 0 < L_wid < 1:
        raise ValueError("L_wid must lie in (0, 1)")
    if m < 1:
        raise ValueError("mode index must be >= 1")
    ratio = Fraction(m * m, 16)
    bound = float(ratio) * math.pi ** 2
    if bound > 1:
        return WaveguideCertificate(False, m, L_wid, L_wid ** 2 / 16, bound, ratio,
                                    f"k^2 sup E[tau] >= {m * m}pi^2/16 = {bound:.4f} > 1")
    return WaveguideCertificate(None, m, L_wid, L_wid ** 2 / 16, bound, ratio,
                                f"bound {m * m}pi^2/16 = {bound:.4f} < 1: undecided, run the iteration")


@dataclass
class ThresholdReport:
    shape: str
    h: float
    E_field: np.ndarray = field(repr=False)
    L_field: np.ndarray = field(repr=False)
    sup_E: float
    sup_L: float
    k_star: float
    scheme: str
    khat_field: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> str:
        return json.dumps({"shape": self.shape, "h": self.h, "sup_E": self.sup_E, "sup_L": self.sup_L,
                           "k_star": self.k_star, "scheme": self.scheme}, indent=2)


def threshold_report(grid: Grid, scheme: str = "annular", p: float = 0.0) -> ThresholdReport:
    E = exit_time_field(grid)
    L = local_time_field(grid)
    if scheme == "annular":
        ks, kh = k_star_annular(E, L, mask=grid.cls != NodeClass.DIRICHLET)
    elif scheme == "cavity":
        ks, kh = k_star_cavity(E, p), None
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ThresholdReport(grid.domain.name, grid.h, E, L, float(E.max()), float(L.max()), ks,
                           scheme if scheme == "annular" else f"cavity(p={p:g})", kh)
