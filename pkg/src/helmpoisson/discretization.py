"""Stair-stepped Cartesian grids and five-point finite-difference assembly.

Grid nodes are lattice points ``(i*h, j*h)``. Nodes inside the region are
interior. A node on the boundary, or outside it by at most h/2 (ties
included), is snapped to the class of its nearest segment, Dirichlet winning
ties. Outside nodes that an interior stencil still reaches (possible next to
curved boundaries) are snapped the same way, so every interior node has all
four neighbours in the grid. ``snap="symmetric"`` instead snaps nodes within
h/2 on either side of the boundary.

Unknowns are ordered interior nodes first, then reflecting nodes, so the
row layout matches ``(x', x'')``; Dirichlet values are eliminated into the
right-hand side. Reflecting rows are pure boundary rows: a one-sided
second-order normal derivative along each axis, weighted by the components
of the true outward normal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .geometry import BoundaryKind, Domain, nearest_segments, signed_distance


class NodeClass(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    REFLECTING = 2


class GridError(ValueError):
    pass


# E, W, N, S
_OFFSETS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])


@dataclass(frozen=True, eq=False)
class Grid:
    domain: Domain
    h: float
    ij: np.ndarray  # (n, 2) lattice indices
    xy: np.ndarray  # (n, 2) coordinates
    cls: np.ndarray  # (n,) NodeClass values
    segment: np.ndarray  # (n,) nearest segment index
    normal: np.ndarray  # (n, 2) outward normal at boundary nodes (zero for interior)
    neighbors: np.ndarray  # (n, 4) node index of E, W, N, S neighbour or -1
    row: np.ndarray  # (n,) unknown index, -1 for Dirichlet nodes
    unknowns: np.ndarray  # node index for each unknown row
    dn_terms: tuple = field(repr=False)  # per reflecting node: list of (node, coefficient)

    @property
    def n_nodes(self) -> int:
        return len(self.xy)

    @property
    def n_unknowns(self) -> int:
        return len(self.unknowns)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.cls == NodeClass.INTERIOR)

    @property
    def dirichlet(self) -> np.ndarray:
        return np.flatnonzero(self.cls == NodeClass.DIRICHLET)

    @property
    def reflecting(self) -> np.ndarray:
        return np.flatnonzero(self.cls == NodeClass.REFLECTING)

    @property
    def n_interior(self) -> int:
        return int(np.sum(self.cls == NodeClass.INTERIOR))

    @property
    def row_is_reflecting(self) -> np.ndarray:
        return self.cls[self.unknowns] == NodeClass.REFLECTING

    def robin_coefficient(self) -> np.ndarray:
        """Per-unknown Robin coefficient (zero on interior and Neumann rows)."""
        segs = self.domain.segments
        out = np.zeros(self.n_unknowns)
        for r, node in enumerate(self.unknowns):
            if self.cls[node] == NodeClass.REFLECTING:
                out[r] = segs[self.segment[node]].coefficient
        return out

    def node_labels(self) -> list[str]:
        segs = self.domain.segments
        return [segs[s].data_label for s in self.segment]

    def to_full(self, values: np.ndarray, dirichlet_values: np.ndarray | None = None) -> np.ndarray:
        """Scatter a per-unknown vector to all nodes, filling Dirichlet nodes."""
        values = np.asarray(values)
        dtype = values.dtype if dirichlet_values is None else np.result_type(values, dirichlet_values)
        out = np.zeros(self.n_nodes, dtype=np.result_type(dtype, float))
        out[self.unknowns] = values
        if dirichlet_values is not None:
            g = np.asarray(dirichlet_values)
            d = self.dirichlet
            out[d] = g[d] if len(g) == self.n_nodes else g
        return out

    def to_csv(self) -> str:
        lines = ["x,y,class,row_index"]
        names = {0: "interior", 1: "dirichlet", 2: "reflecting"}
        for (x, y), c, r in zip(self.xy, self.cls, self.row):
            lines.append(f"{x:.12g},{y:.12g},{names[int(c)]},{int(r)}")
        return "\n".join(lines) + "\n"


def build_grid(domain: Domain, h: float, *, snap: str = "outside", tie_tol: float = 1e-9) -> Grid:
    if not h > 0:
        raise GridError("h must be positive")
    x0, y0, x1, y1 = domain.bounding_box
    i0, i1 = int(np.floor(x0 / h + 1e-9)) - 1, int(np.ceil(x1 / h - 1e-9)) + 1
    j0, j1 = int(np.floor(y0 / h + 1e-9)) - 1, int(np.ceil(y1 / h - 1e-9)) + 1
    I, J = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    ij_all = np.c_[I.ravel(), J.ravel()]
    xy_all = ij_all * h
    sd = signed_distance(domain, xy_all)
    seg_all, _, nrm_all = nearest_segments(domain, xy_all)

    tol = tie_tol * h
    if snap == "symmetric":
        interior = sd < -h / 2 - tol
        boundary = np.abs(sd) <= h / 2 + tol
    elif snap == "outside":
        interior = sd < -tol
        boundary = (sd >= -tol) & (sd <= h / 2 + tol)
        shape0 = I.shape
        int2 = interior.reshape(shape0)
        need = np.zeros(shape0, dtype=bool)
        need[1:, :] |= int2[:-1, :]
        need[:-1, :] |= int2[1:, :]
        need[:, 1:] |= int2[:, :-1]
        need[:, :-1] |= int2[:, 1:]
        boundary |= need.ravel() & ~interior
    else:
        raise ValueError(f"unknown snapping rule {snap!r}")
    if not interior.any():
        raise GridError("grid has no interior nodes")

    segs = domain.segments
    kind_all = np.array([segs[s].kind is BoundaryKind.DIRICHLET for s in seg_all])
    # resolve ties (corners, hole-adjacent lines): Dirichlet wins, normals average
    bidx = np.flatnonzero(boundary)
    normal_all = np.zeros_like(xy_all)
    for n in bidx:
        p = xy_all[n:n + 1]
        dists, nrms, kinds = [], [], []
        for s in segs:
            _, d, nr = s.closest(p)
            dists.append(d[0])
            nrms.append(nr[0])
            kinds.append(s.kind)
        dists = np.array(dists)
        tied = np.flatnonzero(dists <= dists.min() + tol)
        dir_tied = [t for t in tied if kinds[t] is BoundaryKind.DIRICHLET]
        if dir_tied:
            kind_all[n] = True
            seg_all[n] = dir_tied[0]
            tied = dir_tied
        else:
            seg_all[n] = tied[0]
        v = np.sum([nrms[t] for t in tied], axis=0)
        normal_all[n] = v / np.linalg.norm(v)

    shape = I.shape
    cls_all = np.full(len(xy_all), -1)
    cls_all[interior] = NodeClass.INTERIOR
    cls_all[boundary & kind_all] = NodeClass.DIRICHLET
    cls_all[boundary & ~kind_all] = NodeClass.REFLECTING

    grid2 = cls_all.reshape(shape)

    def nb_class(cls2, di, dj):
        out = np.full(shape, -1)
        src = cls2[max(di, 0):shape[0] + min(di, 0), max(dj, 0):shape[1] + min(dj, 0)]
        out[max(-di, 0):shape[0] + min(-di, 0), max(-dj, 0):shape[1] + min(-dj, 0)] = src
        return out

    # interior nodes must see only grid nodes
    for di, dj in _OFFSETS:
        bad = (grid2 == NodeClass.INTERIOR) & (nb_class(grid2, di, dj) < 0)
        if bad.any():
            raise GridError("geometry too thin for this h: interior node without a stencil neighbour")

    # drop boundary nodes that no interior node uses
    near_interior = np.zeros(shape, dtype=bool)
    for di, dj in _OFFSETS:
        near_interior |= nb_class(grid2, di, dj) == NodeClass.INTERIOR
    keep = grid2.copy()
    dirichlet_unused = (grid2 == NodeClass.DIRICHLET) & ~near_interior
    keep[dirichlet_unused] = -1
    # reflecting nodes are kept if they touch interior or reflecting nodes (outer corners)
    for _ in range(2):
        touch = np.zeros(shape, dtype=bool)
        for di, dj in _OFFSETS:
            c = nb_class(keep, di, dj)
            touch |= (c == NodeClass.INTERIOR) | (c == NodeClass.REFLECTING)
        keep[(keep == NodeClass.REFLECTING) & ~touch] = -1
    # Dirichlet nodes referenced by reflecting stencils must also stay; re-add below
    cls_flat = keep.ravel()
    keep_mask = cls_flat >= 0
    # re-admit Dirichlet nodes adjacent to kept reflecting nodes
    refl2 = keep == NodeClass.REFLECTING
    near_refl = np.zeros(shape, dtype=bool)
    for di, dj in _OFFSETS:
        near_refl |= nb_class(refl2.astype(int), di, dj) == 1
        near_refl |= nb_class(refl2.astype(int), 2 * di, 2 * dj) == 1
    readmit = (grid2 == NodeClass.DIRICHLET) & near_refl & (keep < 0)
    keep_mask |= readmit.ravel()
    cls_flat = np.where(readmit.ravel(), NodeClass.DIRICHLET, cls_flat)

    sel = np.flatnonzero(keep_mask)
    ij = ij_all[sel]
    xy = xy_all[sel].astype(float)
    cls = cls_flat[sel].astype(np.int8)
    seg = seg_all[sel]
    normal = normal_all[sel]
    normal[cls == NodeClass.INTERIOR] = 0.0

    lookup = np.full(shape, -1)
    lookup.ravel()[sel] = np.arange(len(sel))

    def node_at(i, j):
        a, b = i - i0, j - j0
        if 0 <= a < shape[0] and 0 <= b < shape[1]:
            return int(lookup[a, b])
        return -1

    nbrs = np.full((len(sel), 4), -1)
    for n, (i, j) in enumerate(ij):
        for k, (di, dj) in enumerate(_OFFSETS):
            nbrs[n, k] = node_at(i + di, j + dj)

    order = np.r_[np.flatnonzero(cls == NodeClass.INTERIOR), np.flatnonzero(cls == NodeClass.REFLECTING)]
    row = np.full(len(sel), -1)
    row[order] = np.arange(len(order))

    dn_terms = []
    for n in np.flatnonzero(cls == NodeClass.REFLECTING):
        terms = _normal_derivative_terms(n, ij[n], normal[n], h, node_at)
        if not terms:
            raise GridError(f"reflecting node at {xy[n]} has no inward neighbour")
        dn_terms.append(tuple(terms))

    return Grid(domain=domain, h=float(h), ij=ij, xy=xy, cls=cls, segment=seg, normal=normal,
                neighbors=nbrs, row=row, unknowns=order, dn_terms=tuple(dn_terms))


def _normal_derivative_terms(n, ij, nrm, h, node_at):
    """One-sided du/dn stencil: sum over axes of |n_a| (3u_p - 4u_q1 + u_q2) / 2h."""
    terms: dict[int, float] = {}
    for axis in (0, 1):
        w = abs(nrm[axis])
        if w < 1e-12:
            continue
        step = np.zeros(2, dtype=int)
        step[axis] = -int(np.sign(nrm[axis]))
        q1 = node_at(*(ij + step))
        q2 = node_at(*(ij + 2 * step))
        if q1 < 0:
            continue
        if q2 >= 0:
            coeffs = ((n, 1.5), (q1, -2.0), (q2, 0.5))
        else:
            coeffs = ((n, 1.0), (q1, -1.0))
        for node, c in coeffs:
            terms[node] = terms.get(node, 0.0) + w * c / h
    return sorted(terms.items())


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Assembled system ``matrix @ u = rhs``; ``coupling`` maps Dirichlet node values to rows."""

    grid: Grid
    matrix: sp.csr_matrix
    coupling: sp.csr_matrix  # (n_unknowns, n_dirichlet)
    is_complex: bool

    @property
    def shape(self):
        return self.matrix.shape

    def rhs(self, row_data: np.ndarray, dirichlet_values: np.ndarray | None = None) -> np.ndarray:
        """Right-hand side from per-row data and per-node Dirichlet values."""
        b = np.array(row_data, dtype=complex if self.is_complex else np.result_type(row_data, float))
        if dirichlet_values is not None:
            g = np.asarray(dirichlet_values)
            if len(g) == self.grid.n_nodes:
                g = g[self.grid.dirichlet]
            b = b - self.coupling @ g
        return b

    def to_coo_text(self) -> str:
        m = self.matrix.tocoo()
        lines = [f"{r} {c} {v.real:.17g} {v.imag:.17g}" for r, c, v in
                 zip(m.row, m.col, m.data.astype(complex))]
        return "\n".join(lines) + "\n"


def _stencil(grid: Grid, interior_diag: np.ndarray | float, refl_extra: np.ndarray | float,
             dtype, dirichlet_reflecting: bool = False):
    """Rows over all nodes for interior Laplacian and reflecting derivative rows."""
    h2 = grid.h ** 2
    rows, cols, vals = [], [], []
    n_unk = grid.n_unknowns
    diag_i = np.broadcast_to(np.asarray(interior_diag, dtype=dtype), (n_unk,))
    diag_r = np.broadcast_to(np.asarray(refl_extra, dtype=dtype), (n_unk,))
    for node in grid.interior:
        r = grid.row[node]
        rows.append(r); cols.append(node); vals.append(-4.0 / h2 + diag_i[r])
        for nb in grid.neighbors[node]:
            rows.append(r); cols.append(nb); vals.append(1.0 / h2)
    if not dirichlet_reflecting:
        for node, terms in zip(grid.reflecting, grid.dn_terms):
            r = grid.row[node]
            for nb, c in terms:
                rows.append(r); cols.append(nb); vals.append(c)
            rows.append(r); cols.append(node); vals.append(diag_r[r])
    full = sp.csr_matrix((np.asarray(vals, dtype=dtype), (rows, cols)), shape=(n_unk, grid.n_nodes))
    full.sum_duplicates()
    return full


def _split(grid: Grid, full: sp.csr_matrix, is_complex: bool) -> SparseOperator:
    A = full[:, grid.unknowns].tocsr()
    C = full[:, grid.dirichlet].tocsr()
    A.eliminate_zeros()
    return SparseOperator(grid, A, C, is_complex)


def assemble_modified_poisson(grid: Grid, alpha: float, k: float, *,
                              reflecting_as_dirichlet: bool = False) -> SparseOperator:
    """Real operator ``Laplacian - (alpha - k^2)`` with pure Neumann rows on reflecting nodes.

    With ``reflecting_as_dirichlet`` the reflecting rows become identity rows so
    that their values act as prescribed Dirichlet data.
    """
    if alpha < k * k - 1e-14 * max(1.0, k * k):
        raise ValueError("alpha must be >= k^2")
    shift = -(alpha - k * k)
    full = _stencil(grid, shift, 0.0, float, dirichlet_reflecting=reflecting_as_dirichlet)
    if reflecting_as_dirichlet:
        r = grid.row[grid.reflecting]
        ident = sp.csr_matrix((np.ones(len(r)), (r, grid.reflecting)), shape=full.shape)
        full = (full + ident).tocsr()
    return _split(grid, full, False)


def assemble_laplacian(grid: Grid) -> SparseOperator:
    """The real matrix A: Laplacian rows plus Neumann rows."""
    return assemble_modified_poisson(grid, 0.0, 0.0)


def assemble_helmholtz(grid: Grid, k: float, bc_data: Mapping[str, Callable] | None = None,
                       source: Callable | None = None):
    """Complex system ``B(k) u = b(k)`` for ``Laplacian + k^2`` with Robin rows.

    Reflecting rows discretise ``du/dn + i c k u = g`` with ``c`` the segment's
    Robin coefficient (zero for Neumann). ``bc_data`` maps data labels to
    callables ``f(xy) -> values``; unlisted labels mean zero data.
    Returns ``(operator, b)``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    coef = grid.robin_coefficient()
    full = _stencil(grid, k * k, 1j * coef * k, complex)
    op = _split(grid, full, True)
    gD, row_data = boundary_vectors(grid, bc_data or {}, source)
    return op, op.rhs(row_data, gD)


def boundary_vectors(grid: Grid, bc_data: Mapping[str, Callable], source: Callable | None = None):
    """Per-node Dirichlet values and per-row data (source on interior, flux on reflecting)."""
    labels = np.array(grid.node_labels())
    gD = np.zeros(grid.n_nodes, dtype=complex)
    flux = np.zeros(grid.n_nodes, dtype=complex)
    for label, fn in bc_data.items():
        m = labels == label
        if m.any():
            vals = np.asarray(fn(grid.xy[m]), dtype=complex)
            dm = m & (grid.cls == NodeClass.DIRICHLET)
            rm = m & (grid.cls == NodeClass.REFLECTING)
            gD[dm] = np.broadcast_to(vals, m.sum())[dm[m]]
            flux[rm] = np.broadcast_to(vals, m.sum())[rm[m]]
    row_data = np.zeros(grid.n_unknowns, dtype=complex)
    refl_rows = grid.row_is_reflecting
    row_data[refl_rows] = flux[grid.unknowns[refl_rows]]
    if source is not None:
        f = np.asarray(source(grid.xy[grid.unknowns[~refl_rows]]), dtype=complex)
        row_data[~refl_rows] = f
    return gD, row_data


def assemble_exit_time(grid: Grid):
    """System for the mean hitting time: Laplacian E = -1, E = 0 on Dirichlet, dE/dn = 0."""
    _require_dirichlet(grid)
    op = assemble_laplacian(grid)
    b = np.where(grid.row_is_reflecting, 0.0, -1.0)
    return op, b


def assemble_local_time(grid: Grid):
    """System for the expected boundary local time: Laplacian L = 0, L = 0, dL/dn = 1."""
    _require_dirichlet(grid)
    op = assemble_laplacian(grid)
    b = np.where(grid.row_is_reflecting, 1.0, 0.0)
    return op, b


def _require_dirichlet(grid: Grid):
    if not np.any(grid.cls == NodeClass.DIRICHLET):
        raise GridError("no absorbing boundary: the problem is not well posed")


def normal_derivative(grid: Grid, values_full: np.ndarray) -> np.ndarray:
    """Discrete du/dn at each reflecting node (same stencil as the assembled rows)."""
    out = np.zeros(len(grid.reflecting), dtype=np.result_type(values_full, float))
    for i, terms in enumerate(grid.dn_terms):
        out[i] = sum(c * values_full[nb] for nb, c in terms)
    return out
