"""Planar domains with holes and typed boundary segments.

Curves are stored analytically (polygons by vertex list, circles by centre and
radius) so that distances and normals are closed-form. Outer polygons are
oriented counter-clockwise and holes clockwise, which makes the right-hand
edge normal point out of the region in both cases.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np


class BoundaryKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    ROBIN = "robin"

    @property
    def reflecting(self) -> bool:
        return self is not BoundaryKind.DIRICHLET


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    """One piece of boundary: a straight edge or a full circle.

    ``coefficient`` is only meaningful for Robin segments and encodes the
    condition ``du/dn + i * coefficient * k * u = g``; the absorbing condition
    ``du/dn - i k u = 0`` therefore has ``coefficient=-1``.
    """

    shape: str  # "line" or "circle"
    kind: BoundaryKind
    data_label: str
    p0: tuple[float, float] = (0.0, 0.0)
    p1: tuple[float, float] = (0.0, 0.0)
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    orientation: int = 1  # +1 outer circle, -1 hole circle
    coefficient: float = 0.0
    name: str = ""

    def closest(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closest boundary points, distances and outward normals for ``pts`` (n, 2)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.shape == "line":
            a = np.asarray(self.p0)
            b = np.asarray(self.p1)
            ab = b - a
            L2 = float(ab @ ab)
            t = np.clip(((pts - a) @ ab) / L2, 0.0, 1.0)
            q = a + t[:, None] * ab
            d = np.hypot(*(pts - q).T)
            nrm = np.array([ab[1], -ab[0]]) / math.sqrt(L2)
            normals = np.broadcast_to(nrm, pts.shape).copy()
            return q, d, normals
        c = np.asarray(self.center)
        rel = pts - c
        r = np.hypot(*rel.T)
        safe = np.where(r > 0, r, 1.0)
        radial = np.where(r[:, None] > 0, rel / safe[:, None], np.array([1.0, 0.0]))
        q = c + self.radius * radial
        d = np.abs(r - self.radius)
        return q, d, self.orientation * radial

    def to_dict(self) -> dict:
        out = {"shape": self.shape, "kind": self.kind.value, "data_label": self.data_label,
               "name": self.name}
        if self.shape == "line":
            out.update(p0=list(self.p0), p1=list(self.p1))
        else:
            out.update(center=list(self.center), radius=self.radius, orientation=self.orientation)
        if self.kind is BoundaryKind.ROBIN:
            out["coefficient"] = self.coefficient
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        kw = dict(shape=d["shape"], kind=BoundaryKind(d["kind"]), data_label=d["data_label"],
                  name=d.get("name", ""), coefficient=float(d.get("coefficient", 0.0)))
        if d["shape"] == "line":
            kw.update(p0=tuple(d["p0"]), p1=tuple(d["p1"]))
        else:
            kw.update(center=tuple(d["center"]), radius=float(d["radius"]),
                      orientation=int(d["orientation"]))
        return cls(**kw)


@dataclass(frozen=True)
class Curve:
    """A closed curve: either a polygon or a circle, made of segments."""

    segments: tuple[Segment, ...]
    vertices: tuple[tuple[float, float], ...] = ()

    @property
    def is_circle(self) -> bool:
        return len(self.segments) == 1 and self.segments[0].shape == "circle"

    def inside(self, pts: np.ndarray) -> np.ndarray:
        """Strict interior of the curve (ignores orientation)."""
        pts = np.atleast_2d(pts)
        if self.is_circle:
            s = self.segments[0]
            return np.hypot(*(pts - np.asarray(s.center)).T) < s.radius
        # even-odd ray casting
        v = np.asarray(self.vertices)
        x, y = pts[:, 0], pts[:, 1]
        res = np.zeros(len(pts), dtype=bool)
        for (x0, y0), (x1, y1) in zip(v, np.roll(v, -1, axis=0)):
            cond = (y0 > y) != (y1 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            res ^= cond & (x < xint)
        return res

    def bbox(self) -> tuple[float, float, float, float]:
        if self.is_circle:
            s = self.segments[0]
            return (s.center[0] - s.radius, s.center[1] - s.radius,
                    s.center[0] + s.radius, s.center[1] + s.radius)
        v = np.asarray(self.vertices)
        return (*v.min(axis=0), *v.max(axis=0))


def polygon(vertices, kinds, labels, *, hole=False, coefficients=None, names=None) -> Curve:
    v = [tuple(map(float, p)) for p in vertices]
    area2 = sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(v, v[1:] + v[:1]))
    ccw = area2 > 0
    n = len(v)
    kinds = list(kinds) if not isinstance(kinds, BoundaryKind) else [kinds] * n
    labels = list(labels) if not isinstance(labels, str) else [labels] * n
    coefficients = list(coefficients) if coefficients is not None else [0.0] * n
    names = list(names) if names is not None else [""] * n
    edges = [(v[i], v[(i + 1) % n], kinds[i], labels[i], coefficients[i], names[i]) for i in range(n)]
    if ccw == hole:
        # reverse orientation so the right-hand normal points out of the region
        edges = [(b, a, kd, lb, cf, nm) for (a, b, kd, lb, cf, nm) in reversed(edges)]
        v = v[::-1]
    segs = tuple(Segment("line", kd, lb, p0=a, p1=b, coefficient=cf, name=nm)
                 for a, b, kd, lb, cf, nm in edges)
    return Curve(segs, tuple(v))


def circle(center, radius, kind, label, *, hole=False, coefficient=0.0, name="") -> Curve:
    seg = Segment("circle", kind, label, center=tuple(map(float, center)), radius=float(radius),
                  orientation=-1 if hole else 1, coefficient=coefficient, name=name)
    return Curve((seg,))


def rectangle(x0, x1, y0, y1, kinds, labels, *, hole=False, coefficients=None, names=None) -> Curve:
    """Rectangle with edges ordered bottom, right, top, left."""
    return polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], kinds, labels, hole=hole,
                   coefficients=coefficients, names=names or ["bottom", "right", "top", "left"])


@dataclass(frozen=True)
class Domain:
    outer: Curve
    holes: tuple[Curve, ...] = ()
    name: str = ""

    def __post_init__(self):
        for hole in self.holes:
            _check_strictly_inside(hole, self.outer)

    @property
    def segments(self) -> tuple[Segment, ...]:
        segs = list(self.outer.segments)
        for h in self.holes:
            segs.extend(h.segments)
        return tuple(segs)

    @property
    def bounding_box(self) -> tuple[float, float, float, float]:
        return self.outer.bbox()

    @property
    def has_dirichlet(self) -> bool:
        return any(s.kind is BoundaryKind.DIRICHLET for s in self.segments)

    @property
    def has_reflecting(self) -> bool:
        return any(s.kind.reflecting for s in self.segments)

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "outer": _curve_dict(self.outer),
            "holes": [_curve_dict(h) for h in self.holes],
            "segments": [s.to_dict() for s in self.segments],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Domain":
        d = json.loads(text)
        return cls(_curve_from_dict(d["outer"]), tuple(_curve_from_dict(h) for h in d["holes"]),
                   name=d.get("name", ""))


def _curve_dict(c: Curve) -> dict:
    return {"vertices": [list(p) for p in c.vertices], "segments": [s.to_dict() for s in c.segments]}


def _curve_from_dict(d: dict) -> Curve:
    return Curve(tuple(Segment.from_dict(s) for s in d["segments"]),
                 tuple(tuple(p) for p in d.get("vertices", [])))


def _check_strictly_inside(hole: Curve, outer: Curve) -> None:
    if hole.is_circle:
        s = hole.segments[0]
        t = np.linspace(0, 2 * np.pi, 721)
        pts = np.c_[s.center[0] + s.radius * np.cos(t), s.center[1] + s.radius * np.sin(t)]
    else:
        v = np.asarray(hole.vertices)
        t = np.linspace(0, 1, 50)[:-1, None]
        pts = np.concatenate([a + t * (b - a) for a, b in zip(v, np.roll(v, -1, axis=0))])
    if not outer.inside(pts).all():
        raise GeometryError("hole is not strictly inside the outer boundary")
    _, d, _ = _nearest(outer.segments, pts)
    if d.min() <= 0:
        raise GeometryError("hole touches the outer boundary")


def _nearest(segments, pts):
    best_d = np.full(len(pts), np.inf)
    best_i = np.zeros(len(pts), dtype=int)
    best_n = np.zeros((len(pts), 2))
    for i, s in enumerate(segments):
        _, d, n = s.closest(pts)
        better = d < best_d
        best_d = np.where(better, d, best_d)
        best_i = np.where(better, i, best_i)
        best_n[better] = n[better]
    return best_i, best_d, best_n


def contains(domain: Domain, point) -> np.ndarray | bool:
    """True for points in the open region (inside outer, outside every hole)."""
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    inside = domain.outer.inside(pts)
    for h in domain.holes:
        inside &= ~h.inside(pts)
    # points on a curve are not in the open region
    _, d, _ = _nearest(domain.segments, pts)
    inside &= d > 0
    return bool(inside[0]) if np.ndim(point) == 1 else inside


def signed_distance(domain: Domain, pts) -> np.ndarray:
    """Distance to the boundary, negative inside the region."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    _, d, _ = _nearest(domain.segments, pts)
    return np.where(contains(domain, pts), -d, d)


def nearest_boundary(domain: Domain, point, tie_tol: float = 1e-12):
    """Nearest segment, distance and outward unit normal.

    For a point that is equidistant from several segments (a polygon corner)
    the normal is the normalised average of the tied segment normals. Off a
    segment's span (beyond a corner), the normal follows the direction from
    the closest point, so reflecting across it still lands back inside.
    """
    p = np.asarray(point, dtype=float).reshape(1, 2)
    segs = domain.segments
    ds, ns, qs = [], [], []
    for s in segs:
        q, d, n = s.closest(p)
        ds.append(d[0])
        ns.append(n[0])
        qs.append(q[0])
    ds = np.array(ds)
    i = int(np.argmin(ds))
    dmin = ds[i]
    tied = np.flatnonzero(ds <= dmin + tie_tol)
    if len(tied) > 1:
        n = np.sum([ns[j] for j in tied], axis=0)
    else:
        n = ns[i].copy()
        s = segs[i]
        if s.shape == "line" and dmin > tie_tol:
            # beyond the span the closest point is a vertex
            if not _on_span(s, p[0]):
                direction = (p[0] - qs[i]) / dmin
                inside = contains(domain, p[0])
                n = -direction if inside else direction
    n = n / np.linalg.norm(n)
    return segs[i], float(dmin), n


def _on_span(s: Segment, p) -> bool:
    a, b = np.asarray(s.p0), np.asarray(s.p1)
    t = float((p - a) @ (b - a) / ((b - a) @ (b - a)))
    return 0.0 < t < 1.0


def nearest_segments(domain: Domain, pts):
    """Vectorised nearest-segment index, distance and normal (no corner averaging)."""
    return _nearest(domain.segments, np.atleast_2d(np.asarray(pts, dtype=float)))


# ---------------------------------------------------------------------------
# presets

D, N, R = BoundaryKind.DIRICHLET, BoundaryKind.NEUMANN, BoundaryKind.ROBIN

PLANE_WAVE = "plane-wave"  # u = -exp(-i k x1) on the scatterer
ZERO = "zero"


def _annulus(outer: Curve, hole: Curve, name: str) -> Domain:
    return Domain(outer, (hole,), name=name)


def shape1() -> Domain:
    """Square [-0.3, 0.3]^2 with a circular hole of radius 0.15 at the origin."""
    outer = rectangle(-0.3, 0.3, -0.3, 0.3, R, ZERO, coefficients=[-1.0] * 4)
    hole = circle((0.0, 0.0), 0.15, D, PLANE_WAVE, hole=True, name="hole")
    return _annulus(outer, hole, "shape1")


def shape2(hole_center=(0.8, 0.5), half_diagonal: float = 0.075) -> Domain:
    """Disk of radius 0.45 at (0.8, 0.5) with a diamond hole of diagonal 0.15."""
    cx, cy = hole_center
    a = half_diagonal
    outer = circle((0.8, 0.5), 0.45, R, ZERO, coefficient=-1.0, name="outer")
    hole = polygon([(cx + a, cy), (cx, cy + a), (cx - a, cy), (cx, cy - a)], D, PLANE_WAVE,
                   hole=True, names=["hole"] * 4)
    return _annulus(outer, hole, "shape2")


def shape3() -> Domain:
    """Rectangle [-0.5, 0.5] x [-0.8, 0.8] with a slot hole [-0.05, 0.05] x [-0.4, 0.4]."""
    outer = rectangle(-0.5, 0.5, -0.8, 0.8, R, ZERO, coefficients=[-1.0] * 4)
    hole = rectangle(-0.05, 0.05, -0.4, 0.4, D, PLANE_WAVE, hole=True)
    return _annulus(outer, hole, "shape3")


def square_square_hole() -> Domain:
    """Square [-0.5, 0.5]^2 with a square hole [-0.15, 0.15]^2."""
    outer = rectangle(-0.5, 0.5, -0.5, 0.5, R, ZERO, coefficients=[-1.0] * 4)
    hole = rectangle(-0.15, 0.15, -0.15, 0.15, D, PLANE_WAVE, hole=True)
    return _annulus(outer, hole, "square_square_hole")


def cavity(x0=0.0, x1=1.0, y0=0.0, y1=1.0, neumann_edges=("right",)) -> Domain:
    """Rectangular cavity, Dirichlet walls except the listed Neumann edges."""
    names = ["bottom", "right", "top", "left"]
    kinds = [N if nm in neumann_edges else D for nm in names]
    labels = [ZERO if k is N else "cavity-dirichlet" for k in kinds]
    return Domain(rectangle(x0, x1, y0, y1, kinds, labels), name="cavity")


def waveguide(L_wid: float = 0.5) -> Domain:
    """Rectangle [0, 1] x [0, L_wid]: Dirichlet top/bottom, Robin inlet/outlet."""
    if not 0 < L_wid:
        raise GeometryError("L_wid must be positive")
    outer = rectangle(0.0, 1.0, 0.0, L_wid, [D, R, D, R],
                      [ZERO, ZERO, ZERO, "waveguide-inlet"], coefficients=[0.0, -1.0, 0.0, 1.0])
    return Domain(outer, name=f"waveguide({L_wid:g})")


def disk(radius: float = 1.0, center=(0.0, 0.0)) -> Domain:
    """All-Dirichlet disk (analytic exit time (R^2 - r^2)/4)."""
    return Domain(circle(center, radius, D, ZERO), name="disk")


def square(side: float = 1.0, center=(0.0, 0.0), kind: BoundaryKind = D) -> Domain:
    cx, cy = center
    s = side / 2
    return Domain(rectangle(cx - s, cx + s, cy - s, cy + s, kind, ZERO), name="square")


def scaled(domain: Domain, factor: float) -> Domain:
    """Uniform scaling about the origin."""
    def seg(s: Segment) -> Segment:
        return Segment(s.shape, s.kind, s.data_label,
                       p0=(s.p0[0] * factor, s.p0[1] * factor), p1=(s.p1[0] * factor, s.p1[1] * factor),
                       center=(s.center[0] * factor, s.center[1] * factor), radius=s.radius * factor,
                       orientation=s.orientation, coefficient=s.coefficient, name=s.name)

    def curve(c: Curve) -> Curve:
        return Curve(tuple(seg(s) for s in c.segments),
                     tuple((x * factor, y * factor) for x, y in c.vertices))

    return Domain(curve(domain.outer), tuple(curve(h) for h in domain.holes),
                  name=f"{domain.name}x{factor:g}")


PRESETS = {
    "shape1": shape1,
    "shape2": shape2,
    "shape3": shape3,
    "square_square_hole": square_square_hole,
    "cavity": cavity,
    "waveguide": waveguide,
    "disk": disk,
}


def make_shape(preset: str, **params) -> Domain:
    key = str(preset).lower().replace("-", "_")
    aliases = {"1": "shape1", "2": "shape2", "3": "shape3", "squaresquarehole": "square_square_hole"}
    key = aliases.get(key, key)
    if key not in PRESETS:
        raise GeometryError(f"unknown preset {preset!r}")
    return PRESETS[key](**params)
