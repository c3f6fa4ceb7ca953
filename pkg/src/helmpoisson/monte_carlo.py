"""Reflected diffusion paths: exit time, boundary local time, Feynman-Kac point estimates.

The process is ``dY = sqrt(2) dW`` inside the domain, killed on the absorbing
(Dirichlet) boundary and specularly reflected on the rest. The local time
``xi`` is the accumulated normal push, so that ``E[xi]`` solves the harmonic
problem with unit outward flux on the reflecting boundary. A specular
reflection of a point at depth ``d`` moves it by ``2d`` along the normal, and
that is what ``xi`` records; the projection rule moves it by ``d``.

Every path owns a Philox stream keyed by ``(seed, path_index)``, so an outcome
does not depend on which other paths were run, or in which order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .geometry import Domain, contains

_LINE, _CIRCLE = 0, 1
_EXITED, _CAPPED, _STUCK, _OVERFLOW = 1, 2, 3, 4
_Z99 = 2.5758293035489004  # two-sided 99% normal quantile


class StuckPath(RuntimeError):
    """Reflection failed to bring the walker back inside."""


class TooManyDiscarded(RuntimeError):
    pass


class ExponentOverflow(OverflowError):
    pass


@dataclass(frozen=True)
class PathConfig:
    dt: float = 1e-5
    n_paths: int = 10_000
    seed: int = 0
    max_time: float | None = None  # None: 50 times a coarse FD estimate of max E[tau]
    reflection: str = "specular"  # or "projection"
    max_reflections: int = 8
    all_absorbing: bool = False
    max_steps: int = 50_000_000
    chunk: int = 4096  # normals drawn per refill
    bridge: bool = True  # Brownian-bridge test for exits between two inside points

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.reflection not in ("specular", "projection"):
            raise ValueError(f"unknown reflection rule {self.reflection!r}")
        if self.max_time is not None:
            if not self.max_time > 0:
                raise ValueError("max_time must be positive")
            if self.max_time / self.dt > self.max_steps:
                raise ValueError(f"max_time/dt exceeds {self.max_steps} steps")


@dataclass(frozen=True)
class PathOutcome:
    tau: float
    xi: float
    exit_segment: int  # index into domain.segments, -1 when not absorbed
    exit_point: tuple[float, float]
    capped: bool = False
    stuck: bool = False
    steps: int = 0
    # Feynman-Kac accumulators
    source_integral: float = 0.0  # int f Pi dt
    weight: float = 1.0  # Pi at the exit time
    flux_integral: float = 0.0  # int g Pi dxi

    @property
    def discarded(self) -> bool:
        return self.capped or self.stuck


# ---------------------------------------------------------------------------
# packed geometry for the compiled kernel

@dataclass(frozen=True, eq=False)
class _Packed:
    seg_type: np.ndarray
    seg_data: np.ndarray  # line: ax ay bx by; circle: cx cy r orientation
    absorbing: np.ndarray
    curve_circle: np.ndarray  # per curve: 1 if circle
    curve_data: np.ndarray  # circle curves: cx cy r
    curve_start: np.ndarray
    curve_len: np.ndarray
    vertices: np.ndarray
    n_holes: int


def _pack(domain: Domain, all_absorbing: bool) -> _Packed:
    segs = domain.segments
    seg_type = np.array([_LINE if s.shape == "line" else _CIRCLE for s in segs], dtype=np.int64)
    seg_data = np.array([(*s.p0, *s.p1) if s.shape == "line" else (*s.center, s.radius, s.orientation)
                         for s in segs], dtype=float)
    absorbing = np.array([all_absorbing or not s.kind.reflecting for s in segs])
    curves = (domain.outer, *domain.holes)
    verts, starts, lens, circ, cdata = [], [], [], [], []
    for c in curves:
        starts.append(len(verts))
        lens.append(len(c.vertices))
        verts.extend(c.vertices)
        circ.append(int(c.is_circle))
        s = c.segments[0]
        cdata.append((*s.center, s.radius) if c.is_circle else (0.0, 0.0, 0.0))
    return _Packed(seg_type, seg_data, absorbing, np.array(circ, dtype=np.int64),
                   np.array(cdata, dtype=float), np.array(starts, dtype=np.int64),
                   np.array(lens, dtype=np.int64), np.array(verts, dtype=float).reshape(-1, 2),
                   len(domain.holes))


@numba.njit(cache=True)
def _inside_curve(x, y, c, circ, cdata, start, length, verts):
    if circ[c]:
        dx, dy = x - cdata[c, 0], y - cdata[c, 1]
        return dx * dx + dy * dy < cdata[c, 2] * cdata[c, 2]
    res = False
    s = start[c]
    e = s + length[c]
    x0, y0 = verts[e - 1, 0], verts[e - 1, 1]
    for j in range(s, e):
        x1, y1 = verts[j, 0], verts[j, 1]
        if (y0 > y) != (y1 > y):
            if x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
                res = not res
        x0, y0 = x1, y1
    return res


@numba.njit(cache=True)
def _inside(x, y, circ, cdata, start, length, verts, n_holes):
    if not _inside_curve(x, y, 0, circ, cdata, start, length, verts):
        return False
    for c in range(1, n_holes + 1):
        if _inside_curve(x, y, c, circ, cdata, start, length, verts):
            return False
    return True


@numba.njit(cache=True)
def _nearest(x, y, seg_type, seg_data, absorbing, inside):
    """Nearest segment, distance and outward normal; ties go to absorbing segments."""
    best, bd, bnx, bny = -1, np.inf, 0.0, 0.0
    for i in range(seg_type.shape[0]):
        if seg_type[i] == 0:
            ax, ay, bx, by = seg_data[i, 0], seg_data[i, 1], seg_data[i, 2], seg_data[i, 3]
            ex, ey = bx - ax, by - ay
            L2 = ex * ex + ey * ey
            t = ((x - ax) * ex + (y - ay) * ey) / L2
            L = math.sqrt(L2)
            if t <= 0.0 or t >= 1.0:
                qx, qy = (ax, ay) if t <= 0.0 else (bx, by)
                d = math.hypot(x - qx, y - qy)
                if d > 0.0:
                    # beyond the span: the normal follows the vertex direction
                    sgn = -1.0 if inside else 1.0
                    nx, ny = sgn * (x - qx) / d, sgn * (y - qy) / d
                else:
                    nx, ny = ey / L, -ex / L
            else:
                qx, qy = ax + t * ex, ay + t * ey
                d = math.hypot(x - qx, y - qy)
                nx, ny = ey / L, -ex / L
        else:
            cx, cy, r, o = seg_data[i, 0], seg_data[i, 1], seg_data[i, 2], seg_data[i, 3]
            rr = math.hypot(x - cx, y - cy)
            d = abs(rr - r)
            if rr > 0.0:
                nx, ny = o * (x - cx) / rr, o * (y - cy) / rr
            else:
                nx, ny = o, 0.0
        if d < bd - 1e-15 or (abs(d - bd) <= 1e-15 and absorbing[i] and not absorbing[best]):
            best, bd, bnx, bny = i, d, nx, ny
    return best, bd, bnx, bny


@numba.njit(cache=True)
def _absorbing_distance(x, y, seg_type, seg_data, absorbing):
    """Distance to the absorbing part, with the index and closest point of the nearest piece."""
    best, bd, bqx, bqy = -1, np.inf, x, y
    for i in range(seg_type.shape[0]):
        if not absorbing[i]:
            continue
        if seg_type[i] == 0:
            ax, ay, bx, by = seg_data[i, 0], seg_data[i, 1], seg_data[i, 2], seg_data[i, 3]
            ex, ey = bx - ax, by - ay
            t = min(max(((x - ax) * ex + (y - ay) * ey) / (ex * ex + ey * ey), 0.0), 1.0)
            qx, qy = ax + t * ex, ay + t * ey
        else:
            cx, cy, r = seg_data[i, 0], seg_data[i, 1], seg_data[i, 2]
            rr = math.hypot(x - cx, y - cy)
            if rr > 0.0:
                qx, qy = cx + r * (x - cx) / rr, cy + r * (y - cy) / rr
            else:
                qx, qy = cx + r, cy
        d = math.hypot(x - qx, y - qy)
        if d < bd:
            best, bd, bqx, bqy = i, d, qx, qy
    return best, bd, bqx, bqy


@numba.njit(cache=True)
def _walk(rng, x, y, dt, max_steps, push, max_refl, chunk, bridge,
          seg_type, seg_data, absorbing, circ, cdata, start, length, verts, n_holes,
          c_coef, phi_coef, f_val, g_val):
    """One path. Returns (status, t, xi, seg, x, y, steps, int_f, log_weight, int_g)."""
    sig = math.sqrt(2.0 * dt)
    near = 6.0 * sig  # beyond this a bridge crossing has probability below exp(-72)
    dA_b = 0.0  # distance from the safe-ball centre to the absorbing part
    t = 0.0
    xi = 0.0
    logw = 0.0
    int_f = 0.0
    int_g = 0.0
    bx, by, r2 = x, y, 0.0  # centre and squared radius of a ball known to lie inside
    n_draw = 64
    z = rng.standard_normal(n_draw)
    k = 0
    for step in range(max_steps):
        if k == n_draw:
            # grow the refill geometrically so short paths waste few draws
            n_draw = min(2 * n_draw, 2 * chunk)
            z = rng.standard_normal(n_draw)
            k = 0
        xn = x + sig * z[k]
        yn = y + sig * z[k + 1]
        k += 2
        # inside the last safe ball there is nothing to test
        ddx, ddy = xn - bx, yn - by
        if ddx * ddx + ddy * ddy < r2:
            inside = True
        else:
            inside = _inside(xn, yn, circ, cdata, start, length, verts, n_holes)
            if inside:
                _, dn, _, _ = _nearest(xn, yn, seg_type, seg_data, absorbing, True)
                bx, by, r2 = xn, yn, dn * dn
                if bridge:
                    _, dA_b, _, _ = _absorbing_distance(xn, yn, seg_type, seg_data, absorbing)
                ddx, ddy = 0.0, 0.0
        if inside and bridge and dA_b - math.sqrt(ddx * ddx + ddy * ddy) < near:
            # both endpoints inside, but the bridge between them may touch the absorbing part
            _, d0, _, _ = _absorbing_distance(x, y, seg_type, seg_data, absorbing)
            i1, d1, qx, qy = _absorbing_distance(xn, yn, seg_type, seg_data, absorbing)
            if rng.random() < math.exp(-d0 * d1 / dt):
                int_f += f_val * math.exp(logw) * 0.5 * dt
                logw += c_coef * 0.5 * dt
                return _EXITED, t + 0.5 * dt, xi, i1, qx, qy, step + 1, int_f, logw, int_g
        if inside:
            int_f += f_val * math.exp(logw) * dt
            logw += c_coef * dt
            t += dt
            x, y = xn, yn
            continue
        ok = False
        for attempt in range(max_refl):
            i, d, nx, ny = _nearest(xn, yn, seg_type, seg_data, absorbing, False)
            if absorbing[i]:
                _, d0, _, _ = _nearest(x, y, seg_type, seg_data, absorbing, True)
                frac = d0 / (d0 + d) if d0 + d > 0.0 else 0.0
                int_f += f_val * math.exp(logw) * frac * dt
                logw += c_coef * frac * dt
                t += frac * dt
                return _EXITED, t, xi, i, x + frac * (xn - x), y + frac * (yn - y), step + 1, int_f, logw, int_g
            dxi = push * d
            xn -= dxi * nx
            yn -= dxi * ny
            int_g += g_val * math.exp(logw) * dxi
            logw += phi_coef * dxi
            xi += dxi
            if logw > 700.0:
                return _OVERFLOW, t, xi, -1, xn, yn, step + 1, int_f, logw, int_g
            if _inside(xn, yn, circ, cdata, start, length, verts, n_holes):
                ok = True
                break
        if not ok:
            return _STUCK, t, xi, -1, xn, yn, step + 1, int_f, logw, int_g
        int_f += f_val * math.exp(logw) * dt
        logw += c_coef * dt
        t += dt
        x, y = xn, yn
        if logw > 700.0:
            return _OVERFLOW, t, xi, -1, x, y, step + 1, int_f, logw, int_g
    return _CAPPED, t, xi, -1, x, y, max_steps, int_f, logw, int_g


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, path_index], dtype=np.uint64)))


def default_max_time(domain: Domain) -> float:
    """50 times max E[tau] from a coarse FD solve (or a disc bound without absorbing part)."""
    from .discretization import build_grid
    from .thresholds import exit_time_field

    x0, y0, x1, y1 = domain.bounding_box
    size = max(x1 - x0, y1 - y0)
    if not domain.has_dirichlet:
        raise ValueError("no absorbing boundary: paths never terminate")
    E = exit_time_field(build_grid(domain, size / 40))
    return 50.0 * float(E.max())


def _start_outcome(domain: Domain, packed: _Packed, start, tol: float) -> PathOutcome | None:
    """Outcome for a start on the absorbing boundary, None for an interior start."""
    x, y = float(start[0]), float(start[1])
    i, d, _, _ = _nearest(x, y, packed.seg_type, packed.seg_data, packed.absorbing, False)
    if d <= tol:
        if packed.absorbing[i]:
            return PathOutcome(0.0, 0.0, int(i), (x, y))
        return None  # on the reflecting part: a legitimate start
    if not contains(domain, np.array([x, y])):
        raise ValueError(f"start point {tuple(start)} is not inside the domain")
    return None


def _walk_one(packed: _Packed, start, cfg: PathConfig, path_index: int, max_steps: int,
              coefficients, data) -> PathOutcome:
    p = packed
    push = 2.0 if cfg.reflection == "specular" else 1.0
    status, t, xi, seg, ex, ey, steps, int_f, logw, int_g = _walk(
        path_rng(cfg.seed, path_index), float(start[0]), float(start[1]), cfg.dt, max_steps, push,
        cfg.max_reflections, cfg.chunk, cfg.bridge, p.seg_type, p.seg_data, p.absorbing, p.curve_circle,
        p.curve_data, p.curve_start, p.curve_len, p.vertices, p.n_holes,
        float(coefficients[0]), float(coefficients[1]), float(data[0]), float(data[1]))
    if status == _OVERFLOW:
        raise ExponentOverflow(f"Feynman-Kac exponent exceeded 700 on path {path_index}")
    return PathOutcome(float(t), float(xi), int(seg), (float(ex), float(ey)),
                       capped=status == _CAPPED, stuck=status == _STUCK, steps=int(steps),
                       source_integral=float(int_f), weight=math.exp(logw), flux_integral=float(int_g))


def _max_steps(domain: Domain, cfg: PathConfig) -> int:
    max_time = cfg.max_time or default_max_time(domain)
    return min(int(math.ceil(max_time / cfg.dt)), cfg.max_steps)


def simulate_path(domain: Domain, start, cfg: PathConfig, path_index: int, *,
                  coefficients: tuple[float, float] = (0.0, 0.0), data: tuple[float, float] = (0.0, 0.0),
                  on_boundary_tol: float = 1e-12) -> PathOutcome:
    """Simulate one path from ``start`` with the stream of ``(cfg.seed, path_index)``.

    ``coefficients`` are the constant (c, phi) of the Feynman-Kac weight and
    ``data`` the constant (f, g) of its integrals; both default to zero.
    A start within ``on_boundary_tol`` of the absorbing boundary exits at once.
    """
    packed = _pack(domain, cfg.all_absorbing)
    early = _start_outcome(domain, packed, start, on_boundary_tol)
    if early is not None:
        return early
    return _walk_one(packed, start, cfg, path_index, _max_steps(domain, cfg), coefficients, data)


def _run_paths(domain, point, cfg, coefficients=(0.0, 0.0), data=(0.0, 0.0),
               on_boundary_tol: float = 1e-12) -> list[PathOutcome]:
    packed = _pack(domain, cfg.all_absorbing)
    early = _start_outcome(domain, packed, point, on_boundary_tol)
    if early is not None:
        return [early] * cfg.n_paths
    max_steps = _max_steps(domain, cfg)
    return [_walk_one(packed, point, cfg, j, max_steps, coefficients, data) for j in range(cfg.n_paths)]


# ---------------------------------------------------------------------------
# estimators

@dataclass(frozen=True)
class Estimate:
    mean: float
    halfwidth: float  # 99% normal-approximation
    n: int

    def contains(self, value: float, scale: float = 1.0) -> bool:
        return abs(value - self.mean) <= scale * self.halfwidth


def _estimate(samples) -> Estimate:
    a = np.asarray(samples, dtype=float)
    n = len(a)
    if n == 0:
        return Estimate(math.nan, math.nan, 0)
    mean = math.fsum(a) / n
    var = math.fsum((a - mean) ** 2) / (n - 1) if n > 1 else math.nan
    return Estimate(mean, _Z99 * math.sqrt(var / n) if n > 1 else math.inf, n)


@dataclass
class PathStats:
    point: tuple[float, float]
    n_paths: int
    dt: float
    tau: Estimate
    xi: Estimate
    hit_probabilities: dict[str, float]
    discarded: int
    capped: int
    stuck: int
    absorbing_hit_probability: float  # exits through the original Dirichlet part
    outcomes: list[PathOutcome] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        return json.dumps({
            "point": list(self.point), "n_paths": self.n_paths, "dt": self.dt,
            "mean": {"tau": self.tau.mean, "xi": self.xi.mean},
            "ci99": {"tau": self.tau.halfwidth, "xi": self.xi.halfwidth},
            "hit_probabilities": self.hit_probabilities,
            "discarded": self.discarded}, indent=2)


def _segment_names(domain: Domain) -> list[str]:
    return [s.name or f"{s.kind.value}:{i}" for i, s in enumerate(domain.segments)]


def estimate_stats(domain: Domain, point, cfg: PathConfig, *, keep_outcomes: bool = False,
                   max_discard_fraction: float = 0.01) -> PathStats:
    """Mean exit time and local time with 99% confidence halfwidths, plus exit distribution."""
    outs = _run_paths(domain, point, cfg)
    good = [o for o in outs if not o.discarded]
    capped = sum(o.capped for o in outs)
    stuck = sum(o.stuck for o in outs)
    discarded = capped + stuck
    if discarded > max_discard_fraction * len(outs):
        raise TooManyDiscarded(f"{discarded} of {len(outs)} paths discarded "
                               f"({capped} time-capped, {stuck} stuck)")
    names = _segment_names(domain)
    counts = np.bincount([o.exit_segment for o in good], minlength=len(names)) if good else np.zeros(len(names))
    n = max(len(good), 1)
    hits: dict[str, float] = {}
    for name, c in zip(names, counts):
        if c > 0:
            hits[name] = hits.get(name, 0.0) + float(c) / n
    dirichlet = [i for i, s in enumerate(domain.segments) if not s.kind.reflecting]
    p_dir = float(sum(counts[i] for i in dirichlet)) / n
    return PathStats((float(point[0]), float(point[1])), cfg.n_paths, cfg.dt,
                     _estimate([o.tau for o in good]), _estimate([o.xi for o in good]),
                     hits, discarded, capped, stuck, p_dir, outs if keep_outcomes else [])


def feynman_kac_point(domain: Domain, point, coefficients: dict, data: dict, cfg: PathConfig) -> Estimate:
    """Pointwise estimate of the mixed problem

        Laplacian u + c u = f in the domain,
        u = phi_bc on the absorbing part,
        du/dn - phi u = g on the reflecting part (outward normal),

    as the path average of ``-int f Pi dt + phi_bc(Y_tau) Pi_tau + int g Pi dxi``
    with ``Pi = exp(int c dt + phi dxi)``. ``c``, ``phi``, ``f`` and ``g`` are
    constants; ``phi_bc`` may be a constant or a vectorised function of the
    exit points.
    """
    c = float(coefficients.get("c", 0.0))
    phi = float(coefficients.get("phi", 0.0))
    if c > 0:
        raise ValueError("c must be <= 0 for a bounded weight")
    f = float(data.get("f", 0.0))
    g = float(data.get("g", 0.0))
    bc = data.get("phi_bc", 0.0)
    outs = [o for o in _run_paths(domain, point, cfg, (c, phi), (f, g)) if not o.discarded]
    if len(outs) < (1 - 0.01) * cfg.n_paths:
        raise TooManyDiscarded(f"{cfg.n_paths - len(outs)} of {cfg.n_paths} paths discarded")
    exits = np.array([o.exit_point for o in outs], dtype=float).reshape(-1, 2)
    bc_vals = np.asarray(bc(exits), dtype=float) if callable(bc) else np.full(len(outs), float(bc))
    scores = (-np.array([o.source_integral for o in outs])
              + bc_vals * np.array([o.weight for o in outs])
              + np.array([o.flux_integral for o in outs]))
    return _estimate(scores)


def estimate_to_json(point, cfg: PathConfig, est: Estimate, discarded: int = 0) -> str:
    return json.dumps({"point": [float(point[0]), float(point[1])], "n_paths": cfg.n_paths,
                       "dt": cfg.dt, "mean": est.mean, "ci99": est.halfwidth,
                       "discarded": discarded, "config": asdict(cfg)}, indent=2)
