"""Experiment runners behind the command line: tables, sweeps and decay series.

Each experiment takes an :class:`ExperimentConfig`, writes CSV/JSON/SVG files
into ``config.out`` and returns a summary dict. All files carry a metadata
header (config hash, seed, h, tool version, and a timestamp unless the run is
deterministic).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .discretization import Grid, NodeClass, build_grid
from .geometry import Domain, make_shape
from .iteration import IterationConfig, Scheme, Verdict, reference_solution, run
from .monte_carlo import PathConfig, estimate_stats
from .spectral import crossing, spectral_radius_sweep, sweep_csv
from .svg import Series, line_plot
from .thresholds import (k_star_annular, local_time_field, exit_time_field, threshold_report,
                         waveguide_feasibility)

EXPERIMENTS = ("thresholds", "iterate", "reference", "spectral_sweep", "mc_validate", "table1",
               "fig4", "fig5", "appendixA", "appendixB")

# wavenumbers tested per shape in the convergence table
DEFAULT_TESTED_K = {"shape1": (1.50, 1.93, 1.94, 2.90),
                    "shape2": (0.70, 0.95, 0.96, 1.12),
                    "shape3": (0.50, 0.72, 0.73, 1.07)}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    shape: str = "1"
    preset: str | None = None  # overrides shape
    shapes: list[str] = field(default_factory=lambda: ["1", "2", "3"])
    h: float | None = None
    k: float | None = None
    k_list: list[float] | None = None
    alpha: float | None = None
    alpha_policy: str = "k2"
    N: int = 30
    p: float = 0.0
    scheme: str = "annular"
    m: int = 1
    L_wid: float = 0.5
    paths: int = 10_000
    dt: float | None = None
    seed: int = 0
    probes: int = 5
    out: str = "out"
    deterministic: bool = False

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out")
        d.pop("deterministic")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def domain(self, shape: str | None = None) -> Domain:
        if self.experiment == "appendixB" or (self.preset or "").lower() == "waveguide":
            return make_shape("waveguide", L_wid=self.L_wid)
        return make_shape(self.preset or shape or self.shape)

    def alpha_for(self, k: float) -> float | None:
        return self.alpha if self.alpha_policy == "fixed" else None

    def validate(self) -> None:
        """Check everything that can be checked before any compute starts."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.h is not None and not self.h > 0:
            raise ConfigError("h must be positive")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if self.p < 0:
            raise ConfigError("p must be >= 0")
        if self.alpha_policy not in ("k2", "fixed"):
            raise ConfigError("alpha policy must be 'k2' or 'fixed'")
        if self.alpha is not None:
            self.alpha_policy = "fixed"
            for k in self.wavenumbers():
                if self.alpha < k * k:
                    raise ConfigError(f"alpha={self.alpha} < k^2 for k={k}")
        if any(k < 0 for k in self.wavenumbers()):
            raise ConfigError("wavenumbers must be non-negative")
        if self.paths < 1:
            raise ConfigError("paths must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.experiment in ("iterate", "reference") and self.k is None:
            raise ConfigError(f"{self.experiment} needs --k")
        Scheme(self.scheme)
        for s in (self.shapes if self.experiment in ("table1", "fig5", "thresholds", "mc_validate")
                  else [self.shape]):
            self.domain(s)

    def wavenumbers(self) -> list[float]:
        if self.k_list is not None:
            return list(self.k_list)
        return [self.k] if self.k is not None else []


# ---------------------------------------------------------------------------
# output helpers

class Writer:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def meta(self, h=None) -> dict:
        m = {"tool": "helmpoisson", "version": __version__, "experiment": self.cfg.experiment,
             "config_hash": self.cfg.config_hash(), "seed": self.cfg.seed,
             "h": h if h is not None else self.cfg.h}
        if not self.cfg.deterministic:
            m["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        return m

    def csv(self, name: str, body: str, h=None) -> Path:
        header = "".join(f"# {k}={v}\n" for k, v in self.meta(h).items())
        return self._write(name, header + body)

    def json(self, name: str, payload: dict, h=None) -> Path:
        return self._write(name, json.dumps({"metadata": self.meta(h), **payload}, indent=2,
                                            default=_jsonable) + "\n")

    def svg(self, name: str, text: str) -> Path:
        return self._write(name, text)

    def comment(self, h=None) -> str:
        return " ".join(f"{k}={v}" for k, v in self.meta(h).items())

    def _write(self, name: str, text: str) -> Path:
        path = self.dir / name
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        self.files.append(str(path))
        return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Verdict):
        return o.value
    raise TypeError(type(o).__name__)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _label(v: Verdict) -> str:
    return "converges" if v.converges else "diverges"


def _shape_key(domain: Domain) -> str:
    return domain.name or "domain"


# ---------------------------------------------------------------------------
# experiments

def exp_thresholds(cfg: ExperimentConfig, w: Writer) -> dict:
    h = cfg.h or 0.01
    rows = ["shape,h,sup_E,sup_L,k_star"]
    summary = {}
    for s in cfg.shapes:
        dom = cfg.domain(s)
        grid = build_grid(dom, h)
        rep = threshold_report(grid)
        name = _shape_key(dom)
        rows.append(f"{name},{h:g},{_fmt(rep.sup_E)},{_fmt(rep.sup_L)},{_fmt(rep.k_star)}")
        fields = ["x,y,class,E,L,khat"]
        names = {0: "interior", 1: "dirichlet", 2: "reflecting"}
        for (x, y), c, e, l, kh in zip(grid.xy, grid.cls, rep.E_field, rep.L_field, rep.khat_field):
            fields.append(f"{x:.12g},{y:.12g},{names[int(c)]},{_fmt(e)},{_fmt(l)},{_fmt(kh)}")
        w.csv(f"fields_{name}.csv", "\n".join(fields) + "\n", h)
        w.json(f"thresholds_{name}.json", json.loads(rep.to_json()), h)
        summary[name] = {"sup_E": rep.sup_E, "sup_L": rep.sup_L, "k_star": rep.k_star}
    w.csv("thresholds.csv", "\n".join(rows) + "\n", h)
    return summary


def _iteration_config(cfg: ExperimentConfig, k: float, scheme: str | None = None, **kw) -> IterationConfig:
    return IterationConfig(Scheme(scheme or cfg.scheme), k, alpha=cfg.alpha_for(k),
                           p=cfg.p, N=cfg.N, m=cfg.m, **kw)


def exp_iterate(cfg: ExperimentConfig, w: Writer) -> dict:
    h = cfg.h or 0.01
    grid = build_grid(cfg.domain(), h)
    icfg = _iteration_config(cfg, cfg.k)
    ref = reference_solution(grid, icfg)
    tr = run(grid, icfg, reference=ref)
    w.csv("trace.csv", tr.to_csv(), h)
    for n in (0, 5, 10):
        if n < tr.n_terms:
            body = ["x,y,v,w"] + [f"{x:.12g},{y:.12g},{_fmt(a)},{_fmt(b)}" for (x, y), a, b
                                  in zip(grid.xy, tr.iterates_v[n], tr.iterates_w[n])]
            w.csv(f"iterate_n{n}.csv", "\n".join(body) + "\n", h)
    diff = np.abs(tr.sum_v - ref.real)
    body = ["x,y,sum_v,sum_w,ref_re,ref_im,abs_diff_re"] + [
        f"{x:.12g},{y:.12g},{_fmt(a)},{_fmt(b)},{_fmt(c)},{_fmt(d)},{_fmt(e)}"
        for (x, y), a, b, c, d, e in zip(grid.xy, tr.sum_v, tr.sum_w, ref.real, ref.imag, diff)]
    w.csv("sum.csv", "\n".join(body) + "\n", h)
    summary = {"k": cfg.k, "alpha": icfg.alpha, "N": cfg.N, "verdict": tr.verdict.value,
               "result": _label(tr.verdict), "ratio": tr.ratio, "terms": tr.n_terms,
               "error": tr.error_re[-1], "error_im": tr.error_im[-1]}
    w.json("iterate.json", summary, h)
    w.svg("decay.svg", line_plot([Series("sup|v_n| + sup|w_n|", tuple(range(tr.n_terms)), tuple(tr.sup_sum))],
                                 title=f"{_shape_key(grid.domain)}, k={cfg.k:g}", xlabel="n",
                                 ylabel="sup norm", logy=True, comment=w.comment(h)))
    return summary


def exp_reference(cfg: ExperimentConfig, w: Writer) -> dict:
    h = cfg.h or 0.01
    grid = build_grid(cfg.domain(), h)
    u = reference_solution(grid, _iteration_config(cfg, cfg.k))
    body = ["x,y,re,im"] + [f"{x:.12g},{y:.12g},{_fmt(a)},{_fmt(b)}" for (x, y), a, b in zip(grid.xy, u.real, u.imag)]
    w.csv("reference.csv", "\n".join(body) + "\n", h)
    return {"k": cfg.k, "sup_abs": float(np.max(np.abs(u)))}


def _k_star_for(grid: Grid) -> float:
    E, L = exit_time_field(grid), local_time_field(grid)
    return k_star_annular(E, L, mask=grid.cls != NodeClass.DIRICHLET)[0]


def exp_spectral_sweep(cfg: ExperimentConfig, w: Writer, hs=None) -> dict:
    preset = cfg.preset or "square_square_hole"
    dom = make_shape(preset)
    ks = cfg.k_list or [round(0.1 + 0.05 * i, 10) for i in range(39)]
    hs = hs or [cfg.h or 0.1]
    series, summary = [], {}
    for h in hs:
        grid = build_grid(dom, h)
        pts = spectral_radius_sweep(grid, ks, seed=cfg.seed)
        tag = f"h{h:g}"
        w.csv(f"sweep_{tag}.csv", sweep_csv(pts), h)
        series.append(Series(f"rho, h={h:g}", tuple(p.k for p in pts), tuple(p.rho for p in pts)))
        summary[tag] = {"crossing": crossing(pts), "k_star": _k_star_for(grid),
                        "non_converged_k": [p.k for p in pts if not p.converged]}
    w.svg("spectral_radius.svg", line_plot(series, title=f"spectral radius of G, {preset}", xlabel="k",
                                           ylabel="rho(G)", hline=1.0, comment=w.comment()))
    w.json("spectral.json", summary)
    return summary


def exp_fig4(cfg: ExperimentConfig, w: Writer) -> dict:
    return exp_spectral_sweep(cfg, w, hs=[cfg.h] if cfg.h else [0.1, 0.05])


def probe_nodes(grid: Grid, E: np.ndarray, n: int = 5) -> np.ndarray:
    """Interior nodes at evenly spaced quantiles of E, ending at the interior maximum."""
    idx = np.flatnonzero(grid.cls == NodeClass.INTERIOR)
    order = idx[np.argsort(E[idx], kind="stable")]
    qs = np.arange(1, n + 1) / n
    return np.array([order[min(int(q * len(order)), len(order) - 1)] for q in qs])


def _diam2(dom: Domain) -> float:
    x0, y0, x1, y1 = dom.bounding_box
    return (x1 - x0) ** 2 + (y1 - y0) ** 2


def exp_mc_validate(cfg: ExperimentConfig, w: Writer) -> dict:
    h = cfg.h or 0.0025
    rows = ["shape,x,y,E_fd,E_mc,E_ci99,L_fd,L_mc,L_ci99,E_within,L_within,discarded"]
    summary = {}
    for si, s in enumerate(cfg.shapes):
        dom = cfg.domain(s)
        grid = build_grid(dom, h)
        E, L = exit_time_field(grid), local_time_field(grid)
        dt = cfg.dt or 1e-5 * _diam2(dom)
        name = _shape_key(dom)
        res = []
        for j, i in enumerate(probe_nodes(grid, E, cfg.probes)):
            st = estimate_stats(dom, grid.xy[i], PathConfig(dt=dt, n_paths=cfg.paths,
                                                            seed=cfg.seed + 100 * si + j))
            ok_e, ok_l = st.tau.contains(E[i]), st.xi.contains(L[i])
            rows.append(f"{name},{grid.xy[i, 0]:.12g},{grid.xy[i, 1]:.12g},{_fmt(E[i])},{_fmt(st.tau.mean)},"
                        f"{_fmt(st.tau.halfwidth)},{_fmt(L[i])},{_fmt(st.xi.mean)},{_fmt(st.xi.halfwidth)},"
                        f"{int(ok_e)},{int(ok_l)},{st.discarded}")
            res.append(bool(ok_e and ok_l))
        summary[name] = {"dt": dt, "within": sum(res), "probes": len(res)}
    w.csv("mc_validate.csv", "\n".join(rows) + "\n", h)
    w.json("mc_validate.json", summary, h)
    return summary


def exp_table1(cfg: ExperimentConfig, w: Writer) -> dict:
    h = cfg.h or 0.01
    rows = ["shape,sup_E,sup_L,k_star,tested_k,error,verdict,error_im_beyond_table,ratio"]
    summary = {}
    for s in cfg.shapes:
        dom = cfg.domain(s)
        grid = build_grid(dom, h)
        rep = threshold_report(grid)
        name = _shape_key(dom)
        ks = cfg.k_list or DEFAULT_TESTED_K.get(name, (rep.k_star,))
        out = []
        for k in ks:
            icfg = _iteration_config(cfg, k, scheme="annular", store_iterates=False)
            tr = run(grid, icfg, reference=reference_solution(grid, icfg))
            rows.append(f"{name},{_fmt(rep.sup_E)},{_fmt(rep.sup_L)},{_fmt(rep.k_star)},{k:g},"
                        f"{tr.error_re[-1]:.6e},{_label(tr.verdict)},{tr.error_im[-1]:.6e},{_fmt(tr.ratio)}")
            out.append({"k": k, "error": tr.error_re[-1], "verdict": _label(tr.verdict)})
        summary[name] = {"sup_E": rep.sup_E, "sup_L": rep.sup_L, "k_star": rep.k_star, "rows": out}
    w.csv("table1.csv", "\n".join(rows) + "\n", h)
    w.json("table1.json", summary, h)
    return summary


def exp_fig5(cfg: ExperimentConfig, w: Writer) -> dict:
    h = cfg.h or 0.01
    series, summary = [], {}
    for s in cfg.shapes:
        dom = cfg.domain(s)
        grid = build_grid(dom, h)
        ks = _k_star_for(grid)
        tr = run(grid, IterationConfig(Scheme.ANNULAR, ks, N=cfg.N, tol=0.0, store_iterates=False))
        sums = tr.sup_sum
        name = _shape_key(dom)
        body = ["n,sup_v_plus_sup_w"] + [f"{n},{v:.12e}" for n, v in enumerate(sums)]
        w.csv(f"decay_{name}.csv", "\n".join(body) + "\n", h)
        viol = int(np.sum(np.diff(sums) > 1e-13 * sums[0]))
        series.append(Series(f"{name}, k*={ks:.3f}", tuple(range(len(sums))), tuple(sums)))
        summary[name] = {"k_star": ks, "violations": viol, "monotone": viol == 0}
    w.svg("decay.svg", line_plot(series, title="decay at k = k*", xlabel="n",
                                 ylabel="sup|v_n| + sup|w_n|", logy=True, comment=w.comment(h)))
    w.json("fig5.json", summary, h)
    return summary


def max_convergent_k(grid: Grid, scheme: str, ks, N: int = 30) -> tuple[float, list[tuple[float, str]]]:
    table = []
    for k in ks:
        tr = run(grid, IterationConfig(Scheme(scheme), float(k), N=N, store_iterates=False))
        table.append((float(k), _label(tr.verdict)))
    good = [k for k, v in table if v == "converges"]
    return (max(good) if good else 0.0), table


def exp_appendixA(cfg: ExperimentConfig, w: Writer) -> dict:
    h = cfg.h or 0.01
    dom = cfg.domain()
    grid = build_grid(dom, h)
    ks = cfg.k_list or [round(0.25 * i, 10) for i in range(1, 41)]
    k_main, t_main = max_convergent_k(grid, "annular", ks, cfg.N)
    k_alt, t_alt = max_convergent_k(grid, "alternative", ks, cfg.N)
    rows = ["k,annular,alternative"] + [f"{a[0]:g},{a[1]},{b[1]}" for a, b in zip(t_main, t_alt)]
    w.csv("appendixA_verdicts.csv", "\n".join(rows) + "\n", h)
    # exit distribution of the fully absorbed walker, started at the node of median E
    E = exit_time_field(grid)
    start = grid.xy[probe_nodes(grid, E, 2)[0]]
    st = estimate_stats(dom, start, PathConfig(dt=cfg.dt or 1e-5 * _diam2(dom), n_paths=cfg.paths,
                                               seed=cfg.seed, all_absorbing=True))
    summary = {"max_convergent_k": {"annular": k_main, "alternative": k_alt},
               "start": start.tolist(), "p_exit_absorbing_part": st.absorbing_hit_probability,
               "hit_probabilities": st.hit_probabilities}
    w.json("appendixA.json", summary, h)
    return summary


def exp_appendixB(cfg: ExperimentConfig, w: Writer) -> dict:
    h = cfg.h or 0.01
    L = cfg.L_wid
    certs = [waveguide_feasibility(L, m) for m in range(1, 6)]
    rows = ["m,feasible,product_bound,product_bound_over_pi2"] + [
        f"{c.m},{'undecided' if c.feasible is None else str(c.feasible).lower()},{_fmt(c.product_bound)},"
        f"{c.product_bound_over_pi2}" for c in certs]
    w.csv("appendixB_certificates.csv", "\n".join(rows) + "\n", h)
    grid = build_grid(make_shape("waveguide", L_wid=L), h)
    lo, hi = 2 * math.pi / L, 3 * math.pi / L
    ks = cfg.k_list or list(np.linspace(lo, hi, 12)[1:-1])
    table = []
    for k in ks:
        tr = run(grid, IterationConfig(Scheme.WAVEGUIDE, float(k), N=cfg.N, m=1, store_iterates=False))
        table.append((float(k), tr.verdict.value))
    w.csv("appendixB_sweep.csv", "\n".join(["k,verdict"] + [f"{_fmt(k)},{v}" for k, v in table]) + "\n", h)
    summary = {"L_wid": L, "convergent_points": sum(v != "diverged" for _, v in table),
               "tested": len(table)}
    w.json("appendixB.json", summary, h)
    return summary


_RUNNERS = {"thresholds": exp_thresholds, "iterate": exp_iterate, "reference": exp_reference,
            "spectral_sweep": exp_spectral_sweep, "mc_validate": exp_mc_validate, "table1": exp_table1,
            "fig4": exp_fig4, "fig5": exp_fig5, "appendixA": exp_appendixA, "appendixB": exp_appendixB}


def run_experiment(cfg: ExperimentConfig) -> tuple[dict, list[str]]:
    cfg.validate()
    w = Writer(cfg)
    summary = _RUNNERS[cfg.experiment](cfg, w)
    return summary, w.files
