import json

import numpy as np
import pytest

from helmpoisson.geometry import make_shape
from helmpoisson.monte_carlo import (PathConfig, TooManyDiscarded, estimate_stats,
                                     feynman_kac_point, simulate_path)

DISK = make_shape("disk")
SHAPE1 = make_shape("shape1")


def test_deterministic_per_path():
    cfg = PathConfig(dt=1e-4, n_paths=50, seed=3)
    a = estimate_stats(SHAPE1, (0.25, 0.0), cfg, keep_outcomes=True)
    b = estimate_stats(SHAPE1, (0.25, 0.0), cfg, keep_outcomes=True)
    assert [o.tau for o in a.outcomes] == [o.tau for o in b.outcomes]
    one = simulate_path(SHAPE1, (0.25, 0.0), cfg, 17)
    assert one.tau == a.outcomes[17].tau and one.xi == a.outcomes[17].xi
    other = simulate_path(SHAPE1, (0.25, 0.0), PathConfig(dt=1e-4, seed=4), 17)
    assert other.tau != one.tau


def test_start_on_absorbing_boundary():
    o = simulate_path(DISK, (1.0, 0.0), PathConfig(), 0)
    assert o.tau == 0 and o.xi == 0 and o.steps == 0


def test_start_outside_rejected():
    with pytest.raises(ValueError):
        simulate_path(SHAPE1, (0.0, 0.0), PathConfig(), 0)


def test_disk_centre_exit_time():
    s = estimate_stats(DISK, (0.0, 0.0), PathConfig(dt=1e-4, n_paths=4000, seed=1))
    assert s.tau.contains(0.25)
    assert s.xi.mean == 0 and s.xi.halfwidth == 0
    assert s.absorbing_hit_probability == 1.0


def test_hit_probabilities_sum_to_one():
    for name in ("shape1", "shape2"):
        s = estimate_stats(make_shape(name), _probe(name), PathConfig(dt=1e-4, n_paths=300, seed=2))
        assert sum(s.hit_probabilities.values()) == pytest.approx(1.0)
        assert s.absorbing_hit_probability == pytest.approx(1.0)  # reflecting walls never absorb


def _probe(name):
    return {"shape1": (0.25, 0.0), "shape2": (1.1, 0.5)}[name]


def test_all_absorbing_mode():
    s = estimate_stats(SHAPE1, (0.25, 0.0), PathConfig(dt=1e-4, n_paths=400, seed=5, all_absorbing=True))
    assert s.xi.mean == 0
    assert 0 < s.hit_probabilities["hole"] < 1


def test_ci_shrinks_with_paths():
    small = estimate_stats(DISK, (0.3, 0.0), PathConfig(dt=1e-3, n_paths=500, seed=7)).tau
    large = estimate_stats(DISK, (0.3, 0.0), PathConfig(dt=1e-3, n_paths=2000, seed=7)).tau
    assert 0.35 < large.halfwidth / small.halfwidth < 0.65


def test_feynman_kac_trivial_cases():
    cfg = PathConfig(dt=1e-4, n_paths=300, seed=9)
    one = feynman_kac_point(SHAPE1, (0.25, 0.0), {}, {"phi_bc": 1.0}, cfg)
    assert one.mean == pytest.approx(1.0) and one.halfwidth == 0
    # -int f dt with f = -1 is the exit time; int g dxi with g = 1 is the local time
    stats = estimate_stats(SHAPE1, (0.25, 0.0), cfg)
    tau = feynman_kac_point(SHAPE1, (0.25, 0.0), {}, {"f": -1.0}, cfg)
    xi = feynman_kac_point(SHAPE1, (0.25, 0.0), {}, {"g": 1.0}, cfg)
    assert tau.mean == pytest.approx(stats.tau.mean, rel=1e-9)
    assert xi.mean == pytest.approx(stats.xi.mean, rel=1e-9)
    with pytest.raises(ValueError):
        feynman_kac_point(SHAPE1, (0.25, 0.0), {"c": 1.0}, {}, cfg)


def test_feynman_kac_killing_disk():
    """u'' + u'/r - u = 0 with u = 1 on r = 1 gives u(0) = 1 / I0(1)."""
    from scipy.special import i0
    est = feynman_kac_point(DISK, (0.0, 0.0), {"c": -1.0}, {"phi_bc": 1.0},
                            PathConfig(dt=1e-4, n_paths=3000, seed=11))
    assert est.contains(1 / i0(1.0), scale=1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        PathConfig(dt=0)
    with pytest.raises(ValueError):
        PathConfig(reflection="mirror")


def test_too_many_discarded():
    with pytest.raises(TooManyDiscarded):
        estimate_stats(DISK, (0.0, 0.0), PathConfig(dt=1e-3, n_paths=50, max_time=0.01))


def test_stats_json():
    s = estimate_stats(DISK, (0.5, 0.0), PathConfig(dt=1e-3, n_paths=50))
    d = json.loads(s.to_json())
    assert set(d["mean"]) == {"tau", "xi"} and d["n_paths"] == 50
