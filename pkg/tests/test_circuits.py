import numpy as np
import pytest

from sizerl.circuits import (
    Surrogate,
    build_surrogates,
    circuit_index,
    denormalize,
    registry,
    sample_target,
)
from sizerl.env import reward


def test_registry_dims(circuits):
    dims = {c.cid: c.raw_obs_dim for c in circuits}
    assert dims == {"2SOA": 19, "R2SOA": 15, "2STIA": 14, "Comp": 10}
    counts = {c.cid: (c.n_params, c.n_specs) for c in circuits}
    assert counts == {"2SOA": (7, 6), "R2SOA": (7, 4), "2STIA": (6, 4), "Comp": (6, 2)}


def test_registry_ranges(circuits):
    for c in circuits:
        for p in c.params:
            assert p.lo < p.hi
        for s in c.specs:
            assert s.lo <= s.hi
            assert s.g > 0
    two = circuits[0]
    assert [p.lo for p in two.params[:6]] == [1] * 6
    assert two.params[6].scale == "log" and two.params[6].lo == 1e-13
    comp = circuits[3]
    assert all(p.scale == "log" and p.lo == 0.1 and p.hi == 100 for p in comp.params)


def test_circuit_index(circuits):
    assert circuit_index(circuits, "Comp") == 3
    with pytest.raises(KeyError):
        circuit_index(circuits, "nope")


def test_sample_target_fixed_pm_always_60(circuits):
    rng = np.random.default_rng(0)
    c = circuits[0]
    pm_idx = [s.name for s in c.specs].index("pm")
    for _ in range(50):
        assert sample_target(c, rng)[pm_idx] == 60.0


def test_sample_target_ranges_and_distributions(circuits):
    rng = np.random.default_rng(1)
    c = circuits[0]
    draws = np.array([sample_target(c, rng) for _ in range(2000)])
    names = [s.name for s in c.specs]
    for i, s in enumerate(c.specs):
        assert np.all(draws[:, i] >= s.lo - 1e-12) and np.all(draws[:, i] <= s.hi + 1e-12)
    # gain spans < one decade -> uniform: fraction below arithmetic mid ~ 0.5
    gain = draws[:, names.index("gain")]
    frac = (gain < 3e2).mean()
    assert abs(frac - 0.5) < 0.05
    # bw spans > a decade -> log-uniform: fraction below geometric mid ~ 0.5,
    # which a uniform draw would put near 0.17
    bw = draws[:, names.index("bw")]
    geo_mid = np.sqrt(1e6 * 2.5e7)
    frac_geo = (bw < geo_mid).mean()
    assert abs(frac_geo - 0.5) < 0.05
    uniform_frac = (geo_mid - 1e6) / (2.5e7 - 1e6)
    assert frac_geo > uniform_frac + 0.2


def test_denormalize_bounds_and_scales(circuits):
    c = circuits[0]
    lo = denormalize(c, np.zeros(7))
    hi = denormalize(c, np.ones(7))
    assert np.allclose(lo, [p.lo for p in c.params])
    assert np.allclose(hi, [p.hi for p in c.params])
    mid = denormalize(c, np.full(7, 0.5))
    assert mid[0] == 51.0  # round(50.5) half up on the linear multiplier
    assert mid[6] == pytest.approx(1e-12, rel=1e-9)  # geometric midpoint of the cap


def test_surrogate_midpoint_returns_g(circuits, surrogates):
    for c in circuits:
        m = surrogates[c.cid].simulate(np.full(c.n_params, 0.5))
        assert np.allclose(m, c.g_values)
        assert np.all(m > 0)


def test_surrogate_single_weight_example(circuits):
    s = Surrogate(circuits[3], seed=0)
    s.w = np.zeros_like(s.w)
    s.w[0, 0] = 1.0
    p = np.full(6, 0.5)
    p[0] = 1.0
    m = s.simulate(p)
    assert m[0] == pytest.approx(s.g[0] * np.e, rel=1e-12)
    p[0] = 0.0
    assert s.simulate(p)[0] == pytest.approx(s.g[0] / np.e, rel=1e-12)


def test_surrogate_monotonicity(circuits, surrogates):
    c = circuits[1]
    s = surrogates[c.cid]
    p = np.full(c.n_params, 0.5)
    for j in range(c.n_params):
        for i in range(c.n_specs):
            up = p.copy()
            up[j] = 0.8
            moved = s.simulate(up)[i] - s.simulate(p)[i]
            assert np.sign(moved) == np.sign(s.w[i, j])


def test_surrogate_rejects_out_of_range(circuits, surrogates):
    with pytest.raises(ValueError):
        surrogates["Comp"].simulate(np.full(6, 1.2))
    with pytest.raises(ValueError):
        surrogates["Comp"].simulate(np.zeros(3))


def test_surrogate_determinism(circuits):
    a = build_surrogates(circuits, seed=123)
    b = build_surrogates(circuits, seed=123)
    c = build_surrogates(circuits, seed=124)
    for cid in a:
        assert np.array_equal(a[cid].w, b[cid].w)
    assert any(not np.array_equal(a[cid].w, c[cid].w) for cid in a)


def test_surrogate_weight_invariants(circuits, surrogates):
    for c in circuits:
        w = surrogates[c.cid].w
        for i, s in enumerate(c.specs):
            if not s.fixed:
                assert np.abs(w[i]).sum() >= 0.5 * np.log(s.hi / s.lo) - 1e-12
        if c.n_specs >= 2:
            assert np.any(w[:-1, 1:] * w[1:, 1:] < 0)


def test_surrogate_feasibility_for_sampled_targets(circuits, surrogates):
    # analytic construction: the master-knob point satisfies every spec for
    # any sampled target, giving FoM = 0 exactly at tolerance
    rng = np.random.default_rng(2)
    for c in circuits:
        s = surrogates[c.cid]
        m_star = s.simulate(s.feasible_point())
        for _ in range(300):
            n = sample_target(c, rng)
            r, fom, _ = reward(m_star, n, c.directions)
            assert fom == 0.0 and r == 10.0


def test_surrogate_feasibility_grid_search_small():
    # brute-force cross-check on a 2-parameter surrogate at grid 1/16
    from sizerl.circuits import CircuitDef, ParamDef, SpecDef, MAXIMIZE, MINIMIZE

    c = CircuitDef(
        "toy",
        (ParamDef("a", 0, 1), ParamDef("b", 0, 1)),
        (SpecDef("up", 1.0, 4.0, MAXIMIZE), SpecDef("dn", 1.0, 4.0, MINIMIZE)),
    )
    s = Surrogate(c, seed=5)
    rng = np.random.default_rng(3)
    grid = np.linspace(0, 1, 17)
    for _ in range(25):
        n = sample_target(c, rng)
        best = max(
            reward(s.simulate(np.array([pa, pb])), n, c.directions)[1]
            for pa in grid
            for pb in grid
        )
        assert best >= -0.02, f"no grid point meets target {n}"
