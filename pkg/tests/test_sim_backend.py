from __future__ import annotations

import pytest

from accelbench.backends.sim import (
    SimBackend,
    SimLandscape,
    compose_config,
    config_to_methods,
    max_feasible_speedup,
)
from accelbench.metrics import SampleMeasurements, speedup

from conftest import make_attrs


def test_identity_run_reproduces_baseline(sim_backend, landscape):
    attrs = make_attrs()
    profile = landscape.profile(attrs.pipeline_class)
    result = sim_backend.run("src", attrs, 4, seed=0)
    assert result.ok
    assert all(t == profile.n_base * profile.t_step for t in result.latency)
    assert all(q == profile.q0 for q in result.quality)


def test_feature_reuse_curve(sim_backend, landscape):
    attrs = make_attrs(accel_methods={"feature_reuse": {"cache_interval": 2}})
    mult, delta = compose_config(landscape, attrs)
    assert mult == pytest.approx(1 + 0.6 * (1 - 1 / 2), rel=1e-12)
    result = sim_backend.run("src", attrs, 2, seed=0)
    profile = landscape.profile(attrs.pipeline_class)
    assert result.latency[0] == pytest.approx(50 * profile.t_step / 1.3, rel=1e-12)


def test_fp16_with_token_merging_composition(landscape):
    attrs = make_attrs(
        accel_methods={"half_precision": {}, "token_merging": {"merge_ratio": 0.5}}
    )
    mult, _ = compose_config(landscape, attrs)
    assert mult == pytest.approx(1.6 * (1 / 0.75), rel=1e-12)
    assert mult == pytest.approx(2.1333333333333333, rel=1e-12)


def test_run_is_deterministic_bit_for_bit(landscape):
    noisy = SimBackend(landscape.with_noise(0.05, 0.01))
    attrs = make_attrs(accel_methods={"half_precision": {}})
    a = noisy.run("src", attrs, 8, seed=123)
    b = noisy.run("src", attrs, 8, seed=123)
    assert a.latency == b.latency
    assert a.quality == b.quality
    c = noisy.run("src", attrs, 8, seed=124)
    assert c.latency != a.latency


def test_invalid_attrs_forced_runtime_failure(sim_backend):
    attrs = make_attrs(accel_methods={"token_merging": {"merge_ratio": 1.5}})
    result = sim_backend.run("src", attrs, 2, seed=0)
    assert result.status == "runtime_failure"
    assert "merge_ratio" in result.failure_text


def test_check_rejects_empty_and_bad_params(sim_backend):
    assert not sim_backend.check("", {}).ok
    ok = sim_backend.check("x = 1", {"accel_methods": {"token_merging": {"merge_ratio": 0.2}}})
    assert ok.ok
    bad = sim_backend.check(
        "x = 1", {"accel_methods": {"token_merging": {"merge_ratio": 1.5}}}
    )
    assert not bad.ok
    assert "merge_ratio" in bad.error_text


def test_measured_speedup_matches_composed_multiplier(sim_backend, landscape):
    attrs = make_attrs(
        accel_methods={
            "token_merging": {"merge_ratio": 0.3},
            "feature_reuse": {"cache_interval": 4},
            "gated_activation": {"gate_step": 30},
            "half_precision": {},
        }
    )
    mult, _ = compose_config(landscape, attrs)
    base = sim_backend.run("b", attrs.without_acceleration(), 5, seed=1)
    acc = sim_backend.run("a", attrs, 5, seed=1)
    measured = speedup(
        SampleMeasurements.from_lists(base.quality, acc.quality, base.latency, acc.latency)
    )
    assert measured == pytest.approx(mult, rel=1e-9)


def test_max_feasible_speedup_toy_landscape_brute_force():
    # One method, two settings: the slower one within the bound, the faster
    # one outside it. Only the slower setting is feasible.
    from dataclasses import replace

    base = SimLandscape.default()
    q0 = base.profile("StableDiffusionPipeline").q0
    landscape = replace(base, k_tm=0.2 * q0)
    lo, hi = 0.3, 0.7
    budget = 0.05 * q0
    assert landscape.k_tm * lo * lo <= budget < landscape.k_tm * hi * hi
    u = max_feasible_speedup(
        landscape,
        "StableDiffusionPipeline",
        0.05,
        merge_ratios=(0.0, lo, hi),
        cache_intervals=(1,),
        allow_fp16=False,
        allow_gate=False,
    )
    assert u == pytest.approx(1 / (1 - 0.5 * lo), rel=1e-12)


def test_max_feasible_speedup_monotone_in_delta():
    for seed in range(30):
        landscape = SimLandscape.random(seed)
        prev = 0.0
        for delta in (0.01, 0.03, 0.05, 0.08, 0.12):
            u = max_feasible_speedup(landscape, "StableDiffusionPipeline", delta)
            assert u >= prev
            prev = u


def test_config_to_methods_drops_identity_settings():
    methods = config_to_methods((0.0, 1, 50, 50, 0), steps=50)
    assert methods == {}
    methods = config_to_methods((0.4, 3, 25, 50, 1), steps=50)
    assert methods == {
        "token_merging": {"merge_ratio": 0.4},
        "feature_reuse": {"cache_interval": 3},
        "gated_activation": {"gate_step": 25},
        "half_precision": {},
    }


def test_random_landscape_deterministic():
    a = SimLandscape.random(99)
    b = SimLandscape.random(99)
    assert a == b
    assert SimLandscape.random(100) != a
