import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from roughwall.errors import ConfigurationError
from roughwall.roughness import (RoughnessSpec, BoundaryPair, evaluate, evaluate_derivative,
                                 lipschitz_estimate, periodic_pair, periodize, sample_boundary, shift)


def test_flat_offset_constant():
    b = sample_boundary(RoughnessSpec(kind="flat-offset", amplitude=0.3), 11)
    hl, hu = evaluate(b, np.linspace(-50, 50, 101))
    assert np.all(hl == 0.3) and np.all(hu == 0.3)
    assert evaluate(b, 7.2) == (0.3, 0.3)
    assert lipschitz_estimate(b, 10.0) == 0.0


def test_shifted_periodic_is_translate_of_profile(periodic_spec):
    b = sample_boundary(periodic_spec, 5)
    U = b.metadata["shift"]
    y = np.linspace(-3, 3, 200)
    F = 0.5 + 0.2 * np.sin(2 * np.pi * (y + U))
    hl, hu = evaluate(b, y)
    assert np.allclose(hl, F, atol=1e-14, rtol=0)
    assert np.allclose(hu, F, atol=1e-14, rtol=0)
    assert np.allclose(evaluate(b, y + 1.0)[0], hl, atol=1e-13, rtol=0)


def test_shifted_periodic_explicit_shift(periodic_spec):
    b = periodic_pair(periodic_spec, 0.25)
    assert evaluate(b, 0.0)[0] == pytest.approx(0.7, abs=1e-15)


def test_fourier_stationary_mean_two_seeds(fourier_spec):
    y = np.linspace(0, 1e4, 400001)
    means = []
    for seed in (1, 2):
        hl, _ = evaluate(sample_boundary(fourier_spec, seed), y)
        means.append(hl.mean())
    # standard error of a long-window mean of a finite trigonometric sum
    # is bounded by sum |a_k| * 2 / (k_k * T)
    b = sample_boundary(fourier_spec, 1)
    se = float(np.sum(np.abs(b.lower.amp) * 2 / (b.lower.freq * 1e4)))
    assert abs(means[0] - means[1]) < 3 * max(se, 1e-12) + 1e-12
    assert abs(means[0] - 0.5) < 3 * se + 1e-12


def test_evaluate_matches_coefficient_sum(fourier_spec):
    b = sample_boundary(fourier_spec, 4)
    d = b.to_dict()
    y = 1.5
    ref = d["coefficients"]["lower"]["mean"] + math.fsum(
        a * math.sin(k * y + p) for k, a, p in d["coefficients"]["lower"]["terms"])
    assert evaluate(b, y)[0] == pytest.approx(ref, abs=1e-15)


def test_determinism(fourier_spec):
    a = sample_boundary(fourier_spec, 9)
    b = sample_boundary(fourier_spec, 9)
    assert a.to_dict() == b.to_dict()
    c = sample_boundary(fourier_spec, 10)
    assert a.to_dict() != c.to_dict()


def test_json_round_trip(tmp_path, fourier_spec):
    a = sample_boundary(fourier_spec, 3)
    a.to_json(tmp_path / "b.json")
    b = BoundaryPair.from_json(tmp_path / "b.json")
    y = np.linspace(-5, 5, 51)
    assert np.array_equal(evaluate(a, y)[0], evaluate(b, y)[0])


def test_range_many_points_many_seeds(fourier_spec):
    r = np.random.default_rng(0)
    for seed in range(50):
        b = sample_boundary(fourier_spec, seed)
        y = r.uniform(-1e4, 1e4, 2000)
        for h in evaluate(b, y):
            assert h.min() > fourier_spec.delta and h.max() < 1 - fourier_spec.delta


def test_stationarity_ks(fourier_spec):
    lag = 3.7
    a = np.array([evaluate(sample_boundary(fourier_spec, s), 0.0)[0] for s in range(400)])
    b = np.array([evaluate(sample_boundary(fourier_spec, s), lag)[0] for s in range(400, 800)])
    assert stats.ks_2samp(a, b).pvalue > 0.01


@given(h=st.floats(-100, 100), y=st.floats(-100, 100))
@settings(max_examples=50, deadline=None)
def test_shift_exact(h, y):
    spec = RoughnessSpec(kind="truncated-fourier", mode_count=5)
    b = sample_boundary(spec, 2)
    s = shift(b, h)
    assert evaluate(s, y) == evaluate(b, y + h) or np.allclose(
        evaluate(s, y), evaluate(b, y + h), atol=1e-14, rtol=0)


def test_shift_identity_and_group_law(fourier_spec):
    b = sample_boundary(fourier_spec, 1)
    assert shift(b, 0) is b
    y = np.linspace(-4, 4, 33)
    lhs = evaluate(shift(shift(b, 0.3), 1.1), y)[0]
    rhs = evaluate(shift(b, 1.4), y)[0]
    assert np.allclose(lhs, rhs, atol=1e-14, rtol=0)


def test_shift_by_period_is_identity_pointwise(periodic_spec):
    b = sample_boundary(periodic_spec, 0)
    y = np.random.default_rng(1).uniform(-10, 10, 100)
    assert np.allclose(evaluate(shift(b, 1.0), y)[0], evaluate(b, y)[0], atol=1e-13, rtol=0)


def test_lipschitz_sinusoid_matches_analytic(periodic_spec):
    b = sample_boundary(periodic_spec, 0)
    L = lipschitz_estimate(b, 1.0)
    assert L == pytest.approx(0.4 * math.pi, rel=0.01)
    assert L <= periodic_spec.K


def test_lipschitz_fourier_below_cap():
    spec = RoughnessSpec(kind="truncated-fourier", mode_count=8, amplitude=0.4, delta=0.05, K=1.0)
    for seed in range(5):
        b = sample_boundary(spec, seed)
        assert b.lower.lipschitz_bound <= spec.K * (1 + 1e-12)
        assert lipschitz_estimate(b, 50.0) <= spec.K


def test_derivative_matches_finite_difference(fourier_spec):
    b = sample_boundary(fourier_spec, 2)
    y = np.linspace(0, 3, 7)
    d = 1e-6
    fd = (evaluate(b, y + d)[0] - evaluate(b, y - d)[0]) / (2 * d)
    assert np.allclose(evaluate_derivative(b, y)[0], fd, atol=1e-8)


def test_periodize_exact_period_and_budget(fourier_spec):
    b = sample_boundary(fourier_spec, 3)
    p = periodize(b, 8.0)
    y = np.linspace(0, 8, 41)
    assert np.allclose(evaluate(p, y + 8.0)[0], evaluate(p, y)[0], atol=1e-12, rtol=0)
    assert p.lower.lipschitz_bound <= b.lower.lipschitz_bound + 1e-15
    assert p.lower.sup <= 1 - fourier_spec.delta


@pytest.mark.parametrize("kw", [dict(amplitude=0.6, delta=0.5), dict(K=0.0), dict(K=-1.0),
                                dict(kind="fractal"), dict(amplitude=0.5, delta=0.05)])
def test_invalid_spec(kw):
    with pytest.raises(ConfigurationError):
        RoughnessSpec(**kw)


def test_spec_from_text():
    s = RoughnessSpec.from_text("kind = shifted-periodic\nmodes = 1\namplitude = 0.1\nperiod = 2\n")
    assert s.kind == "shifted-periodic" and s.mode_count == 1 and s.period == 2.0
    with pytest.raises(ConfigurationError):
        RoughnessSpec.from_text("modes = many\n")
