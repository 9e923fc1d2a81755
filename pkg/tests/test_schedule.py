import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbse.schedule import (
    BridgeSchedule,
    coeffs,
    marginal_params,
    marginal_weights,
    sample_marginal,
    simulate_forward_em,
    standard_noise,
)

PAPER = BridgeSchedule(k=2.6, c=0.40)


def quad_sigma2(sched, t, n=10_000):
    """Trapezoidal rule for the integral of g(s)**2 over [0, t]."""
    s = np.linspace(0.0, t, n + 1)
    g2 = sched.g(s) ** 2
    return np.sum((g2[1:] + g2[:-1]) * np.diff(s)) / 2


def test_coeffs_at_zero():
    cf = coeffs(PAPER, 0.0)
    assert cf.sigma_t == 0.0
    assert cf.alpha_t == 1.0
    assert cf.sigma_bar_t == pytest.approx(cf.sigma_T, rel=1e-15)


def test_coeffs_at_horizon():
    cf = coeffs(PAPER, 1.0)
    assert cf.sigma_bar_t == 0.0
    assert cf.sigma_t == cf.sigma_T


def test_sigma_T2_against_quadrature():
    q = quad_sigma2(PAPER, 1.0)
    assert PAPER.sigma_T2 == pytest.approx(q, rel=1e-6)
    assert PAPER.sigma_T2 == pytest.approx(1.2056, abs=5e-5)


def test_sigma_half_against_quadrature():
    q = quad_sigma2(PAPER, 0.5)
    cf = coeffs(PAPER, 0.5)
    assert cf.sigma_t**2 == pytest.approx(q, rel=1e-6)
    assert cf.sigma_t**2 == pytest.approx(0.3349, abs=5e-5)
    assert cf.sigma_bar_t**2 == pytest.approx(PAPER.sigma_T2 - cf.sigma_t**2, rel=1e-12)


def test_closed_form_matches_quadrature_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k = rng.uniform(1.0, 4.0)
        k = max(k, 1.0 + 1e-3)
        c, t = rng.uniform(1e-3, 2.0), rng.uniform(0.0, 1.0)
        sched = BridgeSchedule(k=k, c=c)
        q = quad_sigma2(sched, t)
        assert float(sched.sigma2(t)) == pytest.approx(q, rel=1e-6, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.001, 4.0), st.floats(1e-3, 2.0), st.floats(0.0, 1.0))
def test_pythagorean_identity_and_monotone(k, c, t):
    sched = BridgeSchedule(k=k, c=c)
    cf = coeffs(sched, t)
    assert cf.sigma_t**2 + cf.sigma_bar_t**2 == pytest.approx(cf.sigma_T**2, rel=1e-14)
    t2 = min(1.0, t + 0.01)
    assert coeffs(sched, t2).sigma_t >= cf.sigma_t
    wx, wy, var = marginal_weights(sched, t)
    assert wx >= 0 and wy >= 0 and var >= 0
    assert wx + wy == pytest.approx(1.0, abs=1e-14)


def test_invalid_schedule_and_time():
    for kw in ({"k": 1.0}, {"k": 0.5}, {"c": 0.0}, {"c": -1.0}, {"T": 0.0}):
        with pytest.raises(ValueError):
            BridgeSchedule(**kw)
    with pytest.raises(ValueError):
        coeffs(PAPER, -0.1)
    with pytest.raises(ValueError):
        coeffs(PAPER, 1.1)


# -- marginals -------------------------------------------------------------------


def test_marginal_boundaries():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    y = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    m0, v0 = marginal_params(PAPER, x, y, 0.0)
    mT, vT = marginal_params(PAPER, x, y, 1.0)
    assert np.array_equal(m0, x) and v0 == 0.0
    assert np.array_equal(mT, y) and vT == 0.0


def test_marginal_weights_at_half():
    wx, wy, var = marginal_weights(PAPER, 0.5)
    # Independent evaluation from the quadrature values.
    s2, sT2 = quad_sigma2(PAPER, 0.5), quad_sigma2(PAPER, 1.0)
    assert wx == pytest.approx((sT2 - s2) / sT2, rel=1e-6)
    assert wy == pytest.approx(s2 / sT2, rel=1e-6)
    assert var == pytest.approx(s2 * (sT2 - s2) / sT2, rel=1e-6)
    assert wx == pytest.approx(0.7222, abs=5e-5)
    assert wy == pytest.approx(0.2778, abs=5e-5)
    assert var == pytest.approx(0.2419, abs=5e-5)


def test_equal_endpoints_give_constant_mean():
    x = np.array([1.5 - 2j, 0.25 + 1j])
    for t in np.linspace(0, 1, 11):
        m, _ = marginal_params(PAPER, x, x, t)
        np.testing.assert_allclose(m, x, rtol=1e-14)


def test_marginal_shape_mismatch():
    with pytest.raises(ValueError):
        marginal_params(PAPER, np.zeros(3), np.zeros(4), 0.5)
    with pytest.raises(ValueError):
        sample_marginal(PAPER, np.zeros(3), np.zeros(4), 0.5, rng=np.random.default_rng(0))


def test_sample_marginal_at_zero_ignores_noise():
    x, y = np.array([1.0 + 1j]), np.array([-2.0])
    assert np.array_equal(sample_marginal(PAPER, x, y, 0.0, noise=np.array([100.0 + 0j])), x)


def test_sample_marginal_zero_noise_is_mean():
    x, y = np.array([1.0 + 1j, 3.0]), np.array([-2.0 + 0j, 0.5j])
    m, _ = marginal_params(PAPER, x, y, 0.5)
    assert np.array_equal(sample_marginal(PAPER, x, y, 0.5, noise=np.zeros(2, complex)), m)


def test_sample_marginal_monte_carlo():
    rng = np.random.default_rng(2)
    n = 100_000
    x, y = np.full(n, 0.8 - 0.3j), np.full(n, -0.4 + 1.1j)
    m, var = marginal_params(PAPER, x[:1], y[:1], 0.5)
    draws = sample_marginal(PAPER, x, y, 0.5, rng=rng)
    se = np.sqrt(var / 2 / n)  # per real component
    assert abs(draws.real.mean() - m[0].real) < 4 * se
    assert abs(draws.imag.mean() - m[0].imag) < 4 * se
    emp_var = np.mean(np.abs(draws - m[0]) ** 2)
    assert emp_var == pytest.approx(var, rel=0.05)


def test_complex_noise_convention():
    z = standard_noise(np.random.default_rng(3), (200_000,), True)
    assert np.var(z.real) == pytest.approx(0.5, rel=0.02)
    assert np.var(z.imag) == pytest.approx(0.5, rel=0.02)
    assert abs(np.mean(z.real * z.imag)) < 0.01


# -- forward Euler-Maruyama oracle ---------------------------------------------------


def test_em_zero_diffusion():
    sched = BridgeSchedule(k=2.6, c=1e-12)
    x0 = np.array([0.3, -1.2])
    out = simulate_forward_em(sched, x0, 64, rng=np.random.default_rng(4))
    np.testing.assert_allclose(out, x0, atol=1e-4)


def test_em_terminal_variance():
    rng = np.random.default_rng(5)
    x0 = np.zeros(10_000)
    out = simulate_forward_em(PAPER, x0, 4096, rng=rng)
    assert np.var(out) == pytest.approx(PAPER.sigma_T2, rel=0.02)


def test_em_variance_independent_of_step_count():
    # Two-sample comparison of variance estimates (4 combined standard errors).
    n = 10_000
    v16 = np.var(simulate_forward_em(PAPER, np.zeros(n), 16, rng=np.random.default_rng(6)))
    v4k = np.var(simulate_forward_em(PAPER, np.zeros(n), 4096, rng=np.random.default_rng(7)))
    se = PAPER.sigma_T2 * np.sqrt(2.0 / (n - 1))
    assert abs(v16 - v4k) < 4 * np.sqrt(2) * se


def test_em_left_rule_is_biased_low_at_coarse_steps():
    # Expected left-point variance is an exact Riemann sum, below the integral.
    sched = PAPER
    n_steps = 16
    dt = 1.0 / n_steps
    left_sum = np.sum(sched.g(np.arange(n_steps) * dt) ** 2 * dt)
    assert left_sum < 0.95 * sched.sigma_T2
    mid_sum = np.sum(sched.g((np.arange(n_steps) + 0.5) * dt) ** 2 * dt)
    assert mid_sum == pytest.approx(sched.sigma_T2, rel=1e-3)


def test_em_explicit_noise_shape():
    with pytest.raises(ValueError):
        simulate_forward_em(PAPER, np.zeros(3), 4, noise=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        simulate_forward_em(PAPER, np.zeros(3), 0, rng=np.random.default_rng(0))
