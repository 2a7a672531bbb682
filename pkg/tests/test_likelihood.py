import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bifs.errors import ConfigError, EstimationError
from bifs.grid import to_cartesian
from bifs.likelihood import (
    SiteObservation,
    default_patch,
    estimate_sigma,
    log_likelihood,
    log_likelihood_obs,
    log_likelihood_real,
)

angles = st.floats(-math.pi, math.pi)


def cartesian_route(r, psi, rho, theta, sigma):
    """Bivariate normal of the observed (a, b) about the true (alpha, beta), times r."""
    a, b = r * math.cos(psi), r * math.sin(psi)
    al, be = rho * math.cos(theta), rho * math.sin(theta)
    dens = math.exp(-((a - al) ** 2 + (b - be) ** 2) / (2 * sigma**2)) / (2 * math.pi * sigma**2)
    return math.log(dens * r)


def test_perfect_match():
    assert log_likelihood(1.0, 0.0, 1.0, 0.0, 1.0) == pytest.approx(-math.log(2 * math.pi), abs=1e-15)
    assert log_likelihood(1.0, 0.0, 1.0, 0.0, 1.0) == pytest.approx(-1.8379, abs=1e-4)


def test_opposite_phase():
    assert log_likelihood(1.0, 0.0, 1.0, math.pi, 1.0) == pytest.approx(-math.log(2 * math.pi) - 2.0)


def test_cartesian_route_example():
    got = log_likelihood(2.0, 0.3, 1.5, 0.1, 0.5)
    assert got == pytest.approx(cartesian_route(2.0, 0.3, 1.5, 0.1, 0.5), abs=1e-12)


def test_obs_wrapper_and_validation():
    obs = SiteObservation(r=2.0, psi=0.3, sigma=0.5)
    assert log_likelihood_obs(obs, 1.5, 0.1) == log_likelihood(2.0, 0.3, 1.5, 0.1, 0.5)
    with pytest.raises(ConfigError):
        SiteObservation(r=-1.0, psi=0.0, sigma=1.0)
    with pytest.raises(ConfigError):
        SiteObservation(r=1.0, psi=0.0, sigma=0.0)


@given(st.floats(0.01, 4), angles, st.floats(0, 4), angles, st.floats(0.3, 2))
def test_cartesian_route_property(r, psi, rho, theta, sigma):
    assert log_likelihood(r, psi, rho, theta, sigma) == pytest.approx(
        cartesian_route(r, psi, rho, theta, sigma), abs=1e-12
    )


@given(st.floats(0.01, 4), angles, st.floats(0, 4), angles, st.floats(0.1, 2), st.floats(-10, 10))
def test_rotation_invariance(r, psi, rho, theta, sigma, delta):
    assert log_likelihood(r, psi + delta, rho, theta + delta, sigma) == pytest.approx(
        log_likelihood(r, psi, rho, theta, sigma), abs=1e-9
    )


@given(st.floats(0.05, 3), angles, st.floats(0.1, 2))
def test_maximized_at_observation(r, psi, sigma):
    rho = np.linspace(0, 2 * r + 1, 401)[:, None]
    theta = np.linspace(-math.pi, math.pi, 401)[None, :]
    grid_best = np.max(log_likelihood(r, psi, rho, theta, sigma))
    assert log_likelihood(r, psi, r, psi, sigma) >= grid_best - 1e-12


def test_real_axis_likelihood_variance_doubles():
    sigma = 0.7
    x = np.linspace(-20, 20, 400001)
    dens = np.exp(log_likelihood_real(0.4, x, sigma))
    assert np.trapezoid(dens, x) == pytest.approx(1.0, abs=1e-9)
    var = np.trapezoid(dens * (x - 0.4) ** 2, x)
    assert var == pytest.approx(2 * sigma**2, rel=1e-6)


# -- noise estimation -------------------------------------------------------


def test_estimate_sigma_simulated_patch():
    noise = np.random.default_rng(12).normal(0, 0.1, size=(40, 40))
    est = estimate_sigma(noise, (5, 5, 30, 30))
    assert 0.9 * 0.1 / math.sqrt(2) <= est <= 1.1 * 0.1 / math.sqrt(2)


def test_estimate_sigma_alternating_patch_closed_form():
    img = np.indices((6, 6)).sum(axis=0) % 2 * 2.0
    n = 36
    sd = math.sqrt(n / (n - 1))
    assert estimate_sigma(img, (0, 0, 6, 6)) == pytest.approx(sd / math.sqrt(2), rel=1e-14)


def test_estimate_sigma_patch_is_column_row_ordered():
    img = np.zeros((10, 20))
    img[2:7, 10:15] = np.random.default_rng(0).normal(size=(5, 5))
    expected = np.std(img[2:7, 10:15], ddof=1) / math.sqrt(2)
    assert estimate_sigma(img, (10, 2, 5, 5)) == pytest.approx(expected)


def test_estimate_sigma_errors():
    with pytest.raises(EstimationError):
        estimate_sigma(np.ones((10, 10)), (0, 0, 5, 5))
    with pytest.raises(ConfigError):
        estimate_sigma(np.random.default_rng(0).normal(size=(10, 10)), (0, 0, 4, 4))
    with pytest.raises(ConfigError):
        estimate_sigma(np.random.default_rng(0).normal(size=(10, 10)), (6, 0, 5, 5))


def test_default_patch_fits():
    for rows, cols in [(32, 40), (64, 64), (181, 181)]:
        x, y, w, h = default_patch(rows, cols)
        assert w * h >= 25 and x + w <= cols and y + h <= rows


def test_polar_cartesian_consistency_at_zero_magnitude():
    a, b = to_cartesian(0.0, 1.0)
    assert log_likelihood(1.0, 0.5, 0.0, 0.0, 0.4) == pytest.approx(cartesian_route(1.0, 0.5, 0.0, 1.0, 0.4))
    assert (a, b) == (0.0, 0.0)
