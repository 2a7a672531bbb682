"""Joint magnitude/phase likelihood under complex Gaussian noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bifs.errors import ConfigError, EstimationError
from bifs.grid import check_image

LOG_2PI = math.log(2.0 * math.pi)
MIN_PATCH_PIXELS = 25


@dataclass(frozen=True)
class SiteObservation:
    r: float
    psi: float
    sigma: float

    def __post_init__(self):
        if self.r < 0:
            raise ConfigError(f"observed magnitude must be >= 0, got {self.r}")
        if not self.sigma > 0:
            raise ConfigError(f"noise scale must be positive, got {self.sigma}")


def log_likelihood(r, psi, rho, theta, sigma):
    """Log density of observing ``(r, psi)`` given the true ``(rho, theta)``.

    This is the bivariate normal density of the Cartesian observation times
    the Jacobian ``r`` of the change to polar coordinates::

        r / (2 pi sigma^2) * exp(-(r^2 + rho^2 - 2 rho r cos(psi - theta)) / (2 sigma^2))

    All arguments broadcast.
    """
    r = np.asarray(r, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    s2 = sigma * sigma
    bracket = r * r + rho * rho - 2.0 * rho * r * np.cos(np.subtract(psi, theta))
    with np.errstate(divide="ignore"):
        val = np.log(r) - LOG_2PI - np.log(s2) - bracket / (2.0 * s2)
    return float(val) if val.ndim == 0 else val


def log_likelihood_obs(obs: SiteObservation, rho, theta):
    return log_likelihood(obs.r, obs.psi, rho, theta, obs.sigma)


def estimate_sigma(image, patch) -> float:
    """Fourier-space noise scale from a flat, signal-free image patch.

    Parameters
    ----------
    image : array_like, shape (M, N)
    patch : tuple of int
        ``(x, y, w, h)`` with ``x`` the first column and ``y`` the first row.

    Returns
    -------
    float
        Sample standard deviation of the patch (``n - 1`` denominator)
        divided by ``sqrt(2)``.
    """
    img = check_image(image)
    x, y, w, h = (int(v) for v in patch)
    if w * h < MIN_PATCH_PIXELS:
        raise ConfigError(f"noise patch needs at least {MIN_PATCH_PIXELS} pixels, got {w * h}")
    if x < 0 or y < 0 or w <= 0 or h <= 0 or y + h > img.shape[0] or x + w > img.shape[1]:
        raise ConfigError(f"noise patch {(x, y, w, h)} outside image of shape {img.shape}")
    values = img[y : y + h, x : x + w]
    sd = float(np.std(values, ddof=1))
    if not sd > 0:
        raise EstimationError("noise patch has zero variance")
    return sd / math.sqrt(2.0)


def default_patch(rows: int, cols: int) -> tuple[int, int, int, int]:
    """Top-left corner square used for phantom runs."""
    side = max(5, int(0.15 * min(rows, cols)))
    return (0, 0, min(side, cols), min(side, rows))


def log_likelihood_real(a_obs, x, sigma):
    """Log density of a real-valued coefficient observed with variance ``2 sigma^2``.

    Self-conjugate coefficients of a real image carry the full image-space
    noise variance on the real axis, which is twice the per-axis variance of
    the other sites.
    """
    var = 2.0 * np.asarray(sigma, dtype=np.float64) ** 2
    d = np.subtract(a_obs, x)
    val = -0.5 * d * d / var - 0.5 * np.log(var) - 0.5 * LOG_2PI
    return float(val) if np.ndim(val) == 0 else val
