"""Parameter functions over Fourier space and per-site prior densities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from bifs.errors import ConfigError
from bifs.grid import site_offsets

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ParamFnSpec:
    """Radial power-law ``lam / |nu|**d`` with an explicit value at the origin.

    Attributes
    ----------
    lam : float
        Positive scale.
    d : float
        Decay exponent; any real value.
    dc_value : float
        Value returned at zero frequency, where the power law is undefined.
    """

    lam: float = 1.0
    d: float = 1.0
    dc_value: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be positive and finite, got {self.lam}")
        if not math.isfinite(self.d):
            raise ConfigError(f"d must be finite, got {self.d}")
        if not (self.dc_value >= 0 and math.isfinite(self.dc_value)):
            raise ConfigError(f"dc_value must be >= 0 and finite, got {self.dc_value}")

    def grid(self, rows: int, cols: int) -> np.ndarray:
        """Evaluate over the whole centered lattice."""
        k, l = site_offsets(rows, cols)
        return eval_param_fn(self, (k, l))


@dataclass(frozen=True)
class TruncNormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"truncated normal scale must be positive, got {self.sigma}")


@dataclass(frozen=True)
class MagnitudePriorSpec:
    """Truncated-normal magnitude prior whose mean is ``c`` times its scale."""

    c: float = 1.0
    sigma_fn: ParamFnSpec = ParamFnSpec()

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ConfigError(f"c must be positive and finite, got {self.c}")

    def grids(self, rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
        """Location and scale of the magnitude prior at every site."""
        sigma = self.sigma_fn.grid(rows, cols)
        return self.c * sigma, sigma


def eval_param_fn(spec: ParamFnSpec, site):
    """Evaluate the parameter function at a site ``(k, l)``.

    `site` may hold scalars or broadcastable arrays of offsets.
    """
    k, l = site
    k = np.asarray(k, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    r2 = k * k + l * l
    with np.errstate(divide="ignore"):
        val = spec.lam / np.power(np.where(r2 > 0, r2, 1.0), spec.d / 2.0)
    val = np.where(r2 > 0, val, spec.dc_value)
    return float(val) if val.ndim == 0 else val


def magnitude_prior_at(spec: MagnitudePriorSpec, site) -> TruncNormalParams:
    sigma = eval_param_fn(spec.sigma_fn, site)
    return TruncNormalParams(mu=spec.c * sigma, sigma=sigma)


def log_prior_magnitude(rho, mu, sigma):
    """Log density of a normal truncated to ``[0, inf)``.

    Negative magnitudes get ``-inf``. Arguments broadcast.
    """
    rho = np.asarray(rho, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    z = (rho - mu) / sigma
    val = -0.5 * z * z - np.log(sigma) - 0.5 * LOG_2PI - log_ndtr(mu / sigma)
    val = np.where(rho >= 0, val, -np.inf)
    return float(val) if val.ndim == 0 else val


def log_prior_phase(theta):
    """Uniform log density on ``(-pi, pi]``."""
    theta = np.asarray(theta, dtype=np.float64)
    val = np.where((theta > -np.pi) & (theta <= np.pi), -LOG_2PI, -np.inf)
    return float(val) if val.ndim == 0 else val
