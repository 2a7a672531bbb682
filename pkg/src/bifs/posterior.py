"""Image-space products of a sampled chain field.

Every retained chain state defines a full Hermitian spectrum, hence a real
posterior image. These are produced in batches on demand rather than held
in memory all at once.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from bifs.errors import ConfigError, StructuralError
from bifs.grid import enforce_hermitian, inverse_fft, to_cartesian, to_polar, unique_sites
from bifs.sampler import ChainField, FieldModel, log_posterior_polar, log_posterior_real

BATCH = 64
DEFAULT_BLOCK_ROWS = 8


@dataclass
class PosteriorSummary:
    mean: np.ndarray
    quantiles: dict[float, np.ndarray]
    sample_count: int


@dataclass
class ChangeMap:
    values: np.ndarray
    sample_count: int


def spectra(field: ChainField, start: int, stop: int) -> np.ndarray:
    """Hermitian spectra for retained states ``start`` to ``stop``."""
    n = stop - start
    flat = np.zeros((n, field.rows * field.cols), dtype=np.complex128)
    states = field.samples[:, start:stop]
    flat[:, field.sites] = (states[..., 0] + 1j * states[..., 1]).T
    return enforce_hermitian(flat.reshape(n, field.rows, field.cols))


def image_batches(field: ChainField, batch: int = BATCH, stop: int | None = None):
    """Yield ``(start, images)`` with images of shape ``(n, M, N)``."""
    stop = field.retained if stop is None else stop
    for start in range(0, stop, batch):
        end = min(start + batch, stop)
        images, _ = inverse_fft(spectra(field, start, end))
        yield start, images


def sample_images(field: ChainField, batch: int = BATCH):
    """Posterior image for every retained state, in chain order."""
    for _, images in image_batches(field, batch):
        yield from images


def check_levels(levels) -> list[float]:
    levels = sorted(float(q) for q in levels)
    for q in levels:
        if not 0.0 < q < 1.0:
            raise ConfigError(f"quantile level must lie in (0, 1), got {q}")
    return levels


def summarize(field: ChainField, levels=(0.05, 0.5, 0.95), block_rows: int = DEFAULT_BLOCK_ROWS,
              batch: int = BATCH) -> PosteriorSummary:
    """Posterior mean and per-pixel quantile images.

    Quantiles are lower empirical quantiles: the order statistic of rank
    ``ceil(level * n)``. Per-pixel sample vectors are gathered for
    `block_rows` image rows at a time, recomputing the posterior images for
    each block, so memory stays near ``n * block_rows * N`` values.
    """
    levels = check_levels(levels)
    n = field.retained
    if levels and n < 100:
        raise ConfigError(f"quantiles need at least 100 retained states, got {n}")
    if block_rows < 1:
        raise ConfigError("block_rows must be >= 1")
    total = np.zeros((field.rows, field.cols))
    for _, images in image_batches(field, batch):
        total += images.sum(axis=0)
    mean = total / n

    ranks = [max(1, math.ceil(q * n)) - 1 for q in levels]
    quantiles = {q: np.empty((field.rows, field.cols)) for q in levels}
    if levels:
        for r0 in range(0, field.rows, block_rows):
            r1 = min(r0 + block_rows, field.rows)
            block = np.empty((n, r1 - r0, field.cols))
            for start, images in image_batches(field, batch):
                block[start : start + len(images)] = images[:, r0:r1]
            block = np.partition(block, ranks, axis=0)
            for q, k in zip(levels, ranks):
                quantiles[q][r0:r1] = block[k]
    return PosteriorSummary(mean=mean, quantiles=quantiles, sample_count=n)


def posterior_mean_spectrum(field: ChainField) -> np.ndarray:
    """Hermitian spectrum of per-site chain means."""
    means = field.samples.mean(axis=1)
    flat = np.zeros(field.rows * field.cols, dtype=np.complex128)
    flat[field.sites] = means[:, 0] + 1j * means[:, 1]
    return enforce_hermitian(flat.reshape(field.rows, field.cols))


def _map_magnitude(r, psi, sigma, mu, sk):
    hi = r + mu + 10.0 * (sigma + sk)

    def neg(rho):
        return -log_posterior_polar(rho, psi, r, psi, sigma, mu, sk)

    res = minimize_scalar(neg, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12})
    return float(res.x), bool(res.success)


def _map_real(a, sigma, mu, sk):
    hi = abs(a) + mu + 10.0 * (sigma + sk)

    def neg(x):
        return -log_posterior_real(x, a, sigma, mu, sk)

    best, ok = None, True
    for lo, up in ((0.0, hi), (-hi, 0.0)):
        res = minimize_scalar(neg, bounds=(lo, up), method="bounded", options={"xatol": 1e-12})
        ok &= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    return float(best.x), ok


def map_estimate(model: FieldModel) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Posterior-mode reconstruction, one Fourier site at a time.

    The magnitude is maximized numerically at phase ``psi``, where the
    likelihood peaks under the flat phase prior. Sites where the optimizer
    reports failure keep their observed value and are returned in the flag
    list as ``(k, l)`` offsets.

    Returns
    -------
    image : np.ndarray
    flagged : list of (k, l)
    """
    rows, cols = model.shape
    part = unique_sites(rows, cols)
    obs = model.observed.reshape(-1)
    mu, sk = model.mu.reshape(-1), model.sigma_k.reshape(-1)
    out = obs.copy()
    flagged = []
    dc = (rows // 2) * cols + cols // 2
    for f in part.free:
        r, psi = to_polar(obs[f].real, obs[f].imag)
        rho, ok = _map_magnitude(r, psi, model.sigma, mu[f], sk[f])
        if ok:
            a, b = to_cartesian(rho, psi)
            out[f] = complex(a, b)
        else:
            flagged.append(f)
    for f in part.self_conjugate:
        if f == dc and model.fix_dc:
            continue
        x, ok = _map_real(obs[f].real, model.sigma, mu[f], sk[f])
        if ok:
            out[f] = x
        else:
            flagged.append(f)
    image, _ = inverse_fft(enforce_hermitian(out.reshape(rows, cols)))
    offsets = [(f // cols - rows // 2, f % cols - cols // 2) for f in flagged]
    return image, offsets


def change_probability_map(first: ChainField, second: ChainField, batch: int = BATCH) -> ChangeMap:
    """Per-pixel fraction of paired states where the second image exceeds the first.

    The comparison is strict, so exact ties count as "not above". Fields
    with different retained counts are compared over the shorter length.
    """
    if (first.rows, first.cols) != (second.rows, second.cols):
        raise StructuralError(
            f"grid mismatch: {first.rows}x{first.cols} vs {second.rows}x{second.cols}"
        )
    n = min(first.retained, second.retained)
    if first.retained != second.retained:
        warnings.warn(
            f"retained counts differ ({first.retained} vs {second.retained}); using the first {n}",
            RuntimeWarning,
            stacklevel=2,
        )
    counts = np.zeros((first.rows, first.cols), dtype=np.int64)
    for (_, s_imgs), (_, v_imgs) in zip(image_batches(first, batch, n), image_batches(second, batch, n)):
        counts += np.sum(v_imgs - s_imgs > 0, axis=0)
    return ChangeMap(values=counts / n, sample_count=n)
