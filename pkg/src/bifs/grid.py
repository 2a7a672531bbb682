"""Centered unitary 2-D Fourier transforms and conjugate-site bookkeeping.

Spectra are stored with zero frequency at ``(rows // 2, cols // 2)``. The
forward transform uses the unitary ``1/sqrt(MN)`` scaling so that white
image noise of variance ``s**2`` becomes complex noise with variance
``s**2 / 2`` on each of the real and imaginary axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from bifs.errors import DataError


class Cartesian(NamedTuple):
    a: np.ndarray | float
    b: np.ndarray | float


class Polar(NamedTuple):
    rho: np.ndarray | float
    theta: np.ndarray | float


def check_image(image) -> np.ndarray:
    """Return `image` as a 2-D float64 array, rejecting bad shapes or values."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
        raise DataError(f"image must be 2-D with both dims >= 2, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DataError("image contains non-finite values")
    return img


def check_spectrum(spec) -> np.ndarray:
    s = np.asarray(spec, dtype=np.complex128)
    if s.ndim < 2 or s.shape[-2] < 2 or s.shape[-1] < 2:
        raise DataError(f"spectrum must be at least 2-D with dims >= 2, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise DataError("spectrum contains non-finite values")
    return s


def forward_fft(image) -> np.ndarray:
    """Centered unitary 2-D DFT of a real image.

    Parameters
    ----------
    image : array_like, shape (M, N)
        Finite real intensities.

    Returns
    -------
    np.ndarray of complex128, shape (M, N)
        Spectrum with the zero frequency at ``(M // 2, N // 2)``.
    """
    img = check_image(image)
    return np.fft.fftshift(np.fft.fft2(img, norm="ortho"))


def inverse_fft(spec) -> tuple[np.ndarray, float]:
    """Invert a centered unitary spectrum.

    Leading batch dimensions are allowed; the transform acts on the last two
    axes.

    Returns
    -------
    image : np.ndarray
        Real part of the inverse transform.
    residual : float
        Largest absolute imaginary part that was discarded. It is at
        roundoff level only when the input is Hermitian.
    """
    s = check_spectrum(spec)
    out = np.fft.ifft2(np.fft.ifftshift(s, axes=(-2, -1)), norm="ortho")
    residual = float(np.max(np.abs(out.imag))) if out.size else 0.0
    return out.real.copy(), residual


def to_polar(a, b) -> Polar:
    """Magnitude and phase of ``a + ib`` with phase in ``(-pi, pi]``.

    The phase of the origin is defined as 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rho = np.hypot(a, b)
    theta = np.arctan2(b, a)
    # arctan2 returns -pi for a negative real part with b == -0.0
    theta = np.where(theta <= -np.pi, np.pi, theta)
    theta = np.where(rho == 0.0, 0.0, theta)
    if rho.ndim == 0:
        return Polar(float(rho), float(theta))
    return Polar(rho, theta)


def to_cartesian(rho, theta) -> Cartesian:
    rho = np.asarray(rho, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(rho < 0):
        raise DataError("magnitude must be non-negative")
    a = rho * np.cos(theta)
    b = rho * np.sin(theta)
    if a.ndim == 0:
        return Cartesian(float(a), float(b))
    return Cartesian(a, b)


def conjugate_index(i, n):
    """Index of the conjugate frequency along one centered axis of length n."""
    return (2 * (n // 2) - np.asarray(i)) % n


def site_offsets(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed frequency offsets ``(k, l)`` of every lattice site."""
    k = np.arange(rows) - rows // 2
    l = np.arange(cols) - cols // 2
    return np.meshgrid(k, l, indexing="ij")


@dataclass(frozen=True)
class SitePartition:
    """Split of the lattice by conjugate symmetry.

    All index arrays hold row-major flat indices in ascending order, except
    ``mirrored`` which is aligned with ``free`` (``mirrored[i]`` is the
    conjugate partner of ``free[i]``).
    """

    rows: int
    cols: int
    free: np.ndarray
    self_conjugate: np.ndarray
    mirrored: np.ndarray

    @property
    def sampled(self) -> np.ndarray:
        """Free and self-conjugate sites together, in row-major order."""
        return np.sort(np.concatenate([self.free, self.self_conjugate]))


def unique_sites(rows: int, cols: int) -> SitePartition:
    """Partition the centered lattice into free, self-conjugate and mirrored sites.

    A site is free when its flat index is smaller than that of its
    conjugate partner.
    """
    if rows < 2 or cols < 2:
        raise DataError(f"grid dims must be >= 2, got {rows}x{cols}")
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    flat = (ii * cols + jj).ravel()
    conj = (conjugate_index(ii, rows) * cols + conjugate_index(jj, cols)).ravel()
    free = flat[flat < conj]
    return SitePartition(
        rows=rows,
        cols=cols,
        free=free,
        self_conjugate=flat[flat == conj],
        mirrored=conj[flat < conj],
    )


def enforce_hermitian(spec) -> np.ndarray:
    """Make a centered spectrum the transform of a real image.

    Free-site values are copied, conjugated, into their mirror sites and
    self-conjugate sites lose their imaginary part. Leading batch
    dimensions are allowed.
    """
    s = check_spectrum(spec)
    rows, cols = s.shape[-2:]
    part = unique_sites(rows, cols)
    flat = s.reshape(s.shape[:-2] + (rows * cols,)).copy()
    flat[..., part.mirrored] = np.conj(flat[..., part.free])
    flat[..., part.self_conjugate] = flat[..., part.self_conjugate].real
    return flat.reshape(s.shape)
