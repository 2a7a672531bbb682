"""Per-site Metropolis sampling of Fourier coefficients.

Each free lattice site runs an independent random-walk chain. Proposals
are isotropic Gaussian steps in the complex plane; the target is the
posterior over magnitude and phase, so the log acceptance ratio includes
``log(rho_current) - log(rho_proposed)`` from the polar Jacobian.
Self-conjugate sites hold real coefficients and run a one-dimensional
chain on the real axis instead.

Chains for many sites are advanced together as numpy vectors. Every site
draws from its own counter-based stream keyed by ``(seed, site)`` and the
grouping of sites into vectors is fixed, so results do not depend on how
many worker threads execute the groups.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from bifs.errors import ConfigError, InitializationError, StructuralError
from bifs.grid import Cartesian, to_cartesian, to_polar, unique_sites
from bifs.likelihood import SiteObservation, log_likelihood, log_likelihood_real
from bifs.priors import (
    MagnitudePriorSpec,
    ParamFnSpec,
    TruncNormalParams,
    log_prior_magnitude,
    log_prior_phase,
)

logger = logging.getLogger(__name__)

# Sites advanced together in one vectorized group. Fixed so that numerical
# results never depend on the worker count.
CHUNK_SITES = 1024
# Iterations of random numbers drawn per site at once.
RNG_BLOCK = 1024
# Default proposal step relative to a typical posterior width (see auto_xi).
DEFAULT_XI_FACTOR = 2.4

MAIN_STREAM = 0


def site_rng(seed: int, site: int, stream: int = MAIN_STREAM) -> np.random.Generator:
    """Counter-based generator for one lattice site.

    `site` is the row-major flat index; `stream` separates the main run from
    adaptation pilots.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, (int(stream) << 32) | int(site)]
    return np.random.Generator(np.random.Philox(key=key))


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("BIFS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"BIFS_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass
class SamplerConfig:
    """Chain length, thinning, proposal scale and adaptation settings.

    `proposal_scale` is a scalar step, a :class:`ParamFnSpec` evaluated over
    the lattice, an explicit ``(M, N)`` array, or None for the constant
    returned by :func:`auto_xi`.
    """

    total_iters: int = 20000
    burn_in: int = 2000
    thin: int = 10
    proposal_scale: float | ParamFnSpec | np.ndarray | None = None
    seed: int = 0
    adapt: bool = False
    adapt_target: float = 0.234
    adapt_iters: int = 2000
    adapt_rounds: int = 5
    adapt_tol: float = 0.07
    workers: int | None = None

    def __post_init__(self):
        if not (self.total_iters > self.burn_in >= 0):
            raise ConfigError("need total_iters > burn_in >= 0")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if (self.total_iters - self.burn_in) % self.thin:
            raise ConfigError("total_iters - burn_in must be a multiple of thin")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if not 0 < self.adapt_target < 1:
            raise ConfigError("adapt_target must lie in (0, 1)")
        if self.adapt_iters < 1 or self.adapt_rounds < 1:
            raise ConfigError("adapt_iters and adapt_rounds must be >= 1")
        ps = self.proposal_scale
        if isinstance(ps, (int, float)) and not (ps > 0 and math.isfinite(ps)):
            raise ConfigError(f"proposal scale must be positive, got {ps}")

    @property
    def retained(self) -> int:
        return (self.total_iters - self.burn_in) // self.thin


@dataclass(frozen=True)
class SiteModel:
    """Everything one site chain needs.

    `real_axis` marks a self-conjugate site, whose coefficient is real.
    For those, `obs.r` and `obs.psi` still describe the observed value
    (``psi`` is 0 or pi).
    """

    site: tuple[int, int]
    obs: SiteObservation
    prior: TruncNormalParams
    xi: float
    fixed: bool = False
    real_axis: bool = False

    def __post_init__(self):
        if not self.fixed and not self.xi > 0:
            raise ConfigError(f"proposal scale must be positive at site {self.site}")


@dataclass
class SiteChain:
    samples: np.ndarray  # (retained, 2) Cartesian states
    accept_count: int
    propose_count: int

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.propose_count if self.propose_count else 0.0


@dataclass
class FieldModel:
    """Per-site inputs for a whole lattice.

    Grids are centered ``(M, N)`` arrays aligned with the observed spectrum.
    """

    observed: np.ndarray
    sigma: float
    mu: np.ndarray
    sigma_k: np.ndarray
    fix_dc: bool = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.observed.shape

    def polar(self):
        return to_polar(self.observed.real, self.observed.imag)

    def site_model(self, flat: int, xi: float) -> SiteModel:
        rows, cols = self.shape
        i, j = divmod(int(flat), cols)
        r, psi = to_polar(self.observed.real[i, j], self.observed.imag[i, j])
        part = unique_sites(rows, cols)
        dc = (i == rows // 2) and (j == cols // 2)
        return SiteModel(
            site=(i - rows // 2, j - cols // 2),
            obs=SiteObservation(r=float(r), psi=float(psi), sigma=self.sigma),
            prior=TruncNormalParams(float(self.mu[i, j]), float(self.sigma_k[i, j])),
            xi=float(xi),
            fixed=bool(dc and self.fix_dc),
            real_axis=bool(np.isin(flat, part.self_conjugate)),
        )


def build_field_model(observed, prior: MagnitudePriorSpec, sigma: float, fix_dc: bool = True) -> FieldModel:
    """Resolve magnitude-prior parameters at every site of `observed`."""
    observed = np.asarray(observed, dtype=np.complex128)
    if not sigma > 0:
        raise ConfigError(f"noise scale must be positive, got {sigma}")
    mu, sk = prior.grids(*observed.shape)
    if not fix_dc and not sk[observed.shape[0] // 2, observed.shape[1] // 2] > 0:
        raise ConfigError("a sampled DC site needs a positive dc_value")
    return FieldModel(observed=observed, sigma=float(sigma), mu=mu, sigma_k=sk, fix_dc=fix_dc)


def auto_xi(model: FieldModel) -> float:
    """Constant proposal scale matched to a typical site posterior.

    Combines the noise scale with the median prior scale over free sites as
    ``1 / sqrt(1/sigma^2 + 1/median^2)`` and multiplies by
    ``DEFAULT_XI_FACTOR``.
    """
    part = unique_sites(*model.shape)
    s_med = float(np.median(model.sigma_k.reshape(-1)[part.free])) if len(part.free) else model.sigma
    return DEFAULT_XI_FACTOR / math.sqrt(1.0 / model.sigma**2 + 1.0 / s_med**2)


def resolve_xi(scale, model: FieldModel) -> np.ndarray:
    rows, cols = model.shape
    if scale is None:
        xi = np.full((rows, cols), auto_xi(model))
    elif isinstance(scale, ParamFnSpec):
        xi = np.asarray(scale.grid(rows, cols), dtype=np.float64)
    elif np.ndim(scale) == 0:
        xi = np.full((rows, cols), float(scale))
    else:
        xi = np.array(scale, dtype=np.float64)
        if xi.shape != (rows, cols):
            raise StructuralError(f"proposal map shape {xi.shape} != grid {(rows, cols)}")
    return xi


# -- single-step pieces ------------------------------------------------------


def propose(current, xi: float, rng: np.random.Generator) -> Cartesian:
    """Gaussian random-walk step ``(a, b) + xi * (z1, z2)``."""
    z = rng.standard_normal(2)
    a, b = current
    return Cartesian(a + xi * z[0], b + xi * z[1])


def log_posterior_polar(rho, theta, r, psi, sigma, mu, sigma_k):
    """Unnormalized log posterior over magnitude and phase."""
    return (
        log_likelihood(r, psi, rho, theta, sigma)
        + log_prior_magnitude(rho, mu, sigma_k)
        + log_prior_phase(theta)
    )


def log_posterior_real(x, a_obs, sigma, mu, sigma_k):
    """Log posterior of a real coefficient; the magnitude prior acts on ``|x|``."""
    return log_likelihood_real(a_obs, x, sigma) + log_prior_magnitude(np.abs(x), mu, sigma_k)


def log_jacobian_ratio(rho_current, rho_proposed):
    """``log(rho_current) - log(rho_proposed)``, taken as 0 when both vanish."""
    rc = np.asarray(rho_current, dtype=np.float64)
    rp = np.asarray(rho_proposed, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.log(rc) - np.log(rp)
    val = np.where((rc == 0) & (rp == 0), 0.0, val)
    return float(val) if val.ndim == 0 else val


def log_acceptance(proposed, current, m: SiteModel):
    """Log Metropolis ratio for moving `current` to `proposed` (both polar).

    Evaluated directly from the likelihood, both priors and the Jacobian.
    The caller accepts when ``log(u) < min(0, value)``.
    """
    o, p = m.obs, m.prior
    lp_new = log_posterior_polar(proposed[0], proposed[1], o.r, o.psi, o.sigma, p.mu, p.sigma)
    lp_old = log_posterior_polar(current[0], current[1], o.r, o.psi, o.sigma, p.mu, p.sigma)
    return lp_new - lp_old + log_jacobian_ratio(current[0], proposed[0])


# -- vectorized chains --------------------------------------------------------


def _draws(rngs, n_iter):
    """Per-site normal and uniform draws, shaped for iteration-major access."""
    n = len(rngs)
    z = np.empty((n_iter, 2, n))
    logu = np.empty((n_iter, n))
    for s, g in enumerate(rngs):
        z[:, :, s] = g.standard_normal((n_iter, 2))
        logu[:, s] = np.log(g.random(n_iter))
    return z, logu


def _run_polar(r, psi, sigma, mu, sk, xi, rho0, theta0, n_iter, burn_in, thin, rngs):
    n = r.shape[0]
    rho, theta = rho0.copy(), theta0.copy()
    a, b = to_cartesian(rho, theta)
    a, b = np.atleast_1d(a).copy(), np.atleast_1d(b).copy()
    lp = np.atleast_1d(log_posterior_polar(rho, theta, r, psi, sigma, mu, sk))
    bad = ~np.isfinite(lp)
    if np.any(bad):
        raise InitializationError("non-finite log posterior at initial state", np.flatnonzero(bad))
    retained = (n_iter - burn_in) // thin
    out = np.empty((n, retained, 2))
    accepted = np.zeros(n, dtype=np.int64)
    t = 0
    while t < n_iter:
        blk = min(RNG_BLOCK, n_iter - t)
        z, logu = _draws(rngs, blk)
        for j in range(blk):
            t += 1
            ap = a + xi * z[j, 0]
            bp = b + xi * z[j, 1]
            rp, thp = to_polar(ap, bp)
            lpp = log_posterior_polar(rp, thp, r, psi, sigma, mu, sk)
            ratio = lpp - lp + log_jacobian_ratio(rho, rp)
            acc = logu[j] < np.minimum(0.0, ratio)
            rho = np.where(acc, rp, rho)
            theta = np.where(acc, thp, theta)
            lp = np.where(acc, lpp, lp)
            a = np.where(acc, rp * np.cos(thp), a)
            b = np.where(acc, rp * np.sin(thp), b)
            accepted += acc
            if t > burn_in and (t - burn_in) % thin == 0:
                k = (t - burn_in) // thin - 1
                out[:, k, 0] = a
                out[:, k, 1] = b
    return out, accepted


def _run_real(a_obs, sigma, mu, sk, xi, x0, n_iter, burn_in, thin, rngs):
    n = a_obs.shape[0]
    x = x0.copy()
    lp = np.atleast_1d(log_posterior_real(x, a_obs, sigma, mu, sk))
    bad = ~np.isfinite(lp)
    if np.any(bad):
        raise InitializationError("non-finite log posterior at initial state", np.flatnonzero(bad))
    retained = (n_iter - burn_in) // thin
    out = np.zeros((n, retained, 2))
    accepted = np.zeros(n, dtype=np.int64)
    t = 0
    while t < n_iter:
        blk = min(RNG_BLOCK, n_iter - t)
        z, logu = _draws(rngs, blk)
        for j in range(blk):
            t += 1
            xp = x + xi * z[j, 0]
            lpp = log_posterior_real(xp, a_obs, sigma, mu, sk)
            acc = logu[j] < np.minimum(0.0, lpp - lp)
            x = np.where(acc, xp, x)
            lp = np.where(acc, lpp, lp)
            accepted += acc
            if t > burn_in and (t - burn_in) % thin == 0:
                out[:, (t - burn_in) // thin - 1, 0] = x
    return out, accepted


def run_sites(models, inits, n_iter, burn_in, thin, rngs):
    """Advance several independent site chains together.

    Parameters
    ----------
    models : list of SiteModel
        Must all be free sites or all be real-axis sites; none fixed.
    inits : list of (rho, theta)
    rngs : list of numpy Generators, one per site

    Returns
    -------
    samples : np.ndarray, shape (n, retained, 2)
    accepted : np.ndarray of int, shape (n,)
    """
    if not models:
        return np.empty((0, (n_iter - burn_in) // thin, 2)), np.zeros(0, dtype=np.int64)
    kinds = {m.real_axis for m in models}
    if len(kinds) != 1 or any(m.fixed for m in models):
        raise StructuralError("run_sites needs a homogeneous group of non-fixed sites")
    col = lambda f: np.array([f(m) for m in models], dtype=np.float64)  # noqa: E731
    sigma = col(lambda m: m.obs.sigma)
    mu = col(lambda m: m.prior.mu)
    sk = col(lambda m: m.prior.sigma)
    xi = col(lambda m: m.xi)
    rho0 = np.array([p[0] for p in inits], dtype=np.float64)
    theta0 = np.array([p[1] for p in inits], dtype=np.float64)
    if kinds.pop():
        a_obs = col(lambda m: m.obs.r * math.cos(m.obs.psi))
        x0 = np.asarray(to_cartesian(rho0, theta0)[0], dtype=np.float64).reshape(-1)
        return _run_real(a_obs, sigma, mu, sk, xi, x0, n_iter, burn_in, thin, rngs)
    r = col(lambda m: m.obs.r)
    psi = col(lambda m: m.obs.psi)
    return _run_polar(r, psi, sigma, mu, sk, xi, rho0, theta0, n_iter, burn_in, thin, rngs)


def run_site_chain(m: SiteModel, init, cfg: SamplerConfig, rng: np.random.Generator) -> SiteChain:
    """Run one site chain for ``cfg.total_iters`` iterations.

    Fixed sites return the observed value repeated with no acceptances.
    """
    n_ret = cfg.retained
    if m.fixed:
        a, b = to_cartesian(m.obs.r, m.obs.psi)
        samples = np.tile([a, b], (n_ret, 1))
        return SiteChain(samples=samples, accept_count=0, propose_count=cfg.total_iters)
    out, acc = run_sites([m], [init], cfg.total_iters, cfg.burn_in, cfg.thin, [rng])
    return SiteChain(samples=out[0], accept_count=int(acc[0]), propose_count=cfg.total_iters)


# -- whole field ------------------------------------------------------------


@dataclass
class ChainField:
    """Retained chain states for every sampled site of a lattice.

    `sites` holds row-major flat indices of the free and self-conjugate
    sites in ascending order; `samples[i]` is the ``(retained, 2)`` array of
    Cartesian states of site ``sites[i]``.
    """

    rows: int
    cols: int
    sites: np.ndarray
    samples: np.ndarray
    accept_count: np.ndarray
    fixed: np.ndarray
    total_iters: int
    burn_in: int
    thin: int
    seed: int
    xi: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        part = unique_sites(self.rows, self.cols)
        if not np.array_equal(np.asarray(self.sites), part.sampled):
            raise StructuralError("chain field sites do not match the lattice partition")
        if self.samples.shape != (len(self.sites), self.retained, 2):
            raise StructuralError(f"samples shape {self.samples.shape} inconsistent with site count")

    @property
    def retained(self) -> int:
        return (self.total_iters - self.burn_in) // self.thin

    @property
    def propose_count(self) -> int:
        return self.total_iters

    @property
    def offsets(self) -> np.ndarray:
        i, j = np.divmod(self.sites, self.cols)
        return np.stack([i - self.rows // 2, j - self.cols // 2], axis=1)

    def chain(self, k: int, l: int) -> SiteChain:
        flat = (k + self.rows // 2) * self.cols + (l + self.cols // 2)
        idx = int(np.searchsorted(self.sites, flat))
        if idx >= len(self.sites) or self.sites[idx] != flat:
            raise KeyError(f"site {(k, l)} is not sampled (mirrored)")
        return SiteChain(self.samples[idx], int(self.accept_count[idx]), self.total_iters)

    def truncated(self, n: int) -> "ChainField":
        """View keeping only the first `n` retained states."""
        if n > self.retained:
            raise ValueError("cannot extend a chain field")
        return ChainField(
            rows=self.rows, cols=self.cols, sites=self.sites,
            samples=self.samples[:, :n], accept_count=self.accept_count,
            fixed=self.fixed, total_iters=self.burn_in + n * self.thin,
            burn_in=self.burn_in, thin=self.thin, seed=self.seed, xi=self.xi,
        )


def _field_groups(model: FieldModel):
    """Fixed, self-conjugate and free site groups, free ones cut into chunks."""
    rows, cols = model.shape
    part = unique_sites(rows, cols)
    dc = (rows // 2) * cols + cols // 2
    fixed = np.array([dc]) if model.fix_dc else np.array([], dtype=np.int64)
    real = part.self_conjugate[~np.isin(part.self_conjugate, fixed)]
    groups = [(True, real)] if len(real) else []
    for s in range(0, len(part.free), CHUNK_SITES):
        groups.append((False, part.free[s : s + CHUNK_SITES]))
    return part, fixed, groups


def _run_group(model, real_axis, flat, xi_flat, n_iter, burn_in, thin, seed, stream):
    rows, cols = model.shape
    obs = model.observed.reshape(-1)[flat]
    r, psi = to_polar(obs.real, obs.imag)
    r, psi = np.atleast_1d(r), np.atleast_1d(psi)
    rngs = [site_rng(seed, f, stream) for f in flat]
    sigma = np.full(len(flat), model.sigma)
    mu = model.mu.reshape(-1)[flat]
    sk = model.sigma_k.reshape(-1)[flat]
    xi = xi_flat[flat]
    try:
        if real_axis:
            return _run_real(obs.real.copy(), sigma, mu, sk, xi, obs.real.copy(), n_iter, burn_in, thin, rngs)
        return _run_polar(r, psi, sigma, mu, sk, xi, r, psi, n_iter, burn_in, thin, rngs)
    except InitializationError as exc:
        bad = [tuple(int(v) for v in divmod(int(flat[i]), cols)) for i in exc.args[1]]
        sites = [(i - rows // 2, j - cols // 2) for i, j in bad]
        raise InitializationError(f"{exc.args[0]} at sites {sites}") from exc


def _run_groups(model, xi_grid, n_iter, burn_in, thin, seed, stream, workers):
    part, fixed, groups = _field_groups(model)
    xi_flat = np.asarray(xi_grid, dtype=np.float64).reshape(-1)
    for real_axis, flat in groups:
        if np.any(~(xi_flat[flat] > 0)):
            raise ConfigError("proposal scale must be positive at every sampled site")

    def work(group):
        return _run_group(model, group[0], group[1], xi_flat, n_iter, burn_in, thin, seed, stream)

    n_workers = min(worker_count(workers), max(1, len(groups)))
    if n_workers == 1:
        results = [work(g) for g in groups]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(work, groups))
    return part, fixed, groups, results


def run_field(model: FieldModel, cfg: SamplerConfig, xi=None) -> ChainField:
    """Sample every free and self-conjugate site of the lattice.

    Chains start at the observed coefficient. When `xi` is None the proposal
    scale comes from ``cfg`` (after a pilot adaptation if ``cfg.adapt``).
    """
    rows, cols = model.shape
    if xi is None:
        xi = adapt_proposals(model, cfg).xi if cfg.adapt else resolve_xi(cfg.proposal_scale, model)
    xi = resolve_xi(xi, model)
    part, fixed, groups, results = _run_groups(
        model, xi, cfg.total_iters, cfg.burn_in, cfg.thin, cfg.seed, MAIN_STREAM, cfg.workers
    )
    sites = part.sampled
    n_ret = cfg.retained
    samples = np.empty((len(sites), n_ret, 2))
    accept = np.zeros(len(sites), dtype=np.int64)
    is_fixed = np.isin(sites, fixed)
    for (_, flat), (out, acc) in zip(groups, results):
        idx = np.searchsorted(sites, flat)
        samples[idx] = out
        accept[idx] = acc
    obs_flat = model.observed.reshape(-1)
    for f in fixed:
        idx = np.searchsorted(sites, f)
        samples[idx, :, 0] = obs_flat[f].real
        samples[idx, :, 1] = 0.0
    return ChainField(
        rows=rows, cols=cols, sites=sites, samples=samples, accept_count=accept,
        fixed=is_fixed, total_iters=cfg.total_iters, burn_in=cfg.burn_in,
        thin=cfg.thin, seed=cfg.seed, xi=xi,
    )


def _mirror_fill(values_at_sites, sites, rows, cols, fill=np.nan):
    grid = np.full(rows * cols, fill, dtype=np.float64)
    grid[sites] = values_at_sites
    part = unique_sites(rows, cols)
    grid[part.mirrored] = grid[part.free]
    return grid.reshape(rows, cols)


def acceptance_map(field: ChainField) -> np.ndarray:
    """Per-site acceptance rate laid out on the centered lattice.

    Mirrored sites repeat their partner's rate; fixed sites read 1.0.
    """
    rates = field.accept_count / float(field.propose_count)
    rates = np.where(field.fixed, 1.0, rates)
    return _mirror_fill(rates, field.sites, field.rows, field.cols)


@dataclass
class Adaptation:
    xi: np.ndarray
    rounds: list = field(default_factory=list)
    converged: bool = False


def adapt_proposals(model: FieldModel, cfg: SamplerConfig, xi0=None) -> Adaptation:
    """Tune per-site proposal scales toward ``cfg.adapt_target`` with pilot runs.

    Each round runs ``cfg.adapt_iters`` iterations per site, then multiplies
    every site's scale by ``rate / target`` clipped to ``[1/3, 3]``. Stops
    when all rates sit within ``cfg.adapt_tol`` of the target or after
    ``cfg.adapt_rounds`` rounds, returning for each site the scale whose
    pilot rate came closest to the target. Pilot draws come from streams
    separate from the main run and their states are discarded.
    """
    rows, cols = model.shape
    xi = resolve_xi(cfg.proposal_scale if xi0 is None else xi0, model).copy()
    best_xi = xi.copy()
    best_err = np.full((rows, cols), np.inf)
    target, tol = cfg.adapt_target, cfg.adapt_tol
    result = Adaptation(xi=best_xi)
    for rnd in range(cfg.adapt_rounds):
        part, fixed, groups, results = _run_groups(
            model, xi, cfg.adapt_iters, 0, cfg.adapt_iters, cfg.seed, rnd + 1, cfg.workers
        )
        flat = np.concatenate([g[1] for g in groups]) if groups else np.array([], dtype=np.int64)
        rate = np.concatenate([res[1] for res in results]) / cfg.adapt_iters if groups else np.array([])
        xi_flat, best_flat, err_flat = xi.reshape(-1), best_xi.reshape(-1), best_err.reshape(-1)
        err = np.abs(rate - target)
        # ties go to the newer scale, which moved toward the target
        better = err <= err_flat[flat]
        best_flat[flat[better]] = xi_flat[flat[better]]
        err_flat[flat[better]] = err[better]
        in_band = float(np.mean(err <= tol)) if len(err) else 1.0
        info = {"round": rnd + 1, "mean_rate": float(np.mean(rate)) if len(rate) else float("nan"),
                "fraction_in_band": in_band, "xi": xi.copy()}
        result.rounds.append(info)
        logger.info("adaptation round %d: mean rate %.4f, %.1f%% of sites within band",
                    rnd + 1, info["mean_rate"], 100 * in_band)
        if in_band == 1.0:
            result.converged = True
            break
        xi_flat[flat] *= np.clip(rate / target, 1.0 / 3.0, 3.0)
    best_flat = best_xi.reshape(-1)
    best_flat[part.mirrored] = best_flat[part.free]
    if not result.converged:
        warnings.warn(
            f"proposal adaptation did not bring every site within {tol} of {target} "
            f"after {cfg.adapt_rounds} rounds; using the best scale seen per site",
            RuntimeWarning,
            stacklevel=2,
        )
    result.xi = best_xi
    return result
