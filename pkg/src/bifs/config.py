"""Flat ``key = value`` run configuration.

Lines starting with ``#`` and blank lines are ignored. Command-line flags
override file values. Every key is parsed and validated before any
computation starts; unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from bifs.errors import ConfigError
from bifs.posterior import check_levels
from bifs.priors import MagnitudePriorSpec, ParamFnSpec
from bifs.sampler import SamplerConfig


def _float(v) -> float:
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {v!r}") from None
    if not math.isfinite(x):
        raise ConfigError(f"expected a finite number, got {v!r}")
    return x


def _int(v) -> int:
    try:
        return int(str(v).strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {v!r}") from None


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _floats(v, n=None) -> tuple[float, ...]:
    parts = v if isinstance(v, (list, tuple)) else str(v).split(",")
    out = tuple(_float(p) for p in parts)
    if n is not None and len(out) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {v!r}")
    return out


def _ints(v, n) -> tuple[int, ...]:
    parts = v if isinstance(v, (list, tuple)) else str(v).split(",")
    out = tuple(_int(p) for p in parts)
    if len(out) != n:
        raise ConfigError(f"expected {n} comma-separated integers, got {v!r}")
    return out


def _dc_mode(v) -> str:
    s = str(v).strip()
    if s == "fix_observed":
        return s
    if s.startswith("explicit:"):
        val = _float(s.split(":", 1)[1])
        if not val > 0:
            raise ConfigError("explicit DC prior scale must be positive")
        return f"explicit:{val!r}"
    raise ConfigError(f"dc_mode must be fix_observed or explicit:<value>, got {v!r}")


def _xi(v):
    if v is None or str(v).strip() == "auto":
        return None
    x = _float(v)
    if not x > 0:
        raise ConfigError("xi must be positive")
    return x


@dataclass
class RunConfig:
    # magnitude prior
    lam: float = 1.0
    d: float = 1.0
    c: float = 1.0
    dc_mode: str = "fix_observed"
    # sampler
    T: int = 20000
    burn_in: int = 2000
    thin: int = 10
    xi: float | None = None
    xi_fn: tuple[float, float] | None = None
    seed: int = 0
    adapt: bool = False
    adapt_target: float = 0.234
    adapt_iters: int = 2000
    # noise
    noise_sigma: float | None = None
    noise_patch: tuple[int, int, int, int] | None = None
    # summaries
    levels: tuple[float, ...] = (0.05, 0.5, 0.95)
    block_rows: int = 8
    # phantom generation
    size: tuple[int, int] = (181, 181)
    kind: str = "smooth_blobs"
    disk: tuple[float, float, float, float] | None = None
    noise: float | None = None

    def validate(self) -> "RunConfig":
        if self.xi is not None and self.xi_fn is not None:
            raise ConfigError("give xi or xi_fn, not both")
        if self.noise_sigma is not None and self.noise_patch is not None:
            raise ConfigError("give noise_sigma or noise_patch, not both")
        if self.noise_sigma is not None and not self.noise_sigma > 0:
            raise ConfigError("noise_sigma must be positive")
        if self.noise is not None and not self.noise > 0:
            raise ConfigError("noise must be positive")
        if self.block_rows < 1:
            raise ConfigError("block_rows must be >= 1")
        self.levels = tuple(check_levels(self.levels))
        self.prior_spec()
        self.sampler_config()
        return self

    def prior_spec(self) -> MagnitudePriorSpec:
        dc = 1.0 if self.fix_dc else float(self.dc_mode.split(":", 1)[1])
        return MagnitudePriorSpec(c=self.c, sigma_fn=ParamFnSpec(lam=self.lam, d=self.d, dc_value=dc))

    @property
    def fix_dc(self) -> bool:
        return self.dc_mode == "fix_observed"

    def proposal_scale(self):
        if self.xi_fn is not None:
            return ParamFnSpec(lam=self.xi_fn[0], d=self.xi_fn[1], dc_value=self.xi_fn[0])
        return self.xi

    def sampler_config(self, workers=None) -> SamplerConfig:
        return SamplerConfig(
            total_iters=self.T, burn_in=self.burn_in, thin=self.thin,
            proposal_scale=self.proposal_scale(), seed=self.seed, adapt=self.adapt,
            adapt_target=self.adapt_target, adapt_iters=self.adapt_iters, workers=workers,
        )

    def to_lines(self) -> list[str]:
        """Fully resolved config as ``key = value`` lines."""
        out = []
        for name, key in _ATTR_TO_KEY.items():
            v = getattr(self, name)
            if v is None and name != "xi":
                continue
            if v is None:
                v = "auto"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, tuple):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{key} = {v}")
        return out


# config key -> (attribute, parser)
_KEYS = {
    "lambda": ("lam", _float),
    "d": ("d", _float),
    "c": ("c", _float),
    "dc_mode": ("dc_mode", _dc_mode),
    "T": ("T", _int),
    "burn_in": ("burn_in", _int),
    "thin": ("thin", _int),
    "xi": ("xi", _xi),
    "xi_fn": ("xi_fn", lambda v: _floats(v, 2)),
    "seed": ("seed", _int),
    "adapt": ("adapt", _bool),
    "adapt_target": ("adapt_target", _float),
    "adapt_iters": ("adapt_iters", _int),
    "noise_sigma": ("noise_sigma", _float),
    "noise_patch": ("noise_patch", lambda v: _ints(v, 4)),
    "levels": ("levels", _floats),
    "block_rows": ("block_rows", _int),
    "size": ("size", lambda v: _ints(v, 2) if "," in str(v) else (_int(v),) * 2),
    "kind": ("kind", str),
    "disk": ("disk", lambda v: _floats(v, 4)),
    "noise": ("noise", _float),
}
_ATTR_TO_KEY = {attr: key for key, (attr, _) in _KEYS.items()}
assert set(_ATTR_TO_KEY) == {f.name for f in fields(RunConfig)}


def parse_lines(lines, source="<config>") -> dict:
    values = {}
    for n, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value, got {raw.rstrip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        values[key] = val
    return values


def load_config(path=None, overrides=None) -> RunConfig:
    """Merge a config file with flag overrides and validate the result.

    `overrides` maps config keys to raw values; None values are skipped.
    """
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                values = parse_lines(f, str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = val
    cfg = RunConfig()
    for key, val in values.items():
        attr, parse = _KEYS[key]
        try:
            setattr(cfg, attr, parse(val))
        except ConfigError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return cfg.validate()
