"""Command-line front end.

Subcommands: ``phantom``, ``sample``, ``summarize``, ``changemap`` and
``mapest``. Exit codes: 0 success, 2 usage or configuration error, 3 bad
data or file format, 4 numerical failure. ``BIFS_THREADS`` caps the number
of sampler worker threads.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from bifs.config import RunConfig, load_config
from bifs.errors import BIFSError, ConfigError, DataError
from bifs.fileio import read_chains, read_image, write_chains, write_grid, write_png, write_text
from bifs.grid import check_image, forward_fft
from bifs.likelihood import default_patch, estimate_sigma
from bifs.phantom import DiskSpec, add_disk, add_noise, default_disk, default_noise, make_phantom
from bifs.posterior import change_probability_map, map_estimate, summarize
from bifs.sampler import acceptance_map, adapt_proposals, build_field_model, run_field

logger = logging.getLogger("bifs")


class Outputs:
    """Output directory that tracks PNG scales and writes the config echo."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.scales = []

    def grid(self, name, values, png=True):
        write_grid(self.path / f"{name}.grd", values)
        if png:
            lo, hi = write_png(self.path / f"{name}.png", values)
            self.scales.append(f"{name}.png min = {lo!r} max = {hi!r}")

    def finish(self, cfg: RunConfig, extra=()):
        write_text(self.path / "config.txt", list(extra) + cfg.to_lines())
        if self.scales:
            write_text(self.path / "png_scales.txt",
                       ["# value = min + (max - min) * pixel / 65535"] + self.scales)


def _log_to(out: Outputs, name: str):
    handler = logging.FileHandler(out.path / name, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    return handler


def _resolve_sigma(cfg: RunConfig, image) -> tuple[float, str]:
    """Fourier-space noise scale from an explicit image-space SD or a patch."""
    if cfg.noise_sigma is not None:
        return cfg.noise_sigma / math.sqrt(2.0), f"noise_sigma {cfg.noise_sigma!r}"
    if cfg.noise_patch is not None:
        return estimate_sigma(image, cfg.noise_patch), f"noise_patch {cfg.noise_patch}"
    raise ConfigError("noise scale unresolvable: give --noise-sigma or --noise-patch")


def _model(cfg: RunConfig, image):
    sigma, how = _resolve_sigma(cfg, image)
    logger.info("fourier noise scale %.6g (from %s)", sigma, how)
    return build_field_model(forward_fft(image), cfg.prior_spec(), sigma, fix_dc=cfg.fix_dc)


def _overrides(args, names):
    return {key: getattr(args, attr, None) for key, attr in names}


_PRIOR_FLAGS = [("lambda", "lam"), ("d", "d"), ("c", "c"), ("dc_mode", "dc_mode"),
                ("noise_sigma", "noise_sigma"), ("noise_patch", "noise_patch")]
_SAMPLER_FLAGS = [("T", "T"), ("burn_in", "burn_in"), ("thin", "thin"), ("xi", "xi"),
                  ("xi_fn", "xi_fn"), ("seed", "seed"), ("adapt", "adapt"),
                  ("adapt_target", "adapt_target"), ("adapt_iters", "adapt_iters")]


def _patch_arg(args, image_shape_source):
    if getattr(args, "noise_patch", None) == "corner":
        rows, cols = image_shape_source
        args.noise_patch = ",".join(str(v) for v in default_patch(rows, cols))


def cmd_phantom(args) -> int:
    over = {"size": args.size, "kind": args.kind, "disk": args.disk, "noise": args.noise,
            "seed": args.seed}
    if args.disk == "none":
        over["disk"] = None
    if args.noise == "auto":
        over["noise"] = None
    cfg = load_config(args.config, over)
    if args.noise is None and cfg.noise is None:
        raise ConfigError("phantom needs --noise (a value or 'auto') or a noise key in --config")
    rows, cols = cfg.size
    truth = make_phantom(rows, cols, cfg.kind)
    base_max = float(truth.max())
    if args.disk != "none":
        disk = DiskSpec(*cfg.disk) if cfg.disk is not None else default_disk(truth)
        truth = add_disk(truth, disk)
        cfg.disk = (float(disk.row), float(disk.col), float(disk.radius), float(disk.delta))
    if cfg.noise is None:
        cfg.noise = default_noise(make_phantom(rows, cols, cfg.kind)) if base_max > 0 else 1.0
    noisy = add_noise(truth, cfg.noise, cfg.seed)
    out = Outputs(args.out)
    out.grid("truth", truth)
    out.grid("noisy", noisy)
    out.finish(cfg, ["# phantom", f"# fourier noise scale = {cfg.noise / math.sqrt(2.0)!r}"])
    return 0


def cmd_sample(args) -> int:
    image = check_image(read_image(args.input))
    _patch_arg(args, image.shape)
    cfg = load_config(args.config, _overrides(args, _PRIOR_FLAGS + _SAMPLER_FLAGS))
    out = Outputs(args.out)
    handler = _log_to(out, "run.log")
    try:
        model = _model(cfg, image)
        scfg = cfg.sampler_config()
        t0 = time.perf_counter()
        xi = None
        if scfg.adapt:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                ad = adapt_proposals(model, scfg)
            if not ad.converged:
                logger.warning("adaptation stopped after %d rounds with sites outside the band; "
                               "using the best scale seen per site", len(ad.rounds))
            xi = ad.xi
        field = run_field(model, scfg, xi=xi)
        rates = field.accept_count[~field.fixed] / field.total_iters
        logger.info("sampled %d sites x %d iterations in %.1f s",
                    len(field.sites), field.total_iters, time.perf_counter() - t0)
        logger.info("acceptance: grand mean %.4f, sd %.4f, min %.4f, max %.4f",
                    rates.mean(), rates.std(), rates.min(), rates.max())
        write_chains(out.path / "chains.bchn", field)
        out.grid("acceptance", acceptance_map(field))
        out.grid("xi", field.xi, png=False)
        out.finish(cfg, ["# sample", f"# input = {args.input}"])
    finally:
        logger.removeHandler(handler)
        handler.close()
    return 0


def cmd_summarize(args) -> int:
    cfg = load_config(args.config, {"levels": args.levels, "block_rows": args.block_rows})
    field = read_chains(args.chains)
    out = Outputs(args.out)
    handler = _log_to(out, "summary.log")
    try:
        summ = summarize(field, cfg.levels, block_rows=cfg.block_rows)
        out.grid("mean", summ.mean)
        for q, img in summ.quantiles.items():
            out.grid(f"q{q:g}", img)
        logger.info("summarized %d retained states", summ.sample_count)
        if args.truth and args.noisy:
            truth, noisy = read_image(args.truth), read_image(args.noisy)
            mse_mean = float(np.mean((summ.mean - truth) ** 2))
            mse_noisy = float(np.mean((noisy - truth) ** 2))
            logger.info("mse posterior mean %.6g, noisy %.6g, ratio %.4f",
                        mse_mean, mse_noisy, mse_mean / mse_noisy)
        out.finish(cfg, ["# summarize", f"# chains = {args.chains}"])
    finally:
        logger.removeHandler(handler)
        handler.close()
    return 0


def cmd_changemap(args) -> int:
    cfg = load_config(args.config)
    first, second = read_chains(args.first), read_chains(args.second)
    if first.seed == second.seed and not args.allow_same_seed:
        raise ConfigError("both chain files used the same seed; rerun one with another seed "
                          "or pass --allow-same-seed")
    out = Outputs(args.out)
    handler = _log_to(out, "changemap.log")
    try:
        cmap = change_probability_map(first, second)
        out.grid("lambda", cmap.values)
        logger.info("change map over %d paired states, image mean %.4f",
                    cmap.sample_count, float(cmap.values.mean()))
        out.finish(cfg, ["# changemap", f"# first = {args.first}", f"# second = {args.second}"])
    finally:
        logger.removeHandler(handler)
        handler.close()
    return 0


def cmd_mapest(args) -> int:
    image = check_image(read_image(args.input))
    _patch_arg(args, image.shape)
    cfg = load_config(args.config, _overrides(args, _PRIOR_FLAGS))
    out = Outputs(args.out)
    model = _model(cfg, image)
    est, flagged = map_estimate(model)
    if flagged:
        logger.warning("MAP optimizer failed at %d sites; observed values kept", len(flagged))
    out.grid("map", est)
    out.finish(cfg, ["# mapest", f"# input = {args.input}"])
    return 0


def _add_prior_flags(p):
    g = p.add_argument_group("prior and noise")
    g.add_argument("--lambda", dest="lam", help="parameter-function scale")
    g.add_argument("--d", help="parameter-function decay exponent")
    g.add_argument("--c", help="ratio of prior mean to prior SD")
    g.add_argument("--dc-mode", help="fix_observed or explicit:<value>")
    g.add_argument("--noise-sigma", help="image-space noise SD")
    g.add_argument("--noise-patch", help="x,y,w,h of a signal-free patch, or 'corner'")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="bifs", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a synthetic truth/noisy image pair")
    p.add_argument("--size", help="N or rows,cols (default 181)")
    p.add_argument("--kind", help="smooth_blobs or flat")
    p.add_argument("--disk", help="row,col,radius,delta of the lesion, or 'none'")
    p.add_argument("--noise", help="image-space noise SD, or 'auto' for 20%% of the maximum")
    p.add_argument("--seed")
    p.add_argument("--config")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sample", parents=[common], help="run the per-site chains")
    p.add_argument("--input", required=True, help="noisy image (.grd, .png or .pgm)")
    p.add_argument("--out", default=".")
    p.add_argument("--config")
    _add_prior_flags(p)
    g = p.add_argument_group("sampler")
    g.add_argument("--T", dest="T", help="total iterations per site")
    g.add_argument("--burn-in")
    g.add_argument("--thin")
    g.add_argument("--xi", help="constant proposal SD, or 'auto'")
    g.add_argument("--xi-fn", help="lambda,d of a proposal-SD parameter function")
    g.add_argument("--seed")
    g.add_argument("--adapt", action="store_const", const="true")
    g.add_argument("--adapt-target")
    g.add_argument("--adapt-iters")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("summarize", parents=[common], help="posterior mean and quantile images")
    p.add_argument("--chains", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--config")
    p.add_argument("--levels", help="comma-separated quantile levels")
    p.add_argument("--block-rows")
    p.add_argument("--truth", help="optional truth image for the MSE log")
    p.add_argument("--noisy", help="optional noisy image for the MSE log")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("changemap", parents=[common], help="probability that the second image exceeds the first")
    p.add_argument("--first", required=True)
    p.add_argument("--second", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--config")
    p.add_argument("--allow-same-seed", action="store_true")
    p.set_defaults(func=cmd_changemap)

    p = sub.add_parser("mapest", parents=[common], help="posterior-mode (MAP) reconstruction")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--config")
    _add_prior_flags(p)
    p.set_defaults(func=cmd_mapest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    logger.setLevel(logging.INFO)
    logger.propagate = False
    logger.addHandler(console)
    try:
        return args.func(args)
    except BIFSError as exc:
        print(f"bifs {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"bifs {args.command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code
    finally:
        logger.removeHandler(console)


if __name__ == "__main__":
    sys.exit(main())
