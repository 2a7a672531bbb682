import pytest

from bifs.config import RunConfig, load_config, parse_lines
from bifs.errors import ConfigError
from bifs.priors import ParamFnSpec


def test_defaults():
    cfg = load_config()
    assert (cfg.lam, cfg.d, cfg.c, cfg.T, cfg.burn_in, cfg.thin) == (1.0, 1.0, 1.0, 20000, 2000, 10)
    assert cfg.fix_dc and cfg.xi is None and cfg.levels == (0.05, 0.5, 0.95)


def test_file_and_override_precedence(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\n\nlambda = 2\nT = 4000\nburn_in=1000\nxi = 0.3\nlevels = 0.9, 0.1\n")
    cfg = load_config(p, {"T": "5000", "seed": None})
    assert cfg.lam == 2.0 and cfg.T == 5000 and cfg.xi == 0.3 and cfg.seed == 0
    assert cfg.levels == (0.1, 0.9)


def test_echo_roundtrips(tmp_path):
    cfg = load_config(None, {"dc_mode": "explicit:2.5", "xi_fn": "0.5,1", "noise_patch": "1,2,10,10",
                             "adapt": "yes", "disk": "20,20,5,0.3", "size": "64,80"})
    p = tmp_path / "echo.cfg"
    p.write_text("\n".join(cfg.to_lines()) + "\n")
    assert load_config(p) == cfg
    assert cfg.prior_spec().sigma_fn.dc_value == 2.5 and not cfg.fix_dc
    assert cfg.proposal_scale() == ParamFnSpec(lam=0.5, d=1.0, dc_value=0.5)
    assert cfg.size == (64, 80) and cfg.adapt is True


@pytest.mark.parametrize("text", [
    "bogus = 1", "lambda = 1\nlambda = 2", "lambda", "lambda = -1", "T = 10.5", "thin = 0",
    "xi = 0", "xi = 1\nxi_fn = 1,1", "noise_sigma = 1\nnoise_patch = 0,0,5,5",
    "noise_patch = 0,0,5", "dc_mode = other", "dc_mode = explicit:0", "levels = 0.5,1.0",
    "adapt = maybe", "T = 1000\nburn_in = 1000", "T = 1005", "c = nan", "block_rows = 0",
])
def test_rejections(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text + "\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_unknown_override_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(None, {"nope": "1"})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_parse_lines_reports_line_numbers():
    with pytest.raises(ConfigError, match=":3:"):
        parse_lines(["a_comment = no".replace("a_comment", "# x"), "", "zzz = 1"])


def test_sampler_config_mapping():
    scfg = RunConfig(T=3000, burn_in=1000, thin=4, xi=0.2, seed=9, adapt=True).sampler_config(workers=2)
    assert (scfg.total_iters, scfg.burn_in, scfg.thin, scfg.proposal_scale, scfg.seed, scfg.adapt,
            scfg.workers) == (3000, 1000, 4, 0.2, 9, True, 2)
