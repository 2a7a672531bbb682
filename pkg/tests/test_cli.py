import subprocess
import sys

import numpy as np
import pytest

from bifs.cli import main
from bifs.fileio import read_chains, read_grid, write_chains
from bifs.grid import forward_fft, unique_sites
from bifs.phantom import DiskSpec, add_disk, make_phantom
from bifs.sampler import ChainField

SMALL = ["--T", "1200", "--burn-in", "200", "--thin", "5"]


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("ph")
    assert run("phantom", "--size", 64, "--disk", "32,20,6,0.5", "--noise", 0.1, "--seed", 7, "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def sample_dir(phantom_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("s")
    code = run("sample", "--input", phantom_dir / "noisy.grd", "--noise-sigma", 0.1, "--seed", 1,
               *SMALL, "--out", out)
    assert code == 0
    return out


def test_phantom_outputs(phantom_dir, tmp_path):
    for name in ("truth.grd", "noisy.grd", "truth.png", "noisy.png", "config.txt", "png_scales.txt"):
        assert (phantom_dir / name).exists()
    truth, noisy = read_grid(phantom_dir / "truth.grd"), read_grid(phantom_dir / "noisy.grd")
    expected = add_disk(make_phantom(64, 64), DiskSpec(32, 20, 6, 0.5))
    np.testing.assert_array_equal(truth, expected)
    assert 0.085 < np.std(noisy - truth) < 0.115
    echo = (phantom_dir / "config.txt").read_text()
    assert "disk = 32.0,20.0,6.0,0.5" in echo and "noise = 0.1" in echo and "seed = 7" in echo
    assert run("phantom", "--size", 64, "--disk", "32,20,6,0.5", "--noise", 0.1, "--seed", 7,
               "--out", tmp_path) == 0
    for name in ("truth.grd", "noisy.grd"):
        assert (tmp_path / name).read_bytes() == (phantom_dir / name).read_bytes()


def test_phantom_disk_is_where_requested(tmp_path):
    assert run("phantom", "--size", 40, "--kind", "flat", "--disk", "10,25,4,2", "--noise", 0.1,
               "--out", tmp_path) == 0
    truth = read_grid(tmp_path / "truth.grd")
    assert truth[10, 25] == 2 and truth[10, 30] == 0 and truth.sum() == 2 * 49


def test_phantom_full_size_and_defaults(tmp_path):
    assert run("phantom", "--size", 181, "--noise", "auto", "--out", tmp_path) == 0
    assert read_grid(tmp_path / "noisy.grd").shape == (181, 181)
    echo = (tmp_path / "config.txt").read_text()
    assert "disk = 65.0,65.0,10.0,0.3" in echo and "noise = 0.2" in echo


def test_phantom_requires_noise(tmp_path, capsys):
    assert run("phantom", "--size", 64, "--out", tmp_path) == 2
    assert "noise" in capsys.readouterr().err
    cfg = tmp_path / "p.cfg"
    cfg.write_text("noise = 0.05\nsize = 48\n")
    assert run("phantom", "--config", cfg, "--out", tmp_path / "o") == 0


@pytest.mark.parametrize("flags", [
    ["--size", "64", "--noise", "0.1", "--disk", "1,1"],
    ["--size", "16", "--noise", "0.1"],
    ["--size", "64", "--noise", "-1"],
    ["--size", "64", "--noise", "0.1", "--kind", "shepp"],
    ["--size", "64", "--noise", "0.1", "--seed", "x"],
    ["--size", "64", "--noise", "0.1", "--disk", "2,2,5,1"],
])
def test_phantom_bad_flags(flags, tmp_path):
    assert main(["phantom", "--out", str(tmp_path), *flags]) == 2


@pytest.mark.parametrize("argv", [["frobnicate"], [], ["sample"]])
def test_argparse_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_sample_outputs(sample_dir):
    for name in ("chains.bchn", "acceptance.grd", "acceptance.png", "run.log", "config.txt",
                 "png_scales.txt", "xi.grd"):
        assert (sample_dir / name).exists()
    field = read_chains(sample_dir / "chains.bchn")
    assert (field.rows, field.cols, field.retained, field.seed) == (64, 64, 200, 1)
    amap = read_grid(sample_dir / "acceptance.grd")
    assert np.all((amap >= 0) & (amap <= 1)) and amap[32, 32] == 1.0
    log = (sample_dir / "run.log").read_text()
    assert "grand mean" in log and "noise scale" in log
    assert "T = 1200" in (sample_dir / "config.txt").read_text()


def test_sample_same_seed_is_bit_identical_across_threads(phantom_dir, sample_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("BIFS_THREADS", "3")
    assert run("sample", "--input", phantom_dir / "noisy.grd", "--noise-sigma", 0.1, "--seed", 1,
               *SMALL, "--out", tmp_path) == 0
    for name in ("chains.bchn", "acceptance.grd"):
        assert (tmp_path / name).read_bytes() == (sample_dir / name).read_bytes()


def test_sample_noise_patch_and_config(phantom_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("T = 300\nburn_in = 100\nthin = 2\nnoise_patch = 0,0,8,8\nadapt = true\nadapt_iters = 100\n")
    assert run("sample", "--input", phantom_dir / "noisy.grd", "--config", cfg, "--out", tmp_path / "o") == 0
    log = (tmp_path / "o" / "run.log").read_text()
    assert "noise_patch (0, 0, 8, 8)" in log and "adaptation round 1" in log
    assert run("sample", "--input", phantom_dir / "noisy.grd", "--noise-patch", "corner", "--T", 30,
               "--burn-in", 10, "--thin", 2, "--out", tmp_path / "c") == 0


def test_sample_errors(phantom_dir, tmp_path):
    noisy = phantom_dir / "noisy.grd"
    assert run("sample", "--input", noisy, "--out", tmp_path) == 2
    assert run("sample", "--input", noisy, "--noise-sigma", 0.1, "--T", 100, "--burn-in", 200,
               "--out", tmp_path) == 2
    assert run("sample", "--input", noisy, "--noise-sigma", 0.1, "--noise-patch", "0,0,8,8",
               "--out", tmp_path) == 2
    assert run("sample", "--input", tmp_path / "absent.grd", "--noise-sigma", 0.1, "--out", tmp_path) == 3
    (tmp_path / "flat.grd").write_bytes(b"BIFSGRD1" + bytes(8))
    assert run("sample", "--input", tmp_path / "flat.grd", "--noise-sigma", 0.1, "--out", tmp_path) == 3


def test_zero_image_is_a_numeric_failure(tmp_path):
    assert run("phantom", "--size", 32, "--kind", "flat", "--disk", "none", "--noise", 0.1,
               "--out", tmp_path) == 0
    assert run("sample", "--input", tmp_path / "truth.grd", "--noise-sigma", 0.1, "--T", 20,
               "--burn-in", 10, "--thin", 1, "--out", tmp_path / "s") == 4


def test_summarize(sample_dir, phantom_dir, tmp_path):
    assert run("summarize", "--chains", sample_dir / "chains.bchn", "--truth", phantom_dir / "truth.grd",
               "--noisy", phantom_dir / "noisy.grd", "--out", tmp_path) == 0
    q = [read_grid(tmp_path / f"q{lv}.grd") for lv in ("0.05", "0.5", "0.95")]
    assert np.all(q[0] <= q[1]) and np.all(q[1] <= q[2])
    assert (tmp_path / "mean.png").exists()
    assert "mse posterior mean" in (tmp_path / "summary.log").read_text()
    scales = (tmp_path / "png_scales.txt").read_text()
    assert "mean.png" in scales and "q0.95.png" in scales


def test_summarize_frozen_chains_give_noisy_image(phantom_dir, tmp_path):
    noisy = read_grid(phantom_dir / "noisy.grd")
    sites = unique_sites(64, 64).sampled
    obs = forward_fft(noisy).reshape(-1)[sites]
    samples = np.repeat(np.stack([obs.real, obs.imag], 1)[:, None], 100, axis=1)
    field = ChainField(rows=64, cols=64, sites=sites, samples=samples,
                       accept_count=np.zeros(len(sites), dtype=np.int64),
                       fixed=np.zeros(len(sites), bool), total_iters=100, burn_in=0, thin=1, seed=0)
    write_chains(tmp_path / "frozen.bchn", field)
    assert run("summarize", "--chains", tmp_path / "frozen.bchn", "--levels", "0.5", "--out", tmp_path) == 0
    np.testing.assert_allclose(read_grid(tmp_path / "mean.grd"), noisy, atol=1e-12)
    np.testing.assert_allclose(read_grid(tmp_path / "q0.5.grd"), noisy, atol=1e-12)


def test_summarize_corrupt_chain(tmp_path):
    (tmp_path / "bad.bchn").write_bytes(b"BIFSXXX1" + bytes(64))
    assert run("summarize", "--chains", tmp_path / "bad.bchn", "--out", tmp_path) == 3


def test_changemap(phantom_dir, sample_dir, tmp_path):
    chains = sample_dir / "chains.bchn"
    assert run("changemap", "--first", chains, "--second", chains, "--out", tmp_path) == 2
    assert run("changemap", "--first", chains, "--second", chains, "--allow-same-seed",
               "--out", tmp_path / "same") == 0
    assert np.all(read_grid(tmp_path / "same" / "lambda.grd") == 0)
    assert run("sample", "--input", phantom_dir / "noisy.grd", "--noise-sigma", 0.1, "--seed", 2,
               *SMALL, "--out", tmp_path / "s2") == 0
    other = tmp_path / "s2" / "chains.bchn"
    assert run("changemap", "--first", chains, "--second", other, "--out", tmp_path / "a") == 0
    assert run("changemap", "--first", other, "--second", chains, "--out", tmp_path / "b") == 0
    fwd, back = read_grid(tmp_path / "a" / "lambda.grd"), read_grid(tmp_path / "b" / "lambda.grd")
    np.testing.assert_array_equal(fwd + back, 1.0)
    assert 0.45 < fwd.mean() < 0.55
    assert (tmp_path / "a" / "lambda.png").exists() and (tmp_path / "a" / "config.txt").exists()


def test_changemap_dimension_mismatch(sample_dir, tmp_path):
    assert run("phantom", "--size", 32, "--noise", 0.1, "--out", tmp_path) == 0
    assert run("sample", "--input", tmp_path / "noisy.grd", "--noise-sigma", 0.1, "--seed", 5,
               *SMALL, "--out", tmp_path / "s") == 0
    assert run("changemap", "--first", sample_dir / "chains.bchn", "--second",
               tmp_path / "s" / "chains.bchn", "--out", tmp_path / "cm") == 3


def test_mapest(phantom_dir, tmp_path):
    assert run("mapest", "--input", phantom_dir / "noisy.grd", "--noise-sigma", 0.1, "--out", tmp_path) == 0
    est = read_grid(tmp_path / "map.grd")
    truth = read_grid(phantom_dir / "truth.grd")
    noisy = read_grid(phantom_dir / "noisy.grd")
    assert np.mean((est - truth) ** 2) < np.mean((noisy - truth) ** 2)
    assert (tmp_path / "config.txt").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bifs.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("phantom", "sample", "summarize", "changemap", "mapest"):
        assert cmd in res.stdout


# -- full-length runs on the default 64x64 phantom ----------------------------


@pytest.fixture(scope="module")
def default_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("full")
    assert run("phantom", "--size", 64, "--noise", "auto", "--seed", 3, "--out", root / "ph") == 0
    noisy = root / "ph" / "noisy.grd"
    assert run("sample", "--input", noisy, "--noise-patch", "corner", "--seed", 4, "--out", root / "plain") == 0
    assert run("sample", "--input", noisy, "--noise-patch", "corner", "--seed", 4, "--adapt",
               "--out", root / "adapt") == 0
    return root


def _site_rates(path):
    field = read_chains(path)
    return field.accept_count[~field.fixed] / field.total_iters


def test_default_run_acceptance_band(default_runs):
    assert 0.17 <= _site_rates(default_runs / "plain" / "chains.bchn").mean() <= 0.35


def test_adaptation_flattens_acceptance(default_runs):
    plain = _site_rates(default_runs / "plain" / "chains.bchn")
    tuned = _site_rates(default_runs / "adapt" / "chains.bchn")
    assert tuned.std() < plain.std()
    assert "adaptation round 1" in (default_runs / "adapt" / "run.log").read_text()
