import subprocess
import sys

import numpy as np
import pytest

from epgd import load_image, load_prior, psnr, save_image, save_prior, ssim
from epgd.cli import main

from conftest import random_prior, textured_image


@pytest.fixture
def corpus(tmp_path):
    folder = tmp_path / "clean"
    folder.mkdir()
    for k in range(3):
        save_image(textured_image(np.random.default_rng(k), 40, 40), folder / f"img{k}.png")
    return folder


@pytest.fixture
def prior_file(tmp_path, small_prior):
    f = tmp_path / "small.epgm"
    save_prior(small_prior, f)
    return f


@pytest.fixture
def noisy_file(tmp_path):
    rng = np.random.default_rng(11)
    f = tmp_path / "noisy.png"
    save_image(textured_image(rng, 40, 40) + rng.normal(0, 10, (40, 40, 3)), f)
    return f


def test_train_prior_writes_loadable_prior(corpus, tmp_path, capsys):
    out = tmp_path / "prior.epgm"
    assert main(["train-prior", "--images", str(corpus), "--out", str(out), "--k", "2"]) == 0
    prior = load_prior(out)
    assert prior.K == 2 and prior.patch_size == 6
    assert abs(prior.weights.sum() - 1) <= 1e-9
    for c in prior.components:
        U = c.eigenvectors
        assert np.max(np.abs(U @ U.T - np.eye(108))) <= 1e-8
    text = capsys.readouterr().out
    assert "final log-likelihood" in text and "weights:" in text


def test_train_prior_header_echoes_defaults(corpus, tmp_path, capsys):
    main(["train-prior", "--images", str(corpus), "--out", str(tmp_path / "p.epgm"), "--k", "2", "--max-groups", "200"])
    lines = capsys.readouterr().out.splitlines()
    assert "p=6" in lines[0] and "M=10" in lines[0] and "W=31" in lines[0]
    assert "  training on 200 groups" in lines


def test_train_prior_default_k_in_header(tmp_path, capsys):
    folder = tmp_path / "empty"
    folder.mkdir()
    assert main(["train-prior", "--images", str(folder), "--out", str(tmp_path / "p.epgm")]) != 0
    out = capsys.readouterr()
    assert "K=32" in out.out
    assert "no PNG/PPM images" in out.err


def test_train_prior_constant_image_fails(tmp_path, capsys):
    folder = tmp_path / "flat"
    folder.mkdir()
    save_image(np.full((30, 30, 3), 90.0), folder / "flat.png")
    out = tmp_path / "p.epgm"
    assert main(["train-prior", "--images", str(folder), "--out", str(out), "--k", "2"]) != 0
    assert "error" in capsys.readouterr().err
    assert not out.exists()


def test_denoise_zero_lambda_reproduces_input(noisy_file, prior_file, tmp_path):
    out = tmp_path / "out.png"
    code = main(["denoise", "--in", str(noisy_file), "--prior", str(prior_file), "--out", str(out),
                 "--lambda", "0", "--iters", "2"])
    assert code == 0
    assert np.array_equal(load_image(out), load_image(noisy_file))


def test_denoise_twice_byte_identical(noisy_file, prior_file, tmp_path):
    outs = [tmp_path / "a.png", tmp_path / "b.png"]
    for o in outs:
        assert main(["denoise", "--in", str(noisy_file), "--prior", str(prior_file), "--out", str(o), "--iters", "1"]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_denoise_reports_iterations_and_defaults(noisy_file, prior_file, tmp_path, capsys):
    ref = tmp_path / "ref.png"
    save_image(textured_image(np.random.default_rng(11), 40, 40), ref)
    main(["denoise", "--in", str(noisy_file), "--prior", str(prior_file), "--out", str(tmp_path / "o.ppm"),
          "--ref", str(ref)])
    lines = capsys.readouterr().out.splitlines()
    assert "lambda=0.001" in lines[0] and "r=54" in lines[0] and "T=2" in lines[0] and "iters=4" in lines[0]
    its = [ln for ln in lines if ln.strip().startswith("iteration")]
    assert len(its) == 4 and all("PSNR:" in ln and "SSIM:" in ln for ln in its)


def test_denoise_incompatible_prior(noisy_file, tmp_path, capsys):
    f = tmp_path / "p2.epgm"
    save_prior(random_prior(np.random.default_rng(0), 2, 2), f)
    code = main(["denoise", "--in", str(noisy_file), "--prior", str(f), "--out", str(tmp_path / "o.png")])
    assert code != 0
    assert "exceeds the prior's patch dimension 12" in capsys.readouterr().err


def test_eval_identical(noisy_file, capsys):
    assert main(["eval", "--a", str(noisy_file), "--b", str(noisy_file)]) == 0
    assert capsys.readouterr().out.strip() == "PSNR: inf dB  SSIM: 1.0000"


def test_eval_off_by_one(tmp_path, capsys):
    a = np.full((16, 16, 3), 100.0)
    save_image(a, tmp_path / "a.ppm")
    save_image(a + 1, tmp_path / "b.ppm")
    main(["eval", "--a", str(tmp_path / "a.ppm"), "--b", str(tmp_path / "b.ppm")])
    assert capsys.readouterr().out.startswith("PSNR: 48.1308 dB")


def test_eval_matches_library(tmp_path, capsys):
    rng = np.random.default_rng(2)
    a = rng.integers(0, 256, (20, 24, 3)).astype(float)
    b = np.clip(a + rng.integers(-9, 10, a.shape), 0, 255)
    save_image(a, tmp_path / "a.png")
    save_image(b, tmp_path / "b.png")
    main(["eval", "--a", str(tmp_path / "a.png"), "--b", str(tmp_path / "b.png")])
    assert capsys.readouterr().out.strip() == f"PSNR: {psnr(a, b):.4f} dB  SSIM: {ssim(a, b):.4f}"


def test_eval_dimension_mismatch(tmp_path, capsys):
    save_image(np.zeros((12, 12, 3)), tmp_path / "a.png")
    save_image(np.zeros((12, 13, 3)), tmp_path / "b.png")
    assert main(["eval", "--a", str(tmp_path / "a.png"), "--b", str(tmp_path / "b.png")]) != 0


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--a", "x", "--b", "y", "--bogus"])
    assert exc.value.code != 0


def test_module_entry_point(noisy_file):
    proc = subprocess.run([sys.executable, "-m", "epgd.cli", "eval", "--a", str(noisy_file), "--b", str(noisy_file)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "PSNR: inf dB  SSIM: 1.0000"
