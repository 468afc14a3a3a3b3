import numpy as np
import pytest

from epgd import DenoiseConfig, GmmComponent, GmmPrior, eigendecompose, train_gmm
from epgd.patches import extract_group_arrays

ACCEPTANCE_LINES = []


def record(criterion, passed, detail=""):
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {criterion}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_orthonormal(rng, d, k=None):
    q, r = np.linalg.qr(rng.standard_normal((d, k or d)))
    return q * np.sign(np.diag(r))


def textured_image(rng, h=48, w=48):
    """Smooth color gradients plus stripes plus mild noise, values inside [0, 255]."""
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    base = np.stack(
        [
            120 + 60 * np.sin(xx / 4.0),
            100 + 50 * np.cos(yy / 5.0),
            90 + 40 * np.sin((xx + yy) / 6.0),
        ],
        axis=-1,
    )
    return np.clip(base + rng.normal(0, 4, base.shape), 0, 255)


def random_prior(rng, p, K):
    d = 3 * p * p
    comps = []
    w = rng.dirichlet(np.ones(K))
    for k in range(K):
        U = random_orthonormal(rng, d)
        S = np.sort(rng.uniform(0.5, 400.0, d))[::-1]
        comps.append(GmmComponent(weight=w[k], covariance=(U * S) @ U.T))
    sym = [GmmComponent(weight=c.weight, covariance=0.5 * (c.covariance + c.covariance.T)) for c in comps]
    return eigendecompose(GmmPrior(components=sym, patch_size=p))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_prior():
    """K=2 prior with p=6 trained on a synthetic textured image."""
    img = textured_image(np.random.default_rng(7), 64, 64)
    X, _, _ = extract_group_arrays(img, 6, 10, 31, 3)
    return eigendecompose(train_gmm(X, 2))


@pytest.fixture
def small_cfg():
    return DenoiseConfig(K=2, ite_num=2)
