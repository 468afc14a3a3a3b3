"""Iterative patch-group denoising guided by an external mixture prior.

Each outer iteration extracts patch groups from the current estimate,
assigns every group to its most probable mixture component, learns one
hybrid dictionary per non-empty component, reconstructs every member patch
as ``D a + mu`` and averages the patches back into an image.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .config import DenoiseConfig
from .dictionary import HybridDictionary, learn_hybrid_dictionary
from .errors import DimensionError
from .imageio import as_image
from .patches import aggregate, extract_patch_groups
from .prior import GmmPrior, map_assign_batch

THREADS_ENV = "EPGD_THREADS"


def worker_count() -> int:
    """Worker cap from ``EPGD_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None


def reconstruct_patch(D, code, mu) -> np.ndarray:
    """Clean patch estimate ``D @ code + mu`` (``code`` may hold several columns)."""
    Dm = D.matrix if isinstance(D, HybridDictionary) else np.asarray(D, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if Dm.shape[1] != code.shape[0] or Dm.shape[0] != mu.shape[0]:
        raise DimensionError(f"dictionary {Dm.shape}, code {code.shape} and mean {mu.shape} disagree")
    out = Dm @ code
    return out + (mu[:, None] if out.ndim == 2 else mu)


def _check_inputs(img, prior: GmmPrior, cfg: DenoiseConfig):
    if prior.patch_size != cfg.p:
        raise DimensionError(f"prior patch size {prior.patch_size} does not match config p={cfg.p}")
    if any(not c.has_eigen for c in prior.components):
        raise ValueError("prior has no eigenfactors; run eigendecompose first")
    return as_image(img, min_side=cfg.p)


def denoise_step(x, prior: GmmPrior, cfg: DenoiseConfig, ite: int = 1, *, stats=None) -> np.ndarray:
    """One outer iteration: extract, cluster, learn per cluster, reconstruct, aggregate."""
    groups = extract_patch_groups(x, cfg)
    members = np.stack([g.members for g in groups])
    labels = map_assign_batch(members, prior)
    n_groups, M, d = members.shape
    clusters = [int(k) for k in np.unique(labels)]

    def solve(k):
        idx = np.flatnonzero(labels == k)
        comp = prior.components[k]
        Y = members[idx].reshape(-1, d).T
        rng = np.random.default_rng([cfg.seed, ite, k])
        D, A = learn_hybrid_dictionary(Y, comp.eigenvectors, comp.eigenvalues, cfg, rng=rng)
        return idx, (D.matrix @ A).T.reshape(len(idx), M, d)

    workers = min(worker_count(), len(clusters))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, clusters))
    else:
        results = [solve(k) for k in clusters]

    recon = np.empty_like(members)
    for idx, block in results:
        recon[idx] = block
    if stats is not None:
        stats["labels"] = labels
        stats["cluster_sizes"] = np.bincount(labels, minlength=prior.K)
    rebuilt = [replace(g, members=recon[n]) for n, g in enumerate(groups)]
    return aggregate(rebuilt, x.shape[0], x.shape[1])


def denoise(img, prior: GmmPrior, cfg: DenoiseConfig | None = None, *, callback=None) -> np.ndarray:
    """Denoise an RGB image on the ``[0, 255]`` scale.

    Runs ``cfg.ite_num`` outer iterations starting from the noisy input;
    intermediate estimates are not clamped.  ``callback(ite, estimate)`` is
    called after each iteration when given.
    """
    cfg = cfg or DenoiseConfig()
    x = _check_inputs(img, prior, cfg).copy()
    for ite in range(1, cfg.ite_num + 1):
        x = denoise_step(x, prior, cfg, ite)
        if callback is not None:
            callback(ite, x)
    return x
