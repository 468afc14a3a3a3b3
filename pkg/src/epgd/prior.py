"""Zero-mean Gaussian mixture prior over patch groups.

The mixture models every member of a group as an independent draw from the
same zero-mean component, so a group's likelihood under component ``k`` is
the product of the member densities.  Training runs EM on that model, the
covariances are then eigendecomposed to give per-component orthogonal
dictionaries, and noisy groups are assigned to the component of maximum
posterior probability.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DataCorruptionError,
    DegenerateClusterError,
    DimensionError,
    PriorFormatError,
    PriorTruncatedError,
)

COV_REG = 1e-3
EIGEN_FLOOR = 1e-6
SYMMETRY_TOL = 1e-9

MAGIC = b"EPGM"
VERSION = 1

_LOG_2PI = np.log(2.0 * np.pi)
_CHUNK = 8192  # groups per E/M-step block
RESP_CUTOFF = 1e-10  # responsibilities below this are skipped in the M-step


def _readonly(arr):
    if arr is None:
        return None
    out = np.array(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class GmmComponent:
    """One zero-mean Gaussian: weight, covariance and its eigenfactors.

    ``eigenvectors`` holds the eigenvectors as columns, ordered by the
    nonincreasing ``eigenvalues``.  Both are ``None`` until
    :func:`eigendecompose` has run.
    """

    weight: float
    covariance: np.ndarray
    eigenvectors: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "weight", float(self.weight))
        for name in ("covariance", "eigenvectors", "eigenvalues"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]

    @property
    def has_eigen(self) -> bool:
        return self.eigenvectors is not None and self.eigenvalues is not None


@dataclass(frozen=True, eq=False)
class GmmPrior:
    """``K`` zero-mean components over ``3 p^2``-dimensional patch vectors.

    ``log_likelihoods`` records the training objective after each EM
    iteration; it is not written to prior files.
    """

    components: tuple
    patch_size: int
    log_likelihoods: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "log_likelihoods", tuple(float(v) for v in self.log_likelihoods))
        if not self.components:
            raise ValueError("a prior needs at least one component")
        for c in self.components:
            if c.covariance.shape != (self.dim, self.dim):
                raise DimensionError(
                    f"component covariance {c.covariance.shape} does not match dim {self.dim}"
                )

    @property
    def dim(self) -> int:
        return 3 * self.patch_size * self.patch_size

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])


@dataclass
class EMOptions:
    """Stopping rule, regularization and seed for :func:`train_gmm`."""

    max_iter: int = 100
    tol: float = 1e-4
    reg: float = COV_REG
    seed: int = 0


def _group_array(groups) -> np.ndarray:
    if isinstance(groups, np.ndarray):
        X = np.asarray(groups, dtype=np.float64)
    else:
        X = np.stack([g.members for g in groups]).astype(np.float64)
    if X.ndim != 3:
        raise DimensionError(f"expected groups shaped (L, M, d), got {X.shape}")
    return X


def _members(group) -> np.ndarray:
    X = group.members if hasattr(group, "members") else group
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Per-column signs making the largest-magnitude entry (first on ties) positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def eigh_desc(cov: np.ndarray, floor: float = EIGEN_FLOOR):
    """Eigendecomposition with descending, floored eigenvalues and canonical signs."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals[::-1], floor)
    vecs = vecs[:, ::-1]
    vecs = vecs * _canonical_signs(vecs)
    return vecs, vals


def _check_symmetric(cov: np.ndarray, k: int):
    scale = max(1.0, float(np.max(np.abs(cov))))
    asym = float(np.max(np.abs(cov - cov.T)))
    if asym > SYMMETRY_TOL * scale:
        raise DataCorruptionError(f"covariance of component {k} is not symmetric (max asymmetry {asym:.3g})")


def eigendecompose(prior: GmmPrior, floor: float = EIGEN_FLOOR) -> GmmPrior:
    """Fill in ``eigenvectors`` and ``eigenvalues`` of every component.

    Eigenvalues are sorted nonincreasing and floored at ``floor``; each
    eigenvector is oriented so its largest-magnitude entry is positive.
    """
    comps = []
    for k, c in enumerate(prior.components):
        _check_symmetric(c.covariance, k)
        U, S = eigh_desc(c.covariance, floor)
        comps.append(replace(c, eigenvectors=U, eigenvalues=S))
    return replace(prior, components=comps)


def log_group_likelihood(group, comp: GmmComponent) -> float:
    """Sum of member log-densities under ``N(0, Sigma_k)``, via the eigenfactors."""
    if not comp.has_eigen:
        raise ValueError("component has no eigenfactors; run eigendecompose first")
    X = _members(group)
    if X.shape[1] != comp.dim:
        raise DimensionError(f"patch dim {X.shape[1]} does not match component dim {comp.dim}")
    S = comp.eigenvalues
    proj = X @ comp.eigenvectors
    maha = float(np.sum(proj * proj / S))
    n, d = X.shape
    return -0.5 * maha - 0.5 * n * (d * _LOG_2PI + float(np.sum(np.log(S))))


def _whitened_terms(U, S):
    return U / np.sqrt(S), -0.5 * (U.shape[0] * _LOG_2PI + float(np.sum(np.log(S))))


def _component_scores(X: np.ndarray, factors) -> np.ndarray:
    """Per-group log-likelihoods ``(L, K)`` for groups ``X`` of shape ``(L, M, d)``."""
    L, M, d = X.shape
    out = np.empty((L, len(factors)))
    flat = X.reshape(L * M, d)
    for start in range(0, L, _CHUNK):
        stop = min(L, start + _CHUNK)
        block = flat[start * M:stop * M]
        for k, (Wk, const) in enumerate(factors):
            Z = block @ Wk
            maha = np.einsum("ij,ij->i", Z, Z).reshape(stop - start, M).sum(axis=1)
            out[start:stop, k] = -0.5 * maha + M * const
    return out


def group_log_likelihoods(groups, prior: GmmPrior) -> np.ndarray:
    """Batched :func:`log_group_likelihood` over all groups and components, shape ``(L, K)``."""
    X = _group_array(groups)
    if X.shape[2] != prior.dim:
        raise DimensionError(f"patch dim {X.shape[2]} does not match prior dim {prior.dim}")
    for c in prior.components:
        if not c.has_eigen:
            raise ValueError("prior has no eigenfactors; run eigendecompose first")
    factors = [_whitened_terms(c.eigenvectors, c.eigenvalues) for c in prior.components]
    return _component_scores(X, factors)


def map_scores(groups, prior: GmmPrior) -> np.ndarray:
    """Unnormalized log posteriors ``log pi_k + log p(group | k)``, shape ``(L, K)``."""
    return np.log(prior.weights) + group_log_likelihoods(groups, prior)


def map_assign(group, prior: GmmPrior) -> int:
    """Index of the component with maximum posterior probability for one group.

    The shared normalizer cancels, so this is the argmax of
    ``log pi_k + log_group_likelihood``; ties go to the smallest index.
    """
    X = _members(group)
    scores = [np.log(c.weight) + log_group_likelihood(X, c) for c in prior.components]
    return int(np.argmax(scores))


def map_assign_batch(groups, prior: GmmPrior) -> np.ndarray:
    """Vectorized :func:`map_assign` returning one label per group."""
    return np.argmax(map_scores(groups, prior), axis=1)


def _m_step(X, R, reg, floor_weight):
    L, M, d = X.shape
    K = R.shape[1]
    Nk = R.sum(axis=0)
    Nk = np.maximum(Nk, floor_weight)
    weights = Nk / Nk.sum()
    flat = X.reshape(L * M, d)
    covs = []
    for k in range(K):
        C = np.zeros((d, d))
        for start in range(0, L, _CHUNK):
            stop = min(L, start + _CHUNK)
            r = R[start:stop, k]
            live = np.flatnonzero(r > RESP_CUTOFF)  # group posteriors are sharp; most rows drop out
            if live.size == 0:
                continue
            rows = ((start + live)[:, None] * M + np.arange(M)).ravel()
            B = flat[rows]
            C += (B * np.repeat(r[live], M)[:, None]).T @ B
        C = C / (M * Nk[k])
        C = 0.5 * (C + C.T) + reg * np.eye(d)
        covs.append(C)
    return weights, covs


def train_gmm(groups, K: int, opts: EMOptions | None = None, *, patch_size: int | None = None) -> GmmPrior:
    """Fit a ``K``-component zero-mean mixture to mean-subtracted patch groups by EM.

    Parameters
    ----------
    groups : sequence of PatchGroup or array of shape (L, M, d)
        Training groups.  All ``M`` members of a group share one component.
    K : int
        Number of components.
    opts : EMOptions, optional
        Iteration cap, relative tolerance on the log-likelihood, covariance
        regularization added as ``reg * I`` and the seed for the random
        initial responsibilities.
    patch_size : int, optional
        Recorded in the prior; inferred from ``d = 3 p^2`` when omitted.

    Returns
    -------
    GmmPrior
        Components sorted by descending weight, covariances only (call
        :func:`eigendecompose` for the eigenfactors).  ``log_likelihoods``
        holds the objective after every iteration.
    """
    opts = opts or EMOptions()
    X = _group_array(groups)
    L, M, d = X.shape
    if patch_size is None:
        patch_size = int(round(np.sqrt(d / 3)))
    if 3 * patch_size * patch_size != d:
        raise DimensionError(f"patch dim {d} is not 3 p^2 for p={patch_size}")
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > L:
        raise DegenerateClusterError(f"K={K} components requested but only {L} groups available")
    if not np.any(X):
        raise DegenerateClusterError("all training groups are zero; the corpus has no texture")

    rng = np.random.default_rng(opts.seed)
    R = rng.dirichlet(np.ones(K), size=L)
    floor_weight = 1e-12 * L
    history = []
    weights, covs = _m_step(X, R, opts.reg, floor_weight)
    for it in range(opts.max_iter):
        factors = [_whitened_terms(*eigh_desc(C)) for C in covs]
        scores = np.log(weights) + _component_scores(X, factors)
        norm = logsumexp(scores, axis=1)
        ll = float(np.sum(norm))
        history.append(ll)
        converged = it > 0 and (ll - history[-2]) < opts.tol * abs(history[-2])
        if converged or it == opts.max_iter - 1:
            break
        R = np.exp(scores - norm[:, None])
        weights, covs = _m_step(X, R, opts.reg, floor_weight)

    order = np.argsort(-weights, kind="stable")
    comps = [GmmComponent(weight=weights[k], covariance=covs[k]) for k in order]
    return GmmPrior(components=comps, patch_size=patch_size, log_likelihoods=history)


# ---------------------------------------------------------------------------
# prior files

_HEADER = struct.Struct("<4sIII")


def encode_prior(prior: GmmPrior) -> bytes:
    """Serialize to the little-endian ``EPGM`` v1 layout (matrices column-major)."""
    parts = [_HEADER.pack(MAGIC, VERSION, prior.patch_size, prior.K)]
    for k, c in enumerate(prior.components):
        if not c.has_eigen:
            raise ValueError(f"component {k} has no eigenfactors; run eigendecompose before saving")
        parts.append(struct.pack("<d", c.weight))
        parts.append(np.asarray(c.eigenvalues, dtype="<f8").tobytes())
        parts.append(np.asarray(c.eigenvectors, dtype="<f8").tobytes(order="F"))
        parts.append(np.asarray(c.covariance, dtype="<f8").tobytes(order="F"))
    return b"".join(parts)


def decode_prior(data: bytes) -> GmmPrior:
    if len(data) < 4:
        raise PriorTruncatedError(f"prior file truncated: {len(data)} bytes, header needs {_HEADER.size}")
    if data[:4] != MAGIC:
        raise PriorFormatError(f"bad magic {data[:4]!r}; expected {MAGIC!r}")
    if len(data) < _HEADER.size:
        raise PriorTruncatedError(f"prior file truncated: {len(data)} bytes, header needs {_HEADER.size}")
    _, version, p, K = _HEADER.unpack_from(data)
    if version != VERSION:
        raise PriorFormatError(f"unsupported prior version {version}; expected {VERSION}")
    if p < 1 or K < 1:
        raise PriorFormatError(f"invalid header: p={p}, K={K}")
    d = 3 * p * p
    per_comp = 8 * (1 + d + 2 * d * d)
    expected = _HEADER.size + K * per_comp
    if len(data) < expected:
        raise PriorTruncatedError(f"prior file truncated: {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise PriorFormatError(f"{len(data) - expected} unexpected trailing bytes after {K} components")
    comps = []
    off = _HEADER.size
    for k in range(K):
        vals = np.frombuffer(data, dtype="<f8", count=1 + d + 2 * d * d, offset=off).astype(np.float64)
        off += per_comp
        if not np.all(np.isfinite(vals)):
            raise PriorFormatError(f"component {k} contains non-finite values")
        w = vals[0]
        S = vals[1:1 + d]
        U = vals[1 + d:1 + d + d * d].reshape((d, d), order="F")
        C = vals[1 + d + d * d:].reshape((d, d), order="F")
        if not w > 0:
            raise PriorFormatError(f"component {k} has non-positive weight {w}")
        comps.append(GmmComponent(weight=w, covariance=C, eigenvectors=U, eigenvalues=S))
    return GmmPrior(components=comps, patch_size=p)


def save_prior(prior: GmmPrior, path) -> None:
    payload = encode_prior(prior)
    with open(path, "wb") as fh:
        fh.write(payload)


def load_prior(path) -> GmmPrior:
    """Read a prior written by :func:`save_prior`; rejects bad magic, truncation and non-finite data."""
    with open(path, "rb") as fh:
        return decode_prior(fh.read())
