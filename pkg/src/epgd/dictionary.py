"""Hybrid orthogonal dictionary learning for one cluster of patch groups.

The dictionary ``D = [D_E D_I]`` is square and orthonormal.  ``D_E`` holds
the leading ``r`` eigenvectors of the cluster's mixture component and stays
fixed; ``D_I`` is learned from the noisy patches.  Learning alternates
between weighted soft-threshold coding (exact because ``D`` is orthogonal)
and an SVD update of ``D_I`` that keeps it orthonormal and orthogonal to
``D_E``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalFailureError
from .prior import _canonical_signs

CONSTRAINT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class HybridDictionary:
    """External atoms (fixed), internal atoms (learned) and per-atom thresholds."""

    external: np.ndarray
    internal: np.ndarray
    thresholds: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.external, self.internal])

    @property
    def dim(self) -> int:
        return self.external.shape[0]

    @property
    def r(self) -> int:
        return self.external.shape[1]


def build_lambda(S, lam: float, eps: float) -> np.ndarray:
    """Soft thresholds ``0.5 * lam / (sqrt(S_j) + eps)`` for each atom.

    Directions with small prior variance get large thresholds.
    """
    S = np.asarray(S, dtype=np.float64)
    return 0.5 * lam / (np.sqrt(np.maximum(S, 0.0)) + eps)


def pixel_thresholds(S, cfg) -> np.ndarray:
    """Thresholds on the ``[0, peak]`` scale for eigenvalues given on that scale.

    ``cfg.lam`` and ``cfg.eps`` are defined for unit-range intensities, so the
    eigenvalues are normalized by ``peak^2`` and the thresholds scaled back
    by ``peak``.
    """
    S = np.asarray(S, dtype=np.float64)
    return cfg.peak * build_lambda(S / cfg.peak**2, cfg.lam, cfg.eps)


def soft_threshold(z, thr):
    return np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)


def weighted_soft_threshold(D, y_bar, thr) -> np.ndarray:
    """Closed-form weighted sparse codes over an orthogonal dictionary.

    Minimizes ``||y - D a||^2 + sum_j 2 thr_j |a_j|`` by soft-thresholding
    ``z = D^T y`` coordinate-wise.  ``y_bar`` may be a vector or a matrix of
    column vectors.
    """
    Dm = D.matrix if isinstance(D, HybridDictionary) else np.asarray(D, dtype=np.float64)
    y = np.asarray(y_bar, dtype=np.float64)
    thr = np.asarray(thr, dtype=np.float64)
    z = Dm.T @ y
    if y.ndim == 2:
        thr = thr[:, None]
    return soft_threshold(z, thr)


def dictionary_objective(D, Y, A, thr) -> float:
    """``||Y - D A||_F^2 + sum_j 2 thr_j sum_n |A_jn|``."""
    Dm = D.matrix if isinstance(D, HybridDictionary) else D
    R = Y - Dm @ A
    return float(np.sum(R * R) + 2.0 * np.sum(np.asarray(thr) @ np.abs(A)))


def _orthonormal_complement(basis: np.ndarray, count: int, rng) -> np.ndarray:
    """``count`` seeded orthonormal vectors orthogonal to the columns of ``basis``."""
    d = basis.shape[0]
    G = rng.standard_normal((d, count))
    for _ in range(2):
        G -= basis @ (basis.T @ G)
    Q, _ = np.linalg.qr(G)
    for _ in range(2):
        Q -= basis @ (basis.T @ Q)
        Q, _ = np.linalg.qr(Q)
    return Q * _canonical_signs(Q)


def _polar(X: np.ndarray, driver: str) -> np.ndarray:
    u, _, vt = scipy.linalg.svd(X, full_matrices=False, lapack_driver=driver)
    return u @ vt


def constraint_residuals(D_E: np.ndarray, D_I: np.ndarray) -> tuple[float, float]:
    """Max-abs residuals of ``D_I^T D_I = I`` and ``D_E^T D_I = 0``."""
    ortho = float(np.max(np.abs(D_I.T @ D_I - np.eye(D_I.shape[1])))) if D_I.size else 0.0
    cross = float(np.max(np.abs(D_E.T @ D_I))) if D_E.size and D_I.size else 0.0
    return ortho, cross


def update_internal_dict(D_E, Y, A_I, *, rng=None, svd_driver: str = "gesdd", return_svd: bool = False):
    """Internal sub-dictionary minimizing ``||Y - D_E A_E - D_I A_I||_F`` under the constraints.

    With ``B = (I - D_E D_E^T) Y A_I^T = U S V^T`` (reduced SVD) the
    minimizer is ``D_I = U V^T``.  Singular vectors are oriented so each
    column of ``U`` has a positive largest-magnitude entry.  When ``B`` is
    rank deficient, the left vectors of the zero singular values are
    replaced by a seeded orthonormal basis of the complement of
    ``[D_E, U_nonzero]``.

    Parameters
    ----------
    D_E : (d, r) array
        Fixed external atoms with orthonormal columns (``r`` may be 0).
    Y : (d, n) array
        Patch vectors of the cluster, one per column.
    A_I : (d - r, n) array
        Codes on the internal atoms.
    rng : numpy Generator, optional
        Source for the rank-deficient completion; defaults to seed 0.
    svd_driver : {"gesdd", "gesvd"}
        LAPACK routine for the SVD.
    return_svd : bool
        Also return the singular values of ``B``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    A_I = np.asarray(A_I, dtype=np.float64)
    d = Y.shape[0]
    D_E = np.asarray(D_E, dtype=np.float64).reshape(d, -1)
    r = D_E.shape[1]
    n_int = d - r
    if A_I.shape != (n_int, Y.shape[1]):
        raise DimensionError(f"A_I must be ({n_int}, {Y.shape[1]}), got {A_I.shape}")
    if n_int == 0:
        D_I = np.zeros((d, 0))
        return (D_I, np.zeros(0)) if return_svd else D_I

    PY = Y - D_E @ (D_E.T @ Y)
    B = PY @ A_I.T
    U, s, Vt = scipy.linalg.svd(B, full_matrices=False, lapack_driver=svd_driver)
    signs = _canonical_signs(U)
    U = U * signs
    Vt = Vt * signs[:, None]

    tol = max(B.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol)) if s.size and s[0] > 0 else 0
    if rank < n_int:
        rng = np.random.default_rng(0) if rng is None else rng
        basis = np.hstack([D_E, U[:, :rank]])
        U = np.hstack([U[:, :rank], _orthonormal_complement(basis, n_int - rank, rng)])

    D_I = U @ Vt
    # project out numerical leakage onto D_E, then restore exact orthonormality
    D_I = D_I - D_E @ (D_E.T @ D_I)
    D_I = _polar(D_I, svd_driver)

    ortho, cross = constraint_residuals(D_E, D_I)
    if max(ortho, cross) > CONSTRAINT_TOL:
        raise NumericalFailureError(
            f"internal dictionary violates constraints (orthonormality {ortho:.2e}, cross {cross:.2e})"
        )
    return (D_I, s) if return_svd else D_I


def cluster_matrix(cluster) -> np.ndarray:
    """Stack the members of a list of patch groups as columns ``(d, N*M)``."""
    if isinstance(cluster, np.ndarray):
        return np.asarray(cluster, dtype=np.float64)
    return np.vstack([g.members for g in cluster]).T


def learn_hybrid_dictionary(cluster, U_k, S_k, cfg, *, rng=None, history=None):
    """Alternate coding and internal-atom updates for one cluster.

    Starts from ``D = U_k`` and runs ``cfg.T`` rounds of (code all patches,
    update ``D_I``).  Thresholds come from ``S_k`` via :func:`pixel_thresholds`
    and stay fixed.  With ``T = 0`` the result is ``U_k`` and its one-shot
    codes.

    Parameters
    ----------
    cluster : list of PatchGroup or (d, n) array
        Mean-subtracted patches of the cluster.
    U_k, S_k : arrays
        Eigenvectors (columns, descending) and eigenvalues of the component.
    cfg : DenoiseConfig
        Supplies ``r``, ``T``, ``lam``, ``eps``, ``peak`` and ``seed``.
    rng : numpy Generator, optional
        Used by rank-deficient internal updates.
    history : list, optional
        If given, receives the objective after every half-step.

    Returns
    -------
    (HybridDictionary, ndarray)
        Final dictionary and the ``(d, n)`` code matrix.
    """
    Y = cluster_matrix(cluster)
    U_k = np.asarray(U_k, dtype=np.float64)
    d = U_k.shape[0]
    if Y.shape[0] != d:
        raise DimensionError(f"patch dim {Y.shape[0]} does not match dictionary dim {d}")
    if Y.shape[1] == 0:
        raise ValueError("cluster is empty")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    r = cfg.r
    thr = pixel_thresholds(S_k, cfg)
    D_E = U_k[:, :r]
    D_I = U_k[:, r:]

    A = weighted_soft_threshold(np.hstack([D_E, D_I]), Y, thr)
    if history is not None:
        history.append(dictionary_objective(np.hstack([D_E, D_I]), Y, A, thr))
    for t in range(cfg.T):
        if t > 0:
            A = weighted_soft_threshold(np.hstack([D_E, D_I]), Y, thr)
            if history is not None:
                history.append(dictionary_objective(np.hstack([D_E, D_I]), Y, A, thr))
        D_I = update_internal_dict(D_E, Y, A[r:], rng=rng)
        if history is not None:
            history.append(dictionary_objective(np.hstack([D_E, D_I]), Y, A, thr))
    return HybridDictionary(external=D_E.copy(), internal=D_I, thresholds=thr), A
