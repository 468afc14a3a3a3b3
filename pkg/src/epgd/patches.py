"""Patch-group extraction by block matching, and aggregation back to pixels.

A patch vector stacks the R, G and B planes of a ``p x p`` patch, each in
row-major order, giving length ``3 p^2``.  A patch group holds the ``M``
patches closest (squared Euclidean distance) to a reference patch within a
``W x W`` search window, with the group mean removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CoverageError, DimensionError
from .imageio import as_image


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class PatchGroup:
    """``M`` similar patches with their group mean removed.

    Attributes
    ----------
    members : (M, 3p^2) array
        Mean-subtracted patch vectors, sorted by distance to the reference.
    mean : (3p^2,) array
        Group mean that was subtracted.
    coords : (M, 2) int array
        Top-left ``(row, col)`` of each member.
    reference_index : int
        Position of the seed patch among the members.
    distances : (M,) array
        Squared distances of the members to the reference patch.
    """

    members: np.ndarray
    mean: np.ndarray
    coords: np.ndarray
    reference_index: int = 0
    distances: np.ndarray | None = None

    def __post_init__(self):
        members = _frozen(self.members)
        mean = _frozen(self.mean)
        coords = _frozen(self.coords, np.int64)
        if members.ndim != 2 or mean.shape != (members.shape[1],):
            raise DimensionError("members must be (M, d) and mean (d,)")
        if coords.shape != (members.shape[0], 2):
            raise DimensionError("coords must be (M, 2)")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "coords", coords)
        if self.distances is not None:
            object.__setattr__(self, "distances", _frozen(self.distances))

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    def patches(self) -> np.ndarray:
        """Member patch vectors with the group mean added back."""
        return self.members + self.mean


def patch_size_from_dim(dim: int) -> int:
    p = int(round(np.sqrt(dim / 3)))
    if 3 * p * p != dim:
        raise DimensionError(f"patch vector length {dim} is not 3 p^2")
    return p


def all_patches(img, p: int) -> np.ndarray:
    """Every ``p x p`` patch of ``img`` as an ``(H-p+1, W-p+1, 3p^2)`` array."""
    img = as_image(img, min_side=p)
    view = sliding_window_view(img, (p, p), axis=(0, 1))  # (nh, nw, 3, p, p)
    return np.ascontiguousarray(view).reshape(view.shape[0], view.shape[1], 3 * p * p)


def reference_positions(n: int, stride: int) -> np.ndarray:
    """Reference offsets ``0, stride, 2*stride, ...`` plus the last valid offset ``n-1``."""
    pos = np.arange(0, n, stride)
    if pos[-1] != n - 1:
        pos = np.append(pos, n - 1)
    return pos


def _box_sum(x: np.ndarray, p: int) -> np.ndarray:
    """Sums over every ``p x p`` window (valid positions) by adding shifted slices."""
    h = x.shape[0] - p + 1
    w = x.shape[1] - p + 1
    rows = x[:, :w].copy()
    for k in range(1, p):
        rows += x[:, k:k + w]
    out = rows[:h].copy()
    for k in range(1, p):
        out += rows[k:k + h]
    return out


def _offset_distances(img, p, W, ref_rows, ref_cols):
    """Squared patch distances ``(n_rows, n_cols, W*W)`` from each reference to every window offset.

    Offsets are enumerated row-major over ``(dr, dc)``; candidates outside the
    image get ``inf``.
    """
    nh = img.shape[0] - p + 1
    nw = img.shape[1] - p + 1
    half = W // 2
    i_lo, i_hi = int(ref_rows[0]), int(ref_rows[-1]) + 1
    j_lo, j_hi = int(ref_cols[0]), int(ref_cols[-1]) + 1
    sel_r = ref_rows - i_lo
    sel_c = ref_cols - j_lo
    out = np.full((len(ref_rows), len(ref_cols), W * W), np.inf)
    for a, dr in enumerate(range(-half, half + 1)):
        i0, i1 = max(i_lo, -dr), min(i_hi, nh - dr)
        if i0 >= i1:
            continue
        for b, dc in enumerate(range(-half, half + 1)):
            j0, j1 = max(j_lo, -dc), min(j_hi, nw - dc)
            if j0 >= j1:
                continue
            ref = img[i0:i1 + p - 1, j0:j1 + p - 1]
            cand = img[i0 + dr:i1 + dr + p - 1, j0 + dc:j1 + dc + p - 1]
            diff = ref - cand
            sq = np.einsum("ijc,ijc->ij", diff, diff)
            box = _box_sum(sq, p)  # distances for refs in [i0, i1) x [j0, j1)
            rmask = (ref_rows >= i0) & (ref_rows < i1)
            cmask = (ref_cols >= j0) & (ref_cols < j1)
            rr = ref_rows[rmask] - i0
            cc = ref_cols[cmask] - j0
            out[np.ix_(np.flatnonzero(rmask), np.flatnonzero(cmask), [a * W + b])] = box[np.ix_(rr, cc)][..., None]
    return out


def block_match(img, p: int, M: int, W: int, stride: int, *, chunk_rows: int = 16):
    """Find the ``M`` nearest patches of every reference patch.

    Returns
    -------
    coords : (N, M, 2) int array
        Member top-left positions.  The reference comes first, the rest
        follow ascending by squared distance, ties broken by ``(row, col)``.
    dists : (N, M) array
        Squared Euclidean distances to the reference patch.
    refs : (N, 2) int array
        Reference positions, row-major over the reference grid.
    """
    if W < 1 or W % 2 == 0:
        raise ValueError(f"search window W must be odd, got {W}")
    if M < 1:
        raise ValueError("M must be >= 1")
    img = as_image(img)
    if img.shape[0] < p or img.shape[1] < p:
        raise DimensionError(f"image {img.shape[0]}x{img.shape[1]} is smaller than the {p}x{p} patch")
    nh = img.shape[0] - p + 1
    nw = img.shape[1] - p + 1
    n_win = min(W, nh) * min(W, nw)
    if M > n_win:
        raise DimensionError(f"group size M={M} exceeds the {n_win} candidates in the search window")
    half = W // 2
    rows = reference_positions(nh, stride)
    cols = reference_positions(nw, stride)
    refs = np.stack(np.meshgrid(rows, cols, indexing="ij"), axis=-1).reshape(-1, 2)

    coords = np.empty((len(rows), len(cols), M, 2), dtype=np.int64)
    dists = np.empty((len(rows), len(cols), M))
    for start in range(0, len(rows), chunk_rows):
        block_rows = rows[start:start + chunk_rows]
        D = _offset_distances(img, p, W, block_rows, cols)
        # the reference itself always leads, even among other zero-distance candidates
        D[..., half * W + half] = -1.0
        # offsets are row-major in (dr, dc), so a stable sort breaks ties by (row, col)
        order = np.argsort(D, axis=-1, kind="stable")[..., :M]
        chosen = np.take_along_axis(D, order, axis=-1)
        chosen[..., 0] = 0.0
        dists[start:start + chunk_rows] = chosen
        coords[start:start + chunk_rows, :, :, 0] = block_rows[:, None, None] + order // W - half
        coords[start:start + chunk_rows, :, :, 1] = cols[None, :, None] + order % W - half
    return coords.reshape(-1, M, 2), dists.reshape(-1, M), refs


def gather(patches: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Look up patch vectors for an ``(..., 2)`` coordinate array."""
    return patches[coords[..., 0], coords[..., 1]]


def extract_group_arrays(img, p: int, M: int, W: int, stride: int):
    """Array form of :func:`extract_patch_groups`.

    Returns mean-subtracted members ``(N, M, 3p^2)``, means ``(N, 3p^2)``
    and coordinates ``(N, M, 2)``.
    """
    P = all_patches(img, p)
    coords, _, _ = block_match(img, p, M, W, stride)
    X = gather(P, coords)
    mu = X.mean(axis=1)
    return X - mu[:, None, :], mu, coords


def extract_patch_groups(img, cfg) -> list[PatchGroup]:
    """Extract one mean-subtracted patch group per reference position.

    ``cfg`` supplies ``p``, ``M``, ``W`` and ``stride``.  Reference positions
    lie every ``stride`` pixels plus the last row/column so that every pixel
    is covered.  The search window is clipped at the image border.
    """
    img = as_image(img)
    if img.shape[0] < cfg.p or img.shape[1] < cfg.p:
        raise DimensionError(f"image {img.shape[0]}x{img.shape[1]} is smaller than the {cfg.p}x{cfg.p} patch")
    P = all_patches(img, cfg.p)
    coords, dists, refs = block_match(img, cfg.p, cfg.M, cfg.W, cfg.stride)
    groups = []
    for n in range(len(refs)):
        X = gather(P, coords[n])
        mu = X.mean(axis=0)
        hit = np.flatnonzero((coords[n] == refs[n]).all(axis=1))
        groups.append(
            PatchGroup(
                members=X - mu,
                mean=mu,
                coords=coords[n],
                reference_index=int(hit[0]),
                distances=dists[n],
            )
        )
    return groups


def aggregate(groups, h: int, w: int) -> np.ndarray:
    """Average overlapping patches back onto an ``h x w`` RGB canvas.

    Each group contributes ``members + mean`` at its coordinates.  Pixels are
    the uniform average of every patch value covering them; accumulation
    runs in group order, then member order.
    """
    groups = list(groups)
    if not groups:
        raise CoverageError("no patch groups to aggregate")
    p = patch_size_from_dim(groups[0].dim)
    acc = np.zeros((3, h, w))
    hits = np.zeros((h, w))
    for g in groups:
        vals = g.patches().reshape(g.size, 3, p, p)
        for (r, c), v in zip(g.coords, vals):
            if r < 0 or c < 0 or r + p > h or c + p > w:
                raise DimensionError(f"patch at ({r}, {c}) falls outside the {h}x{w} canvas")
            acc[:, r:r + p, c:c + p] += v
            hits[r:r + p, c:c + p] += 1.0
    if np.any(hits == 0):
        r, c = np.argwhere(hits == 0)[0]
        raise CoverageError(f"pixel ({r}, {c}) is not covered by any patch")
    return np.moveaxis(acc / hits, 0, -1)
