"""Tunable parameters for patch-group extraction and denoising."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class DenoiseConfig:
    """All tunables of the pipeline.

    Defaults follow the published setting: 6x6 patches, groups of 10
    patches found in a 31x31 window, 32 mixture components, 54 external
    atoms, ``lam=0.001``, 2 dictionary-learning iterations and 4 outer
    denoising iterations.

    ``lam`` and ``eps`` are expressed on the unit intensity scale
    (``[0, 1]``); the denoiser converts thresholds to the ``[0, 255]``
    pixel scale using ``peak``.
    """

    p: int = 6
    M: int = 10
    W: int = 31
    K: int = 32
    r: int = 54
    lam: float = 0.001
    eps: float = 1e-6
    T: int = 2
    ite_num: int = 4
    stride: int = 3
    seed: int = 0
    peak: float = 255.0

    def __post_init__(self):
        if self.p < 1 or self.M < 1 or self.K < 1 or self.ite_num < 1:
            raise ValueError("p, M, K and ite_num must be >= 1")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.W < 1 or self.W % 2 == 0:
            raise ValueError(f"search window W must be odd and positive, got {self.W}")
        if not 1 <= self.stride <= self.p:
            raise ValueError(f"stride must lie in [1, p={self.p}], got {self.stride}")
        if not 0 <= self.r <= self.dim:
            raise ValueError(f"r must lie in [0, 3p^2={self.dim}], got {self.r}")
        if self.lam < 0 or self.eps <= 0 or self.peak <= 0:
            raise ValueError("lam must be >= 0, eps and peak > 0")

    @property
    def dim(self) -> int:
        """Length of a color patch vector, ``3 p^2``."""
        return 3 * self.p * self.p
