"""Patch-group Gaussian mixture priors and hybrid orthogonal dictionaries for color denoising."""

from .config import DenoiseConfig
from .denoise import denoise, reconstruct_patch
from .dictionary import (
    HybridDictionary,
    build_lambda,
    learn_hybrid_dictionary,
    update_internal_dict,
    weighted_soft_threshold,
)
from .imageio import load_image, save_image
from .metrics import QualityReport, psnr, quality, ssim
from .patches import PatchGroup, aggregate, extract_patch_groups
from .prior import (
    EMOptions,
    GmmComponent,
    GmmPrior,
    eigendecompose,
    load_prior,
    log_group_likelihood,
    map_assign,
    save_prior,
    train_gmm,
)

__version__ = "0.1.0"

__all__ = [
    "DenoiseConfig",
    "EMOptions",
    "GmmComponent",
    "GmmPrior",
    "HybridDictionary",
    "PatchGroup",
    "QualityReport",
    "aggregate",
    "build_lambda",
    "denoise",
    "eigendecompose",
    "extract_patch_groups",
    "learn_hybrid_dictionary",
    "load_image",
    "load_prior",
    "log_group_likelihood",
    "map_assign",
    "psnr",
    "quality",
    "reconstruct_patch",
    "save_image",
    "save_prior",
    "ssim",
    "train_gmm",
    "update_internal_dict",
    "weighted_soft_threshold",
]
