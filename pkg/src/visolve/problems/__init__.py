"""Problem builders: synthetic affine families, TV denoising, adversarial regression."""
from .adversarial import (
    AdversarialSpec,
    adversarial_objective,
    make_adversarial,
    synthetic_regression,
)
from .affine import AffineSaddleSpec, affine_problem, make_affine_saddle
from .imaging import (
    DenoisingSpec,
    denoising_objective,
    div_field,
    grad_image,
    image_of,
    make_denoising,
    psnr,
)
from .wrappers import estimate_constants, regularize_operator, sigma_star_sq

PROBLEM_KINDS = ("affine", "denoise", "adversarial")

__all__ = [
    "AdversarialSpec",
    "AffineSaddleSpec",
    "DenoisingSpec",
    "PROBLEM_KINDS",
    "adversarial_objective",
    "affine_problem",
    "denoising_objective",
    "div_field",
    "estimate_constants",
    "grad_image",
    "image_of",
    "make_adversarial",
    "make_affine_saddle",
    "make_denoising",
    "psnr",
    "regularize_operator",
    "sigma_star_sq",
    "synthetic_regression",
]
