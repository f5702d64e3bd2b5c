"""Non-local means and probabilistic non-local means image denoising."""

from .denoise import (
    METHODS,
    DenoiseConfig,
    DenoiseError,
    Rejection,
    RunStats,
    denoise,
    make_config,
    method_noise,
    patch_difference_D,
    patch_ssd,
)
from .image import (
    DegenerateImageWarning,
    add_gaussian_noise,
    estimate_noise_sigma,
    generate_checkerboard,
    pad_symmetric,
    psnr,
    ssim,
)
from .pgm import load_pgm, save_pgm
from .stats import (
    DiffDistribution,
    PatchGeometry,
    build_distribution_table,
    cdf_D,
    center_pixel_weight,
    critical_interval,
    fit_scaled_chi2,
    overlap_count,
    pdf_D,
    quantile_D,
    variance_of_D,
)
from .weights import (
    ClassicWeight,
    ProbabilisticWeight,
    build_weight_model,
    classic_weight,
    probabilistic_weight,
)

__version__ = "0.1.0"
