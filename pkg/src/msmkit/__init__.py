"""Label-free no-reference image quality assessment toolkit.

Scores an image by the discrepancy between it and the prediction of a
restoration backbone trained to map clean images onto themselves, and
ships the distortion simulators, diffusion noiser, denoising baselines
and agreement statistics needed to validate such scores without any
ground-truth quality labels.
"""

from .imaging import (
    ImageGrid, PhantomSpec, generate_phantom, generate_phantom_set,
    load_image, save_image, to_canonical,
)
from .distortions import (
    DistortionSpec, DistortionLadder, add_gaussian_noise, add_rician_noise,
    apply_distortion, build_ladder, gaussian_blur, motion_blur, synthesize_sodium,
)
from .metrics import (
    DifferenceMeasure, QualityScore, RatingVector, ScorePairSeries,
    cohens_kappa, measure_difference, msm_score, plcc, psnr, srcc, ssim,
)
from .backbone import (
    BackboneConfig, TrainedBackbone, TrainingHyper,
    build_backbone, check_gradients, compute_loss, predict, train_identity,
)
from .diffusion import (
    DiffusionHyper, EpsilonPredictor, NoiseSchedule,
    build_linear_schedule, forward_noise, reverse_sample_batch, reverse_sample_to,
    train_epsilon_predictor,
)
from .denoise import (
    DenoiserModel, apply_denoiser, make_median_denoiser, make_sodium_training_pairs,
    median_filter, train_supervised_denoiser,
)
from .estimators import IdentityRestorer, MsmScorer

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
