"""One-shot atlas-based segmentation on synthetic volumes.

Variational pairwise registration with content-consistency features,
Fourier amplitude-mix style transfer onto the warped atlas, a compact
trainable voxel classifier, and the iterative loop that ties them together.
"""

from .features import FeatureStack, extract_features, fcc_loss
from .fields import (
    DimensionMismatchError,
    DisplacementField,
    LabelMap,
    ProbMask,
    ScalarField,
    warp_labels,
    warp_prob_channels,
    warp_scalar,
)
from .metrics import (
    DiceResult,
    NlccConfig,
    dice,
    nlcc,
    nlcc_info,
    smoothness,
    soft_dice_loss,
)
from .phantom import (
    Anatomy,
    PhantomConfig,
    PhantomDataset,
    render_subject,
    sample_anatomy,
    synth_dataset,
    synth_phantom,
)
from .pipeline import (
    EvalData,
    PipelineConfig,
    RoundReport,
    report_from_rows,
    report_to_rows,
    run_pipeline,
    select_atlas,
)
from .registration import (
    RegConfig,
    RegResult,
    RegistrationDivergence,
    WeakSupervision,
    reg_loss,
    reg_loss_terms,
    register,
)
from .segmenter import (
    AugmentConfig,
    SegModel,
    TrainConfig,
    augment,
    init_model,
    load_model,
    save_model,
    seg_forward,
    seg_train,
)
from .spectral import (
    Spectrum,
    SpectrumResidueWarning,
    from_spectrum,
    ist,
    sample_beta,
    to_spectrum,
)

__version__ = "0.1.0"

__all__ = [
    "Anatomy",
    "AugmentConfig",
    "DiceResult",
    "DimensionMismatchError",
    "DisplacementField",
    "EvalData",
    "FeatureStack",
    "LabelMap",
    "NlccConfig",
    "PhantomConfig",
    "PhantomDataset",
    "PipelineConfig",
    "ProbMask",
    "RegConfig",
    "RegResult",
    "RegistrationDivergence",
    "RoundReport",
    "ScalarField",
    "SegModel",
    "Spectrum",
    "SpectrumResidueWarning",
    "TrainConfig",
    "WeakSupervision",
    "augment",
    "dice",
    "extract_features",
    "fcc_loss",
    "from_spectrum",
    "init_model",
    "ist",
    "load_model",
    "nlcc",
    "nlcc_info",
    "reg_loss",
    "reg_loss_terms",
    "register",
    "render_subject",
    "report_from_rows",
    "report_to_rows",
    "run_pipeline",
    "sample_anatomy",
    "sample_beta",
    "save_model",
    "seg_forward",
    "seg_train",
    "select_atlas",
    "smoothness",
    "soft_dice_loss",
    "synth_dataset",
    "synth_phantom",
    "to_spectrum",
    "warp_labels",
    "warp_prob_channels",
    "warp_scalar",
]
