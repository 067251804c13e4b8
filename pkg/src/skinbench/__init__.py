"""Skin-detection toolkit and fair-comparison benchmark harness.

Classical per-pixel skin detectors (histogram posterior, log-ratio LUT,
Gaussian mixtures, channel-difference bounds, a 1-D error-signal
interval, dynamic YCbCr clustering), spatial-propagation pipelines,
weighted-vote fusion, and the evaluation protocol to compare them
(pixel-level F1/TPR/FPR, average precision, threshold sweeps,
rank-of-the-average-rank tables).
"""

from .colorspace import cheddad_e, chen_transform, rgb_to_ycbcr
from .detectors import BUILTIN_METHODS, DEFAULT_TAUS, DetectorBank
from .ensemble import (
    EnsembleConfig,
    Member,
    ingest_external_map,
    parse_config,
    preset,
    run_ensemble,
    vote,
)
from .evaluation import (
    ConfusionCounts,
    ManifestEntry,
    Metrics,
    aggregate_pixel_level,
    average_precision,
    confusion,
    group_average,
    metrics,
    parse_manifest,
    rank_table,
    threshold_sweep,
)
from .imageio import (
    DONTCARE,
    NONSKIN,
    SKIN,
    load_image,
    load_mask,
    load_probability_map,
    save_mask,
    save_probability_map,
    threshold_map,
)
from .models import (
    GmmModel,
    HistogramModel,
    bayes_posterior,
    fit_mixture,
    gmm_posterior,
    load_model,
    load_model_file,
    save_model,
    save_model_file,
    spl_logratio,
    train_gmm,
    train_histogram,
)
from .rules import (
    CheddadModel,
    ChenBounds,
    DycParams,
    chen_detect,
    cheddad_detect,
    dyc_detect,
    train_cheddad,
)
from .spatial import (
    LdaModel,
    extract_seeds_adaptive,
    extract_seeds_fixed,
    lda_probability,
    propagate,
    sa1_detect,
    sa2_detect,
    sa3_detect,
    texture_features,
    train_lda,
)

__version__ = "0.1.0"
