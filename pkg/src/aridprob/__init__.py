"""Probabilistic dry-climate classification of gridded climate data.

Library layout:

* :mod:`aridprob.grid` - grid data model, unit conversions, exchange formats
* :mod:`aridprob.ktc` - Koeppen-Trewartha dry-climate labeling
* :mod:`aridprob.basis` - Wendland / Gaussian basis feature encoding
* :mod:`aridprob.network` - feedforward softmax classifier with Adam
* :mod:`aridprob.evaluation` - one-vs-rest confusion counts and metrics
* :mod:`aridprob.fluctuation` - coefficient-of-variation analysis
* :mod:`aridprob.pipeline` / :mod:`aridprob.config` / :mod:`aridprob.cli`
  - orchestration, configuration, and the command-line surface
* :mod:`aridprob.render` - raster images and report figures
"""

from .grid import (
    DEFAULT_SPEC,
    GridSpec,
    MonthlyField,
    StGrid,
    SynthConfig,
    convert_kelvin_to_celsius,
    convert_precip_rate_to_cm,
    load_grid,
    save_grid,
    synth_generate,
    winsorize,
)
from .ktc import (
    AridityClass,
    LabelRaster,
    aggregate_annual,
    classify,
    label_grid,
    patton_threshold,
    pr_metric,
)
from .basis import (
    SpatialKnots,
    TemporalKnots,
    encode,
    make_spatial_knots,
    make_temporal_knots,
    spatial_basis,
    temporal_basis,
    wendland_b1,
)
from .network import (
    AdamState,
    Network,
    NetworkConfig,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init,
    load_checkpoint,
    predict_probs,
    save_checkpoint,
    scce_loss,
    softmax,
    train,
)
from .evaluation import MetricsReport, argmax_classify, confusion, evaluate, metrics
from .fluctuation import (
    CVMap,
    FluctuationLevel,
    ProbCube,
    RegionMask,
    area_proportions,
    bin_cv,
    compute_cv_map,
    cv,
    dominant_class,
    mean_probs,
    region_summary,
)

__version__ = "0.1.0"
