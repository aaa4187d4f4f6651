"""Design-based estimation of a finite population's mean curve from noisy sampled curves.

Local linear smoothing, Horvitz-Thompson mean and covariance estimation,
simulated simultaneous confidence bands and design-weighted
cross-validation, with a Monte Carlo harness to compare them.
"""

from .bands import ConfidenceBand, band_area, band_threshold, build_band, covers, psd_project, simulate_sup_ratios
from .bandwidth import (
    BandwidthGrid,
    CvWeights,
    cv_weights,
    loo_mean,
    opsomer_miller_weights,
    oracle_loss,
    r_loss,
    select_bandwidth,
    stratified_loo_weights,
    unweighted_weights,
    wcv_score,
)
from .config import ExperimentConfig, load_config
from .design import (
    InclusionProbabilities,
    SampleDraw,
    SamplingDesign,
    draw_sample,
    inclusion_probabilities,
    neyman_allocation,
    stratify_by_total,
)
from .errors import ConfigError, ContractError, DesignError, FdsurveyError, NumericalError
from .estimate import CovarianceEstimate, MeanEstimate, exact_gamma, ht_covariance, ht_mean, variance_curve
from .harness import ExperimentContext, run_experiment, run_replicate, summarize
from .numerics import RngStream, TimeGrid, empirical_quantile, trapezoid
from .population import (
    CurvePopulation,
    NoiseModel,
    ObservationMatrix,
    PopulationConfig,
    default_population_config,
    observe,
    synthesize_population,
)
from .smooth import Kernel, SmootherWeightMatrix, interpolation_matrix, linear_interpolate, local_linear_weights, smooth_rows

__version__ = "0.1.0"
