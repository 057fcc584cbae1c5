"""Binary label aggregation for crowdsourcing with finite-sample error-rate bounds."""

from .bounds import (
    BoundReport,
    dispersion_stats,
    high_prob_bound,
    kl_bernoulli,
    mean_error_bounds,
    mean_error_bounds_onecoin,
    min_t1_for,
    mv_mean_bound,
    oswmv_condition,
    oswmv_threshold,
    phi,
    plugin_report,
    rho_bar,
    t_stats,
    t_stats_onecoin,
)
from .em import EmOptions, Posterior, em_fit, em_map_predict, log_likelihood, posterior_ds
from .model import (
    DawidSkeneParams,
    GoldLabels,
    LabelMatrix,
    OneCoinParams,
    Prediction,
    SamplingDesign,
    error_rate,
    to_dawid_skene,
)
from .rules import (
    HyperplaneRule,
    bound_optimal_rule,
    estimate_accuracies,
    iterative_wmv,
    majority_rule,
    one_step_wmv,
    oracle_map_rule,
    predict,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DawidSkeneParams",
    "EmOptions",
    "GoldLabels",
    "HyperplaneRule",
    "LabelMatrix",
    "OneCoinParams",
    "Posterior",
    "Prediction",
    "SamplingDesign",
    "bound_optimal_rule",
    "dispersion_stats",
    "em_fit",
    "em_map_predict",
    "error_rate",
    "estimate_accuracies",
    "high_prob_bound",
    "iterative_wmv",
    "kl_bernoulli",
    "log_likelihood",
    "majority_rule",
    "mean_error_bounds",
    "mean_error_bounds_onecoin",
    "min_t1_for",
    "mv_mean_bound",
    "one_step_wmv",
    "oracle_map_rule",
    "oswmv_condition",
    "oswmv_threshold",
    "phi",
    "plugin_report",
    "posterior_ds",
    "predict",
    "rho_bar",
    "t_stats",
    "t_stats_onecoin",
    "to_dawid_skene",
]
