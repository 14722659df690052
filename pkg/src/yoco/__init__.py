"""Lossless regression on compressed data via conditionally sufficient statistics.

Rows sharing a feature vector are collapsed into one record holding the
outcome sum, sum of squares and count. Least-squares coefficients and
homoskedastic, heteroskedasticity-consistent and cluster-robust
covariances computed from those records match the row-level results.
"""

from .compress import (
    bin_features,
    compress_between_cluster,
    compress_fweights,
    compress_group_means,
    compress_panel,
    compress_suffstats,
    merge_suffstats,
    quantile_edges,
)
from .errors import NumericalError, ValidationError, YocoError
from .estimate import fit, group_means_covariance
from .io import read_csv, read_suffstats, write_csv, write_suffstats
from .logistic import compress_logistic, fit_logistic
from .model import (
    ClusterStatsTable,
    ClusterStrategy,
    CovarianceSpec,
    CovKind,
    FitResult,
    ObservationSet,
    PanelStatsTable,
    SuffStatsTable,
    WeightKind,
)
from .synth import gen_panel

__version__ = "0.1.0"

__all__ = [
    "ClusterStatsTable", "ClusterStrategy", "CovKind", "CovarianceSpec", "FitResult",
    "NumericalError", "ObservationSet", "PanelStatsTable", "SuffStatsTable",
    "ValidationError", "WeightKind", "YocoError",
    "bin_features", "compress_between_cluster", "compress_fweights", "compress_group_means",
    "compress_logistic", "compress_panel", "compress_suffstats", "fit", "fit_logistic",
    "gen_panel", "group_means_covariance", "merge_suffstats", "quantile_edges",
    "read_csv", "read_suffstats", "write_csv", "write_suffstats",
]
