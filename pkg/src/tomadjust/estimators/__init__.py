"""Point and variance estimators for the four designs."""

from ._base import Dataset, EstimateReport, wald_ci
from .cluster import collapse_clusters, lin_cluster, tom_cluster
from .cre import diff_in_means, fisher_cre, lin_cre, plugin_cre, tom_cre
from .stratified import diff_in_means_stratified, plugin_stratified, strata_layout, tom_stratified
from .survey import plugin_survey, tom_survey


def _cluster_diff_in_means(ds, alpha=0.05):
    report = diff_in_means(collapse_clusters(ds), alpha)
    report.estimator = "diff_in_means_cluster"
    return report


# Short estimator names resolved per design, as used by the CLI and the simulation harness.
DESIGN_ESTIMATORS = {
    "CRE": {"diff_in_means": diff_in_means, "tom": tom_cre, "lin": lin_cre, "fisher": fisher_cre, "plugin": plugin_cre},
    "Stratified": {"diff_in_means": diff_in_means_stratified, "tom": tom_stratified, "plugin": plugin_stratified},
    "Survey": {"diff_in_means": diff_in_means, "tom": tom_survey, "plugin": plugin_survey, "lin": lin_cre},
    "Cluster": {"diff_in_means": _cluster_diff_in_means, "tom": tom_cluster, "lin": lin_cluster},
}

__all__ = [
    "Dataset",
    "EstimateReport",
    "DESIGN_ESTIMATORS",
    "collapse_clusters",
    "diff_in_means",
    "diff_in_means_stratified",
    "fisher_cre",
    "lin_cluster",
    "lin_cre",
    "plugin_cre",
    "plugin_stratified",
    "plugin_survey",
    "strata_layout",
    "tom_cluster",
    "tom_cre",
    "tom_stratified",
    "tom_survey",
    "wald_ci",
]
