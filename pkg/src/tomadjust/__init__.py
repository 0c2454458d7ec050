"""Design-based regression adjustment for randomized experiments.

The weighted fit regresses outcomes on treatment and covariates with weights
``1/p_z^2``, so the smaller arm drives the covariate slope. Subpackages cover completely randomized, stratified, survey
and cluster designs, together with diagnostics and a simulation harness.
"""

from . import diagnostics, numkit, randomize
from .estimators import Dataset, EstimateReport, wald_ci

__version__ = "0.1.0"

__all__ = ["Dataset", "EstimateReport", "diagnostics", "numkit", "randomize", "wald_ci", "__version__"]
