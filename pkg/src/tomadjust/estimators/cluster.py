"""Cluster randomized experiments, analysed on scaled cluster totals."""

from __future__ import annotations

import numpy as np

from ..errors import BadConfig
from ._base import Dataset, EstimateReport
from .cre import lin_cre, tom_cre


def collapse_clusters(ds: Dataset) -> Dataset:
    """Cluster-level dataset of scaled totals.

    Row ``i`` holds ``Y_i = nbar^{-1} sum_j Y_ij``, the cluster's treatment,
    and covariates ``(c_i, xcheck_i, n_i)`` where ``xcheck_i`` is the scaled
    total of the unit-level ``x``. The size column is dropped when every
    cluster has the same size, since it would duplicate the intercept.
    """
    if ds.cluster is None:
        raise BadConfig("cluster analysis needs cluster labels")
    labels, idx = np.unique(ds.cluster, return_inverse=True)
    m = labels.shape[0]
    sizes = np.bincount(idx, minlength=m)
    nbar = ds.n / m

    zmin = np.full(m, 2)
    zmax = np.full(m, -1)
    np.minimum.at(zmin, idx, ds.z)
    np.maximum.at(zmax, idx, ds.z)
    if np.any(zmin != zmax):
        bad = labels[np.flatnonzero(zmin != zmax)[0]]
        raise BadConfig(f"treatment varies within cluster '{bad}'")

    def totals(a):
        out = np.zeros((m, a.shape[1]))
        np.add.at(out, idx, a)
        return out / nbar

    cols = []
    if ds.c is not None:
        first = np.zeros(m, dtype=np.int64)
        first[idx[::-1]] = np.arange(ds.n)[::-1]
        c = ds.c[first]
        if not np.allclose(c[idx], ds.c):
            raise BadConfig("cluster-level covariates vary within a cluster")
        cols.append(c)
    cols.append(totals(ds.x))
    if np.ptp(sizes) > 0:
        cols.append(sizes[:, None].astype(np.float64))
    return Dataset(y=totals(ds.y[:, None])[:, 0], z=zmin, x=np.column_stack(cols))


def tom_cluster(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """Weighted regression ``Y ~ 1 + Z + c + xcheck + n`` on cluster totals."""
    report = tom_cre(collapse_clusters(ds), alpha)
    report.estimator = "tom_cluster"
    return report


def lin_cluster(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """Interacted OLS on the same cluster-level data, for comparison."""
    report = lin_cre(collapse_clusters(ds), alpha)
    report.estimator = "lin_cluster"
    return report
