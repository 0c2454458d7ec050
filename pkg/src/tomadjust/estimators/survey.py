"""Estimators for completely randomized survey experiments.

A simple random sample of ``n`` units is drawn from ``N`` and then completely
randomized. Sampling-stage covariates ``v`` have a known population mean
``v_bar``; analysis covariates ``x`` need not.
"""

from __future__ import annotations

import numpy as np

from ..errors import BadConfig
from ._base import (
    Dataset,
    EstimateReport,
    arm_sizes,
    check_covariates,
    make_report,
    regression_report,
    sample_cov,
    tom_weights,
)
from .cre import pooled_residual_variance


def sampling_covariates(ds: Dataset):
    """``v - v_bar`` without the columns that vanish identically, plus a note naming them.

    A sampled column equal to its population mean everywhere contributes an
    all-zero regressor, which adjusts nothing; any other constant column is
    collinear with the intercept and rejected.
    """
    if ds.f is None:
        raise BadConfig("survey analysis needs the sampling fraction f")
    if ds.v is None:
        return np.empty((ds.n, 0)), ""
    vc = ds.v - ds.v_bar
    zero = np.all(vc == 0, axis=0)
    note = ""
    if zero.any():
        note = f"sampling covariate column(s) {np.flatnonzero(zero).tolist()} equal v_bar and were omitted"
    vc = vc[:, ~zero]
    check_covariates(vc, "sampling covariate")
    return vc, note


def survey_design(ds: Dataset):
    """Columns ``1, Z, x, (Z - p0)(v - v_bar)``, the contrast selecting ``Z`` and any note."""
    vc, note = sampling_covariates(ds)
    p0 = ds.n0 / ds.n
    X = np.column_stack([np.ones(ds.n), ds.z, ds.x, (ds.z - p0)[:, None] * vc])
    d = np.zeros(X.shape[1])
    d[1] = 1.0
    return X, d, note


def tom_survey(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """Weighted regression of ``y`` on ``1, Z, x, (Z - p0)(v - v_bar)``.

    Weights are ``Z/p1^2 + (1-Z)/p0^2``. All HC flavors and the
    pooled-residual variance are conservative here.
    """
    n1, n0 = arm_sizes(ds.z, 2)
    check_covariates(ds.x)
    X, d, note = survey_design(ds)
    w = tom_weights(ds.z, n1 / ds.n, n0 / ds.n)
    report, fit = regression_report(
        "tom_survey",
        ds.y,
        X,
        w,
        d,
        X.shape[1],
        alpha,
        notes=note,
        extra_variances=lambda fit: {"pooled-residual": pooled_residual_variance(fit.residuals, ds.z)},
    )
    report.extras["beta"] = fit.coefficients[2 : 2 + ds.k]
    report.extras["gamma"] = fit.coefficients[2 + ds.k :]
    return report


def plugin_survey(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """Arm-wise plug-in coefficients, then difference in means of adjusted outcomes.

    ``beta = p0 {s_x(1)^2}^{-1} s_x1 + p1 {s_x(0)^2}^{-1} s_x0`` and
    ``gamma = {s_v(1)^2}^{-1} s_v1 - {s_v(0)^2}^{-1} s_v0``. The variance is
    ``n^{-1}(s_1^2/p1 + s_0^2/p0)`` evaluated on the adjusted outcomes.
    """
    n1, n0 = arm_sizes(ds.z, 2)
    check_covariates(ds.x)
    vc, note = sampling_covariates(ds)
    p1, p0 = n1 / ds.n, n0 / ds.n
    t, c = ds.z == 1, ds.z == 0
    y = ds.y[:, None]

    def slope(a, arm):
        if a.shape[1] == 0:
            return np.zeros(0)
        return np.linalg.solve(sample_cov(a[arm], a[arm]), sample_cov(a[arm], y[arm]).ravel())

    beta = p0 * slope(ds.x, t) + p1 * slope(ds.x, c)
    gamma = slope(vc, t) - slope(vc, c)
    adj = ds.y - (ds.z - p0) * (vc @ gamma) - ds.x @ beta
    point = adj[t].mean() - adj[c].mean()
    var = (np.var(adj[t], ddof=1) / p1 + np.var(adj[c], ddof=1) / p0) / ds.n
    return make_report(
        "plugin_survey",
        point,
        {"plugin": var},
        alpha,
        2 + ds.k + vc.shape[1],
        note,
        extras={"beta": beta, "gamma": gamma},
    )
