"""Estimators for completely randomized experiments."""

from __future__ import annotations

import numpy as np

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


def _neyman(y, z, n1, n0) -> float:
    if min(n1, n0) < 2:
        return float("nan")
    return float(np.var(y[z == 1], ddof=1) / n1 + np.var(y[z == 0], ddof=1) / n0)


def diff_in_means(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """Treated mean minus control mean, with the Neyman variance ``s1^2/n1 + s0^2/n0``."""
    n1, n0 = arm_sizes(ds.z)
    point = ds.y[ds.z == 1].mean() - ds.y[ds.z == 0].mean()
    notes = "" if min(n1, n0) >= 2 else "neyman variance needs two units per arm"
    return make_report("diff_in_means", point, {"neyman": _neyman(ds.y, ds.z, n1, n0)}, alpha, 2, notes)


def pooled_residual_variance(resid, z) -> float:
    """``n^{-1} (p1^{-1} s_e(1)^2 + p0^{-1} s_e(0)^2)`` from regression residuals."""
    n = z.shape[0]
    n1 = int(z.sum())
    n0 = n - n1
    s1 = np.sum(resid[z == 1] ** 2) / (n1 - 1)
    s0 = np.sum(resid[z == 0] ** 2) / (n0 - 1)
    return float((s1 * n / n1 + s0 * n / n0) / n)


def tom_cre(ds: Dataset, alpha: float = 0.05, weights=None) -> EstimateReport:
    """Weighted regression ``y ~ 1 + z + x`` with weights ``z/p1^2 + (1-z)/p0^2``.

    ``weights`` overrides the default weight vector; the stratified estimator
    with one stratum is this fit with small-sample corrected weights.
    """
    n1, n0 = arm_sizes(ds.z, 2)
    check_covariates(ds.x)
    n = ds.n
    w = tom_weights(ds.z, n1 / n, n0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
    X = np.column_stack([np.ones(n), ds.z, ds.x])
    d = np.zeros(X.shape[1])
    d[1] = 1.0
    report, fit = regression_report(
        "tom",
        ds.y,
        X,
        w,
        d,
        2 + ds.k,
        alpha,
        extra_variances=lambda fit: {"pooled-residual": pooled_residual_variance(fit.residuals, ds.z)},
    )
    report.extras["coefficients"] = fit.coefficients
    return report


def lin_cre(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """OLS with treatment-covariate interactions, covariates centred at their sample mean."""
    arm_sizes(ds.z, 2)
    check_covariates(ds.x)
    xc = ds.x - ds.x.mean(axis=0)
    X = np.column_stack([np.ones(ds.n), ds.z, xc, ds.z[:, None] * xc])
    d = np.zeros(X.shape[1])
    d[1] = 1.0
    report, _ = regression_report("lin", ds.y, X, None, d, 2 + 2 * ds.k, alpha)
    return report


def fisher_cre(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """OLS of ``y ~ 1 + z + x`` without interactions."""
    arm_sizes(ds.z, 2)
    check_covariates(ds.x)
    X = np.column_stack([np.ones(ds.n), ds.z, ds.x])
    d = np.zeros(X.shape[1])
    d[1] = 1.0
    report, _ = regression_report("fisher", ds.y, X, None, d, 2 + ds.k, alpha)
    return report


def plugin_cre(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """Moment plug-in for the optimal adjustment vector under complete randomization.

    Uses the known covariate variance of the whole experimental population and
    arm-wise sample covariances between covariates and outcomes.
    """
    n1, n0 = arm_sizes(ds.z, 2)
    check_covariates(ds.x)
    p1, p0 = n1 / ds.n, n0 / ds.n
    t, c = ds.z == 1, ds.z == 0
    y = ds.y[:, None]
    tau = ds.y[t].mean() - ds.y[c].mean()
    v_tt = np.var(ds.y[t], ddof=1) / p1 + np.var(ds.y[c], ddof=1) / p0
    if ds.k == 0:
        return make_report("plugin", tau, {"plugin": v_tt / ds.n}, alpha, 2)
    tau_x = ds.x[t].mean(axis=0) - ds.x[c].mean(axis=0)
    v_xx = sample_cov(ds.x, ds.x) / (p1 * p0)
    v_xt = (sample_cov(ds.x[t], y[t]) / p1 + sample_cov(ds.x[c], y[c]) / p0).ravel()
    beta = np.linalg.solve(v_xx, v_xt)
    var = (v_tt - v_xt @ beta) / ds.n
    notes = ""
    if var < 0:
        notes = f"plug-in variance {float(var):.17g} truncated at zero"
        var = 0.0
    return make_report("plugin", tau - beta @ tau_x, {"plugin": var}, alpha, 2 + ds.k, notes, {"beta": beta})
