"""Estimators for stratified randomized experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..errors import StrataTooSmall
from ._base import Dataset, EstimateReport, check_covariates, make_report, regression_report, sample_cov

ANTI_CONSERVATIVE_NOTE = (
    "HC0 and HC1 can understate the variance under stratification with few units per arm; prefer HC2 or HC3"
)


@dataclass(frozen=True)
class StrataLayout:
    """Per-stratum bookkeeping shared by the stratified estimators.

    ``index[i]`` is the position of unit ``i``'s stratum in ``labels`` (sorted
    unique labels). ``sizes``, ``treated`` and ``control`` are per stratum.
    """

    labels: NDArray
    index: NDArray[np.int64]
    sizes: NDArray[np.int64]
    treated: NDArray[np.int64]
    control: NDArray[np.int64]

    @property
    def H(self) -> int:
        return self.labels.shape[0]

    @property
    def pi(self) -> NDArray[np.float64]:
        return self.sizes / self.sizes.sum()

    @property
    def p1(self) -> NDArray[np.float64]:
        return self.treated / self.sizes

    @property
    def p0(self) -> NDArray[np.float64]:
        return self.control / self.sizes

    def cell_counts(self, z) -> NDArray[np.int64]:
        """Count of units in the same stratum-arm cell, per unit."""
        return np.where(z == 1, self.treated[self.index], self.control[self.index])


def strata_layout(ds: Dataset) -> StrataLayout:
    """Validate stratum labels and require ``2 <= n_hz <= n_h - 2`` everywhere."""
    if ds.strata is None:
        raise StrataTooSmall("stratified analysis needs stratum labels")
    labels, index = np.unique(ds.strata, return_inverse=True)
    sizes = np.bincount(index)
    treated = np.bincount(index, weights=ds.z).astype(np.int64)
    control = sizes - treated
    bad = np.flatnonzero((treated < 2) | (control < 2))
    if bad.size:
        h = bad[0]
        raise StrataTooSmall(
            f"stratum '{labels[h]}' has n_h1={treated[h]}, n_h0={control[h]}; each arm needs at least 2 units"
        )
    return StrataLayout(labels, index, sizes, treated, control)


def stratified_weights(z, layout: StrataLayout) -> NDArray[np.float64]:
    """``w_hi = Z p_h1^{-2} n_h1/(n_h1-1) + (1-Z) p_h0^{-2} n_h0/(n_h0-1)``."""
    h = layout.index
    n1, n0 = layout.treated[h], layout.control[h]
    w1 = (1.0 / layout.p1[h] ** 2) * n1 / (n1 - 1)
    w0 = (1.0 / layout.p0[h] ** 2) * n0 / (n0 - 1)
    return np.where(z == 1, w1, w0)


def _cell_means(a, z, layout: StrataLayout):
    """Stratum-arm means of the columns of ``a``; returns two ``(H, cols)`` arrays."""
    a = a.reshape(a.shape[0], -1)
    out = []
    for arm, counts in ((1, layout.treated), (0, layout.control)):
        sel = z == arm
        sums = np.zeros((layout.H, a.shape[1]))
        np.add.at(sums, layout.index[sel], a[sel])
        out.append(sums / counts[:, None])
    return out


def arm_centered(a, z, layout: StrataLayout):
    m1, m0 = _cell_means(a, z, layout)
    a = a.reshape(a.shape[0], -1)
    return a - np.where((z == 1)[:, None], m1[layout.index], m0[layout.index])


def stratified_design(ds: Dataset, layout: StrataLayout, form: str = "centered"):
    """Design matrix and contrast for the weighted stratified regression.

    ``form="centered"`` uses ``1, Z, (delta_hq - pi_q), Z (delta_hq - pi_q), x``
    with ``q = 2..H``; ``form="onehot"`` uses ``Z delta_h, (1-Z) delta_h,
    x - xbar_h`` with contrast ``(pi, -pi, 0)``. Both span the same column
    space and give identical estimates.
    """
    H = layout.H
    z = ds.z.astype(np.float64)
    D = np.zeros((ds.n, H))
    D[np.arange(ds.n), layout.index] = 1.0
    if form == "centered":
        Dc = D[:, 1:] - layout.pi[1:]
        X = np.column_stack([np.ones(ds.n), z, Dc, z[:, None] * Dc, ds.x])
        d = np.zeros(X.shape[1])
        d[1] = 1.0
    elif form == "onehot":
        sums = np.zeros((H, ds.k))
        np.add.at(sums, layout.index, ds.x)
        xc = ds.x - (sums / layout.sizes[:, None])[layout.index]
        X = np.column_stack([z[:, None] * D, (1 - z)[:, None] * D, xc])
        d = np.concatenate([layout.pi, -layout.pi, np.zeros(ds.k)])
    else:
        raise ValueError(f"unknown form {form!r}; use 'centered' or 'onehot'")
    return X, d


def pooled_residual_variance_str(resid, z, layout: StrataLayout) -> float:
    """``n^{-1} sum_h pi_h (p_h1^{-1} s_he(1)^2 + p_h0^{-1} s_he(0)^2)`` with ``s_he(z)^2 = sum e^2/(n_hz-1)``."""
    ss1 = np.bincount(layout.index[z == 1], weights=resid[z == 1] ** 2, minlength=layout.H)
    ss0 = np.bincount(layout.index[z == 0], weights=resid[z == 0] ** 2, minlength=layout.H)
    s1 = ss1 / (layout.treated - 1)
    s0 = ss0 / (layout.control - 1)
    n = layout.sizes.sum()
    return float(np.sum(layout.pi * (s1 / layout.p1 + s0 / layout.p0)) / n)


def diff_in_means_stratified(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """``sum_h pi_h tau_h`` with variance ``sum_h pi_h^2 (s_h1^2/n_h1 + s_h0^2/n_h0)``."""
    layout = strata_layout(ds)
    m1, m0 = _cell_means(ds.y, ds.z, layout)
    e = arm_centered(ds.y, ds.z, layout)[:, 0]
    s1 = np.bincount(layout.index[ds.z == 1], weights=e[ds.z == 1] ** 2, minlength=layout.H) / (layout.treated - 1)
    s0 = np.bincount(layout.index[ds.z == 0], weights=e[ds.z == 0] ** 2, minlength=layout.H) / (layout.control - 1)
    point = float(layout.pi @ (m1 - m0)[:, 0])
    var = float(np.sum(layout.pi**2 * (s1 / layout.treated + s0 / layout.control)))
    return make_report("diff_in_means_stratified", point, {"neyman": var}, alpha, 2 * layout.H)


def tom_stratified(ds: Dataset, alpha: float = 0.05, form: str = "centered") -> EstimateReport:
    """Weighted stratified regression with small-sample corrected inverse-squared-propensity weights.

    Reports HC0-HC3 and the pooled-residual variance. HC2 and HC3 are the
    recommended flavors; the notes carry a warning about HC0 and HC1.
    """
    layout = strata_layout(ds)
    check_covariates(ds.x)
    X, d = stratified_design(ds, layout, form)
    w = stratified_weights(ds.z, layout)
    report, fit = regression_report(
        "tom_stratified",
        ds.y,
        X,
        w,
        d,
        2 * layout.H + ds.k,
        alpha,
        notes=ANTI_CONSERVATIVE_NOTE,
        extra_variances=lambda fit: {"pooled-residual": pooled_residual_variance_str(fit.residuals, ds.z, layout)},
    )
    if ds.k:
        report.extras["beta"] = fit.coefficients[-ds.k :]
    return report


def plugin_stratified(ds: Dataset, alpha: float = 0.05) -> EstimateReport:
    """Plug-in adjustment with the known within-stratum covariate variances.

    ``beta = V_xx^{-1} V_xtau`` where ``V_xx = sum_h pi_h S_hx^2/(p_h0 p_h1)``
    and ``V_xtau = sum_h pi_h (s_h1x/p_h1 + s_h0x/p_h0)``.
    """
    layout = strata_layout(ds)
    check_covariates(ds.x)
    pi, p1, p0 = layout.pi, layout.p1, layout.p0
    m1, m0 = _cell_means(ds.y, ds.z, layout)
    tau = float(pi @ (m1 - m0)[:, 0])
    k = ds.k
    v_tt = 0.0
    v_xx = np.zeros((k, k))
    v_xt = np.zeros(k)
    for h in range(layout.H):
        in_h = layout.index == h
        t, c = in_h & (ds.z == 1), in_h & (ds.z == 0)
        v_tt += pi[h] * (np.var(ds.y[t], ddof=1) / p1[h] + np.var(ds.y[c], ddof=1) / p0[h])
        if k:
            v_xx += pi[h] * sample_cov(ds.x[in_h], ds.x[in_h]) / (p0[h] * p1[h])
            v_xt += pi[h] * (
                sample_cov(ds.x[t], ds.y[t, None]) / p1[h] + sample_cov(ds.x[c], ds.y[c, None]) / p0[h]
            ).ravel()
    n = ds.n
    if k == 0:
        return make_report("plugin_stratified", tau, {"plugin": v_tt / n}, alpha, 2 * layout.H)
    x1, x0 = _cell_means(ds.x, ds.z, layout)
    tau_x = pi @ (x1 - x0)
    beta = np.linalg.solve(v_xx, v_xt)
    var = (v_tt - v_xt @ beta) / n
    notes = ""
    if var < 0:
        notes = f"plug-in variance {float(var):.17g} truncated at zero"
        var = 0.0
    return make_report(
        "plugin_stratified", tau - beta @ tau_x, {"plugin": var}, alpha, 2 * layout.H + k, notes, {"beta": beta}
    )
