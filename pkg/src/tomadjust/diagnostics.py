"""Calibration weights and leverage scores of the weighted and interacted fits.

Both adjusted estimators under complete randomization can be written as a
signed weighted sum of outcomes, ``sum_{S1} c_i Y_i - sum_{S0} c_i Y_i``. The
weighted fit's weights stay closer to uniform (smaller :func:`distance`), and
its leverages are componentwise no larger than those of the interacted fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_triangular

from .errors import BadConfig, RankDeficient
from .estimators import Dataset
from .estimators._base import arm_sizes, check_covariates, tom_weights
from .estimators.cluster import collapse_clusters
from .estimators.stratified import arm_centered, stratified_design, stratified_weights, strata_layout
from .estimators.survey import sampling_covariates, survey_design
from .numkit import wls_fit

INEQUALITY_SLACK = 1e-12
METHODS = ("tom", "lin")


def _require_covariates(ds: Dataset) -> None:
    if ds.k == 0:
        raise BadConfig("diagnostics require covariates")


def _arm_pieces(ds: Dataset):
    """Arm sizes, shares, ``tau_x``, arm-centred covariates and within-arm scatter matrices."""
    n1, n0 = arm_sizes(ds.z, 2)
    check_covariates(ds.x)
    t = ds.z == 1
    m1, m0 = ds.x[t].mean(axis=0), ds.x[~t].mean(axis=0)
    xa = ds.x - np.where(t[:, None], m1, m0)
    # (n_z - 1) s_x(z)^2
    q1 = xa[t].T @ xa[t]
    q0 = xa[~t].T @ xa[~t]
    return n1, n0, n1 / ds.n, n0 / ds.n, m1 - m0, xa, q1, q0


def calibration_weights(ds: Dataset, method: str = "tom") -> NDArray[np.float64]:
    """Closed-form calibration weights ``c_i`` of the weighted or interacted fit.

    Parameters
    ----------
    ds : Dataset
        Completely randomized experiment with ``k >= 1``.
    method : {"tom", "lin"}

    Returns
    -------
    ndarray (n,)
        Weights summing to one within each arm.
    """
    _require_covariates(ds)
    n1, n0, p1, p0, tau_x, xa, _, _ = _arm_pieces(ds)
    t = ds.z == 1
    if method == "tom":
        # M = A'A with A the arm-centred rows scaled by 1/p_z; x_i' M^{-1} tau_x = p_z q_i' R^{-T} tau_x
        scale = np.where(t, p1, p0)
        Q, R = np.linalg.qr(xa / scale[:, None])
        adj = scale * (Q @ _solve_upper_t(R, tau_x))
        return np.where(t, 1 / n1 - adj / p1**2, 1 / n0 + adj / p0**2)
    if method == "lin":
        c = np.empty(ds.n)
        for arm, base, sign, share in ((t, 1 / n1, -1.0, p0), (~t, 1 / n0, 1.0, p1)):
            Q, R = np.linalg.qr(xa[arm])
            c[arm] = base + sign * share * (Q @ _solve_upper_t(R, tau_x))
        return c
    raise ValueError(f"unknown method {method!r}; use one of {METHODS}")


def distance(c, z) -> float:
    """``F(c) = sum_{S1} G(c_i n1) + sum_{S0} G(c_i n0)`` with ``G(x) = (x - 1)^2 / 2``."""
    c = np.asarray(c, dtype=np.float64)
    z = np.asarray(z)
    n1 = int(z.sum())
    n0 = z.shape[0] - n1
    scaled = np.where(z == 1, c * n1, c * n0)
    return float(np.sum((scaled - 1.0) ** 2) / 2)


def _solve(M, b):
    try:
        return np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        raise RankDeficient("covariate scatter matrix is singular; an arm may have too few units") from None


def _solve_upper_t(R, b):
    """``R^{-T} b`` for the triangular factor of a thin QR."""
    if R.shape[0] < R.shape[1] or np.any(np.abs(np.diag(R)) <= np.finfo(float).eps * np.abs(R).max() * R.shape[1]):
        raise RankDeficient("covariate scatter matrix is singular; an arm may have too few units")
    return solve_triangular(R, b, trans="T")


def _quad(a, M) -> NDArray[np.float64]:
    """Row-wise ``a_i' M^{-1} a_i``; zero when every centred row vanishes."""
    if a.shape[1] == 0 or not np.any(a):
        return np.zeros(a.shape[0])
    return np.einsum("ij,ij->i", a, _solve(M, a.T).T)


def leverage_closed_form(ds: Dataset, design: str = "CRE", method: str = "tom") -> NDArray[np.float64]:
    """Leverage scores from their closed forms rather than the hat matrix.

    ``design`` is one of ``"CRE"``, ``"Stratified"`` or ``"Survey"``;
    ``method="lin"`` is available for ``"CRE"`` only.
    """
    if design == "CRE":
        n1, n0, p1, p0, _, xa, q1, q0 = _arm_pieces(ds)
        t = ds.z == 1
        if method == "lin":
            return np.where(t, 1 / n1 + _quad(xa, q1), 1 / n0 + _quad(xa, q0))
        if method == "tom":
            r = (p1 / p0) ** 2
            return np.where(t, 1 / n1 + _quad(xa, q1 + r * q0), 1 / n0 + _quad(xa, q0 + q1 / r))
        raise ValueError(f"unknown method {method!r}; use one of {METHODS}")
    if method != "tom":
        raise ValueError(f"design {design!r} has a closed form for the weighted fit only")
    if design == "Stratified":
        layout = strata_layout(ds)
        check_covariates(ds.x)
        xa = arm_centered(ds.x, ds.z, layout)
        pi, h = layout.pi, layout.index
        v_xx = np.zeros((ds.k, ds.k))
        for s in range(layout.H):
            for arm, p in ((1, layout.p1[s]), (0, layout.p0[s])):
                rows = xa[(h == s) & (ds.z == arm)]
                v_xx += pi[s] * (rows.T @ rows) / (rows.shape[0] - 1) / p
        w = stratified_weights(ds.z, layout)
        return 1.0 / layout.cell_counts(ds.z) + _quad(xa, v_xx) * w / ds.n
    if design == "Survey":
        n1, n0 = arm_sizes(ds.z, 2)
        check_covariates(ds.x)
        p1, p0 = n1 / ds.n, n0 / ds.n
        t = ds.z == 1
        vc, _ = sampling_covariates(ds)
        both = np.column_stack([ds.x, vc])
        centred = both - np.where(t[:, None], both[t].mean(axis=0), both[~t].mean(axis=0))
        a = np.column_stack([centred[:, : ds.k], (ds.z - p0)[:, None] * centred[:, ds.k :]])
        w = tom_weights(ds.z, p1, p0)
        v_hat = (a * w[:, None]).T @ a / ds.n
        return np.where(t, 1 / n1, 1 / n0) + _quad(a, v_hat) * w / ds.n
    raise ValueError(f"no closed-form leverage for design {design!r}")


def hat_leverages(ds: Dataset, design: str = "CRE", method: str = "tom") -> NDArray[np.float64]:
    """Diagonal of the weighted hat matrix of the fit each estimator runs."""
    if design == "CRE":
        n1, n0 = arm_sizes(ds.z, 2)
        if method == "tom":
            X = np.column_stack([np.ones(ds.n), ds.z, ds.x])
            return wls_fit(ds.y, X, tom_weights(ds.z, n1 / ds.n, n0 / ds.n)).leverages
        if method == "lin":
            xc = ds.x - ds.x.mean(axis=0)
            X = np.column_stack([np.ones(ds.n), ds.z, xc, ds.z[:, None] * xc])
            return wls_fit(ds.y, X).leverages
        raise ValueError(f"unknown method {method!r}; use one of {METHODS}")
    if design == "Stratified":
        layout = strata_layout(ds)
        X, _ = stratified_design(ds, layout)
        return wls_fit(ds.y, X, stratified_weights(ds.z, layout)).leverages
    if design == "Survey":
        X, _, _ = survey_design(ds)
        return wls_fit(ds.y, X, tom_weights(ds.z, ds.n1 / ds.n, ds.n0 / ds.n)).leverages
    if design == "Cluster":
        return hat_leverages(collapse_clusters(ds), "CRE", method)
    raise ValueError(f"unknown design {design!r}")


@dataclass
class DiagnosticsReport:
    """Calibration and leverage diagnostics of one dataset.

    The calibration fields and ``lev_lin`` are filled for completely
    randomized data only; ``lev_closed_form`` is absent for cluster designs.
    """

    design: str
    lev_tom: NDArray[np.float64]
    lev_hat_matrix: NDArray[np.float64]
    lev_closed_form: NDArray[np.float64] | None = None
    lev_lin: NDArray[np.float64] | None = None
    calib_tom: NDArray[np.float64] | None = None
    calib_lin: NDArray[np.float64] | None = None
    distance_tom: float | None = None
    distance_lin: float | None = None
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def diagnose(ds: Dataset, design: str = "CRE") -> DiagnosticsReport:
    """Compute every diagnostic available for ``design`` and record pass/fail checks.

    Checks (CRE): ``distance_tom <= distance_lin``, ``lev_tom <= lev_lin``
    componentwise, and closed-form leverages matching the hat matrix.
    """
    _require_covariates(ds)
    hat = hat_leverages(ds, design, "tom")
    report = DiagnosticsReport(design=design, lev_tom=hat, lev_hat_matrix=hat)
    if design in ("CRE", "Stratified", "Survey"):
        report.lev_closed_form = leverage_closed_form(ds, design, "tom")
        report.checks["closed_form_matches_hat_matrix"] = bool(
            np.allclose(report.lev_closed_form, hat, rtol=0, atol=1e-10)
        )
    if design == "CRE":
        report.lev_lin = hat_leverages(ds, "CRE", "lin")
        report.calib_tom = calibration_weights(ds, "tom")
        report.calib_lin = calibration_weights(ds, "lin")
        report.distance_tom = distance(report.calib_tom, ds.z)
        report.distance_lin = distance(report.calib_lin, ds.z)
        report.checks["distance_tom_le_lin"] = report.distance_tom <= report.distance_lin + INEQUALITY_SLACK
        report.checks["leverage_tom_le_lin"] = bool(np.all(hat <= report.lev_lin + INEQUALITY_SLACK))
    return report
