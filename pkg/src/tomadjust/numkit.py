"""Dense weighted least squares, hat-matrix leverages and HC sandwich variances.

Every estimator in the package reduces to a call of :func:`wls_fit` followed
by :func:`sandwich_variance`. The fit is computed from a thin SVD of the
row-scaled design ``diag(sqrt(w)) @ X`` so that the normal equations are never
formed explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .errors import DfExhausted, LeverageOne, RankDeficient

HCFlavor = Literal["HC0", "HC1", "HC2", "HC3"]
HC_FLAVORS: tuple[HCFlavor, ...] = ("HC0", "HC1", "HC2", "HC3")

LEVERAGE_ONE_TOL = 1e-10


@dataclass(frozen=True)
class WlsFit:
    """Result of a weighted least squares fit.

    Attributes
    ----------
    coefficients : ndarray (p,)
    residuals : ndarray (n,)
        ``y - X @ coefficients``.
    leverages : ndarray (n,)
        Diagonal of ``X (X'WX)^{-1} X'W``.
    weights : ndarray (n,)
    rank_ok : bool
    bread : ndarray (p, p)
        ``(X'WX)^{-1}``, reused by the sandwich.
    """

    coefficients: NDArray[np.float64]
    residuals: NDArray[np.float64]
    leverages: NDArray[np.float64]
    weights: NDArray[np.float64]
    rank_ok: bool
    bread: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.residuals.shape[0]


@dataclass(frozen=True)
class SandwichSpec:
    flavor: HCFlavor
    df_columns: int

    def __post_init__(self) -> None:
        if self.flavor not in HC_FLAVORS:
            raise ValueError(f"unknown HC flavor {self.flavor!r}")


def _as_design(X) -> NDArray[np.float64]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"design matrix must be 2-D and non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix contains non-finite entries")
    return X


def wls_fit(y, X, w=None) -> WlsFit:
    """Weighted least squares of ``y`` on ``X`` with positive weights ``w``.

    Minimises ``sum_i w_i (y_i - x_i' beta)^2``. Raises :class:`RankDeficient`
    when a singular value of ``diag(sqrt(w)) X`` falls below
    ``s_max * p * eps``.
    """
    X = _as_design(X)
    n, p = X.shape
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    w = np.ones(n) if w is None else np.asarray(w, dtype=np.float64).reshape(-1)
    if y.shape[0] != n or w.shape[0] != n:
        raise ValueError(f"length mismatch: y={y.shape[0]}, X rows={n}, w={w.shape[0]}")
    if not np.all(w > 0):
        raise ValueError("weights must be strictly positive")
    if n < p:
        raise RankDeficient(f"{n} rows cannot identify {p} coefficients")

    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    U, s, Vt = np.linalg.svd(Xw, full_matrices=False)
    tol = s[0] * p * np.finfo(np.float64).eps
    if s[-1] <= tol:
        rank = int(np.sum(s > tol))
        raise RankDeficient(f"weighted design has numerical rank {rank} < {p} columns")

    uty = U.T @ (sw * y)
    coef = Vt.T @ (uty / s)
    resid = y - X @ coef
    # diag of the weighted hat matrix equals the squared row norms of U
    lev = np.einsum("ij,ij->i", U, U)
    Vs = Vt.T / s
    bread = Vs @ Vs.T
    return WlsFit(coef, resid, lev, w, True, bread)


def hat_matrix(X, w=None) -> NDArray[np.float64]:
    """Full (non-symmetric) hat matrix ``X (X'WX)^{-1} X'W``; O(n^2) memory."""
    X = _as_design(X)
    w = np.ones(X.shape[0]) if w is None else np.asarray(w, dtype=np.float64)
    XtWX = X.T @ (X * w[:, None])
    return X @ np.linalg.solve(XtWX, X.T * w[None, :])


def residual_scale(fit: WlsFit, spec: SandwichSpec) -> NDArray[np.float64]:
    """The per-unit multiplier ``eta_i`` applied to residuals."""
    n = fit.n
    if spec.flavor == "HC0":
        return np.ones(n)
    if spec.flavor == "HC1":
        if n <= spec.df_columns:
            raise DfExhausted(f"HC1 needs n > {spec.df_columns}, got n={n}")
        return np.full(n, np.sqrt(n / (n - spec.df_columns)))
    one_minus_h = 1.0 - fit.leverages
    if np.any(one_minus_h <= LEVERAGE_ONE_TOL):
        i = int(np.argmin(one_minus_h))
        raise LeverageOne(f"{spec.flavor} undefined: unit {i} has leverage {float(fit.leverages[i]):.17g}")
    if spec.flavor == "HC2":
        return one_minus_h ** -0.5
    return 1.0 / one_minus_h


def sandwich_variance(fit: WlsFit, X, spec: SandwichSpec, d) -> float:
    """Heteroskedasticity-robust variance of ``d' beta_hat``.

    Computes ``d'B X'W Delta W X B d`` with ``B = (X'WX)^{-1}`` and
    ``Delta = diag((eta_i e_i)^2)``.
    """
    X = _as_design(X)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if d.shape[0] != X.shape[1]:
        raise ValueError(f"contrast has length {d.shape[0]}, design has {X.shape[1]} columns")
    eta = residual_scale(fit, spec)
    g = fit.weights * (X @ (fit.bread @ d))
    return float(np.sum((g * eta * fit.residuals) ** 2))


def sandwich_variances(fit: WlsFit, X, d, df_columns: int, flavors=HC_FLAVORS) -> dict[str, float]:
    """All requested HC flavors at once, sharing the contrast projection."""
    X = _as_design(X)
    g2 = (fit.weights * (X @ (fit.bread @ np.asarray(d, dtype=np.float64)))) ** 2 * fit.residuals**2
    out = {}
    for flavor in flavors:
        eta = residual_scale(fit, SandwichSpec(flavor, df_columns))
        out[flavor] = float(np.sum(g2 * eta**2))
    return out
