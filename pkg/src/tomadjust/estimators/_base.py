from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.stats import norm

from ..errors import DfExhausted, EmptyArm, LeverageOne, MissingPopulationMean, RankDeficient
from ..numkit import HC_FLAVORS, WlsFit, sandwich_variances, wls_fit


def _frozen(a, dtype=np.float64, ndim=1):
    a = np.array(a, dtype=dtype)
    if ndim == 2 and a.ndim == 1:
        a = a[:, None]
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Observed data of one realized experiment.

    Parameters
    ----------
    y : (n,) observed outcomes
    z : (n,) 0/1 treatment indicators
    x : (n, k) analysis covariates; ``k`` may be zero
    strata : (n,) optional stratum labels
    cluster : (n,) optional cluster labels
    v : (n, k1) optional sampling-stage covariates
    v_bar : (k1,) population mean of ``v``; required with ``v``
    f : sampling fraction in (0, 1]
    c : (n, kc) optional cluster-level covariates, constant within cluster
    """

    y: NDArray[np.float64]
    z: NDArray[np.int64]
    x: NDArray[np.float64] | None = None
    strata: NDArray | None = None
    cluster: NDArray | None = None
    v: NDArray[np.float64] | None = None
    v_bar: NDArray[np.float64] | None = None
    f: float | None = None
    c: NDArray[np.float64] | None = None

    def __post_init__(self):
        y = _frozen(self.y)
        n = y.shape[0]
        z = np.asarray(self.z)
        if z.shape != (n,):
            raise ValueError(f"z has shape {z.shape}, expected ({n},)")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("z must be binary")
        z = _frozen(z, np.int64)
        x = np.empty((n, 0)) if self.x is None else self.x
        x = _frozen(x, ndim=2)
        if x.shape[0] != n:
            raise ValueError(f"x has {x.shape[0]} rows, expected {n}")
        for name, arr in (("y", y), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        for name in ("strata", "cluster"):
            lab = getattr(self, name)
            if lab is not None:
                lab = np.array(lab)
                if lab.shape != (n,):
                    raise ValueError(f"{name} has shape {lab.shape}, expected ({n},)")
                lab.setflags(write=False)
                object.__setattr__(self, name, lab)
        if self.v is not None:
            v = _frozen(self.v, ndim=2)
            if v.shape[0] != n:
                raise ValueError(f"v has {v.shape[0]} rows, expected {n}")
            if self.v_bar is None:
                raise MissingPopulationMean("v supplied without its population mean v_bar")
            v_bar = _frozen(np.atleast_1d(self.v_bar))
            if v_bar.shape != (v.shape[1],):
                raise ValueError(f"v_bar has length {v_bar.shape[0]}, v has {v.shape[1]} columns")
            object.__setattr__(self, "v", v)
            object.__setattr__(self, "v_bar", v_bar)
        elif self.v_bar is not None:
            object.__setattr__(self, "v_bar", _frozen(np.atleast_1d(self.v_bar)))
        if self.c is not None:
            c = _frozen(self.c, ndim=2)
            if c.shape[0] != n:
                raise ValueError(f"c has {c.shape[0]} rows, expected {n}")
            object.__setattr__(self, "c", c)
        if self.f is not None and not 0 < self.f <= 1:
            raise ValueError(f"sampling fraction must lie in (0, 1], got {self.f}")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def replace(self, **changes) -> "Dataset":
        kw = {name: getattr(self, name) for name in self.__dataclass_fields__}
        kw.update(changes)
        return Dataset(**kw)


@dataclass
class EstimateReport:
    estimator: str
    point: float
    variances: dict[str, float]
    ci: dict[str, tuple[float, float]]
    alpha: float
    df_columns: int
    notes: str = ""
    extras: dict = field(default_factory=dict)

    def se(self, flavor: str) -> float:
        return float(np.sqrt(self.variances[flavor]))


def wald_ci(point: float, variance: float, alpha: float = 0.05) -> tuple[float, float]:
    """Normal-quantile interval ``point + sqrt(variance) * (q_{a/2}, q_{1-a/2})``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if variance < 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    half = np.sqrt(variance) * norm.ppf(1 - alpha / 2)
    return (float(point - half), float(point + half))


def make_report(estimator, point, variances, alpha, df_columns, notes="", extras=None) -> EstimateReport:
    ci = {fl: wald_ci(point, v, alpha) if np.isfinite(v) else (np.nan, np.nan) for fl, v in variances.items()}
    return EstimateReport(estimator, float(point), dict(variances), ci, alpha, int(df_columns), notes, extras or {})


def arm_sizes(z, minimum: int = 1, where: str = "") -> tuple[int, int]:
    n1 = int(np.sum(z))
    n0 = int(z.shape[0] - n1)
    if min(n1, n0) < minimum:
        raise EmptyArm(f"each arm{where} needs at least {minimum} unit(s); got n1={n1}, n0={n0}")
    return n1, n0


def check_covariates(x: NDArray[np.float64], what: str = "covariate") -> None:
    """Reject zero-variance columns instead of silently dropping them."""
    if x.shape[1] == 0:
        return
    spread = np.ptp(x, axis=0)
    bad = np.flatnonzero(spread == 0)
    if bad.size:
        raise RankDeficient(f"{what} column(s) {bad.tolist()} have zero variance")


def tom_weights(z, p1: float, p0: float) -> NDArray[np.float64]:
    return np.where(z == 1, 1.0 / p1**2, 1.0 / p0**2)


def regression_report(
    name, y, X, w, d, df_columns, alpha, flavors=HC_FLAVORS, notes="", extra_variances=None
) -> tuple[EstimateReport, WlsFit]:
    """Fit, then report ``d' beta`` with every HC flavor that is defined."""
    fit = wls_fit(y, X, w)
    point = float(d @ fit.coefficients)
    variances = {}
    skipped = []
    for fl in flavors:
        try:
            variances.update(sandwich_variances(fit, X, d, df_columns, (fl,)))
        except (LeverageOne, DfExhausted) as exc:
            skipped.append(f"{fl}: {exc}")
    if extra_variances:
        variances.update(extra_variances(fit))
    if skipped:
        notes = "; ".join(filter(None, [notes, *skipped]))
    return make_report(name, point, variances, alpha, df_columns, notes), fit


def sample_cov(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    """Sample covariance ``(m-1)^{-1} sum (a_i - abar)(b_i - bbar)'`` for 2-D inputs."""
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    return a.T @ b / (a.shape[0] - 1)
