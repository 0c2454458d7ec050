"""Finite populations for the simulation studies.

Potential outcomes follow ``Y(z) = alpha_z + x' beta_z + e(z)`` with
``(alpha_z, beta_z)`` drawn from ``t_3`` and ``x ~ N(0, Sigma)``,
``Sigma = 0.6 I + 0.4 11'``. Stratified and cluster populations add
standard-normal random effects to the intercepts and slopes. Errors are
rescaled so that the realized population ratio
``var(f_z(x)) / var(e(z))`` equals the requested signal-to-noise ratio
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from ..errors import BadConfig
from ..estimators import Dataset
from ..randomize import AssignmentPlan, RngStream

StrataShape = Literal["MS", "FL", "MS+FL"]
STRATA_SHAPES: dict[str, list[tuple[int, int, int]]] = {
    # (count, smallest size, largest size)
    "MS": [(20, 10, 20)],
    "FL": [(2, 140, 160)],
    "MS+FL": [(10, 10, 20), (2, 140, 160)],
}


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell.

    ``n`` is the experiment size for CRE, the population size is ``N`` with
    sampling fraction ``f`` for Survey, ``strata_shape`` picks the stratum
    layout and ``m`` the number of clusters. ``shared_coefficients`` forces
    equal intercepts and slopes in both arms (zero effect).
    """

    design: Literal["CRE", "Stratified", "Survey", "Cluster"] = "CRE"
    n: int = 100
    p1: float = 0.3
    k: int = 1
    snr1: float = 1.0
    snr0: float = 1.0
    reps: int = 1000
    seed: int = 1
    N: int = 10000
    f: float = 0.01
    strata_shape: StrataShape = "MS"
    m: int = 50
    cluster_sizes: tuple[int, int] = (4, 10)
    shared_coefficients: bool = False

    def __post_init__(self):
        if self.design not in ("CRE", "Stratified", "Survey", "Cluster"):
            raise BadConfig(f"unknown design {self.design!r}")
        if self.k < 1:
            raise BadConfig(f"simulations need k >= 1 covariates, got {self.k}")
        if min(self.snr1, self.snr0) <= 0:
            raise BadConfig("signal-to-noise ratios must be positive")
        if self.reps < 1:
            raise BadConfig(f"reps must be positive, got {self.reps}")
        if self.design in ("CRE", "Survey", "Cluster") and not 0 < self.p1 < 1:
            raise BadConfig(f"p1 must lie in (0, 1), got {self.p1}")
        if self.design == "CRE" and self.n < 4:
            raise BadConfig(f"CRE populations need n >= 4, got {self.n}")
        if self.design == "Survey":
            if self.k < 2:
                raise BadConfig("survey populations take v from the first two covariates; need k >= 2")
            if not 0 < self.f <= 1:
                raise BadConfig(f"sampling fraction must lie in (0, 1], got {self.f}")
        if self.design == "Stratified" and self.strata_shape not in STRATA_SHAPES:
            raise BadConfig(f"unknown strata shape {self.strata_shape!r}; use one of {sorted(STRATA_SHAPES)}")

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def key(self) -> str:
        """Stable identifier used to derive random streams; independent of ``reps`` and ``seed``."""
        from .presets import preset_name

        return preset_name(self)


@dataclass(frozen=True)
class FinitePopulation:
    """A fixed population together with the plan that assigns it.

    For Survey the arrays cover all ``N`` units; for Cluster they are unit
    level and ``cluster`` maps units to clusters.
    """

    y1: NDArray[np.float64]
    y0: NDArray[np.float64]
    x: NDArray[np.float64]
    plan: AssignmentPlan
    strata: NDArray[np.int64] | None = None
    cluster: NDArray[np.int64] | None = None
    v: NDArray[np.float64] | None = None
    v_bar: NDArray[np.float64] | None = None
    f: float | None = None
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def tau(self) -> float:
        return float(np.mean(self.y1 - self.y0))

    def observe(self, assignment) -> Dataset:
        """Observed data under one draw from :func:`tomadjust.randomize.draw`."""
        design = self.plan.design
        if design == "Survey":
            R, Z = assignment
            idx = np.flatnonzero(R)
            y = np.where(Z == 1, self.y1[idx], self.y0[idx])
            return Dataset(y=y, z=Z, x=self.x[idx], v=self.v[idx], v_bar=self.v_bar, f=self.f)
        if design == "Cluster":
            z = np.asarray(assignment)[self.cluster]
            return Dataset(y=np.where(z == 1, self.y1, self.y0), z=z, x=self.x, cluster=self.cluster)
        z = np.asarray(assignment)
        return Dataset(y=np.where(z == 1, self.y1, self.y0), z=z, x=self.x, strata=self.strata)


def _gen(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


def student_t3(gen: np.random.Generator, size) -> NDArray[np.float64]:
    """``t_3`` draws as ``N(0,1) / sqrt(chi2_3 / 3)``, with the chi-square built from normals."""
    num = gen.standard_normal(size)
    chi = np.sum(gen.standard_normal((3, *np.atleast_1d(size))) ** 2, axis=0)
    return num / np.sqrt(chi / 3)


def equicorrelated_normal(gen: np.random.Generator, n: int, k: int, rho: float = 0.4) -> NDArray[np.float64]:
    """Rows i.i.d. ``N(0, (1 - rho) I + rho 11')``."""
    common = gen.standard_normal((n, 1))
    own = gen.standard_normal((n, k))
    return np.sqrt(rho) * common + np.sqrt(1 - rho) * own


def calibrated_errors(gen: np.random.Generator, signal, snr: float) -> NDArray[np.float64]:
    """Gaussian errors rescaled so that ``var(signal) / var(errors) == snr`` in-sample.

    The draws are centred before scaling, so the errors sum to zero and leave
    the population mean of the signal untouched.
    """
    e = gen.standard_normal(signal.shape[0])
    e = e - e.mean()
    e = e / e.std(ddof=1)
    return e * np.sqrt(np.var(signal, ddof=1) / snr)


def _outcomes(gen, signal1, signal0, cfg: ScenarioConfig):
    y1 = signal1 + calibrated_errors(gen, signal1, cfg.snr1)
    y0 = signal0 + calibrated_errors(gen, signal0, cfg.snr0)
    return y1, y0


def _signals(s1, s0) -> dict:
    """Noise-free outcomes, kept so the realized signal-to-noise ratios can be checked."""
    return {"signal1": s1, "signal0": s0}


def _coefficients(gen, k: int, shared: bool):
    """``(alpha_z, beta_z)`` for ``z = 1, 0`` as two length ``k + 1`` vectors."""
    c1 = student_t3(gen, k + 1)
    c0 = c1.copy() if shared else student_t3(gen, k + 1)
    return c1, c0


def _arm_count(n: int, p1: float) -> int:
    n1 = int(round(p1 * n))
    if not 1 <= n1 <= n - 1:
        raise BadConfig(f"p1={p1} leaves an empty arm with n={n}")
    return n1


def gen_cre_population(cfg: ScenarioConfig, rng) -> FinitePopulation:
    """Completely randomized population of ``cfg.n`` units with ``round(p1 n)`` treated."""
    if cfg.n < 4 or cfg.k < 1:
        raise BadConfig(f"need n >= 4 and k >= 1, got n={cfg.n}, k={cfg.k}")
    gen = _gen(rng)
    c1, c0 = _coefficients(gen, cfg.k, cfg.shared_coefficients)
    x = equicorrelated_normal(gen, cfg.n, cfg.k)
    s1, s0 = c1[0] + x @ c1[1:], c0[0] + x @ c0[1:]
    y1, y0 = _outcomes(gen, s1, s0, cfg)
    plan = AssignmentPlan.cre(cfg.n, _arm_count(cfg.n, cfg.p1))
    return FinitePopulation(y1, y0, x, plan, extras=_signals(s1, s0))


def _random_effect_signal(gen, x, groups, n_groups, c, shared_effects=None):
    """``alpha_g + x' beta_g`` with ``(alpha_g, beta_g) = c + N(0, I)`` per group."""
    eff = gen.standard_normal((n_groups, c.shape[0])) if shared_effects is None else shared_effects
    coef = c + eff
    return coef[groups, 0] + np.einsum("ij,ij->i", x, coef[groups, 1:]), eff


def gen_stratified_population(cfg: ScenarioConfig, rng) -> FinitePopulation:
    """Stratified population with sizes from ``cfg.strata_shape`` and Beta(4, 5) treated shares."""
    gen = _gen(rng)
    sizes = np.concatenate(
        [gen.integers(lo, hi, size=count, endpoint=True) for count, lo, hi in STRATA_SHAPES[cfg.strata_shape]]
    )
    H = sizes.shape[0]
    share = gen.beta(4, 5, size=H)
    treated = np.clip(np.floor(share * sizes).astype(np.int64), 2, sizes - 2)
    strata = np.repeat(np.arange(H), sizes)
    n = int(sizes.sum())
    c1, c0 = _coefficients(gen, cfg.k, cfg.shared_coefficients)
    x = equicorrelated_normal(gen, n, cfg.k)
    s1, eff1 = _random_effect_signal(gen, x, strata, H, c1)
    s0, _ = _random_effect_signal(gen, x, strata, H, c0, eff1 if cfg.shared_coefficients else None)
    y1, y0 = _outcomes(gen, s1, s0, cfg)
    plan = AssignmentPlan.stratified(sizes, treated, strata)
    return FinitePopulation(y1, y0, x, plan, strata=strata, extras=_signals(s1, s0))


def gen_survey_population(cfg: ScenarioConfig, rng) -> FinitePopulation:
    """``N`` units; ``n = round(N f)`` are sampled and ``round(p1 n)`` of them treated.

    The sampling-stage covariates are the first two columns of ``x``.
    """
    gen = _gen(rng)
    n = int(round(cfg.N * cfg.f))
    c1, c0 = _coefficients(gen, cfg.k, cfg.shared_coefficients)
    x = equicorrelated_normal(gen, cfg.N, cfg.k)
    s1, s0 = c1[0] + x @ c1[1:], c0[0] + x @ c0[1:]
    y1, y0 = _outcomes(gen, s1, s0, cfg)
    v = x[:, :2]
    plan = AssignmentPlan.survey(cfg.N, n, _arm_count(n, cfg.p1))
    return FinitePopulation(y1, y0, x, plan, v=v, v_bar=v.mean(axis=0), f=n / cfg.N, extras=_signals(s1, s0))


def gen_cluster_population(cfg: ScenarioConfig, rng) -> FinitePopulation:
    """``m`` clusters with uniform sizes in ``cfg.cluster_sizes`` and cluster random effects."""
    gen = _gen(rng)
    lo, hi = cfg.cluster_sizes
    sizes = gen.integers(lo, hi, size=cfg.m, endpoint=True)
    cluster = np.repeat(np.arange(cfg.m), sizes)
    n = int(sizes.sum())
    c1, c0 = _coefficients(gen, cfg.k, cfg.shared_coefficients)
    x = equicorrelated_normal(gen, n, cfg.k)
    s1, eff1 = _random_effect_signal(gen, x, cluster, cfg.m, c1)
    s0, _ = _random_effect_signal(gen, x, cluster, cfg.m, c0, eff1 if cfg.shared_coefficients else None)
    y1, y0 = _outcomes(gen, s1, s0, cfg)
    plan = AssignmentPlan.cluster(cfg.m, _arm_count(cfg.m, cfg.p1))
    return FinitePopulation(y1, y0, x, plan, cluster=cluster, extras=_signals(s1, s0))


GENERATORS = {
    "CRE": gen_cre_population,
    "Stratified": gen_stratified_population,
    "Survey": gen_survey_population,
    "Cluster": gen_cluster_population,
}


def generate_population(cfg: ScenarioConfig, rng) -> FinitePopulation:
    return GENERATORS[cfg.design](cfg, rng)


def gen_small_strata_population(rng, H: int = 40, k: int = 1, effect: float = 1.0) -> FinitePopulation:
    """Strata of five units with three treated and a constant treatment effect.

    With ``n_h1 = 3``, ``n_h0 = 2`` and no effect heterogeneity the HC0 and
    HC1 variances of the stratified weighted fit shrink toward
    ``2/3`` and ``1/2`` of the arm-wise residual variances, so their
    intervals under-cover while HC2 and HC3 stay conservative.
    """
    gen = _gen(rng)
    sizes = np.full(H, 5)
    strata = np.repeat(np.arange(H), sizes)
    x = equicorrelated_normal(gen, 5 * H, k)
    c = student_t3(gen, k + 1)
    signal, _ = _random_effect_signal(gen, x, strata, H, c)
    y0 = signal + calibrated_errors(gen, signal, 1.0)
    y1 = y0 + effect
    plan = AssignmentPlan.stratified(sizes, np.full(H, 3), strata)
    return FinitePopulation(y1, y0, x, plan, strata=strata)
