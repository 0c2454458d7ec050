"""Monte Carlo harness: one fixed population per seed, fresh assignments per replication.

Each replication ``r`` draws from its own stream
``RngStream(seed).child(scenario, "rep", r)``, so results do not depend on the
number of worker threads or on the order in which replications finish.
Per-replication errors are counted per estimator, never dropped.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ..errors import BadConfig, TomAdjustError, ZeroRmse
from ..estimators import DESIGN_ESTIMATORS
from ..randomize import RngStream, draw, enumerate_assignments
from .dgp import FinitePopulation, ScenarioConfig, generate_population

DEFAULT_ESTIMATORS = {
    "CRE": ("tom", "lin"),
    "Stratified": ("tom", "plugin"),
    "Survey": ("tom", "plugin"),
    "Cluster": ("tom", "lin"),
}


def canonical_flavor(name: str) -> str:
    """``hc2`` -> ``HC2``; other flavor names are lower case."""
    return name.upper() if name.lower().startswith("hc") else name.lower()


def worker_count(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get("TOMADJUST_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError as exc:
            raise BadConfig(f"TOMADJUST_THREADS must be an integer, got {raw!r}") from exc
    return max(1, int(threads))


@dataclass
class EstimatorSummary:
    """Per-replication results of one estimator and their aggregates.

    Failed replications hold NaN in ``points`` and are tallied in ``errors``
    by exception class name.
    """

    estimator: str
    tau: float
    points: NDArray[np.float64]
    variances: dict[str, NDArray[np.float64]]
    alpha: float
    errors: dict[str, int] = field(default_factory=dict)
    intervals: dict[str, NDArray[np.float64]] = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> NDArray[np.bool_]:
        return np.isfinite(self.points)

    @property
    def reps_completed(self) -> int:
        return int(self.ok.sum())

    @property
    def bias(self) -> float:
        return float(np.mean(self.points[self.ok]) - self.tau)

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean((self.points[self.ok] - self.tau) ** 2)))

    @property
    def true_variance(self) -> float:
        """Variance of the point estimates across replications."""
        return float(np.var(self.points[self.ok]))

    def _valid(self, flavor):
        return self.ok & np.isfinite(self.variances[flavor])

    def coverage(self, flavor: str) -> float:
        lo, hi = self.intervals[flavor].T
        sel = self._valid(flavor)
        return float(np.mean((lo[sel] <= self.tau) & (self.tau <= hi[sel])))

    def mean_ci_length(self, flavor: str) -> float:
        lo, hi = self.intervals[flavor].T
        sel = self._valid(flavor)
        return float(np.mean(hi[sel] - lo[sel]))

    def mean_variance(self, flavor: str) -> float:
        return float(np.mean(self.variances[flavor][self._valid(flavor)]))

    @property
    def flavors(self) -> list[str]:
        return list(self.variances)


@dataclass
class SimSummary:
    scenario: str
    design: str
    seed: int
    mode: str
    reps: int
    tau: float
    estimators: dict[str, EstimatorSummary]

    def __getitem__(self, name: str) -> EstimatorSummary:
        return self.estimators[name]

    def metrics(self):
        """Long-format rows ``(estimator, metric, flavor, value)``."""
        rows = []
        for name, es in self.estimators.items():
            rows.append((name, "tau", "", self.tau))
            rows.append((name, "reps_completed", "", es.reps_completed))
            rows.append((name, "errors", "", sum(es.errors.values())))
            if es.reps_completed:
                rows += [
                    (name, "rmse", "", es.rmse),
                    (name, "bias", "", es.bias),
                    (name, "true_variance", "", es.true_variance),
                ]
                for fl in es.flavors:
                    if np.any(es._valid(fl)):
                        rows += [
                            (name, "coverage", fl, es.coverage(fl)),
                            (name, "ci_length", fl, es.mean_ci_length(fl)),
                            (name, "mean_variance", fl, es.mean_variance(fl)),
                        ]
        return rows


def percentage_rmse_reduction(summary_lin, summary_tom) -> float:
    """``RMSE(lin) / RMSE(tom) - 1``; positive when the weighted fit is more accurate.

    Accepts :class:`EstimatorSummary` objects or plain RMSE values.
    """
    r_lin = summary_lin.rmse if isinstance(summary_lin, EstimatorSummary) else float(summary_lin)
    r_tom = summary_tom.rmse if isinstance(summary_tom, EstimatorSummary) else float(summary_tom)
    if r_tom == 0:
        raise ZeroRmse("reference RMSE is zero; the ratio is undefined")
    return r_lin / r_tom - 1.0


def _resolve(design: str, names) -> dict:
    table = DESIGN_ESTIMATORS[design]
    unknown = [n for n in names if n not in table]
    if unknown:
        raise BadConfig(f"estimator(s) {unknown} not available for {design}; choose from {sorted(table)}")
    return {n: table[n] for n in names}


def run_scenario(
    cfg: ScenarioConfig,
    estimators=None,
    flavors=None,
    *,
    mode: str = "random",
    alpha: float = 0.05,
    population: FinitePopulation | None = None,
    threads: int | None = None,
    scenario: str | None = None,
) -> SimSummary:
    """Simulate ``cfg.reps`` experiments on one population and summarise each estimator.

    Parameters
    ----------
    cfg : ScenarioConfig
    estimators : sequence of str, optional
        Names from ``DESIGN_ESTIMATORS[cfg.design]``; defaults per design.
    flavors : sequence of str, optional
        Variance flavors to keep; all reported flavors by default.
    mode : {"random", "enumerate"}
        ``"enumerate"`` visits every assignment once instead of sampling and
        ignores ``cfg.reps``.
    population : FinitePopulation, optional
        Use this population instead of generating one from ``cfg``.
    threads : int, optional
        Worker threads; defaults to ``TOMADJUST_THREADS`` or 1.
    """
    names = tuple(estimators or DEFAULT_ESTIMATORS[cfg.design])
    fns = _resolve(cfg.design, names)
    keep = None if flavors is None else {canonical_flavor(f) for f in flavors}
    scenario = scenario or cfg.key()
    root = RngStream(cfg.seed)
    if population is None:
        population = generate_population(cfg, root.child(scenario, "population"))
    if population.plan.design != cfg.design:
        raise BadConfig(f"population is {population.plan.design}, scenario is {cfg.design}")

    if mode == "enumerate":
        assignments = list(enumerate_assignments(population.plan))
        reps = len(assignments)

        def assignment(r):
            return assignments[r]

    elif mode == "random":
        reps = cfg.reps

        def assignment(r):
            return draw(population.plan, root.child(scenario, "rep", r))

    else:
        raise BadConfig(f"unknown mode {mode!r}; use 'random' or 'enumerate'")

    def one(r):
        ds = population.observe(assignment(r))
        out = {}
        for name, fn in fns.items():
            try:
                out[name] = fn(ds, alpha)
            except TomAdjustError as exc:
                out[name] = exc
        return out

    workers = worker_count(threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(r) for r in range(reps)]

    tau = population.tau
    summaries = {}
    for name in names:
        points = np.full(reps, np.nan)
        variances: dict[str, NDArray] = {}
        intervals: dict[str, NDArray] = {}
        errors: dict[str, int] = {}
        for r, res in enumerate(results):
            rep = res[name]
            if isinstance(rep, TomAdjustError):
                key = type(rep).__name__
                errors[key] = errors.get(key, 0) + 1
                continue
            points[r] = rep.point
            for fl, v in rep.variances.items():
                if keep is not None and fl not in keep:
                    continue
                if fl not in variances:
                    variances[fl] = np.full(reps, np.nan)
                    intervals[fl] = np.full((reps, 2), np.nan)
                variances[fl][r] = v
                intervals[fl][r] = rep.ci[fl]
        summaries[name] = EstimatorSummary(name, tau, points, variances, alpha, errors, intervals)
    return SimSummary(scenario, cfg.design, cfg.seed, mode, reps, tau, summaries)


def run_sweep(cfg: ScenarioConfig, seeds, estimators=None, flavors=None, **kwargs) -> list[SimSummary]:
    """:func:`run_scenario` once per seed, each with its own population."""
    return [run_scenario(cfg.with_(seed=int(s)), estimators, flavors, **kwargs) for s in seeds]


CSV_HEADER = ("scenario", "design", "seed", "mode", "estimator", "metric", "flavor", "value")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def long_csv(summaries) -> str:
    """Long-format table of every metric of every summary, floats at 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in summaries:
        for est, metric, flavor, value in s.metrics():
            writer.writerow((s.scenario, s.design, s.seed, s.mode, est, metric, flavor, _fmt(value)))
    return buf.getvalue()


def write_long_csv(summaries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(long_csv(summaries))
