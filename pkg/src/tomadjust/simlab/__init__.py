"""Finite-population generators, scenario presets and the Monte Carlo harness."""

from .dgp import (
    FinitePopulation,
    ScenarioConfig,
    gen_cluster_population,
    gen_cre_population,
    gen_small_strata_population,
    gen_stratified_population,
    gen_survey_population,
    generate_population,
)
from .harness import (
    EstimatorSummary,
    SimSummary,
    long_csv,
    percentage_rmse_reduction,
    run_scenario,
    run_sweep,
    write_long_csv,
)
from .presets import grid_presets, parse_preset, preset_name

__all__ = [
    "EstimatorSummary",
    "FinitePopulation",
    "ScenarioConfig",
    "SimSummary",
    "gen_cluster_population",
    "gen_cre_population",
    "gen_small_strata_population",
    "gen_stratified_population",
    "gen_survey_population",
    "generate_population",
    "long_csv",
    "parse_preset",
    "percentage_rmse_reduction",
    "preset_name",
    "run_scenario",
    "run_sweep",
    "grid_presets",
    "write_long_csv",
]
