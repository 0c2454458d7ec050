"""Named scenario presets, one per cell of the simulation grids.

Names are colon-separated tokens, for example ``cre:p0.3:k29:snr1=0.25:snr0=2``
or ``str:MS:k5:snr1=1:snr0=1``. The first token is the design (``cre``,
``str``, ``crs`` or ``cluster``); optional trailing tokens ``n<int>``,
``N<int>``, ``f<float>``, ``m<int>``, ``reps<int>`` and ``seed<int>``
override defaults.
"""

from __future__ import annotations

import itertools
import re

from ..errors import BadConfig
from .dgp import STRATA_SHAPES, ScenarioConfig

P1_GRID = (0.3, 0.4, 0.5)
K_GRID = (1, 5, 9, 13, 17, 21, 25, 29)
SNR_GRID = (0.25, 0.5, 1.0, 2.0)
SURVEY_K_GRID = (2, 5, 8, 11, 14, 17)
CLUSTER_K_GRID = (1, 3, 5, 7, 9)
FULL_SEEDS = tuple(range(1, 101))
DESK_SEEDS = tuple(range(1, 11))

_PREFIX = {"CRE": "cre", "Stratified": "str", "Survey": "crs", "Cluster": "cluster"}
_ALIASES = {
    "cre": "CRE",
    "str": "Stratified",
    "stratified": "Stratified",
    "crs": "Survey",
    "survey": "Survey",
    "cluster": "Cluster",
}


def _num(v: float) -> str:
    return format(v, "g")


def preset_name(cfg: ScenarioConfig) -> str:
    """Canonical name of ``cfg``; ``parse_preset(preset_name(cfg))`` restores the cell.

    ``reps`` and ``seed`` are left out, so every seed of a cell shares a name.
    """
    defaults = ScenarioConfig()
    parts = [_PREFIX[cfg.design]]
    if cfg.design == "Stratified":
        parts.append(cfg.strata_shape)
    elif cfg.design == "CRE" or cfg.p1 != defaults.p1:
        parts.append(f"p{_num(cfg.p1)}")
    parts += [f"k{cfg.k}", f"snr1={_num(cfg.snr1)}", f"snr0={_num(cfg.snr0)}"]
    if cfg.design == "CRE" and cfg.n != defaults.n:
        parts.append(f"n{cfg.n}")
    if cfg.design == "Survey":
        if cfg.N != defaults.N:
            parts.append(f"N{cfg.N}")
        if cfg.f != defaults.f:
            parts.append(f"f{_num(cfg.f)}")
    if cfg.design == "Cluster" and cfg.m != defaults.m:
        parts.append(f"m{cfg.m}")
    if cfg.shared_coefficients:
        parts.append("null")
    return ":".join(parts)


_TOKEN = re.compile(r"^(snr1=|snr0=|reps|seed|p|k|n|N|f|m)(.+)$")
_INT_FIELDS = {"k": "k", "n": "n", "N": "N", "m": "m", "reps": "reps", "seed": "seed"}
_FLOAT_FIELDS = {"p": "p1", "f": "f", "snr1=": "snr1", "snr0=": "snr0"}


def parse_preset(name: str, **overrides) -> ScenarioConfig:
    """Build the :class:`ScenarioConfig` named by ``name``.

    Raises
    ------
    BadConfig
        On an unknown design, token or a value that does not parse.
    """
    tokens = [t for t in name.strip().split(":") if t]
    if not tokens or tokens[0].lower() not in _ALIASES:
        raise BadConfig(f"preset {name!r} must start with one of {sorted(set(_ALIASES))}")
    design = _ALIASES[tokens[0].lower()]
    kw: dict = {"design": design}
    for tok in tokens[1:]:
        if design == "Stratified" and tok in STRATA_SHAPES:
            kw["strata_shape"] = tok
            continue
        if tok == "null":
            kw["shared_coefficients"] = True
            continue
        m = _TOKEN.match(tok)
        if not m:
            raise BadConfig(f"unrecognised token {tok!r} in preset {name!r}")
        key, raw = m.groups()
        try:
            if key in _INT_FIELDS:
                kw[_INT_FIELDS[key]] = int(raw)
            else:
                kw[_FLOAT_FIELDS[key]] = float(raw)
        except ValueError as exc:
            raise BadConfig(f"bad value in token {tok!r} of preset {name!r}") from exc
    kw.update(overrides)
    try:
        return ScenarioConfig(**kw)
    except TypeError as exc:
        raise BadConfig(str(exc)) from exc


def grid_presets(design: str | None = None) -> list[str]:
    """Names of every grid cell, optionally for a single design."""
    out = []
    snrs = list(itertools.product(SNR_GRID, SNR_GRID))
    if design in (None, "CRE"):
        for p1, k, (s1, s0) in itertools.product(P1_GRID, K_GRID, snrs):
            out.append(preset_name(ScenarioConfig("CRE", p1=p1, k=k, snr1=s1, snr0=s0)))
    if design in (None, "Stratified"):
        for shape, k, (s1, s0) in itertools.product(STRATA_SHAPES, K_GRID, snrs):
            out.append(preset_name(ScenarioConfig("Stratified", strata_shape=shape, k=k, snr1=s1, snr0=s0)))
    if design in (None, "Survey"):
        for k, (s1, s0) in itertools.product(SURVEY_K_GRID, snrs):
            out.append(preset_name(ScenarioConfig("Survey", k=k, snr1=s1, snr0=s0)))
    if design in (None, "Cluster"):
        for k, (s1, s0) in itertools.product(CLUSTER_K_GRID, snrs):
            out.append(preset_name(ScenarioConfig("Cluster", k=k, snr1=s1, snr0=s0)))
    return out
