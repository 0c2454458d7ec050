"""CSV ingestion, analysis configuration and JSON report documents.

Floats are written with 17 significant digits, which is enough for every
IEEE double to survive a write/read cycle unchanged.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import BadConfig, MissingColumn, MissingPopulationMean, MissingValue, NonBinaryTreatment, ParseError
from .estimators import Dataset, EstimateReport

SCHEMA_VERSION = "1"
DESIGNS = ("CRE", "Stratified", "Survey", "Cluster")


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class AnalysisConfig:
    """How to read a data file and what to compute from it.

    Covariates are either listed explicitly or selected by column-name
    prefix. ``v_bar`` may be given inline or read from ``v_bar_file``, a CSV
    with the ``v`` column names as header and one row of population means.
    """

    design: str = "CRE"
    estimators: list[str] = field(default_factory=lambda: ["tom"])
    flavors: list[str] = field(default_factory=list)
    alpha: float = 0.05
    outcome: str = "y"
    treatment: str = "z"
    covariates: list[str] | None = None
    covariate_prefix: str | None = "x"
    strata: str | None = None
    cluster: str | None = None
    cluster_covariates: list[str] = field(default_factory=list)
    v_columns: list[str] | None = None
    v_prefix: str | None = None
    v_bar: list[float] | None = None
    v_bar_file: str | None = None
    f: float | None = None

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise BadConfig(f"unknown design {self.design!r}; use one of {DESIGNS}")
        if not 0 < self.alpha < 1:
            raise BadConfig(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.outcome == self.treatment:
            raise BadConfig("outcome and treatment must be different columns")

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise BadConfig(f"unknown configuration key(s) {unknown}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "AnalysisConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise BadConfig(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def resolve_columns(self, header: list[str]) -> dict:
        """Map each role to its column name(s), checking that they exist."""

        def need(col, role):
            if col not in header:
                raise MissingColumn(f"{role} column not found", column=col)
            return col

        roles: dict = {"outcome": need(self.outcome, "outcome"), "treatment": need(self.treatment, "treatment")}
        taken = {self.outcome, self.treatment, self.strata, self.cluster}

        def pick(explicit, prefix, role):
            if explicit is not None:
                return [need(c, role) for c in explicit]
            if prefix:
                return [c for c in header if c.startswith(prefix) and c not in taken]
            return []

        roles["covariates"] = pick(self.covariates, self.covariate_prefix, "covariate")
        roles["v"] = pick(self.v_columns, self.v_prefix, "sampling covariate")
        roles["cluster_covariates"] = [need(c, "cluster covariate") for c in self.cluster_covariates]
        roles["strata"] = need(self.strata, "strata") if self.strata else None
        roles["cluster"] = need(self.cluster, "cluster") if self.cluster else None
        if self.design == "Stratified" and roles["strata"] is None:
            raise BadConfig("stratified analysis needs a strata column")
        if self.design == "Cluster" and roles["cluster"] is None:
            raise BadConfig("cluster analysis needs a cluster column")
        return roles

    def population_mean(self, v_columns: list[str], base: Path | None = None):
        if not v_columns:
            return None
        if self.v_bar is not None:
            vals = [float(v) for v in self.v_bar]
        elif self.v_bar_file is not None:
            path = Path(self.v_bar_file)
            if base is not None and not path.is_absolute():
                path = base / path
            with open(path, encoding="utf-8", newline="") as fh:
                rows = list(csv.DictReader(fh))
            if len(rows) != 1:
                raise ParseError(f"{path}: expected exactly one row of population means")
            try:
                vals = [float(rows[0][c]) for c in v_columns]
            except KeyError as exc:
                raise MissingColumn(f"{path}: population mean missing", column=exc.args[0]) from exc
        else:
            return None
        if len(vals) != len(v_columns):
            raise BadConfig(f"v_bar has {len(vals)} entries for {len(v_columns)} sampling covariates")
        return vals


def _number(raw: str, row: int, col: str) -> float:
    if raw is None or raw.strip() == "":
        raise MissingValue("empty cell", row=row, column=col)
    try:
        v = float(raw)
    except ValueError:
        raise ParseError(f"not a number: {raw!r}", row=row, column=col) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {raw!r}", row=row, column=col)
    return v


def _label(raw: str, row: int, col: str) -> str:
    if raw is None or raw.strip() == "":
        raise MissingValue("empty cell", row=row, column=col)
    return raw


def load_csv(path, cfg: AnalysisConfig | None = None) -> Dataset:
    """Read a UTF-8 CSV with a header row into a :class:`Dataset`.

    Rows are numbered from 1 for the first data row. Stratum and cluster
    labels are kept as strings.
    """
    cfg = cfg or AnalysisConfig()
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        roles = cfg.resolve_columns(header)
        pos = {h: i for i, h in enumerate(header)}
        y, z, x, v, c, strata, cluster = [], [], [], [], [], [], []
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(rec)}", row=r)
            get = lambda col: rec[pos[col]]  # noqa: E731
            y.append(_number(get(roles["outcome"]), r, roles["outcome"]))
            tz = get(roles["treatment"]).strip()
            t = _number(tz, r, roles["treatment"])
            if t not in (0.0, 1.0):
                raise NonBinaryTreatment(f"treatment must be 0 or 1, got {tz!r}", row=r, column=roles["treatment"])
            z.append(int(t))
            x.append([_number(get(col), r, col) for col in roles["covariates"]])
            v.append([_number(get(col), r, col) for col in roles["v"]])
            c.append([_number(get(col), r, col) for col in roles["cluster_covariates"]])
            if roles["strata"]:
                strata.append(_label(get(roles["strata"]), r, roles["strata"]))
            if roles["cluster"]:
                cluster.append(_label(get(roles["cluster"]), r, roles["cluster"]))
    if not y:
        raise ParseError(f"{path}: no data rows")
    n = len(y)
    v_bar = cfg.population_mean(roles["v"], path.parent)
    if roles["v"] and v_bar is None:
        raise MissingPopulationMean("sampling covariates given without v_bar or v_bar_file")
    return Dataset(
        y=np.array(y),
        z=np.array(z),
        x=np.array(x).reshape(n, len(roles["covariates"])),
        strata=np.array(strata) if roles["strata"] else None,
        cluster=np.array(cluster) if roles["cluster"] else None,
        v=np.array(v).reshape(n, len(roles["v"])) if roles["v"] else None,
        v_bar=v_bar,
        f=cfg.f,
        c=np.array(c).reshape(n, len(roles["cluster_covariates"])) if roles["cluster_covariates"] else None,
    )


def write_dataset(ds: Dataset, path) -> AnalysisConfig:
    """Write ``ds`` as CSV and return the config that reads it back.

    Column names are ``y``, ``z``, ``x1..xk``, ``v1..``, ``c1..``, ``strata``
    and ``cluster``. Population means and the sampling fraction go into the
    returned config rather than the file.
    """
    cols = ["y", "z"] + [f"x{j + 1}" for j in range(ds.k)]
    kv = 0 if ds.v is None else ds.v.shape[1]
    kc = 0 if ds.c is None else ds.c.shape[1]
    cols += [f"v{j + 1}" for j in range(kv)] + [f"c{j + 1}" for j in range(kc)]
    if ds.strata is not None:
        cols.append("strata")
    if ds.cluster is not None:
        cols.append("cluster")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(ds.n):
            row = [fmt_float(ds.y[i]), str(int(ds.z[i]))]
            row += [fmt_float(a) for a in ds.x[i]]
            if kv:
                row += [fmt_float(a) for a in ds.v[i]]
            if kc:
                row += [fmt_float(a) for a in ds.c[i]]
            if ds.strata is not None:
                row.append(str(ds.strata[i]))
            if ds.cluster is not None:
                row.append(str(ds.cluster[i]))
            w.writerow(row)
    design = "Survey" if kv else "Stratified" if ds.strata is not None else "Cluster" if ds.cluster is not None else "CRE"
    return AnalysisConfig(
        design=design,
        covariates=[f"x{j + 1}" for j in range(ds.k)],
        covariate_prefix=None,
        v_columns=[f"v{j + 1}" for j in range(kv)] or None,
        v_bar=None if ds.v_bar is None else [float(a) for a in ds.v_bar],
        cluster_covariates=[f"c{j + 1}" for j in range(kc)],
        strata="strata" if ds.strata is not None else None,
        cluster="cluster" if ds.cluster is not None else None,
        f=ds.f,
    )


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def estimate_to_dict(report: EstimateReport) -> dict:
    return _plain(
        {
            "estimator": report.estimator,
            "point": report.point,
            "variances": report.variances,
            "se": {fl: math.sqrt(v) if math.isfinite(v) else float("nan") for fl, v in report.variances.items()},
            "ci": report.ci,
            "alpha": report.alpha,
            "df_columns": report.df_columns,
            "notes": report.notes,
            "extras": report.extras,
        }
    )


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float at 17 significant digits; NaN and infinities become ``null``."""

    def enc(o, level):
        pad = "\n" + " " * (indent * (level + 1))
        end = "\n" + " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [json.dumps(str(k)) + ": " + enc(v, level + 1) for k, v in o.items()]
            return "{" + pad + ("," + pad).join(items) + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            return "[" + pad + ("," + pad).join(enc(v, level + 1) for v in o) + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return fmt_float(o) if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o, ensure_ascii=False)
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return enc(_plain(obj), 0) + "\n"


@dataclass
class ReportDocument:
    """Machine-readable result of one CLI invocation."""

    kind: str
    inputs: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)
    diagnostics: dict | None = None
    simulation: dict | None = None
    warnings: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version, "kind": self.kind}
        for key in ("inputs", "config", "estimates", "diagnostics", "simulation", "warnings", "errors"):
            val = getattr(self, key)
            if val is not None:
                out[key] = _plain(val)
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ReportDocument":
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ReportDocument":
        return cls.from_dict(json.loads(text))
