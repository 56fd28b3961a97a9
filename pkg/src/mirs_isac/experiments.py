"""Scheme runner, parameter sweeps, CSV results and JSONL traces."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import SepConfig, separate_design
from .config import ScenarioConfig, generate_scenario
from .initialization import InitConfig, InitializationError, init_point
from .metrics import constraint_values, to_dbm, transmit_power
from .penalty import FEASIBILITY_TOL, OuterConfig, solve

log = logging.getLogger(__name__)

SCHEMES = ("mirs-ec", "mirs-ac", "fpa-irs", "bf-only", "sep")
FROZEN = {"mirs-ec": (), "mirs-ac": (), "fpa-irs": ("u",), "bf-only": ("u", "phi")}
CSV_COLUMNS = (
    "scheme", "seed", "sweep_key", "sweep_value", "power_dBm", "feasible",
    "outer_iters", "inner_iters", "wall_time_s",
)
SWEEP_ALIASES = {"gamma": "gamma_bps", "Gamma": "gamma_bps", "chi": "chi_dB", "A": "A_over_lambda"}


@dataclass(frozen=True)
class RunSpec:
    """One (scheme, scenario, seed) run.

    ``a`` overrides the array granularity of ``config`` for ``mirs-ac``;
    ``mirs-ec`` always runs element-wise and the fixed-position baselines use
    the element-wise grid as well.
    """

    scheme: str
    config: ScenarioConfig
    seed: int
    a: int | None = None
    sweep_key: str = ""
    sweep_value: str = ""
    outer: OuterConfig = OuterConfig()
    trace_path: Path | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {', '.join(SCHEMES)}")
        if self.a is not None and self.a < 1:
            raise ValueError("array granularity must be >= 1")

    @property
    def granularity(self) -> int:
        if self.scheme == "mirs-ac":
            return self.config.a if self.a is None else self.a
        return 1

    def scenario(self):
        return generate_scenario(self.config.with_updates(a=self.granularity), self.seed)


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    seed: int
    sweep_key: str
    sweep_value: str
    power_dBm: float
    feasible: bool
    outer_iters: int
    inner_iters: int
    wall_time_s: float

    def as_csv(self) -> dict:
        row = asdict(self)
        row["power_dBm"] = f"{self.power_dBm:.6f}"
        row["wall_time_s"] = f"{self.wall_time_s:.4f}"
        return row


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def write_trace(path: Path, report) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for row, inner in zip(report.trace, report.inner_traces):
            for r in inner.rows:
                fh.write(json.dumps({"kind": "inner", "round": row["round"],
                                     **{k: _jsonable(v) for k, v in r.items()}}) + "\n")
            fh.write(json.dumps({"kind": "outer", **{k: _jsonable(v) for k, v in row.items()}}) + "\n")


def run_scheme(spec: RunSpec) -> ResultRow:
    """Run one scheme; initialization failures become infeasible rows."""
    start = time.perf_counter()
    sc = spec.scenario()
    init = InitConfig(seed=spec.seed)

    def row(power_dbm, feasible, outer, inner):
        return ResultRow(spec.scheme, spec.seed, spec.sweep_key, spec.sweep_value, float(power_dbm),
                         bool(feasible), int(outer), int(inner), time.perf_counter() - start)

    try:
        if spec.scheme == "sep":
            X, steps = separate_design(sc, init, SepConfig())
            violation = constraint_values(X, sc).max_violation
            return row(to_dbm(transmit_power(X)), violation <= FEASIBILITY_TOL, 0, steps)
        X0 = init_point(sc, init)
    except InitializationError as exc:
        log.warning("%s seed %d: %s", spec.scheme, spec.seed, exc)
        return row(math.nan, False, 0, 0)

    report = solve(X0, sc, spec.outer, frozen=FROZEN[spec.scheme])
    if spec.trace_path is not None:
        write_trace(Path(spec.trace_path), report)
    return row(report.power_dBm if report.feasible else math.nan, report.feasible,
               report.outer_iters, report.inner_iters_total)


def parse_sweep(text: str):
    """``"key=v1,v2"`` -> ``(key, [v1, v2])`` with the key resolved to a config field."""
    if "=" not in text:
        raise ValueError(f"sweep must look like key=v1,v2,... (got {text!r})")
    key, values = (s.strip() for s in text.split("=", 1))
    key = SWEEP_ALIASES.get(key, key)
    if key not in ScenarioConfig.__dataclass_fields__:
        raise ValueError(f"cannot sweep unknown key {key!r}")
    return key, [v.strip() for v in values.split(",") if v.strip()]


def expand_sweep(spec: RunSpec, key: str, values) -> list[RunSpec]:
    out = []
    for value in values:
        if key == "a":
            changes = dict(a=int(value))
        else:
            changes = dict(config=spec.config.with_updates(**{key: value}))
        out.append(RunSpec(**{**spec.__dict__, **changes, "sweep_key": key, "sweep_value": str(value)}))
    return out


def trace_name(spec: RunSpec) -> str:
    tag = f"_{spec.sweep_key}{spec.sweep_value}" if spec.sweep_key else ""
    return f"{spec.scheme}_a{spec.granularity}_seed{spec.seed}{tag}.jsonl"


def run_sweep(specs, out_dir=None, parallelism: int = 1) -> list[ResultRow]:
    """Run every spec and write ``results.csv`` plus one trace per run under ``out_dir``."""
    specs = list(specs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
        specs = [RunSpec(**{**s.__dict__, "trace_path": out_dir / "traces" / trace_name(s)}) for s in specs]
    if parallelism > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(run_scheme, specs))
    else:
        rows = [run_scheme(s) for s in specs]
    if out_dir is not None:
        write_results(out_dir / "results.csv", rows)
    return rows


def write_results(path: Path, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for r in rows:
                writer.writerow(r.as_csv())
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


@dataclass
class SweepSummary:
    """Mean power per sweep value over seeds, for trend checks."""

    key: str
    values: list = field(default_factory=list)
    mean_dbm: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows, key: str) -> "SweepSummary":
        by_value = {}
        for r in rows:
            by_value.setdefault(r.sweep_value, []).append(r.power_dBm)
        summary = cls(key)
        for value, powers in by_value.items():
            summary.values.append(value)
            summary.mean_dbm.append(float(np.mean(powers)))
        return summary
