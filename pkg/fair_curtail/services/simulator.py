"""24-hour time-series runs and snapshot comparisons across schemes."""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import polars as pl
import pydantic

from ..api.schemas import DuckCurveProfile, Network, Scenario, SchemeConfig, SchemeType, Snapshot
from ..core.config import get_settings
from ..core.constants import (
    COMPARE_COLUMNS,
    HOURS_PER_DAY,
    MINUTES_PER_HOUR,
    PANEL_LABELS,
    TRACE_CUMULATIVE_PREFIX,
    TRACE_ENVELOPE_PREFIX,
    TRACE_ERROR_COLUMN,
    TRACE_UTILITY_PREFIX,
    TRACE_VOLTAGE_PREFIX,
)
from ..core.exceptions import FairCurtailError, ParseError, TimestepError, ValidationError
from ..utils.time_labels import label_for_step
from .envelope import OracleTarget
from .grid_model import check_snapshot
from .solvers import SolveResult, solve

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ComparisonEntry = Union[SolveResult, FairCurtailError]

def load_duck_curve_profile(path: Optional[PathLike] = None) -> DuckCurveProfile:
    
    path = Path(path) if path is not None else get_settings().DUCK_CURVE_PATH
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ParseError(str(path), "file not found")
    except tomllib.TOMLDecodeError as e:
        raise ParseError(str(path), str(e))
    
    try:
        return DuckCurveProfile(**raw.get("duck_curve", {}))
    except pydantic.ValidationError as e:
        raise ValidationError("duck curve profile", str(e))

def solar_shape(hours: np.ndarray, profile: DuckCurveProfile) -> np.ndarray:
    """Clipped cosine equal to 1 at the middle of the solar window and 0 outside it."""
    width = profile.solar_end_hour - profile.solar_start_hour
    shape = np.cos(np.pi * (hours - profile.solar_peak_hour) / width)
    inside = (hours > profile.solar_start_hour) & (hours < profile.solar_end_hour)
    return np.where(inside, np.maximum(shape, 0.0), 0.0)

def demand_shape(hours: np.ndarray, profile: DuckCurveProfile) -> np.ndarray:
    
    morning = profile.morning_peak * np.exp(
        -(((hours - profile.morning_peak_hour) / profile.morning_width_hours) ** 2)
    )
    evening = profile.evening_peak * np.exp(
        -(((hours - profile.evening_peak_hour) / profile.evening_width_hours) ** 2)
    )
    return profile.base_load + morning + evening

def generate_duck_curve(
    net: Network,
    seed: int,
    profile: Optional[DuckCurveProfile] = None
) -> Scenario:
    """Synthetic 24-hour demand and PV potential, scaled by each prosumer's nominal ratings.
    
    PV noise is one constant factor per prosumer, so every profile still peaks at the
    middle of the solar window; demand noise is drawn per timestep.
    """
    profile = profile or load_duck_curve_profile()
    rng = np.random.default_rng(seed)
    
    steps = HOURS_PER_DAY * MINUTES_PER_HOUR // profile.resolution_minutes
    hours = np.arange(steps) * profile.resolution_minutes / MINUTES_PER_HOUR
    
    capacity = np.array([p.pv_capacity_kw for p in net.prosumers])
    nominal_demand = np.array([p.demand_kw for p in net.prosumers])
    n = len(capacity)
    
    pv_scale = 1.0 + profile.noise * rng.uniform(-1.0, 1.0, n)
    demand_noise = 1.0 + profile.noise * rng.uniform(-1.0, 1.0, (steps, n))
    
    potential = solar_shape(hours, profile)[:, None] * capacity[None, :] * pv_scale[None, :]
    demand = demand_shape(hours, profile)[:, None] * nominal_demand[None, :] * demand_noise
    
    snapshots = tuple(
        Snapshot(
            demand=tuple(float(v) for v in demand[k]),
            potential=tuple(float(v) for v in potential[k]),
            timestamp=label_for_step(k, profile.resolution_minutes),
        )
        for k in range(steps)
    )
    
    logger.info("Generated duck-curve scenario: %d steps, %d prosumers, seed %d", steps, n, seed)
    return Scenario(snapshots=snapshots, resolution_minutes=profile.resolution_minutes)

@dataclass
class SimulationTrace:
    
    scheme: SchemeConfig
    labels: list[str]
    bus_ids: list[int]
    resolution_minutes: int
    results: list[Optional[SolveResult]] = field(default_factory=list)
    voltages: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    cumulative_kwh: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    errors: dict[int, TimestepError] = field(default_factory=dict)
    
    def __len__(self) -> int:
        
        return len(self.results)
    
    @property
    def lambdas(self) -> list[Optional[float]]:
        
        return [r.lam if r is not None else None for r in self.results]
    
    @property
    def peak_voltages(self) -> np.ndarray:
        
        if self.voltages.size == 0:
            return np.zeros(len(self.results))
        return np.nanmax(self.voltages, axis=1)
    
    def to_frame(self) -> pl.DataFrame:
        """One row per timestep; failed timesteps carry nulls and an error message."""
        n = self.cumulative_kwh.shape[1] if self.cumulative_kwh.ndim == 2 else 0
        
        data: dict[str, list] = {
            "t": list(self.labels),
            "scheme": [self.scheme.label] * len(self.results),
            "lambda": self.lambdas,
            "welfare": [r.welfare if r is not None else None for r in self.results],
        }
        for i in range(n):
            data[f"{TRACE_ENVELOPE_PREFIX}{i + 1}"] = [
                float(r.x[i]) if r is not None else None for r in self.results
            ]
        for i in range(n):
            data[f"{TRACE_UTILITY_PREFIX}{i + 1}"] = [
                float(r.utilities[i]) if r is not None else None for r in self.results
            ]
        for b in range(len(self.bus_ids)):
            data[f"{TRACE_VOLTAGE_PREFIX}{b + 1}"] = [
                None if np.isnan(v) else float(v) for v in self.voltages[:, b]
            ] if self.voltages.size else []
        for i in range(n):
            data[f"{TRACE_CUMULATIVE_PREFIX}{i + 1}"] = [float(v) for v in self.cumulative_kwh[:, i]]
        data[TRACE_ERROR_COLUMN] = [
            str(self.errors[k].cause) if k in self.errors else None for k in range(len(self.results))
        ]
        
        schema = {key: pl.Float64 for key in data}
        schema.update({"t": pl.Utf8, "scheme": pl.Utf8, TRACE_ERROR_COLUMN: pl.Utf8})
        return pl.DataFrame(data, schema=schema)
    
    def summary(self) -> dict:
        
        lambdas = [lam for lam in self.lambdas if lam is not None]
        peak = self.peak_voltages
        totals = self.cumulative_kwh[-1] if len(self.cumulative_kwh) else np.zeros(0)
        return {
            "scheme": self.scheme.label,
            "steps": len(self.results),
            "failed_steps": len(self.errors),
            "min_lambda": min(lambdas) if lambdas else None,
            "peak_voltage": float(np.nanmax(peak)) if peak.size and not np.all(np.isnan(peak)) else None,
            "total_curtailed_kwh": float(np.sum(totals)),
        }

def _solve_step(
    net: Network,
    snap: Snapshot,
    cfg: SchemeConfig,
    tol_kw: Optional[float],
    index: int,
    label: str
) -> tuple[Optional[SolveResult], Optional[TimestepError]]:
    
    try:
        return solve(net, snap, cfg, tol_kw), None
    except FairCurtailError as e:
        error = TimestepError(index, e, label)
        logger.warning("Scheme %s failed at %s", cfg.label, error)
        return None, error

def run_timeseries(
    net: Network,
    scenario: Scenario,
    cfg: SchemeConfig,
    tol_kw: Optional[float] = None,
    jobs: Optional[int] = None,
    strict: bool = False
) -> SimulationTrace:
    """Independent curtailment decision per timestep.
    
    Failed timesteps are recorded in ``errors`` and the run continues, unless ``strict``
    is set, in which case the first failure (in timestep order) is raised.
    """
    jobs = jobs or get_settings().DEFAULT_JOBS
    labels = scenario.labels
    trace = SimulationTrace(
        scheme=cfg,
        labels=labels,
        bus_ids=net.bus_ids,
        resolution_minutes=scenario.resolution_minutes,
    )
    if not scenario.snapshots:
        trace.voltages = np.zeros((0, net.n_buses))
        trace.cumulative_kwh = np.zeros((0, net.n_prosumers))
        return trace
    
    for snap in scenario.snapshots:
        check_snapshot(net, snap)
    
    args = [
        (net, snap, cfg, tol_kw, k, labels[k]) for k, snap in enumerate(scenario.snapshots)
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(lambda a: _solve_step(*a), args))
    else:
        outcomes = [_solve_step(*a) for a in args]
    
    hours_per_step = scenario.resolution_minutes / MINUTES_PER_HOUR
    voltages = np.full((len(outcomes), net.n_buses), np.nan)
    cumulative = np.zeros((len(outcomes), net.n_prosumers))
    running = np.zeros(net.n_prosumers)
    
    for k, (result, error) in enumerate(outcomes):
        trace.results.append(result)
        if error is not None:
            if strict:
                raise error
            trace.errors[k] = error
        else:
            if result.report.pf is not None:
                voltages[k] = result.report.pf.magnitudes
            running = running + np.maximum(result.curtailment, 0.0) * hours_per_step
        cumulative[k] = running
        
        logger.info("Step %s (%d/%d) done", labels[k], k + 1, len(outcomes))
    
    trace.voltages = voltages
    trace.cumulative_kwh = cumulative
    return trace

def default_comparison_configs(snap: Snapshot) -> list[SchemeConfig]:
    """The six comparison panels, with K and the reference curtailment derived from the snapshot.
    
    K is the smallest positive export capability and the reference curtailment the smallest
    positive potential; both fall back to 1 kW when no prosumer qualifies.
    """
    capability = snap.p_bar - snap.d
    positive_capability = capability[capability > 0]
    positive_potential = snap.p_bar[snap.p_bar > 0]
    
    k_kw = float(positive_capability.min()) if positive_capability.size else 1.0
    c_kw = float(positive_potential.min()) if positive_potential.size else 1.0
    
    return [
        SchemeConfig(scheme=SchemeType.OPF_GENERATION),
        SchemeConfig(scheme=SchemeType.OPF_EXPORT),
        SchemeConfig(scheme=SchemeType.UNIFORM_DYNAMIC_EXPORT, k_kw=k_kw),
        SchemeConfig(scheme=SchemeType.EGALITARIAN, c_kw=c_kw),
        SchemeConfig(scheme=SchemeType.UTILITARIAN_MIX, gamma=0.0),
        SchemeConfig(scheme=SchemeType.NASH_EXPORT),
    ]

def compare_schemes(
    target: OracleTarget,
    snap: Snapshot,
    configs: Optional[list[SchemeConfig]] = None,
    tol_kw: Optional[float] = None
) -> list[ComparisonEntry]:
    """Solve one snapshot under several schemes; a failing scheme yields its error in place."""
    configs = configs if configs is not None else default_comparison_configs(snap)
    entries: list[ComparisonEntry] = []
    
    for cfg in configs:
        try:
            entries.append(solve(target, snap, cfg, tol_kw))
        except FairCurtailError as e:
            logger.warning("Scheme %s failed: %s: %s", cfg.label, type(e).__name__, e)
            entries.append(e)
    
    return entries

def comparison_frame(
    snap: Snapshot,
    configs: list[SchemeConfig],
    entries: list[ComparisonEntry]
) -> pl.DataFrame:
    """Long table with one row per scheme and prosumer; failed schemes keep null envelopes."""
    rows: dict[str, list] = {col: [] for col in COMPARE_COLUMNS}
    rows[TRACE_ERROR_COLUMN] = []
    
    for cfg, entry in zip(configs, entries):
        failed = not isinstance(entry, SolveResult)
        for i in range(snap.n_agents):
            x = None if failed else float(entry.x[i])
            rows["panel"].append(PANEL_LABELS.get(cfg.scheme.value, ""))
            rows["scheme"].append(cfg.label)
            rows["prosumer"].append(i + 1)
            rows["x"].append(x)
            rows["potential"].append(float(snap.p_bar[i]))
            rows["demand"].append(float(snap.d[i]))
            rows["export"].append(None if failed else x - float(snap.d[i]))
            rows["curtailment"].append(None if failed else float(snap.p_bar[i]) - x)
            rows[TRACE_ERROR_COLUMN].append(type(entry).__name__ if failed else None)
    
    schema = {col: pl.Float64 for col in rows}
    schema.update({"panel": pl.Utf8, "scheme": pl.Utf8, "prosumer": pl.Int64, TRACE_ERROR_COLUMN: pl.Utf8})
    return pl.DataFrame(rows, schema=schema)
