import math
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.constants import (
    DEFAULT_BASE_POWER_W,
    DEFAULT_BASE_VOLTAGE_V,
    KS_SCHEMES,
    NOISE_AMPLITUDE,
    SCHEME_EGALITARIAN,
    SCHEME_NASH_EXPORT,
    SCHEME_OPF_EXPORT,
    SCHEME_OPF_GENERATION,
    SCHEME_UNIFORM_DYNAMIC_EXPORT,
    SCHEME_UTILITARIAN_MIX,
    TESTBED_NAME,
)

class BusKind(str, Enum):
    
    SLACK = "slack"
    PQ = "pq"

class MetricKind(str, Enum):
    
    GENERATION = "generation"
    EXPORT = "export"

class SchemeType(str, Enum):
    
    OPF_GENERATION = SCHEME_OPF_GENERATION
    OPF_EXPORT = SCHEME_OPF_EXPORT
    UNIFORM_DYNAMIC_EXPORT = SCHEME_UNIFORM_DYNAMIC_EXPORT
    EGALITARIAN = SCHEME_EGALITARIAN
    NASH_EXPORT = SCHEME_NASH_EXPORT
    UTILITARIAN_MIX = SCHEME_UTILITARIAN_MIX
    
    @property
    def is_ks(self) -> bool:
        
        return self.value in KS_SCHEMES

class OutputFormat(str, Enum):
    
    CSV = "csv"
    JSON = "json"

class Bus(BaseModel):
    
    model_config = ConfigDict(frozen=True)
    
    id: int = Field(..., ge=0, description="Bus index")
    kind: BusKind = Field(BusKind.PQ, description="slack or pq")
    v_min: float = Field(..., gt=0, description="Lower voltage limit (p.u.)")
    v_max: float = Field(..., gt=0, description="Upper voltage limit (p.u.)")
    label: Optional[str] = Field(None, description="Display name, e.g. 'PCC' or '1/2'")
    
    @model_validator(mode="after")
    def check_limits(self) -> "Bus":
        
        if not self.v_min < self.v_max:
            raise ValueError(f"bus {self.id}: v_min {self.v_min} must be below v_max {self.v_max}")
        return self

class Line(BaseModel):
    
    model_config = ConfigDict(frozen=True)
    
    from_bus: int = Field(..., ge=0)
    to_bus: int = Field(..., ge=0)
    resistance: float = Field(..., ge=0, description="Series resistance per segment (ohm)")
    reactance: float = Field(..., ge=0, description="Series reactance per segment (ohm)")
    current_limit: Optional[float] = Field(None, gt=0, description="Thermal limit (A)")
    segments: int = Field(1, ge=1, description="Number of identical cable segments in series")
    
    @model_validator(mode="after")
    def check_impedance(self) -> "Line":
        
        if self.resistance == 0 and self.reactance == 0:
            raise ValueError(f"line {self.from_bus}-{self.to_bus}: zero impedance")
        if self.from_bus == self.to_bus:
            raise ValueError(f"line {self.from_bus}-{self.to_bus}: self loop")
        return self
    
    @property
    def impedance_ohm(self) -> complex:
        
        return self.segments * complex(self.resistance, self.reactance)

class Prosumer(BaseModel):
    
    model_config = ConfigDict(frozen=True)
    
    id: int = Field(..., ge=1, description="Prosumer index i in 1..N")
    bus: int = Field(..., ge=0, description="Connection bus id")
    label: str = Field("", description="Display name")
    pv_capacity_kw: float = Field(0.0, ge=0, description="Nominal PV capacity (kW)")
    demand_kw: float = Field(0.0, ge=0, description="Nominal peak demand (kW)")

class Network(BaseModel):
    
    model_config = ConfigDict(frozen=True)
    
    name: str = Field("network")
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    prosumers: tuple[Prosumer, ...]
    slack_voltage: float = Field(..., gt=0, description="Slack voltage magnitude (p.u.)")
    base_voltage: float = Field(DEFAULT_BASE_VOLTAGE_V, gt=0, description="Line-to-line base voltage (V)")
    base_power: float = Field(DEFAULT_BASE_POWER_W, gt=0, description="Three-phase base power (W)")
    
    @property
    def n_buses(self) -> int:
        
        return len(self.buses)
    
    @property
    def n_prosumers(self) -> int:
        
        return len(self.prosumers)
    
    @property
    def bus_ids(self) -> list[int]:
        
        return [b.id for b in self.buses]
    
    @property
    def bus_position(self) -> dict[int, int]:
        
        return {b.id: pos for pos, b in enumerate(self.buses)}
    
    @property
    def slack_bus(self) -> Bus:
        
        return next(b for b in self.buses if b.kind == BusKind.SLACK)
    
    @property
    def base_impedance(self) -> float:
        
        return self.base_voltage ** 2 / self.base_power
    
    @property
    def base_current(self) -> float:
        
        return self.base_power / (math.sqrt(3.0) * self.base_voltage)

class Snapshot(BaseModel):
    
    model_config = ConfigDict(frozen=True)
    
    demand: tuple[float, ...] = Field(..., description="Per-prosumer demand d_i (kW)")
    potential: tuple[float, ...] = Field(..., description="Per-prosumer PV potential (kW)")
    timestamp: Optional[str] = Field(None, description="Time label, e.g. '12:00'")
    
    @field_validator("demand", "potential")
    @classmethod
    def check_entries(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        
        for value in v:
            if not math.isfinite(value):
                raise ValueError("entries must be finite")
            if value < 0:
                raise ValueError("entries must be non-negative")
        return v
    
    @model_validator(mode="after")
    def check_lengths(self) -> "Snapshot":
        
        if len(self.demand) != len(self.potential):
            raise ValueError(
                f"demand has {len(self.demand)} entries but potential has {len(self.potential)}"
            )
        return self
    
    @property
    def n_agents(self) -> int:
        
        return len(self.demand)
    
    @property
    def d(self) -> np.ndarray:
        
        return np.asarray(self.demand, dtype=float)
    
    @property
    def p_bar(self) -> np.ndarray:
        
        return np.asarray(self.potential, dtype=float)

class SchemeConfig(BaseModel):
    
    model_config = ConfigDict(frozen=True)
    
    scheme: SchemeType
    k_kw: Optional[float] = Field(None, description="Export entitlement K (uniform_dynamic_export)")
    c_kw: Optional[float] = Field(None, description="Reference curtailment (egalitarian)")
    gamma: float = Field(0.0, description="Inequality weight (utilitarian_mix)")
    
    @model_validator(mode="after")
    def check_parameters(self) -> "SchemeConfig":
        
        if self.scheme == SchemeType.UNIFORM_DYNAMIC_EXPORT and not (self.k_kw is not None and self.k_kw > 0):
            raise ValueError("uniform_dynamic_export requires K > 0")
        if self.scheme == SchemeType.EGALITARIAN and not (self.c_kw is not None and self.c_kw > 0):
            raise ValueError("egalitarian requires a reference curtailment > 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        return self
    
    @property
    def label(self) -> str:
        
        if self.scheme == SchemeType.UNIFORM_DYNAMIC_EXPORT:
            return f"{self.scheme.value}(K={self.k_kw:g})"
        if self.scheme == SchemeType.EGALITARIAN:
            return f"{self.scheme.value}(c={self.c_kw:g})"
        if self.scheme == SchemeType.UTILITARIAN_MIX:
            return f"{self.scheme.value}(gamma={self.gamma:g})"
        return self.scheme.value

class DuckCurveProfile(BaseModel):
    """Shape parameters of the synthetic 24-hour demand and PV profiles."""
    
    model_config = ConfigDict(frozen=True)
    
    resolution_minutes: int = Field(15, ge=1, le=60)
    solar_start_hour: float = Field(6.0, ge=0, le=24)
    solar_end_hour: float = Field(18.0, ge=0, le=24)
    base_load: float = Field(0.3, ge=0, description="Demand floor as a fraction of nominal")
    morning_peak_hour: float = Field(7.5, ge=0, le=24)
    morning_peak: float = Field(0.5, ge=0)
    morning_width_hours: float = Field(1.5, gt=0)
    evening_peak_hour: float = Field(19.5, ge=0, le=24)
    evening_peak: float = Field(0.7, ge=0)
    evening_width_hours: float = Field(2.0, gt=0)
    noise: float = Field(NOISE_AMPLITUDE, ge=0, lt=1, description="Relative noise amplitude")
    
    @model_validator(mode="after")
    def check_window(self) -> "DuckCurveProfile":
        
        if not self.solar_start_hour < self.solar_end_hour:
            raise ValueError("solar window must start before it ends")
        if (24 * 60) % self.resolution_minutes != 0:
            raise ValueError("resolution must divide 24 hours")
        return self
    
    @property
    def solar_peak_hour(self) -> float:
        
        return 0.5 * (self.solar_start_hour + self.solar_end_hour)

class RunConfig(BaseModel):
    
    network: str = Field(TESTBED_NAME, description="'testbed' or a network TOML path")
    scenario_path: Optional[Path] = None
    seed: Optional[int] = None
    schemes: list[SchemeConfig] = Field(..., min_length=1)
    output_dir: Path = Path("results")
    tolerance_kw: float = Field(1e-2, gt=0)
    format: OutputFormat = OutputFormat.CSV
    jobs: int = Field(1, ge=1)
    demand: Optional[tuple[float, ...]] = None
    potential: Optional[tuple[float, ...]] = None
    
    @model_validator(mode="after")
    def check_sources(self) -> "RunConfig":
        
        if self.scenario_path is not None and self.seed is not None:
            raise ValueError("--scenario and --generate are mutually exclusive")
        if self.network != TESTBED_NAME and not Path(self.network).exists():
            raise ValueError(f"network file not found: {self.network}")
        if self.scenario_path is not None and not self.scenario_path.exists():
            raise ValueError(f"scenario file not found: {self.scenario_path}")
        if (self.demand is None) != (self.potential is None):
            raise ValueError("--demand and --potential must be given together")
        return self
    
    def snapshot(self) -> Optional[Snapshot]:
        
        if self.demand is None or self.potential is None:
            return None
        return Snapshot(demand=self.demand, potential=self.potential)

class Scenario(BaseModel):
    
    model_config = ConfigDict(frozen=True)
    
    snapshots: tuple[Snapshot, ...] = Field(default_factory=tuple)
    resolution_minutes: int = Field(15, ge=1)
    
    @model_validator(mode="after")
    def check_spacing(self) -> "Scenario":
        
        from ..utils.time_labels import infer_resolution
        
        sizes = {s.n_agents for s in self.snapshots}
        if len(sizes) > 1:
            raise ValueError(f"snapshots disagree on the number of prosumers: {sorted(sizes)}")
        
        labels = [s.timestamp for s in self.snapshots]
        if all(label is not None for label in labels):
            spacing = infer_resolution(labels)
            if spacing is not None and spacing != self.resolution_minutes:
                raise ValueError(
                    f"labels are spaced {spacing} min apart, expected {self.resolution_minutes}"
                )
        return self
    
    @property
    def labels(self) -> list[str]:
        
        return [s.timestamp or str(i) for i, s in enumerate(self.snapshots)]
    
    def __len__(self) -> int:
        
        return len(self.snapshots)
