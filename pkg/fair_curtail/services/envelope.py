"""Feasibility oracle for operating envelopes: box constraints plus grid limits."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Protocol, Union, runtime_checkable

import numpy as np

from ..api.schemas import Network, Snapshot
from ..core.config import get_settings
from ..core.exceptions import DimensionMismatch, ValidationError
from .powerflow import PowerFlowSolution, get_powerflow_model, prosumer_injections

logger = logging.getLogger(__name__)

BINDING_TOLERANCE = 1e-6

@dataclass(frozen=True)
class FeasibilityReport:
    
    feasible: bool
    worst_voltage_margin: float
    worst_current_margin: Optional[float]
    pf: Optional[PowerFlowSolution]
    margins: np.ndarray = field(default_factory=lambda: np.zeros(0))
    binding: tuple[str, ...] = ()
    box_violation: bool = False
    
    @property
    def worst_margin(self) -> float:
        """Smallest normalised margin (voltage in p.u., current as a fraction of its limit)."""
        if self.margins.size == 0:
            return float("-inf") if self.box_violation else float("inf")
        return float(np.min(self.margins))

@runtime_checkable
class FeasibilityOracle(Protocol):
    
    def __call__(self, snap: Snapshot, x: np.ndarray) -> FeasibilityReport:
        ...

def box_violated(snap: Snapshot, x: np.ndarray, tol: Optional[float] = None) -> bool:
    
    tol = get_settings().BOX_TOLERANCE_KW if tol is None else tol
    return bool(np.any(x < -tol) or np.any(x > snap.p_bar + tol))

def _box_report() -> FeasibilityReport:
    
    return FeasibilityReport(
        feasible=False,
        worst_voltage_margin=float("nan"),
        worst_current_margin=None,
        pf=None,
        binding=("box",),
        box_violation=True,
    )

def _as_envelope(snap: Snapshot, x: np.ndarray) -> np.ndarray:
    
    x = np.asarray(x, dtype=float)
    if x.shape != (snap.n_agents,):
        raise DimensionMismatch("envelope", snap.n_agents, x.size)
    if not np.all(np.isfinite(x)):
        raise ValidationError("envelope", "entries must be finite")
    return x

class PowerFlowOracle:
    """Feasibility of an envelope on a network, evaluated with the AC power flow."""
    
    def __init__(self, net: Network):
        
        self.net = net
        self.model = get_powerflow_model(net)
        
        self.v_min = np.array([b.v_min for b in net.buses])
        self.v_max = np.array([b.v_max for b in net.buses])
        self.bus_names = [b.label or str(b.id) for b in net.buses]
        
        self.limited = np.array(
            [k for k, line in enumerate(net.lines) if line.current_limit is not None], dtype=int
        )
        self.current_limits = np.array([net.lines[k].current_limit for k in self.limited], dtype=float)
        self.line_names = [f"{net.lines[k].from_bus}-{net.lines[k].to_bus}" for k in self.limited]
    
    def __call__(self, snap: Snapshot, x: np.ndarray) -> FeasibilityReport:
        
        x = _as_envelope(snap, x)
        if box_violated(snap, x):
            return _box_report()
        
        x = np.clip(x, 0.0, snap.p_bar)
        pf = self.model.solve(prosumer_injections(self.net, snap, x))
        
        vm = pf.magnitudes
        upper = self.v_max - vm
        lower = vm - self.v_min
        worst_v = float(min(upper.min(), lower.min()))
        
        names = [f"v_max@{n}" for n in self.bus_names] + [f"v_min@{n}" for n in self.bus_names]
        margins = [upper, lower]
        
        worst_c: Optional[float] = None
        if self.limited.size:
            current = self.current_limits - pf.line_currents[self.limited]
            worst_c = float(current.min())
            margins.append(current / self.current_limits)
            names += [f"i_max@{n}" for n in self.line_names]
        
        margins = np.concatenate(margins)
        worst = margins.min()
        binding = tuple(n for n, m in zip(names, margins) if m - worst <= BINDING_TOLERANCE)
        
        feasible = pf.converged and worst_v >= 0 and (worst_c is None or worst_c >= 0)
        
        return FeasibilityReport(
            feasible=bool(feasible),
            worst_voltage_margin=worst_v,
            worst_current_margin=worst_c,
            pf=pf,
            margins=margins,
            binding=binding,
        )

class LinearFrontierOracle:
    """Convex polytope {x : A x <= b} intersected with the box, for analytic fixtures.

    Stands in for the power-flow oracle when the feasible set is given in closed form.
    """
    
    def __init__(self, A: np.ndarray, b: np.ndarray):
        
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.size:
            raise DimensionMismatch("frontier rows", self.A.shape[0], self.b.size)
    
    @classmethod
    def from_vertices(cls, vertices: list[tuple[float, float]]) -> "LinearFrontierOracle":
        """Two-agent frontier through consecutive vertices, each segment an upper bound on x_2."""
        rows, rhs = [], []
        for (x1, y1), (x2, y2) in zip(vertices, vertices[1:]):
            slope = (y2 - y1) / (x2 - x1)
            rows.append([-slope, 1.0])
            rhs.append(y1 - slope * x1)
        return cls(np.array(rows), np.array(rhs))
    
    def __call__(self, snap: Snapshot, x: np.ndarray) -> FeasibilityReport:
        
        x = _as_envelope(snap, x)
        if self.A.shape[1] != x.size:
            raise DimensionMismatch("envelope", self.A.shape[1], x.size)
        if box_violated(snap, x):
            return _box_report()
        
        margins = self.b - self.A @ x
        worst = float(margins.min())
        binding = tuple(f"row{k}" for k, m in enumerate(margins) if m - worst <= BINDING_TOLERANCE)
        
        return FeasibilityReport(
            feasible=worst >= 0,
            worst_voltage_margin=worst,
            worst_current_margin=None,
            pf=None,
            margins=margins,
            binding=binding,
        )
    
    def feasible_many(self, snap: Snapshot, X: np.ndarray) -> np.ndarray:
        """Row-wise feasibility of a batch of envelopes."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tol = get_settings().BOX_TOLERANCE_KW
        in_box = np.all((X >= -tol) & (X <= snap.p_bar + tol), axis=1)
        return in_box & np.all(X @ self.A.T <= self.b, axis=1)

OracleTarget = Union[Network, FeasibilityOracle]

def as_oracle(target: OracleTarget) -> FeasibilityOracle:
    
    if isinstance(target, Network):
        return PowerFlowOracle(target)
    return target

def check_envelope(target: OracleTarget, snap: Snapshot, x: np.ndarray) -> FeasibilityReport:
    
    return as_oracle(target)(snap, x)

def point_on_segment(x0: np.ndarray, x1: np.ndarray, lam: float) -> np.ndarray:
    
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if lam == 0.0:
        return x0.copy()
    if lam == 1.0:
        return x1.copy()
    return x0 + lam * (x1 - x0)

def feasible_on_segment(
    target: OracleTarget,
    snap: Snapshot,
    x0: np.ndarray,
    x1: np.ndarray,
    lam: float
) -> FeasibilityReport:
    
    if not 0.0 <= lam <= 1.0:
        raise ValidationError("lambda", f"must lie in [0, 1], got {lam}")
    return check_envelope(target, snap, point_on_segment(x0, x1, lam))
