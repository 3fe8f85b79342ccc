"""Balanced single-phase-equivalent AC power flow for radial feeders.

Active power only: reactive injections are fixed at zero at every pq bus and the
slack bus holds the network's slack voltage at angle zero.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from ..api.schemas import BusKind, Network, Snapshot
from ..core.config import get_settings
from ..core.exceptions import DimensionMismatch, NonConvergence, SingularJacobian

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class PowerFlowSolution:
    
    voltages: np.ndarray
    line_currents: np.ndarray
    slack_injection: float
    converged: bool
    iterations: int
    max_mismatch: float
    bus_injections: np.ndarray
    losses_kw: float
    
    @property
    def magnitudes(self) -> np.ndarray:
        
        return np.abs(self.voltages)
    
    @property
    def angles(self) -> np.ndarray:
        
        return np.angle(self.voltages)

def build_admittance(net: Network) -> np.ndarray:
    """Bus admittance matrix in p.u., assembled from from/to connection matrices."""
    nb = net.n_buses
    nl = len(net.lines)
    pos = net.bus_position
    
    f = np.array([pos[line.from_bus] for line in net.lines], dtype=int)
    t = np.array([pos[line.to_bus] for line in net.lines], dtype=int)
    y = np.array([1.0 / (line.impedance_ohm / net.base_impedance) for line in net.lines], dtype=complex)
    
    Cf = np.zeros((nl, nb))
    Ct = np.zeros((nl, nb))
    Cf[np.arange(nl), f] = 1.0
    Ct[np.arange(nl), t] = 1.0
    
    Yf = y[:, None] * (Cf - Ct)
    Yt = y[:, None] * (Ct - Cf)
    
    return Cf.T @ Yf + Ct.T @ Yt

class PowerFlowModel:
    """Network data pre-arranged for repeated Newton-Raphson solves."""
    
    def __init__(self, net: Network):
        
        self.net = net
        self.Ybus = build_admittance(net)
        
        pos = net.bus_position
        self.slack = pos[net.slack_bus.id]
        self.pq = np.array(
            [pos[b.id] for b in net.buses if b.kind == BusKind.PQ], dtype=int
        )
        
        self.from_idx = np.array([pos[line.from_bus] for line in net.lines], dtype=int)
        self.to_idx = np.array([pos[line.to_bus] for line in net.lines], dtype=int)
        self.y_series = np.array(
            [1.0 / (line.impedance_ohm / net.base_impedance) for line in net.lines], dtype=complex
        )
        self.r_series = np.array(
            [(line.impedance_ohm / net.base_impedance).real for line in net.lines]
        )
        
        self.kw_per_pu = net.base_power / 1000.0
    
    def solve(
        self,
        injections_kw: np.ndarray,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
        raise_on_failure: bool = False
    ) -> PowerFlowSolution:
        
        settings = get_settings()
        tol = settings.PF_TOLERANCE if tol is None else tol
        max_iter = settings.PF_MAX_ITERATIONS if max_iter is None else max_iter
        
        injections_kw = np.asarray(injections_kw, dtype=float)
        if injections_kw.shape != (self.net.n_buses,):
            raise DimensionMismatch("bus injections", self.net.n_buses, injections_kw.size)
        
        pq = self.pq
        npq = len(pq)
        Y = self.Ybus
        
        S_sched = injections_kw[pq] / self.kw_per_pu + 0j
        
        Vm = np.full(self.net.n_buses, self.net.slack_voltage)
        Va = np.zeros(self.net.n_buses)
        V = Vm * np.exp(1j * Va)
        
        converged = False
        iterations = 0
        max_mismatch = np.inf
        
        while True:
            Ibus = Y @ V
            S = V * np.conj(Ibus)
            mis = S_sched - S[pq]
            F = np.concatenate([mis.real, mis.imag])
            max_mismatch = float(np.max(np.abs(F))) if npq else 0.0
            
            if max_mismatch <= tol:
                converged = True
                break
            if iterations >= max_iter:
                break
            
            Vnorm = V / np.abs(V)
            dS_dVm = V[:, None] * np.conj(Y * Vnorm[None, :]) + np.diag(np.conj(Ibus) * Vnorm)
            dS_dVa = 1j * V[:, None] * np.conj(np.diag(Ibus) - Y * V[None, :])
            
            sub = np.ix_(pq, pq)
            J = np.block([
                [dS_dVa[sub].real, dS_dVm[sub].real],
                [dS_dVa[sub].imag, dS_dVm[sub].imag],
            ])
            
            try:
                dx = np.linalg.solve(J, F)
            except np.linalg.LinAlgError as e:
                raise SingularJacobian(f"Jacobian is singular at iteration {iterations}: {e}")
            if not np.all(np.isfinite(dx)):
                raise SingularJacobian(f"non-finite Newton step at iteration {iterations}")
            
            Va[pq] += dx[:npq]
            Vm[pq] += dx[npq:]
            V = Vm * np.exp(1j * Va)
            iterations += 1
            logger.debug("NR iteration %d: max mismatch %.3e p.u.", iterations, max_mismatch)
        
        solution = self._assemble(V, converged, iterations, max_mismatch)
        
        if not converged:
            logger.warning(
                "Power flow did not converge after %d iterations (mismatch %.3e)",
                iterations, max_mismatch
            )
            if raise_on_failure:
                raise NonConvergence(iterations, max_mismatch, solution)
        
        return solution
    
    def _assemble(
        self,
        V: np.ndarray,
        converged: bool,
        iterations: int,
        max_mismatch: float
    ) -> PowerFlowSolution:
        
        S = V * np.conj(self.Ybus @ V)
        I_pu = (V[self.from_idx] - V[self.to_idx]) * self.y_series
        losses_pu = float(np.sum(self.r_series * np.abs(I_pu) ** 2))
        
        return PowerFlowSolution(
            voltages=V.copy(),
            line_currents=np.abs(I_pu) * self.net.base_current,
            slack_injection=float(S[self.slack].real * self.kw_per_pu),
            converged=converged,
            iterations=iterations,
            max_mismatch=max_mismatch,
            bus_injections=S.real * self.kw_per_pu,
            losses_kw=losses_pu * self.kw_per_pu,
        )

@lru_cache(maxsize=32)
def get_powerflow_model(net: Network) -> PowerFlowModel:
    
    return PowerFlowModel(net)

def solve_pf(
    net: Network,
    injections_kw: np.ndarray,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    raise_on_failure: bool = False
) -> PowerFlowSolution:
    """Solve on the cached model of ``net``; a non-converged solve is returned flagged unless ``raise_on_failure``."""
    return get_powerflow_model(net).solve(
        injections_kw, tol=tol, max_iter=max_iter, raise_on_failure=raise_on_failure
    )

def prosumer_injections(net: Network, snap: Snapshot, x: np.ndarray) -> np.ndarray:
    """Net active injection per bus (kW): generation at the envelope minus demand."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n_prosumers,):
        raise DimensionMismatch("envelope", net.n_prosumers, x.size)
    if snap.n_agents != net.n_prosumers:
        raise DimensionMismatch("snapshot", net.n_prosumers, snap.n_agents)
    
    pos = net.bus_position
    net_kw = np.minimum(x, snap.p_bar) - snap.d
    
    injections = np.zeros(net.n_buses)
    for p, value in zip(net.prosumers, net_kw):
        injections[pos[p.bus]] += value
    return injections
