"""Utility metrics, reference envelopes, social welfare functions and inequality indices."""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..api.schemas import MetricKind, SchemeConfig, SchemeType, Snapshot
from ..core.config import get_settings
from ..core.exceptions import (
    AllZero,
    DegenerateAgent,
    DimensionMismatch,
    EmptyAgentSet,
    NegativeGain,
    NonPositiveScale,
    ValidationError,
)

logger = logging.getLogger(__name__)

UtilityProfile = np.ndarray

NEGATIVE_GAIN_TOLERANCE = 1e-9

@dataclass(frozen=True)
class UtilityMetric:
    """u_i(x) = scale_i * base_i(x_i) + shift_i, with base generation (x) or export (x - d)."""
    
    kind: MetricKind
    scale: Optional[tuple[float, ...]] = None
    shift: Optional[tuple[float, ...]] = None
    
    def _coefficients(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        
        a = np.ones(n) if self.scale is None else np.asarray(self.scale, dtype=float)
        b = np.zeros(n) if self.shift is None else np.asarray(self.shift, dtype=float)
        if a.size != n or b.size != n:
            raise DimensionMismatch("metric coefficients", n, max(a.size, b.size))
        return a, b
    
    def evaluate(self, snap: Snapshot, x: np.ndarray) -> UtilityProfile:
        
        x = np.asarray(x, dtype=float)
        if x.shape != (snap.n_agents,):
            raise DimensionMismatch("envelope", snap.n_agents, x.size)
        
        base = x if self.kind == MetricKind.GENERATION else x - snap.d
        a, b = self._coefficients(snap.n_agents)
        return a * base + b
    
    def evaluate_many(self, snap: Snapshot, X: np.ndarray) -> np.ndarray:
        """Row-wise utilities of an (M, N) batch of envelopes."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != snap.n_agents:
            raise DimensionMismatch("envelope batch", snap.n_agents, X.shape[1])
        
        base = X if self.kind == MetricKind.GENERATION else X - snap.d[None, :]
        a, b = self._coefficients(snap.n_agents)
        return a[None, :] * base + b[None, :]
    
    def invert(self, snap: Snapshot, u: UtilityProfile) -> np.ndarray:
        
        u = np.asarray(u, dtype=float)
        a, b = self._coefficients(snap.n_agents)
        base = (u - b) / a
        return base if self.kind == MetricKind.GENERATION else base + snap.d
    
    def compose(self, a: np.ndarray, b: np.ndarray) -> "UtilityMetric":
        """Metric obtained by applying u' = a u + b on top of this one."""
        a0, b0 = self._coefficients(len(a))
        return replace(self, scale=tuple(a * a0), shift=tuple(a * b0 + b))

GENERATION = UtilityMetric(MetricKind.GENERATION)
EXPORT = UtilityMetric(MetricKind.EXPORT)

def metric_for(scheme: SchemeType) -> UtilityMetric:
    
    if scheme in (SchemeType.OPF_EXPORT, SchemeType.UNIFORM_DYNAMIC_EXPORT, SchemeType.NASH_EXPORT):
        return EXPORT
    return GENERATION

@dataclass(frozen=True)
class ReferencePoints:
    
    fallback_u: UtilityProfile
    utopia_u: UtilityProfile
    fallback_x: np.ndarray
    utopia_x: np.ndarray
    included: np.ndarray
    metric: UtilityMetric = GENERATION
    
    @property
    def degenerate(self) -> tuple[int, ...]:
        
        return tuple(int(i) for i in np.flatnonzero(~self.included))
    
    @property
    def span(self) -> np.ndarray:
        
        return self.utopia_u - self.fallback_u

def evaluate_metric(metric: UtilityMetric, snap: Snapshot, x: np.ndarray) -> UtilityProfile:
    
    return metric.evaluate(snap, x)

def reference_points(
    cfg: SchemeConfig,
    snap: Snapshot,
    metric: Optional[UtilityMetric] = None,
    strict: bool = False
) -> ReferencePoints:
    """Fallback and utopia envelopes of a scheme, clamped into the box [0, p_bar].

    Agents whose utopia does not exceed their fallback are excluded from the KS ratio
    and stay pinned at the fallback; ``strict`` turns them into a DegenerateAgent error.
    """
    p_bar = snap.p_bar
    d = snap.d
    self_consumption = np.minimum(d, p_bar)
    
    if cfg.scheme in (SchemeType.OPF_GENERATION, SchemeType.UTILITARIAN_MIX):
        fallback_x, utopia_x = np.zeros_like(p_bar), p_bar.copy()
    elif cfg.scheme in (SchemeType.OPF_EXPORT, SchemeType.NASH_EXPORT):
        fallback_x, utopia_x = self_consumption, p_bar.copy()
    elif cfg.scheme == SchemeType.UNIFORM_DYNAMIC_EXPORT:
        fallback_x, utopia_x = self_consumption, np.minimum(d + cfg.k_kw, p_bar)
    elif cfg.scheme == SchemeType.EGALITARIAN:
        fallback_x, utopia_x = np.maximum(p_bar - cfg.c_kw, 0.0), p_bar.copy()
    else:
        raise ValidationError("scheme", f"unknown scheme {cfg.scheme}")
    
    metric = metric or metric_for(cfg.scheme)
    included = (utopia_x - fallback_x) > get_settings().BOX_TOLERANCE_KW
    
    if not np.all(included):
        agents = [int(i) + 1 for i in np.flatnonzero(~included)]
        logger.debug("Scheme %s: degenerate agents %s pinned at fallback", cfg.label, agents)
        if strict:
            raise DegenerateAgent(agents)
    
    return ReferencePoints(
        fallback_u=metric.evaluate(snap, fallback_x),
        utopia_u=metric.evaluate(snap, utopia_x),
        fallback_x=fallback_x,
        utopia_x=utopia_x,
        included=included,
        metric=metric,
    )

def _included(refs: ReferencePoints) -> np.ndarray:
    
    if not np.any(refs.included):
        raise EmptyAgentSet("no agent has utopia above fallback")
    return refs.included

def ks_ratios(u: UtilityProfile, refs: ReferencePoints) -> np.ndarray:
    """Normalised gains (u - u0) / (umax - u0); NaN for excluded agents."""
    u = np.asarray(u, dtype=float)
    ratios = np.full(u.shape, np.nan)
    mask = refs.included
    ratios[mask] = (u[mask] - refs.fallback_u[mask]) / refs.span[mask]
    return ratios

def ks_welfare(u: UtilityProfile, refs: ReferencePoints) -> float:
    
    mask = _included(refs)
    return float(np.min(ks_ratios(u, refs)[mask]))

def nash_welfare(u: UtilityProfile, refs: ReferencePoints) -> float:
    
    mask = refs.included
    gains = np.asarray(u, dtype=float) - refs.fallback_u
    for i in np.flatnonzero(mask):
        if gains[i] < -NEGATIVE_GAIN_TOLERANCE:
            raise NegativeGain(int(i) + 1, float(gains[i]))
    return float(np.prod(np.maximum(gains[mask], 0.0)))

def cfc_welfare(u: UtilityProfile, gamma: float) -> float:
    """Utilitarian-egalitarian mix: mean(u) + gamma * max_i (u_i - mean(u))."""
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError("gamma", f"must lie in [0, 1], got {gamma}")
    u = np.asarray(u, dtype=float)
    mean = float(np.mean(u))
    return mean + gamma * float(np.max(u - mean))

def _nonnegative_profile(u: UtilityProfile) -> np.ndarray:
    
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValidationError("utility profile", "index requires non-negative utilities")
    if not np.any(u > 0):
        raise AllZero("index undefined for an all-zero profile")
    return u

def gini(u: UtilityProfile) -> float:
    """Mean-absolute-difference Gini with the n/(n-1) correction.

    For two agents this is |u_1 - u_2| / (u_1 + u_2). The value lies in [0, 1] and
    reaches 1 only when a single agent holds all the utility, e.g. (1, 0).
    """
    u = _nonnegative_profile(u)
    n = u.size
    if n < 2:
        return 0.0
    total_diff = float(np.sum(np.abs(u[:, None] - u[None, :])))
    return total_diff / (2.0 * (n - 1) * float(np.sum(u)))

def jain(u: UtilityProfile) -> float:
    
    u = np.asarray(u, dtype=float)
    if not np.any(u != 0):
        raise AllZero("Jain index undefined for an all-zero profile")
    return float(np.sum(u) ** 2 / (u.size * np.sum(u ** 2)))

def apply_affine(u: UtilityProfile, a: np.ndarray, b: np.ndarray) -> UtilityProfile:
    
    u = np.asarray(u, dtype=float)
    a = np.broadcast_to(np.asarray(a, dtype=float), u.shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), u.shape)
    if np.any(a <= 0):
        raise NonPositiveScale("affine scales must be strictly positive")
    return a * u + b

def transform_references(refs: ReferencePoints, a: np.ndarray, b: np.ndarray) -> ReferencePoints:
    
    a = np.broadcast_to(np.asarray(a, dtype=float), refs.fallback_u.shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), refs.fallback_u.shape)
    return replace(
        refs,
        fallback_u=apply_affine(refs.fallback_u, a, b),
        utopia_u=apply_affine(refs.utopia_u, a, b),
        metric=refs.metric.compose(a, b),
    )

def curtailment(snap: Snapshot, x: np.ndarray) -> np.ndarray:
    
    return snap.p_bar - np.asarray(x, dtype=float)
