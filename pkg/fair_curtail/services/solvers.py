"""Optimal envelopes per scheme.

KS schemes bisect on the common fraction along the fallback-utopia segment. Nash and
the utilitarian-egalitarian mix run a projected gradient ascent against the feasibility
oracle. A brute-force grid search serves as a reference for small agent counts.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import polars as pl
from scipy.optimize import nnls

from ..api.schemas import Network, SchemeConfig, SchemeType, Snapshot
from ..core.config import get_settings
from ..core.constants import BRUTE_FORCE_MAX_AGENTS
from ..core.exceptions import (
    DegenerateAllAgents,
    FallbackInfeasible,
    NoFeasiblePoint,
    NoProgress,
    TooManyAgents,
    ValidationError,
)
from .envelope import FeasibilityOracle, FeasibilityReport, OracleTarget, as_oracle, point_on_segment
from .grid_model import check_snapshot
from .welfare import (
    ReferencePoints,
    UtilityMetric,
    cfc_welfare,
    curtailment,
    ks_ratios,
    ks_welfare,
    nash_welfare,
    reference_points,
)

logger = logging.getLogger(__name__)

BatchWelfare = Callable[[np.ndarray], np.ndarray]

MONOTONE_AUDIT_STEPS = 20
ARMIJO_FRACTION = 1e-4

@dataclass(frozen=True)
class SolveResult:
    
    x: np.ndarray
    lam: Optional[float]
    welfare: float
    utilities: np.ndarray
    ratios: np.ndarray
    report: FeasibilityReport
    iterations: int
    scheme: SchemeConfig
    refs: ReferencePoints
    snap: Snapshot
    converged: bool = True
    lambda_tolerance: Optional[float] = None
    
    @property
    def curtailment(self) -> np.ndarray:
        
        return curtailment(self.snap, self.x)
    
    @property
    def exports(self) -> np.ndarray:
        
        return self.x - self.snap.d
    
    @property
    def total_generation(self) -> float:
        
        return float(np.sum(self.x))

def _resolve_tolerance(tol_kw: Optional[float]) -> float:
    
    tol_kw = get_settings().TOLERANCE_KW if tol_kw is None else tol_kw
    if tol_kw <= 0:
        raise ValidationError("tolerance", f"must be positive, got {tol_kw}")
    return tol_kw

def _prepare(
    target: OracleTarget,
    snap: Snapshot,
    cfg: SchemeConfig,
    metric: Optional[UtilityMetric] = None
) -> tuple[FeasibilityOracle, ReferencePoints]:
    """Oracle and reference points for a solve, with the fallback feasibility check."""
    if isinstance(target, Network):
        check_snapshot(target, snap)
    oracle = as_oracle(target)
    refs = reference_points(cfg, snap, metric)
    
    report = oracle(snap, refs.fallback_x)
    if not report.feasible:
        detail = ", ".join(report.binding) if report.binding else ""
        raise FallbackInfeasible(cfg.label, detail)
    return oracle, refs

def ks_point(snap: Snapshot, refs: ReferencePoints, lam: float) -> np.ndarray:
    """Envelope granting every included agent the fraction lam of its fallback-utopia gain."""
    if lam == 0.0:
        return refs.fallback_x.copy()
    if lam == 1.0:
        return refs.utopia_x.copy()
    
    u = refs.fallback_u + lam * refs.span
    x = refs.metric.invert(snap, u)
    x[~refs.included] = refs.fallback_x[~refs.included]
    return np.clip(x, np.minimum(refs.fallback_x, refs.utopia_x), np.maximum(refs.fallback_x, refs.utopia_x))

def _bisect(
    oracle: FeasibilityOracle,
    snap: Snapshot,
    refs: ReferencePoints,
    lam_tol: float,
    max_iter: int
) -> tuple[float, FeasibilityReport, int]:
    
    lo, hi = 0.0, 1.0
    lo_report = oracle(snap, refs.fallback_x)
    iterations = 0
    
    while hi - lo > lam_tol and iterations < max_iter:
        mid = 0.5 * (lo + hi)
        report = oracle(snap, ks_point(snap, refs, mid))
        if report.feasible:
            lo, lo_report = mid, report
        else:
            hi = mid
        iterations += 1
        logger.debug("Bisection %d: lambda in [%.6f, %.6f]", iterations, lo, hi)
    
    return lo, lo_report, iterations

def solve_ks(
    target: OracleTarget,
    snap: Snapshot,
    cfg: SchemeConfig,
    tol_kw: Optional[float] = None,
    metric: Optional[UtilityMetric] = None
) -> SolveResult:
    """Largest common fraction of the fallback-utopia gain that keeps the envelope feasible.
    
    ``metric`` overrides the scheme's utility metric; references are then evaluated in it.
    """
    settings = get_settings()
    tol_kw = _resolve_tolerance(tol_kw)
    oracle, refs = _prepare(target, snap, cfg, metric)
    
    utopia_report = oracle(snap, refs.utopia_x)
    lam_tol: Optional[float] = None
    iterations = 0
    
    if utopia_report.feasible:
        lam, report = 1.0, utopia_report
    elif not np.any(refs.included):
        raise DegenerateAllAgents(f"scheme '{cfg.label}': no agent has utopia above fallback")
    else:
        span_x = np.abs(refs.utopia_x - refs.fallback_x)[refs.included]
        lam_tol = tol_kw / float(np.max(span_x))
        lam, report, iterations = _bisect(oracle, snap, refs, lam_tol, settings.BISECTION_MAX_ITERATIONS)
        
        if logger.isEnabledFor(logging.DEBUG):
            if not check_monotone_path(oracle, snap, refs.fallback_x, refs.utopia_x, MONOTONE_AUDIT_STEPS):
                logger.warning("Scheme %s: feasibility is not monotone along the fallback-utopia path", cfg.label)
    
    x = ks_point(snap, refs, lam)
    u = refs.metric.evaluate(snap, x)
    welfare = ks_welfare(u, refs) if np.any(refs.included) else lam
    
    logger.info("Solved %s: lambda=%.6f after %d bisection steps", cfg.label, lam, iterations)
    
    return SolveResult(
        x=x,
        lam=lam,
        welfare=welfare,
        utilities=u,
        ratios=ks_ratios(u, refs),
        report=report,
        iterations=iterations,
        scheme=cfg,
        refs=refs,
        snap=snap,
        lambda_tolerance=lam_tol,
    )

def _jacobian(
    func: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    fx: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    free: np.ndarray,
    h: float
) -> np.ndarray:
    """Finite differences that never leave the box: central inside, one-sided at the bounds.
    
    ``func`` maps an envelope to a vector; the result has one column per agent.
    """
    fx = np.atleast_1d(fx)
    jac = np.zeros((fx.size, x.size))
    for i in np.flatnonzero(free):
        step = min(h, hi[i] - lo[i])
        if step <= 0:
            continue
        up = x.copy()
        down = x.copy()
        up[i] += step
        down[i] -= step
        if up[i] <= hi[i] and down[i] >= lo[i]:
            jac[:, i] = (np.atleast_1d(func(up)) - np.atleast_1d(func(down))) / (2 * step)
        elif up[i] <= hi[i]:
            jac[:, i] = (np.atleast_1d(func(up)) - fx) / step
        else:
            jac[:, i] = (fx - np.atleast_1d(func(down))) / step
    return jac

def _tangent_direction(
    g: np.ndarray,
    outward: np.ndarray,
    candidates: np.ndarray,
    at_upper: np.ndarray,
    at_lower: np.ndarray,
    free: np.ndarray
) -> np.ndarray:
    """Projection of g onto the cone of directions that cross neither the candidate
    constraints nor an active box bound.
    
    The polar part is found by non-negative least squares over the outward normals;
    coordinates outside ``free`` are held fixed.
    """
    n = g.size
    eye = np.eye(n)
    normals = outward[candidates] * free[None, :]
    scale = np.linalg.norm(normals, axis=1)
    normals = normals[scale > 0] / scale[scale > 0, None]
    
    N = np.vstack([normals, eye[at_upper & free], -eye[at_lower & free]])
    g = np.where(free, g, 0.0)
    if N.shape[0] == 0:
        return g
    
    mu, _ = nnls(N.T, g)
    d = g - N.T @ mu
    d[~free] = 0.0
    return d

def _violated(report: FeasibilityReport, size: int) -> np.ndarray:
    
    if report.margins.size != size:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(report.margins < 0)

def _retract(
    oracle: FeasibilityOracle,
    snap: Snapshot,
    anchor: np.ndarray,
    trial: np.ndarray,
    precision_kw: float,
    max_halvings: int
) -> Optional[np.ndarray]:
    """Feasible point on the segment anchor -> trial closest to trial, by bisection.
    
    The anchor must be dominated by trial and feasible; the feasible part of the segment
    is then an initial interval.
    """
    length = float(np.max(np.abs(trial - anchor)))
    if length == 0.0:
        return None
    
    lo, hi = 0.0, 1.0
    for _ in range(max_halvings):
        mid = 0.5 * (lo + hi)
        if oracle(snap, anchor + mid * (trial - anchor)).feasible:
            lo = mid
        else:
            hi = mid
        if (hi - lo) * length < precision_kw:
            break
    
    if lo == 0.0:
        return None
    return anchor + lo * (trial - anchor)

def _ascend(
    oracle: FeasibilityOracle,
    snap: Snapshot,
    refs: ReferencePoints,
    objective: Callable[[np.ndarray], float],
    start: np.ndarray,
    tol_kw: float
) -> tuple[np.ndarray, int, bool]:
    """Projected gradient ascent over the feasible part of [fallback_x, utopia_x].
    
    Near the feasibility boundary the ascent direction is projected onto the tangent
    space of the constraints a short trial step would violate; infeasible trial points
    are pulled back toward an anchor that keeps box-active coordinates in place.
    """
    settings = get_settings()
    h = settings.GRADIENT_STEP_KW
    eps = settings.BOX_TOLERANCE_KW
    
    lo = np.minimum(refs.fallback_x, refs.utopia_x)
    hi = np.maximum(refs.fallback_x, refs.utopia_x)
    free = refs.included.copy()
    
    def margins(z: np.ndarray) -> np.ndarray:
        return oracle(snap, z).margins
    
    def feasible(z: np.ndarray) -> bool:
        return oracle(snap, z).feasible
    
    x = start.copy()
    fx = objective(x)
    
    alpha_max = float(np.max((hi - lo)[free]))
    alpha = 0.25 * alpha_max
    alpha_min = 0.1 * tol_kw
    
    for iteration in range(1, settings.ASCENT_MAX_ITERATIONS + 1):
        at_upper = x >= hi - eps
        at_lower = x <= lo + eps
        
        g = _jacobian(objective, x, fx, lo, hi, free, h)[0]
        d = np.where(free, g, 0.0)
        d[(at_upper & (d > 0)) | (at_lower & (d < 0))] = 0.0
        
        norm = float(np.linalg.norm(d))
        if norm <= 1e-12:
            return x, iteration, True
        
        step_report = oracle(snap, np.clip(x + tol_kw * d / norm, lo, hi))
        if not step_report.feasible:
            current = margins(x)
            outward = -_jacobian(margins, x, current, lo, hi, free, h)
            candidates = _violated(step_report, current.size)
            if candidates.size == 0 and current.size:
                candidates = np.array([int(np.argmin(current))])
            
            # re-check along each projection until no new constraint is crossed
            for _ in range(current.size):
                d = _tangent_direction(g, outward, candidates, at_upper, at_lower, free)
                norm = float(np.linalg.norm(d))
                if norm <= 1e-9 * max(1.0, float(np.linalg.norm(g))):
                    return x, iteration, True
                step_report = oracle(snap, np.clip(x + tol_kw * d / norm, lo, hi))
                added = np.setdiff1d(_violated(step_report, current.size), candidates)
                if step_report.feasible or added.size == 0:
                    break
                candidates = np.union1d(candidates, added)
        
        slope = max(float(g @ d) / norm, 0.0)
        trial = np.clip(x + alpha * d / norm, lo, hi)
        if not feasible(trial):
            anchor = refs.fallback_x.copy()
            pinned = trial >= hi - eps
            anchor[pinned] = trial[pinned]
            if pinned.any() and not feasible(anchor):
                anchor = refs.fallback_x.copy()
            trial = _retract(oracle, snap, anchor, trial, 1e-3 * tol_kw, settings.REPAIR_MAX_HALVINGS)
        
        f_trial = objective(trial) if trial is not None else -np.inf
        if f_trial > fx + ARMIJO_FRACTION * alpha * slope:
            x, fx = trial, f_trial
            alpha = min(2.0 * alpha, alpha_max)
        else:
            alpha *= 0.5
            if alpha < alpha_min:
                return x, iteration, True
        
        logger.debug("Ascent %d: objective %.9g, step %.3e kW", iteration, fx, alpha)
    
    return x, settings.ASCENT_MAX_ITERATIONS, False

def _gradient_solve(
    target: OracleTarget,
    snap: Snapshot,
    cfg: SchemeConfig,
    tol_kw: Optional[float],
    objective_of: Callable[[ReferencePoints], Callable[[np.ndarray], float]],
    welfare_of: Callable[[np.ndarray, ReferencePoints], float],
    pieces_of: Optional[Callable[[ReferencePoints], list[Callable[[np.ndarray], float]]]] = None
) -> SolveResult:
    """Warm-started ascent from the KS point.
    
    When ``pieces_of`` is given the objective is the pointwise maximum of those concave
    pieces; each piece is ascended separately and the best point under the full
    objective is kept.
    """
    settings = get_settings()
    tol_kw = _resolve_tolerance(tol_kw)
    oracle, refs = _prepare(target, snap, cfg)
    
    utopia_report = oracle(snap, refs.utopia_x)
    if utopia_report.feasible or not np.any(refs.included):
        x, iterations, converged = refs.utopia_x.copy(), 0, True
        if not utopia_report.feasible:
            x = refs.fallback_x.copy()
    else:
        span_x = np.abs(refs.utopia_x - refs.fallback_x)[refs.included]
        lam, _, _ = _bisect(oracle, snap, refs, tol_kw / float(np.max(span_x)), settings.BISECTION_MAX_ITERATIONS)
        start = ks_point(snap, refs, lam)
        objective = objective_of(refs)
        candidates = pieces_of(refs) if pieces_of is not None else [objective]
        
        x, best, iterations, converged = start, -np.inf, 0, True
        for piece in candidates:
            x_piece, steps, piece_converged = _ascend(oracle, snap, refs, piece, start, tol_kw)
            iterations += steps
            value = objective(x_piece)
            if value > best:
                x, best, converged = x_piece, value, piece_converged
        
        if len(candidates) > 1:
            logger.debug("Scheme %s: best of %d pieces, welfare %.9g", cfg.label, len(candidates), best)
    
    u = refs.metric.evaluate(snap, x)
    result = SolveResult(
        x=x,
        lam=None,
        welfare=welfare_of(u, refs),
        utilities=u,
        ratios=ks_ratios(u, refs),
        report=oracle(snap, x),
        iterations=iterations,
        scheme=cfg,
        refs=refs,
        snap=snap,
        converged=converged,
    )
    
    if not converged:
        logger.warning("Scheme %s: ascent stalled after %d iterations", cfg.label, iterations)
        raise NoProgress(iterations, result)
    
    logger.info("Solved %s: welfare=%.6g after %d ascent steps", cfg.label, result.welfare, iterations)
    return result

def solve_nash(
    target: OracleTarget,
    snap: Snapshot,
    cfg: Optional[SchemeConfig] = None,
    tol_kw: Optional[float] = None
) -> SolveResult:
    """Maximizes the Nash product of gains over the fallback (log form with a small offset)."""
    cfg = cfg or SchemeConfig(scheme=SchemeType.NASH_EXPORT)
    epsilon = get_settings().NASH_EPSILON
    
    def objective_of(refs: ReferencePoints) -> Callable[[np.ndarray], float]:
        mask = refs.included
        
        def log_nash(x: np.ndarray) -> float:
            gains = refs.metric.evaluate(snap, x)[mask] - refs.fallback_u[mask]
            return float(np.sum(np.log(np.maximum(gains, 0.0) + epsilon)))
        
        return log_nash
    
    return _gradient_solve(target, snap, cfg, tol_kw, objective_of, nash_welfare)

def solve_utilitarian(
    target: OracleTarget,
    snap: Snapshot,
    gamma: float = 0.0,
    tol_kw: Optional[float] = None
) -> SolveResult:
    
    """Maximizes mean(u) + gamma * max_i (u_i - mean(u)).
    
    For gamma > 0 the welfare is convex in u and its maximum sits on an extreme point
    of the feasible set. It equals max_i [(1 - gamma) mean(u) + gamma u_i], so every
    agent's linear piece is maximized on its own and the best envelope is returned.
    """
    cfg = SchemeConfig(scheme=SchemeType.UTILITARIAN_MIX, gamma=gamma)
    
    def objective_of(refs: ReferencePoints) -> Callable[[np.ndarray], float]:
        return lambda x: cfc_welfare(refs.metric.evaluate(snap, x), gamma)
    
    def pieces_of(refs: ReferencePoints) -> list[Callable[[np.ndarray], float]]:
        
        def piece(i: int) -> Callable[[np.ndarray], float]:
            def value(x: np.ndarray) -> float:
                u = refs.metric.evaluate(snap, x)
                return float((1.0 - gamma) * np.mean(u) + gamma * u[i])
            return value
        
        return [piece(i) for i in range(snap.n_agents)]
    
    return _gradient_solve(
        target, snap, cfg, tol_kw, objective_of,
        lambda u, refs: cfc_welfare(u, gamma),
        pieces_of if gamma > 0 else None,
    )

def solve(
    target: OracleTarget,
    snap: Snapshot,
    cfg: SchemeConfig,
    tol_kw: Optional[float] = None
) -> SolveResult:
    
    if cfg.scheme.is_ks:
        return solve_ks(target, snap, cfg, tol_kw)
    if cfg.scheme == SchemeType.NASH_EXPORT:
        return solve_nash(target, snap, cfg, tol_kw)
    return solve_utilitarian(target, snap, cfg.gamma, tol_kw)

def welfare_batch(cfg: SchemeConfig, refs: ReferencePoints, snap: Snapshot) -> BatchWelfare:
    """Row-wise welfare of a batch of envelopes, as optimized by the scheme's solver."""
    
    def utilities(X: np.ndarray) -> np.ndarray:
        return refs.metric.evaluate_many(snap, X)
    
    mask = refs.included
    
    if cfg.scheme.is_ks:
        def ks(X: np.ndarray) -> np.ndarray:
            gains = utilities(X)[:, mask] - refs.fallback_u[mask]
            return np.min(gains / refs.span[mask], axis=1)
        return ks
    
    if cfg.scheme == SchemeType.NASH_EXPORT:
        def nash(X: np.ndarray) -> np.ndarray:
            gains = utilities(X)[:, mask] - refs.fallback_u[mask]
            return np.where(np.all(gains >= 0, axis=1), np.prod(gains, axis=1), -np.inf)
        return nash
    
    def mix(X: np.ndarray) -> np.ndarray:
        U = utilities(X)
        mean = U.mean(axis=1)
        return mean + cfg.gamma * np.max(U - mean[:, None], axis=1)
    return mix

def brute_force_argmax(
    welfare: BatchWelfare,
    snap: Snapshot,
    target: OracleTarget,
    step_kw: float
) -> np.ndarray:
    """Exhaustive grid search over the box, filtered by feasibility.
    
    ``welfare`` maps an (M, N) array of envelopes to M values. Ties go to the
    lexicographically smallest envelope.
    """
    if snap.n_agents > BRUTE_FORCE_MAX_AGENTS:
        raise TooManyAgents(snap.n_agents, BRUTE_FORCE_MAX_AGENTS)
    if step_kw <= 0:
        raise ValidationError("grid step", f"must be positive, got {step_kw}")
    
    oracle = as_oracle(target)
    axes = [
        np.linspace(0.0, p, int(np.ceil(p / step_kw)) + 1) if p > 0 else np.zeros(1)
        for p in snap.p_bar
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, snap.n_agents)
    
    feasible_many = getattr(oracle, "feasible_many", None)
    if feasible_many is not None:
        mask = np.asarray(feasible_many(snap, grid), dtype=bool)
    else:
        mask = np.array([oracle(snap, row).feasible for row in grid], dtype=bool)
    
    if not mask.any():
        raise NoFeasiblePoint(f"none of {len(grid)} grid points is feasible")
    
    candidates = grid[mask]
    values = np.asarray(welfare(candidates), dtype=float)
    best = int(np.argmax(values))
    
    logger.debug("Brute force: %d of %d grid points feasible, best welfare %.6g",
                 len(candidates), len(grid), values[best])
    return candidates[best]

def check_monotone_path(
    target: OracleTarget,
    snap: Snapshot,
    x0: np.ndarray,
    x1: np.ndarray,
    steps: int = 100
) -> bool:
    """True iff feasibility along x0 -> x1 switches at most once, from feasible to infeasible."""
    if steps < 2:
        raise ValidationError("steps", f"need at least 2, got {steps}")
    
    oracle = as_oracle(target)
    flags = [
        oracle(snap, point_on_segment(x0, x1, float(lam))).feasible
        for lam in np.linspace(0.0, 1.0, steps + 1)
    ]
    changes = [k for k in range(1, len(flags)) if flags[k] != flags[k - 1]]
    
    if not changes:
        return True
    return len(changes) == 1 and flags[0]

def result_frame(result: SolveResult) -> pl.DataFrame:
    """One row per prosumer; ratios of excluded agents are null."""
    snap = result.snap
    n = snap.n_agents
    report = result.report
    
    return pl.DataFrame(
        {
            "scheme": [result.scheme.label] * n,
            "prosumer": list(range(1, n + 1)),
            "x": result.x.tolist(),
            "potential": snap.p_bar.tolist(),
            "demand": snap.d.tolist(),
            "curtailment": result.curtailment.tolist(),
            "utility": result.utilities.tolist(),
            "ratio": [None if np.isnan(r) else float(r) for r in result.ratios],
            "lambda": [result.lam] * n,
            "welfare": [result.welfare] * n,
            "feasible": [report.feasible] * n,
            "worst_voltage_margin": [report.worst_voltage_margin] * n,
        },
        schema={
            "scheme": pl.Utf8,
            "prosumer": pl.Int64,
            "x": pl.Float64,
            "potential": pl.Float64,
            "demand": pl.Float64,
            "curtailment": pl.Float64,
            "utility": pl.Float64,
            "ratio": pl.Float64,
            "lambda": pl.Float64,
            "welfare": pl.Float64,
            "feasible": pl.Boolean,
            "worst_voltage_margin": pl.Float64,
        },
    )
