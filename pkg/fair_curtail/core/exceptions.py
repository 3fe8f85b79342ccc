"""Error hierarchy shared by every service module."""

from typing import Any, Optional, Sequence

class FairCurtailError(Exception):
    
    pass

class ConfigError(FairCurtailError):
    
    pass

class ParseError(ConfigError):
    
    def __init__(self, source: str, reason: str = "Malformed file"):
        self.source = source
        self.reason = reason
        super().__init__(f"Cannot parse '{source}': {reason}")

class ValidationError(ConfigError):
    
    def __init__(self, entity: str, reason: str):
        self.entity = entity
        self.reason = reason
        super().__init__(f"Invalid {entity}: {reason}")

class DimensionMismatch(FairCurtailError):
    
    def __init__(self, what: str, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected length {expected}, got {actual}")

class PowerFlowError(FairCurtailError):
    
    pass

class NonConvergence(PowerFlowError):
    
    def __init__(self, iterations: int, max_mismatch: float, solution: Any = None):
        self.iterations = iterations
        self.max_mismatch = max_mismatch
        self.solution = solution
        super().__init__(
            f"Power flow did not converge after {iterations} iterations "
            f"(max mismatch {max_mismatch:.3e} p.u.)"
        )

class SingularJacobian(PowerFlowError):
    
    pass

class WelfareError(FairCurtailError):
    
    pass

class DegenerateAgent(WelfareError):
    
    def __init__(self, agents: Sequence[int]):
        self.agents = tuple(agents)
        super().__init__(f"Agents {list(self.agents)} have utopia <= fallback")

class EmptyAgentSet(WelfareError):
    
    pass

class NegativeGain(WelfareError):
    
    def __init__(self, agent: int, gain: float):
        self.agent = agent
        self.gain = gain
        super().__init__(f"Agent {agent} is below its fallback (gain {gain:.6g})")

class AllZero(WelfareError):
    
    pass

class NonPositiveScale(WelfareError):
    
    pass

class SolverError(FairCurtailError):
    
    pass

class FallbackInfeasible(SolverError):
    
    def __init__(self, scheme: str, detail: str = ""):
        self.scheme = scheme
        message = f"Fallback envelope of scheme '{scheme}' is infeasible"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)

class DegenerateAllAgents(SolverError):
    
    pass

class NoProgress(SolverError):
    
    def __init__(self, iterations: int, result: Any = None):
        self.iterations = iterations
        self.result = result
        super().__init__(f"Line search stalled after {iterations} iterations")

class TooManyAgents(SolverError):
    
    def __init__(self, n_agents: int, limit: int):
        self.n_agents = n_agents
        self.limit = limit
        super().__init__(f"Brute force supports at most {limit} agents, got {n_agents}")

class NoFeasiblePoint(SolverError):
    
    pass

class TimestepError(SolverError):
    
    def __init__(self, index: int, cause: Exception, label: Optional[str] = None):
        self.index = index
        self.cause = cause
        self.label = label
        where = f"timestep {index}" + (f" ({label})" if label else "")
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
