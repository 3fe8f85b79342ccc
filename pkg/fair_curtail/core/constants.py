from typing import Final

SCHEME_OPF_GENERATION: Final[str] = "opf_generation"
SCHEME_OPF_EXPORT: Final[str] = "opf_export"
SCHEME_UNIFORM_DYNAMIC_EXPORT: Final[str] = "uniform_dynamic_export"
SCHEME_EGALITARIAN: Final[str] = "egalitarian"
SCHEME_NASH_EXPORT: Final[str] = "nash_export"
SCHEME_UTILITARIAN_MIX: Final[str] = "utilitarian_mix"

KS_SCHEMES: Final[tuple[str, ...]] = (
    SCHEME_OPF_GENERATION,
    SCHEME_OPF_EXPORT,
    SCHEME_UNIFORM_DYNAMIC_EXPORT,
    SCHEME_EGALITARIAN,
)

PANEL_LABELS: Final[dict[str, str]] = {
    SCHEME_OPF_GENERATION: "A",
    SCHEME_OPF_EXPORT: "B",
    SCHEME_UNIFORM_DYNAMIC_EXPORT: "C",
    SCHEME_EGALITARIAN: "D",
    SCHEME_UTILITARIAN_MIX: "E",
    SCHEME_NASH_EXPORT: "F",
}

TESTBED_NAME: Final[str] = "testbed"

DEFAULT_BASE_POWER_W: Final[float] = 100_000.0
DEFAULT_BASE_VOLTAGE_V: Final[float] = 400.0

HOURS_PER_DAY: Final[int] = 24
MINUTES_PER_HOUR: Final[int] = 60

PROFILE_TIME_COLUMN: Final[str] = "t"
PROFILE_DEMAND_PREFIX: Final[str] = "demand_"
PROFILE_POTENTIAL_PREFIX: Final[str] = "potential_"

TRACE_ENVELOPE_PREFIX: Final[str] = "x_"
TRACE_UTILITY_PREFIX: Final[str] = "u_"
TRACE_VOLTAGE_PREFIX: Final[str] = "v_bus"
TRACE_CUMULATIVE_PREFIX: Final[str] = "cum_curt_"
TRACE_ERROR_COLUMN: Final[str] = "error"

COMPARE_COLUMNS: Final[tuple[str, ...]] = (
    "panel",
    "scheme",
    "prosumer",
    "x",
    "potential",
    "demand",
    "export",
    "curtailment",
)

BRUTE_FORCE_MAX_AGENTS: Final[int] = 3
NOISE_AMPLITUDE: Final[float] = 0.05

EXIT_OK: Final[int] = 0
EXIT_CONFIG_ERROR: Final[int] = 1
EXIT_SOLVER_ERROR: Final[int] = 2
