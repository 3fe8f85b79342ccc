"""Command-line front end: solve | compare | simulate | gen-scenario."""

import argparse
import logging
import sys
from typing import Optional, Sequence

import numpy as np
import pydantic

from ..core.config import configure_logging, get_settings
from ..core.constants import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_SOLVER_ERROR, TESTBED_NAME
from ..core.exceptions import ConfigError, DimensionMismatch, FairCurtailError
from ..services.grid_model import builtin_testbed, load_network, load_profiles, save_profiles
from ..services.simulator import (
    compare_schemes,
    comparison_frame,
    default_comparison_configs,
    generate_duck_curve,
    run_timeseries,
)
from ..services.solvers import result_frame, solve
from ..utils.table_io import get_table_store
from ..utils.time_labels import standardize_time_label
from .schemas import Network, OutputFormat, RunConfig, Scenario, SchemeConfig, SchemeType, Snapshot

logger = logging.getLogger(__name__)

class UsageError(ConfigError):
    
    pass

class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the configuration-error status."""
    
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")

def _float_list(value: str) -> tuple[float, ...]:
    
    try:
        return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{value}'")

def _add_common(parser: argparse.ArgumentParser) -> None:
    
    settings = get_settings()
    parser.add_argument("--network", default=TESTBED_NAME, help="'testbed' or a network TOML file")
    parser.add_argument("--output-dir", default=str(settings.OUTPUT_DIR), help="Directory for result files")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.CSV.value)
    parser.add_argument("--tolerance-kw", type=float, default=settings.TOLERANCE_KW)

def _add_scheme(parser: argparse.ArgumentParser, required: bool) -> None:
    
    parser.add_argument(
        "--scheme",
        action="append",
        choices=[s.value for s in SchemeType],
        required=required,
        help="Scheme to solve (repeatable)",
    )
    parser.add_argument("--k-kw", type=float, help="Export entitlement K for uniform_dynamic_export")
    parser.add_argument("--c-kw", type=float, help="Reference curtailment for egalitarian")
    parser.add_argument("--gamma", type=float, default=0.0, help="Inequality weight for utilitarian_mix")

def _add_snapshot(parser: argparse.ArgumentParser) -> None:
    
    parser.add_argument("--demand", type=_float_list, help="Per-prosumer demand, kW (comma-separated)")
    parser.add_argument("--potential", type=_float_list, help="Per-prosumer PV potential, kW (comma-separated)")

def _add_scenario(parser: argparse.ArgumentParser) -> None:
    
    parser.add_argument("--scenario", help="Profile CSV (t, demand_i, potential_i)")
    parser.add_argument("--generate", type=int, metavar="SEED", help="Generate a duck-curve scenario")

def build_parser() -> argparse.ArgumentParser:
    
    parser = CliParser(prog="fair-curtail", description="Fair active-power curtailment envelopes")
    settings = get_settings()
    parser.add_argument("--version", action="version", version=f"{settings.APP_NAME} {settings.APP_VERSION}")
    parser.add_argument("--log", help="Log level (defaults to FAIR_CURTAIL_LOG)")
    sub = parser.add_subparsers(dest="command", required=True)
    
    p_solve = sub.add_parser("solve", help="Solve one snapshot")
    _add_common(p_solve)
    _add_scheme(p_solve, required=True)
    _add_snapshot(p_solve)
    
    p_compare = sub.add_parser("compare", help="Solve one snapshot under the six comparison schemes")
    _add_common(p_compare)
    _add_scheme(p_compare, required=False)
    _add_snapshot(p_compare)
    _add_scenario(p_compare)
    p_compare.add_argument("--at", help="Timestep label to take from the scenario (default: peak potential)")
    
    p_sim = sub.add_parser("simulate", help="Run a 24-hour time series")
    _add_common(p_sim)
    _add_scheme(p_sim, required=True)
    _add_scenario(p_sim)
    p_sim.add_argument("--jobs", type=int, default=get_settings().DEFAULT_JOBS)
    
    p_gen = sub.add_parser("gen-scenario", help="Write a generated duck-curve scenario CSV")
    p_gen.add_argument("--network", default=TESTBED_NAME)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--output", required=True)
    
    return parser

def _network(name: str) -> Network:
    
    return builtin_testbed() if name == TESTBED_NAME else load_network(name)

def _schemes(args: argparse.Namespace) -> list[SchemeConfig]:
    
    return [
        SchemeConfig(scheme=SchemeType(s), k_kw=args.k_kw, c_kw=args.c_kw, gamma=args.gamma)
        for s in (args.scheme or [])
    ]

def _run_config(args: argparse.Namespace, schemes: list[SchemeConfig]) -> RunConfig:
    
    return RunConfig(
        network=args.network,
        scenario_path=getattr(args, "scenario", None),
        seed=getattr(args, "generate", None),
        schemes=schemes,
        output_dir=args.output_dir,
        tolerance_kw=args.tolerance_kw,
        format=OutputFormat(args.format),
        jobs=getattr(args, "jobs", 1),
        demand=args.demand if hasattr(args, "demand") else None,
        potential=args.potential if hasattr(args, "potential") else None,
    )

def _scenario(cfg: RunConfig, net: Network) -> Optional[Scenario]:
    
    if cfg.scenario_path is not None:
        return load_profiles(cfg.scenario_path, net)
    if cfg.seed is not None:
        return generate_duck_curve(net, cfg.seed)
    return None

def _pick_snapshot(scenario: Scenario, at: Optional[str]) -> Snapshot:
    
    if not scenario.snapshots:
        raise UsageError("scenario has no timesteps")
    if at is None:
        totals = [float(np.sum(s.p_bar)) for s in scenario.snapshots]
        return scenario.snapshots[int(np.argmax(totals))]
    
    label = standardize_time_label(at)
    for snap in scenario.snapshots:
        if snap.timestamp == label:
            return snap
    raise UsageError(f"timestep {label} not found in scenario")

def cmd_solve(args: argparse.Namespace) -> int:
    
    cfg = _run_config(args, _schemes(args))
    snap = cfg.snapshot()
    if snap is None:
        raise UsageError("solve needs --demand and --potential")
    
    net = _network(cfg.network)
    store = get_table_store(cfg.output_dir)
    
    for scheme in cfg.schemes:
        result = solve(net, snap, scheme, cfg.tolerance_kw)
        path = store.write(result_frame(result), f"solve_{scheme.scheme.value}", cfg.format)
        print(path)
    return EXIT_OK

def cmd_compare(args: argparse.Namespace) -> int:
    
    explicit = _schemes(args)
    # default panels depend on the snapshot; validate the sources with a placeholder first
    base_cfg = _run_config(args, explicit or [SchemeConfig(scheme=SchemeType.OPF_GENERATION)])
    net = _network(base_cfg.network)
    
    snap = base_cfg.snapshot()
    if snap is not None:
        if base_cfg.scenario_path is not None or base_cfg.seed is not None:
            raise UsageError("give either --demand/--potential or a scenario source, not both")
    else:
        scenario = _scenario(base_cfg, net)
        if scenario is None:
            raise UsageError("compare needs --demand/--potential, --scenario or --generate")
        snap = _pick_snapshot(scenario, args.at)
    
    configs = explicit or default_comparison_configs(snap)
    cfg = _run_config(args, configs)
    
    entries = compare_schemes(net, snap, cfg.schemes, cfg.tolerance_kw)
    frame = comparison_frame(snap, cfg.schemes, entries)
    print(get_table_store(cfg.output_dir).write(frame, "compare", cfg.format))
    
    failed = [e for e in entries if isinstance(e, FairCurtailError)]
    for error in failed:
        print(f"{type(error).__name__}: {error}", file=sys.stderr)
    return EXIT_SOLVER_ERROR if failed else EXIT_OK

def cmd_simulate(args: argparse.Namespace) -> int:
    
    cfg = _run_config(args, _schemes(args))
    net = _network(cfg.network)
    scenario = _scenario(cfg, net)
    if scenario is None:
        raise UsageError("simulate needs --scenario or --generate")
    
    store = get_table_store(cfg.output_dir)
    status = EXIT_OK
    
    for scheme in cfg.schemes:
        trace = run_timeseries(net, scenario, scheme, cfg.tolerance_kw, jobs=cfg.jobs)
        print(store.write(trace.to_frame(), f"trace_{scheme.scheme.value}", cfg.format))
        
        for key, value in trace.summary().items():
            print(f"{key}: {value}")
        
        for error in trace.errors.values():
            print(f"{type(error.cause).__name__}: {error}", file=sys.stderr)
            status = EXIT_SOLVER_ERROR
    
    return status

def cmd_gen_scenario(args: argparse.Namespace) -> int:
    
    net = _network(args.network)
    print(save_profiles(generate_duck_curve(net, args.seed), args.output))
    return EXIT_OK

COMMANDS = {
    "solve": cmd_solve,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "gen-scenario": cmd_gen_scenario,
}

def main(argv: Optional[Sequence[str]] = None) -> int:
    
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log)
    
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DimensionMismatch, pydantic.ValidationError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except FairCurtailError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER_ERROR
