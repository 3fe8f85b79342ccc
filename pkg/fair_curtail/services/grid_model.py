import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Any, Union

import networkx as nx
import polars as pl
import pydantic
import tomli_w

from ..api.schemas import Bus, BusKind, Line, Network, Prosumer, Scenario, Snapshot
from ..core.config import get_settings
from ..core.constants import (
    PROFILE_DEMAND_PREFIX,
    PROFILE_POTENTIAL_PREFIX,
    PROFILE_TIME_COLUMN,
)
from ..core.exceptions import DimensionMismatch, ParseError, ValidationError
from ..utils.time_labels import TimeLabelError, infer_resolution, standardize_time_label

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

def load_network(path: PathLike) -> Network:
    
    path = Path(path)
    if not path.exists():
        raise ParseError(str(path), "file not found")
    
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ParseError(str(path), str(e))
    
    net = network_from_dict(raw, source=str(path))
    logger.debug("Loaded network '%s' with %d buses from %s", net.name, net.n_buses, path)
    return net

def network_from_dict(raw: dict[str, Any], source: str = "<memory>") -> Network:
    
    header = raw.get("network")
    if not isinstance(header, dict):
        raise ParseError(source, "missing [network] section")
    
    for section in ("bus", "line", "prosumer"):
        if not isinstance(raw.get(section, []), list):
            raise ParseError(source, f"[[{section}]] must be an array of tables")
    
    buses = [_build(Bus, item, f"bus #{k}") for k, item in enumerate(raw.get("bus", []))]
    lines = [_build(Line, item, f"line #{k}") for k, item in enumerate(raw.get("line", []))]
    prosumers = [_build(Prosumer, item, f"prosumer #{k}") for k, item in enumerate(raw.get("prosumer", []))]
    
    net = _build(
        Network,
        {**header, "buses": buses, "lines": lines, "prosumers": prosumers},
        "network",
    )
    validate_network(net)
    return net

def _build(model: type[pydantic.BaseModel], item: Any, entity: str) -> Any:
    
    if not isinstance(item, dict) and not isinstance(item, model):
        raise ValidationError(entity, "expected a table")
    try:
        return item if isinstance(item, model) else model.model_validate(item)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        reason = f"{where}: {first['msg']}" if where else first["msg"]
        raise ValidationError(entity, reason)

def validate_network(net: Network) -> None:
    """Check the structural invariants: one slack, unique ids, radial and connected, pq-hosted prosumers."""
    seen: set[int] = set()
    for bus in net.buses:
        if bus.id in seen:
            raise ValidationError(f"bus {bus.id}", "duplicate bus id")
        seen.add(bus.id)
    
    slacks = [b.id for b in net.buses if b.kind == BusKind.SLACK]
    if len(slacks) != 1:
        raise ValidationError("network", f"expected exactly one slack bus, found {len(slacks)} {slacks}")
    
    graph = nx.MultiGraph()
    graph.add_nodes_from(seen)
    for line in net.lines:
        for end in (line.from_bus, line.to_bus):
            if end not in seen:
                raise ValidationError(f"line {line.from_bus}-{line.to_bus}", f"dangling bus reference {end}")
        graph.add_edge(line.from_bus, line.to_bus)
    
    if not nx.is_connected(graph):
        isolated = sorted(set(seen) - nx.node_connected_component(graph, slacks[0]))
        raise ValidationError(f"bus {isolated[0]}", "not connected to the slack bus")
    
    if not nx.is_tree(graph):
        cycle = nx.find_cycle(graph)
        path = "-".join(str(edge[0]) for edge in cycle)
        raise ValidationError(f"lines {path}", "non-radial topology (cycle detected)")
    
    ids = [p.id for p in net.prosumers]
    if ids != list(range(1, len(ids) + 1)):
        raise ValidationError("prosumers", f"ids must be 1..N in order, got {ids}")
    
    kinds = {b.id: b.kind for b in net.buses}
    for p in net.prosumers:
        if p.bus not in kinds:
            raise ValidationError(f"prosumer {p.id}", f"dangling bus reference {p.bus}")
        if kinds[p.bus] != BusKind.PQ:
            raise ValidationError(f"prosumer {p.id}", f"bus {p.bus} is not a pq bus")

def network_to_dict(net: Network) -> dict[str, Any]:
    
    header = net.model_dump(exclude={"buses", "lines", "prosumers"})
    return {
        "network": header,
        "bus": [b.model_dump(mode="json", exclude_none=True) for b in net.buses],
        "line": [l.model_dump(mode="json", exclude_none=True) for l in net.lines],
        "prosumer": [p.model_dump(mode="json", exclude_none=True) for p in net.prosumers],
    }

def save_network(net: Network, path: PathLike) -> Path:
    
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        tomli_w.dump(network_to_dict(net), fh)
    return path

@lru_cache()
def builtin_testbed() -> Network:
    """The bundled synthetic 6-bus feeder (slack 1.046 p.u., limits 0.95/1.05 p.u.)."""
    return load_network(get_settings().TESTBED_PATH)

def check_snapshot(net: Network, snap: Snapshot) -> None:
    
    if snap.n_agents != net.n_prosumers:
        raise DimensionMismatch("snapshot", net.n_prosumers, snap.n_agents)

def load_profiles(path: PathLike, net: Network) -> Scenario:
    
    path = Path(path)
    if not path.exists():
        raise ParseError(str(path), "file not found")
    
    try:
        df = pl.read_csv(path, infer_schema_length=0)
    except Exception as e:
        raise ParseError(str(path), str(e))
    
    return scenario_from_frame(df, net, source=str(path))

def scenario_from_frame(df: pl.DataFrame, net: Network, source: str = "<frame>") -> Scenario:
    
    n = net.n_prosumers
    df = df.rename({col: col.lower().strip() for col in df.columns})
    
    demand_cols = [f"{PROFILE_DEMAND_PREFIX}{i}" for i in range(1, n + 1)]
    potential_cols = [f"{PROFILE_POTENTIAL_PREFIX}{i}" for i in range(1, n + 1)]
    missing = [c for c in [PROFILE_TIME_COLUMN, *demand_cols, *potential_cols] if c not in df.columns]
    if missing:
        raise ParseError(source, f"missing columns {missing}")
    
    if df.is_empty():
        return Scenario(snapshots=(), resolution_minutes=get_settings().RESOLUTION_MINUTES)
    
    try:
        values = df.select([pl.col(c).cast(pl.Float64) for c in demand_cols + potential_cols])
    except pl.exceptions.PolarsError as e:
        raise ParseError(source, f"non-numeric profile value: {e}")
    
    for col in values.columns:
        bad = values.with_row_index("row").filter(
            pl.col(col).is_null() | pl.col(col).is_nan() | pl.col(col).is_infinite() | (pl.col(col) < 0)
        )
        if not bad.is_empty():
            row = int(bad["row"][0]) + 2
            raise ValidationError(f"row {row} column {col}", "value must be finite and non-negative")
    
    try:
        labels = [standardize_time_label(v) for v in df[PROFILE_TIME_COLUMN].to_list()]
        resolution = infer_resolution(labels) or get_settings().RESOLUTION_MINUTES
    except TimeLabelError as e:
        raise ValidationError(f"column {PROFILE_TIME_COLUMN}", str(e))
    
    demand = values.select(demand_cols).rows()
    potential = values.select(potential_cols).rows()
    snapshots = tuple(
        Snapshot(demand=d, potential=p, timestamp=t)
        for d, p, t in zip(demand, potential, labels)
    )
    return Scenario(snapshots=snapshots, resolution_minutes=resolution)

def scenario_to_frame(scenario: Scenario) -> pl.DataFrame:
    
    if not scenario.snapshots:
        return pl.DataFrame({PROFILE_TIME_COLUMN: []}, schema={PROFILE_TIME_COLUMN: pl.Utf8})
    
    n = scenario.snapshots[0].n_agents
    data: dict[str, list] = {PROFILE_TIME_COLUMN: scenario.labels}
    for i in range(n):
        data[f"{PROFILE_DEMAND_PREFIX}{i + 1}"] = [s.demand[i] for s in scenario.snapshots]
    for i in range(n):
        data[f"{PROFILE_POTENTIAL_PREFIX}{i + 1}"] = [s.potential[i] for s in scenario.snapshots]
    return pl.DataFrame(data)

def save_profiles(scenario: Scenario, path: PathLike) -> Path:
    
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scenario_to_frame(scenario).write_csv(path, float_precision=6)
    return path
