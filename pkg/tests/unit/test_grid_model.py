"""
Unit tests for network configuration and profile ingestion.

Tests:
- Bundled testbed contents
- Structural validation (slack count, radiality, dangling references)
- TOML round trip
- Profile CSV parsing and validation
"""

import sys
from pathlib import Path

import polars as pl
import pytest

# Add package to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from fair_curtail.api.schemas import BusKind, Snapshot
from fair_curtail.core.exceptions import DimensionMismatch, ParseError, ValidationError
from fair_curtail.services.grid_model import (
    builtin_testbed,
    check_snapshot,
    load_network,
    load_profiles,
    network_from_dict,
    network_to_dict,
    save_network,
    save_profiles,
    scenario_from_frame,
)


def two_bus_dict() -> dict:
    """Minimal radial network: slack plus one pq bus hosting one prosumer."""
    return {
        "network": {"name": "two-bus", "slack_voltage": 1.0},
        "bus": [
            {"id": 0, "kind": "slack", "v_min": 0.95, "v_max": 1.05},
            {"id": 1, "kind": "pq", "v_min": 0.95, "v_max": 1.05},
        ],
        "line": [{"from_bus": 0, "to_bus": 1, "resistance": 0.1, "reactance": 0.1}],
        "prosumer": [{"id": 1, "bus": 1}],
    }


def four_bus_dict() -> dict:
    """Slack 0 feeding buses 2, 3 and 4 in a chain."""
    raw = two_bus_dict()
    raw["bus"] = [
        {"id": 0, "kind": "slack", "v_min": 0.95, "v_max": 1.05},
        {"id": 2, "kind": "pq", "v_min": 0.95, "v_max": 1.05},
        {"id": 3, "kind": "pq", "v_min": 0.95, "v_max": 1.05},
        {"id": 4, "kind": "pq", "v_min": 0.95, "v_max": 1.05},
    ]
    raw["line"] = [
        {"from_bus": 0, "to_bus": 2, "resistance": 0.1, "reactance": 0.05},
        {"from_bus": 2, "to_bus": 3, "resistance": 0.1, "reactance": 0.05},
        {"from_bus": 3, "to_bus": 4, "resistance": 0.1, "reactance": 0.05},
    ]
    raw["prosumer"] = [{"id": 1, "bus": 4}]
    return raw


class TestBuiltinTestbed:
    """Test the bundled 6-bus feeder."""
    
    def setup_method(self):
        """Set up test fixtures."""
        self.net = builtin_testbed()
    
    def test_testbed_dimensions(self):
        """Test bus, line and prosumer counts."""
        assert self.net.n_buses == 6
        assert len(self.net.lines) == 5
        assert self.net.n_prosumers == 5
    
    def test_testbed_slack_voltage(self):
        """Test the fixed slack voltage of 1.046 p.u."""
        assert self.net.slack_voltage == pytest.approx(1.046)
        assert self.net.slack_bus.kind == BusKind.SLACK
    
    def test_testbed_voltage_limits(self):
        """Test that every pq bus is limited to 0.95..1.05 p.u."""
        for bus in self.net.buses:
            if bus.kind == BusKind.PQ:
                assert bus.v_max == pytest.approx(1.05)
                assert bus.v_min == pytest.approx(0.95)
    
    def test_testbed_shared_bus(self):
        """Test that prosumers 1 and 2 share the bus labelled 1/2."""
        buses = [p.bus for p in self.net.prosumers]
        
        assert buses[0] == buses[1]
        assert len(set(buses)) == 4
    
    def test_testbed_passes_validation(self):
        """Test that the testbed rebuilds through the validating constructor."""
        rebuilt = network_from_dict(network_to_dict(self.net))
        
        assert rebuilt == self.net


class TestNetworkValidation:
    """Test structural invariants of network configurations."""
    
    def test_two_slack_buses_rejected(self):
        """Test that a second slack bus is a ValidationError."""
        raw = two_bus_dict()
        raw["bus"][1]["kind"] = "slack"
        
        with pytest.raises(ValidationError):
            network_from_dict(raw)
    
    def test_cycle_rejected_as_non_radial(self):
        """Test that a cycle among buses 2-3-4 is reported as non-radial."""
        raw = four_bus_dict()
        raw["line"].append({"from_bus": 4, "to_bus": 2, "resistance": 0.1, "reactance": 0.05})
        
        with pytest.raises(ValidationError, match="non-radial"):
            network_from_dict(raw)
    
    def test_dangling_bus_reference(self):
        """Test that a line to an unknown bus names the offending line."""
        raw = two_bus_dict()
        raw["line"].append({"from_bus": 1, "to_bus": 9, "resistance": 0.1, "reactance": 0.1})
        
        with pytest.raises(ValidationError) as exc:
            network_from_dict(raw)
        
        assert exc.value.entity == "line 1-9"
    
    def test_zero_impedance_rejected(self):
        """Test that a line with r = x = 0 is invalid."""
        raw = two_bus_dict()
        raw["line"][0]["resistance"] = 0.0
        raw["line"][0]["reactance"] = 0.0
        
        with pytest.raises(ValidationError):
            network_from_dict(raw)
    
    def test_prosumer_on_slack_rejected(self):
        """Test that prosumers must sit on pq buses."""
        raw = two_bus_dict()
        raw["prosumer"][0]["bus"] = 0
        
        with pytest.raises(ValidationError):
            network_from_dict(raw)
    
    def test_inverted_limits_rejected(self):
        """Test that v_min must be below v_max."""
        raw = two_bus_dict()
        raw["bus"][1]["v_min"] = 1.1
        
        with pytest.raises(ValidationError):
            network_from_dict(raw)
    
    def test_missing_network_section(self):
        """Test that a file without [network] is a ParseError."""
        raw = two_bus_dict()
        del raw["network"]
        
        with pytest.raises(ParseError):
            network_from_dict(raw)


class TestNetworkFiles:
    """Test TOML loading and saving."""
    
    def test_round_trip(self, tmp_path):
        """Test that save then load gives a structurally equal network."""
        net = builtin_testbed()
        path = save_network(net, tmp_path / "net.toml")
        
        assert load_network(path) == net
    
    def test_malformed_file(self, tmp_path):
        """Test that broken TOML is a ParseError naming the file."""
        path = tmp_path / "broken.toml"
        path.write_text("[network\nname = ")
        
        with pytest.raises(ParseError):
            load_network(path)
    
    def test_missing_file(self, tmp_path):
        """Test that a missing file is a ParseError."""
        with pytest.raises(ParseError):
            load_network(tmp_path / "nope.toml")


class TestProfiles:
    """Test scenario CSV ingestion."""
    
    def setup_method(self):
        """Set up test fixtures."""
        self.net = network_from_dict(two_bus_dict())
    
    def test_parse_profile_frame(self):
        """Test that rows become snapshots with standardised labels."""
        df = pl.DataFrame({
            "t": ["12:00", "12:15:00", "12:30"],
            "demand_1": ["0.5", "0.6", "0.7"],
            "potential_1": ["3.0", "2.9", "2.8"],
        })
        
        scenario = scenario_from_frame(df, self.net)
        
        assert len(scenario) == 3
        assert scenario.resolution_minutes == 15
        assert scenario.labels == ["12:00", "12:15", "12:30"]
        assert scenario.snapshots[1].demand == (0.6,)
    
    def test_missing_column(self):
        """Test that a missing potential column is a ParseError."""
        df = pl.DataFrame({"t": ["12:00"], "demand_1": ["0.5"]})
        
        with pytest.raises(ParseError):
            scenario_from_frame(df, self.net)
    
    def test_negative_value_names_row_and_column(self):
        """Test that negative demand is rejected with its location."""
        df = pl.DataFrame({
            "t": ["12:00", "12:15"],
            "demand_1": ["0.5", "-1"],
            "potential_1": ["3.0", "2.9"],
        })
        
        with pytest.raises(ValidationError) as exc:
            scenario_from_frame(df, self.net)
        
        assert exc.value.entity == "row 3 column demand_1"
    
    def test_infinite_value_names_row_and_column(self, tmp_path):
        """Test that an inf cell in a CSV is reported with its location."""
        path = tmp_path / "profiles.csv"
        path.write_text("t,demand_1,potential_1\n12:00,0.5,3.0\n12:15,0.6,inf\n")
        
        with pytest.raises(ValidationError) as exc:
            load_profiles(path, self.net)
        
        assert exc.value.entity == "row 3 column potential_1"
    
    def test_csv_round_trip(self, tmp_path):
        """Test that saved profiles load back unchanged."""
        df = pl.DataFrame({
            "t": ["00:00", "00:15"],
            "demand_1": ["0.25", "0.5"],
            "potential_1": ["0", "1.5"],
        })
        scenario = scenario_from_frame(df, self.net)
        
        path = save_profiles(scenario, tmp_path / "profiles.csv")
        reloaded = load_profiles(path, self.net)
        
        assert reloaded == scenario
    
    def test_snapshot_dimension_check(self):
        """Test that a snapshot with the wrong agent count is rejected."""
        snap = Snapshot(demand=(1.0, 1.0), potential=(2.0, 2.0))
        
        with pytest.raises(DimensionMismatch):
            check_snapshot(self.net, snap)
