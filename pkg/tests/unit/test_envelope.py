"""
Unit tests for the envelope feasibility oracle.

Tests:
- Power-flow oracle on the testbed peak
- Box violations and dimension checks
- Segment evaluation and single crossing along a ray
- Downward closure and margin continuity (property based)
- Closed-form linear frontier oracle
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add package to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from fair_curtail.api.schemas import Snapshot
from fair_curtail.core.exceptions import DimensionMismatch, ValidationError
from fair_curtail.services.envelope import (
    FeasibilityOracle,
    LinearFrontierOracle,
    PowerFlowOracle,
    as_oracle,
    check_envelope,
    feasible_on_segment,
    point_on_segment,
)
from fair_curtail.services.grid_model import builtin_testbed

PEAK = Snapshot(demand=(0.3,) * 5, potential=(3.0, 2.5, 3.0, 4.0, 3.0))
TESTBED_ORACLE = PowerFlowOracle(builtin_testbed())

_fraction = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_infinity=False)


class TestPowerFlowOracle:
    """Test feasibility on the 6-bus testbed."""
    
    def setup_method(self):
        """Set up test fixtures."""
        self.net = builtin_testbed()
        self.oracle = TESTBED_ORACLE
    
    def test_zero_envelope_feasible(self):
        """Test that full curtailment is feasible at the peak."""
        report = self.oracle(PEAK, np.zeros(5))
        
        assert report.feasible
        assert report.worst_voltage_margin > 0
        assert report.pf is not None
    
    def test_full_potential_infeasible(self):
        """Test that the uncurtailed peak violates the upper voltage limit."""
        report = self.oracle(PEAK, PEAK.p_bar)
        
        assert not report.feasible
        assert report.worst_voltage_margin < 0
        assert any(name.startswith("v_max@") for name in report.binding)
    
    def test_box_violation(self):
        """Test that x_1 above its potential is reported without a power flow."""
        x = PEAK.p_bar.copy()
        x[0] += 1.0
        report = self.oracle(PEAK, x)
        
        assert not report.feasible
        assert report.box_violation
        assert report.pf is None
        assert report.worst_margin == float("-inf")
    
    def test_negative_envelope_violates_box(self):
        """Test that negative envelopes are outside the box."""
        assert check_envelope(self.net, PEAK, np.array([-1.0, 0, 0, 0, 0])).box_violation
    
    def test_wrong_length(self):
        """Test that envelope length must match the prosumer count."""
        with pytest.raises(DimensionMismatch):
            self.oracle(PEAK, np.zeros(4))
    
    def test_non_finite_rejected(self):
        """Test that NaN envelopes are rejected."""
        with pytest.raises(ValidationError):
            self.oracle(PEAK, np.array([np.nan, 0, 0, 0, 0]))
    
    def test_current_margin_reported(self):
        """Test that the rated feeder head reports a current margin."""
        report = self.oracle(PEAK, np.zeros(5))
        
        assert report.worst_current_margin is not None
        assert report.worst_current_margin > 0
    
    def test_network_becomes_oracle(self):
        """Test that a Network is wrapped into a power-flow oracle."""
        oracle = as_oracle(self.net)
        
        assert isinstance(oracle, PowerFlowOracle)
        assert isinstance(oracle, FeasibilityOracle)


class TestSegment:
    """Test evaluation along x0 + lambda (x1 - x0)."""
    
    def test_endpoints_exact(self):
        """Test that lambda 0 and 1 return the endpoints exactly."""
        x0 = np.array([0.1, 0.2])
        x1 = np.array([0.7, 0.3])
        
        assert np.array_equal(point_on_segment(x0, x1, 0.0), x0)
        assert np.array_equal(point_on_segment(x0, x1, 1.0), x1)
    
    def test_lambda_out_of_range(self):
        """Test that lambda outside [0, 1] is rejected."""
        with pytest.raises(ValidationError):
            feasible_on_segment(TESTBED_ORACLE, PEAK, np.zeros(5), PEAK.p_bar, 1.5)
    
    def test_single_crossing_along_ray(self):
        """Test that feasibility changes exactly once from x = 0 to x = p_bar."""
        flags = [
            feasible_on_segment(TESTBED_ORACLE, PEAK, np.zeros(5), PEAK.p_bar, lam).feasible
            for lam in np.linspace(0.0, 1.0, 101)
        ]
        changes = sum(1 for a, b in zip(flags, flags[1:]) if a != b)
        
        assert flags[0] and not flags[-1]
        assert changes == 1, f"expected one crossing, got {changes}"


class TestDownwardClosure:
    """Property: lowering any envelope entry keeps a feasible envelope feasible."""
    
    @settings(max_examples=200, deadline=None)
    @given(
        fx=st.lists(_fraction, min_size=5, max_size=5),
        shrink=st.lists(_fraction, min_size=5, max_size=5),
    )
    def test_lowering_preserves_feasibility(self, fx, shrink):
        x = np.array(fx) * PEAK.p_bar
        y = x * np.array(shrink)
        
        if TESTBED_ORACLE(PEAK, x).feasible:
            assert TESTBED_ORACLE(PEAK, y).feasible, f"{y} infeasible below feasible {x}"


class TestMarginContinuity:
    """Property: a small change of the envelope moves every margin by a small amount."""
    
    @settings(max_examples=100, deadline=None)
    @given(
        fx=st.lists(_fraction, min_size=5, max_size=5),
        agent=st.integers(min_value=0, max_value=4),
    )
    def test_margins_move_continuously(self, fx, agent):
        x = np.array(fx) * PEAK.p_bar
        nudged = x.copy()
        nudged[agent] = x[agent] - 1e-3 if x[agent] >= 1e-3 else x[agent] + 1e-3
        
        before = TESTBED_ORACLE(PEAK, x)
        after = TESTBED_ORACLE(PEAK, nudged)
        
        assert before.margins.shape == after.margins.shape
        assert np.max(np.abs(after.margins - before.margins)) < 1e-4
        assert abs(after.worst_voltage_margin - before.worst_voltage_margin) < 1e-4


class TestLinearFrontierOracle:
    """Test the polytope oracle used for closed-form fixtures."""
    
    def setup_method(self):
        """Set up test fixtures."""
        self.snap = Snapshot(demand=(0.0, 0.0), potential=(4.0, 4.0))
        self.oracle = LinearFrontierOracle([[0.75, 1.0]], [4.0])
    
    def test_inside_and_outside(self):
        """Test points on both sides of 0.75 x1 + x2 = 4."""
        assert self.oracle(self.snap, np.array([2.0, 2.0])).feasible
        assert not self.oracle(self.snap, np.array([3.0, 2.0])).feasible
    
    def test_on_frontier_is_feasible(self):
        """Test that a point exactly on the frontier counts as feasible."""
        report = self.oracle(self.snap, np.array([4.0, 1.0]))
        
        assert report.feasible
        assert report.binding == ("row0",)
    
    def test_from_vertices(self):
        """Test frontier rows built from vertex lists."""
        oracle = LinearFrontierOracle.from_vertices([(0, 4), (2, 3.5), (4, 1)])
        
        assert np.allclose(oracle.A, [[0.25, 1.0], [1.25, 1.0]])
        assert np.allclose(oracle.b, [4.0, 6.0])
    
    def test_feasible_many_matches_single(self):
        """Test that the batch check agrees with point checks."""
        X = np.array([[0.0, 0.0], [2.0, 2.0], [3.0, 2.0], [4.0, 1.0], [4.5, 0.0]])
        
        batch = self.oracle.feasible_many(self.snap, X)
        single = [self.oracle(self.snap, row).feasible for row in X]
        
        assert list(batch) == single
    
    def test_row_count_mismatch(self):
        """Test that A and b must agree on the number of rows."""
        with pytest.raises(DimensionMismatch):
            LinearFrontierOracle([[1.0, 1.0]], [1.0, 2.0])
